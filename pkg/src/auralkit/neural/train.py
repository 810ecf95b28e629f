"""Toy training loop and checkpoint IO."""

from dataclasses import dataclass
import json
from pathlib import Path
import struct

import numpy as np
import torch

from ..config import DEFAULTS
from ..errors import DomainError, TrainingError
from ..losses import LossWeights, loss_total
from ..metrics import SPECTRAL, TEMPORAL, MelConfig
from ..synth import direct_index, interp_envelope
from .model import ModelConfig, SRIRModel, lor_tensor, scene_inputs

_TRAIN = DEFAULTS["train"]
MIN_DATASET = 8


@dataclass
class TrainingExample:
    features: torch.Tensor
    adj: torch.Tensor
    positions: torch.Tensor
    lor: torch.Tensor
    er: torch.Tensor
    aux: torch.Tensor
    e_lr: torch.Tensor


def er_target(h_er_norm, direct, length):
    """Early-reflection window starting at the direct arrival, unit energy (or zero)."""
    h = np.asarray(h_er_norm, dtype=float)
    out = np.zeros((4, length))
    seg = h[:, direct : direct + length]
    out[:, : seg.shape[1]] = seg
    energy = np.sqrt(np.sum(out * out))
    return out / energy if energy > 0 else out


def make_example(scene, pair, h_lor, params, cfg):
    features, adj, positions = scene_inputs(scene, pair)
    env = params.e_lr
    if env.shape[1] != cfg.n_env_points:
        env = np.array([interp_envelope(e, cfg.n_env_points) for e in env])
    return TrainingExample(
        features, adj, positions,
        lor_tensor(h_lor, cfg.lor_length),
        torch.as_tensor(er_target(params.h_er_norm, direct_index(h_lor), cfg.er_length)),
        torch.tensor([params.t60, params.g_er, params.g_lr], dtype=torch.float64),
        torch.as_tensor(env),
    )


def examples_from_manifest(manifest, cfg, indices=None):
    entries = [e for e in manifest.entries if e.params_path is not None]
    if indices is not None:
        entries = [entries[i] for i in indices]
    return [
        make_example(manifest.scene(e), manifest.pair(e), manifest.lor(e), manifest.params(e), cfg)
        for e in entries
    ]


def er_mel_configs(cfg):
    """Mel settings for the ER loss; shrunk when the ER window is shorter than the defaults need."""
    if cfg.er_length >= SPECTRAL.n_fft:
        return SPECTRAL, TEMPORAL
    n = cfg.er_length
    return (MelConfig(n // 2, n // 8, 8, cfg.sample_rate), MelConfig(n // 8, n // 32, 4, cfg.sample_rate))


def training_loss(model, ex, weights=LossWeights(), use_lor=True, mel_configs=None):
    """ER waveform loss plus MAE on the auxiliary and late-reverb heads."""
    out = model(ex.features, ex.adj, ex.positions, ex.lor, use_lor=use_lor)
    cfg1, cfg2 = mel_configs or er_mel_configs(model.cfg)
    er, terms = loss_total(out["er"], ex.er, weights, cfg1, cfg2)
    terms["aux"] = torch.mean(torch.abs(out["aux"] - ex.aux))
    terms["lr"] = torch.mean(torch.abs(out["e_lr"] - ex.e_lr))
    return er + terms["aux"] + terms["lr"], terms


@dataclass
class TrainResult:
    losses: list
    model: SRIRModel

    @property
    def reduction(self):
        return 1.0 - self.losses[-1] / self.losses[0]


def train_toy(dataset, steps=_TRAIN["steps"], seed=0, config=None, lr=_TRAIN["lr"],
              momentum=_TRAIN["momentum"], use_lor=True, indices=None, checkpoint=None):
    """Full-batch gradient descent with momentum on a generated dataset.

    ``dataset`` is a manifest (at least 8 oracle entries); ``indices`` picks a
    subset to train on. Returns the per-step loss trajectory (loss before
    each update, plus the final loss) and the trained model.
    """
    if len([e for e in dataset.entries if e.params_path is not None]) < MIN_DATASET:
        raise DomainError(f"training needs a dataset of >= {MIN_DATASET} oracle entries")
    cfg = config or ModelConfig()
    examples = examples_from_manifest(dataset, cfg, indices)
    torch.manual_seed(seed)
    model = SRIRModel(cfg)
    opt = torch.optim.SGD(model.parameters(), lr=lr, momentum=momentum)
    mel = er_mel_configs(cfg)

    def batch_loss():
        return sum(training_loss(model, ex, use_lor=use_lor, mel_configs=mel)[0] for ex in examples) / len(examples)

    losses = []
    for step in range(steps + 1):
        opt.zero_grad()
        loss = batch_loss()
        if not torch.isfinite(loss):
            raise TrainingError(f"loss became {loss.item()} at step {step}", step=step)
        losses.append(loss.item())
        if step == steps:
            break
        loss.backward()
        opt.step()
    if checkpoint is not None:
        save_checkpoint(model, checkpoint, {"losses": losses, "seed": seed, "use_lor": use_lor})
    return TrainResult(losses, model)


# -- checkpoints --------------------------------------------------------------

MAGIC = b"AURALKIT-CKPT\x00\x01\n"


def save_checkpoint(model, path, extra=None):
    """Magic bytes, uint64 header length, JSON header, then raw little-endian float64 values."""
    state = model.state_dict()
    tensors, offset = [], 0
    for name, t in state.items():
        tensors.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.numel()
    header = json.dumps({"config": model.cfg.to_dict(), "tensors": tensors, "extra": extra or {}}).encode()
    blob = np.concatenate([t.detach().reshape(-1).numpy() for t in state.values()]).astype("<f8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(blob.tobytes())
    return path


def load_checkpoint(path):
    """Return (model in eval mode, extra metadata)."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise DomainError(f"{path} is not a checkpoint")
    pos = len(MAGIC)
    (n,) = struct.unpack_from("<Q", data, pos)
    header = json.loads(data[pos + 8 : pos + 8 + n])
    values = np.frombuffer(data, dtype="<f8", offset=pos + 8 + n)
    model = SRIRModel(ModelConfig.from_dict(header["config"]))
    state = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=int))
        chunk = values[t["offset"] : t["offset"] + count]
        state[t["name"]] = torch.as_tensor(chunk.copy()).reshape(t["shape"])
    model.load_state_dict(state)
    model.eval()
    return model, header["extra"]

"""Scene + LoR encoder feeding a three-headed perceptual-parameter decoder.

Shape contract (unbatched, float64)::

    face features   (N, d_face)        -> GCN blocks -> (K, gcn_widths[-1])
    tokens          (K, d_model)       -> transformer encoder -> memory (K, d_model)
    positions       (6,)               -> positional query -> (2, d_model)
    decoder output  (2, d_model)       -> scene embedding (2 * d_model,)
    LoR waveform    (4, lor_length)    -> LoR embedding (2 * gru_width,)
    heads           er (4, er_length), aux (3,) = (t60, g_er, g_lr), e_lr (n_bands, n_env_points)

The ER head output is aligned to the direct arrival: sample 0 of the
predicted waveform sits at the direct-sound index of the LoR.
"""

from dataclasses import asdict, dataclass, field, fields
import math

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..config import DEFAULTS, N_BANDS, N_ENV_POINTS, SAMPLE_RATE
from ..errors import DomainError, ShapeError
from ..metrics import MelConfig, log_mel
from ..synth import PerceptualParams
from .layers import GCNBlock, PositionalQuery, TransformerDecoder, TransformerEncoder

D_FACE = 10 + 2 * N_BANDS
_F64 = dict(dtype=torch.float64)


def _model_default(key):
    value = DEFAULTS["model"][key]
    return field(default_factory=lambda: list(value)) if isinstance(value, list) else field(default=value)


@dataclass
class ModelConfig:
    gcn_widths: list = _model_default("gcn_widths")
    pool_ratios: list = _model_default("pool_ratios")
    d_model: int = DEFAULTS["model"]["d_model"]
    n_heads: int = DEFAULTS["model"]["n_heads"]
    n_enc_layers: int = DEFAULTS["model"]["n_enc_layers"]
    n_dec_layers: int = DEFAULTS["model"]["n_dec_layers"]
    ffn_width: int = DEFAULTS["model"]["ffn_width"]
    n_pos_freqs: int = DEFAULTS["model"]["n_pos_freqs"]
    lor_length: int = DEFAULTS["model"]["lor_length"]
    wave_channels: list = _model_default("wave_channels")
    wave_kernels: list = _model_default("wave_kernels")
    wave_strides: list = _model_default("wave_strides")
    spec_channels: list = _model_default("spec_channels")
    lor_mel: dict = field(default_factory=lambda: dict(DEFAULTS["model"]["lor_mel"]))
    gru_width: int = DEFAULTS["model"]["gru_width"]
    head_width: int = DEFAULTS["model"]["head_width"]
    er_length: int = DEFAULTS["model"]["er_length"]
    n_bands: int = N_BANDS
    n_env_points: int = N_ENV_POINTS
    d_face: int = D_FACE
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise DomainError("d_model must be divisible by n_heads")
        if len(self.gcn_widths) != len(self.pool_ratios) or not self.gcn_widths:
            raise DomainError("gcn_widths and pool_ratios need one entry per GCN block")
        if any(not 0 < r <= 1 for r in self.pool_ratios):
            raise DomainError("pool ratios must lie in (0, 1]")
        if not len(self.wave_channels) == len(self.wave_kernels) == len(self.wave_strides):
            raise DomainError("waveform branch lists must have equal length")
        n = self.lor_length
        for k, s in zip(self.wave_kernels, self.wave_strides):
            n = (n - k) // s + 1
        if n < 1:
            raise DomainError("lor_length too short for the waveform convolutions")
        if self.mel_config.n_fft > self.lor_length:
            raise DomainError("LoR mel n_fft exceeds lor_length")

    @property
    def mel_config(self):
        return MelConfig(sample_rate=self.sample_rate, **self.lor_mel)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def minimal(cls):
        """Smallest useful configuration, used for finite-difference checks."""
        return cls(
            gcn_widths=[4, 4], pool_ratios=[0.5, 0.5], d_model=4, n_heads=2,
            n_enc_layers=1, n_dec_layers=1, ffn_width=6, n_pos_freqs=2, lor_length=512,
            wave_channels=[2], wave_kernels=[16], wave_strides=[16], spec_channels=[2],
            lor_mel={"n_fft": 128, "hop": 128, "n_mels": 4}, gru_width=3, head_width=4,
            er_length=64, n_env_points=4,
        )


class LoREncoder(nn.Module):
    """Waveform (1-D conv + GRU) and log-mel (2-D conv + GRU) branches, concatenated."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        convs, c_in = [], 4
        for c, k, s in zip(cfg.wave_channels, cfg.wave_kernels, cfg.wave_strides):
            convs.append(nn.Conv1d(c_in, c, k, stride=s, **_F64))
            c_in = c
        self.wave_convs = nn.ModuleList(convs)
        self.wave_gru = nn.GRU(c_in, cfg.gru_width, batch_first=True, **_F64)

        convs, c_in, n_mels = [], 4, cfg.lor_mel["n_mels"]
        for c in cfg.spec_channels:
            convs.append(nn.Conv2d(c_in, c, 3, stride=(2, 1), padding=1, **_F64))
            c_in, n_mels = c, (n_mels - 1) // 2 + 1
        self.spec_convs = nn.ModuleList(convs)
        self.spec_gru = nn.GRU(c_in * n_mels, cfg.gru_width, batch_first=True, **_F64)

    @property
    def width(self):
        return 2 * self.cfg.gru_width

    def spectral_input(self, x):
        """Per-channel log1p(mel / floor): (4, n_mels, frames), zero for silence."""
        mel_cfg = self.cfg.mel_config
        return (log_mel(x, mel_cfg) - math.log(mel_cfg.log_floor)).transpose(-1, -2)

    def forward(self, x):
        if x.shape != (4, self.cfg.lor_length):
            raise ShapeError(f"LoR input must be (4, {self.cfg.lor_length}), got {tuple(x.shape)}")
        h = x
        for conv in self.wave_convs:
            h = torch.relu(conv(h))
        _, wave = self.wave_gru(h.T[None])

        s = self.spectral_input(x)
        for conv in self.spec_convs:
            s = torch.relu(conv(s))
        frames = s.reshape(-1, s.shape[-1]).T
        _, spec = self.spec_gru(frames[None])
        return torch.cat([wave.reshape(-1), spec.reshape(-1)])


def lor_tensor(h_lor, length):
    """Crop or zero-pad an IR (or array) to ``length`` samples as a float64 tensor."""
    x = np.asarray(getattr(h_lor, "channels", h_lor), dtype=float)
    out = np.zeros((x.shape[0], length))
    m = min(length, x.shape[1])
    out[:, :m] = x[:, :m]
    return torch.as_tensor(out)


def lor_encode(h_lor, encoder):
    return encoder(lor_tensor(h_lor, encoder.cfg.lor_length))


def _head(d_in, width, d_out):
    return nn.Sequential(nn.Linear(d_in, width, **_F64), nn.ReLU(), nn.Linear(width, d_out, **_F64))


class ParamDecoder(nn.Module):
    """Early-reflection, auxiliary and late-reverb heads on a joint embedding."""

    eps = 1e-12

    def __init__(self, d_in, cfg):
        super().__init__()
        self.cfg = cfg
        self.d_in = d_in
        self.er = _head(d_in, cfg.head_width, 4 * cfg.er_length)
        self.aux = _head(d_in, cfg.head_width, 3)
        self.lr = _head(d_in, cfg.head_width, cfg.n_bands * cfg.n_env_points)

    def forward(self, z):
        if z.shape != (self.d_in,):
            raise ShapeError(f"decoder expects a ({self.d_in},) embedding, got {tuple(z.shape)}")
        er = self.er(z).reshape(4, self.cfg.er_length)
        er = er / (er.norm() + self.eps)
        aux = F.softplus(self.aux(z))
        e_lr = F.softplus(self.lr(z)).reshape(self.cfg.n_bands, self.cfg.n_env_points)
        return {"er": er, "aux": aux, "e_lr": e_lr}


def decode_params(scene_emb, lor_emb, decoder):
    return decoder(torch.cat([scene_emb, lor_emb]))


class SceneEncoder(nn.Module):
    """GCN blocks with Top-K pooling, then a transformer over the pooled faces."""

    def __init__(self, cfg):
        super().__init__()
        widths = [cfg.d_face] + list(cfg.gcn_widths)
        self.blocks = nn.ModuleList(
            GCNBlock(a, b, r) for a, b, r in zip(widths[:-1], widths[1:], cfg.pool_ratios)
        )
        self.project = nn.Linear(widths[-1], cfg.d_model, **_F64)
        self.transformer = TransformerEncoder(cfg.d_model, cfg.n_heads, cfg.n_enc_layers, cfg.ffn_width)

    def forward(self, x, adj):
        for block in self.blocks:
            x, adj, _ = block(x, adj)
        return self.transformer(self.project(x))


class SRIRModel(nn.Module):
    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.scene_encoder = SceneEncoder(self.cfg)
        self.query = PositionalQuery(self.cfg.d_model, self.cfg.n_pos_freqs)
        self.decoder = TransformerDecoder(
            self.cfg.d_model, self.cfg.n_heads, self.cfg.n_dec_layers, self.cfg.ffn_width
        )
        self.lor_encoder = LoREncoder(self.cfg)
        self.heads = ParamDecoder(2 * self.cfg.d_model + self.lor_encoder.width, self.cfg)

    def scene_embedding(self, features, adj, positions):
        memory = self.scene_encoder(features, adj)
        return self.decoder(self.query(positions), memory).reshape(-1)

    def forward(self, features, adj, positions, lor, use_lor=True):
        if features.shape[-1] != self.cfg.d_face:
            raise ShapeError(f"face features must have {self.cfg.d_face} columns")
        scene = self.scene_embedding(features, adj, positions)
        if use_lor:
            lor_emb = self.lor_encoder(lor)
        else:
            lor_emb = torch.zeros(self.lor_encoder.width, **_F64)
        return decode_params(scene, lor_emb, self.heads)


def scene_inputs(scene, pair):
    """Model inputs for one scene and source/listener pair."""
    features = torch.as_tensor(scene.face_features())
    adj = torch.as_tensor(np.asarray(scene.adjacency, dtype=float))
    positions = torch.as_tensor(np.concatenate([pair.source, pair.listener]))
    return features, adj, positions


def to_params(outputs, direct, sample_rate=SAMPLE_RATE):
    """Convert head outputs to :class:`PerceptualParams`, placing the ER at ``direct``."""
    er = outputs["er"].detach().numpy()
    h_er = np.zeros((4, direct + er.shape[1]))
    h_er[:, direct:] = er
    t60, g_er, g_lr = (float(v) for v in outputs["aux"].detach().numpy())
    return PerceptualParams(t60, g_er, g_lr, h_er, outputs["e_lr"].detach().numpy(), sample_rate)

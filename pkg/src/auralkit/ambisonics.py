"""First-order Ambisonic impulse responses.

A-format signals come from four cardioid capsules pointing at the vertices
of a regular tetrahedron, in the fixed channel order

    0: ( 1,  1,  1)   1: ( 1, -1, -1)   2: (-1,  1, -1)   3: (-1, -1,  1)

(normalized). Arrivals are written with a 16-tap Hann-windowed sinc so that
fractional delays stay sub-sample accurate across channels.
"""

from dataclasses import dataclass, field, replace
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .config import SAMPLE_RATE, SINC_TAPS
from .errors import RangeError, ShapeError, DomainError

A_FORMAT = "A-format"
B_FORMAT = "B-format"

CAPSULES = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
) / np.sqrt(3.0)
CAPSULES.flags.writeable = False

# W = sum/2, X/Y/Z = signed half-sums; the matrix is its own inverse
_A_TO_B = 0.5 * np.array(
    [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]], dtype=float
)


@dataclass(frozen=True, eq=False)
class AmbisonicIR:
    """Four-channel impulse response.

    Attributes
    ----------
    channels : numpy.ndarray
        (4, n_samples) float array.
    sample_rate : int
    format_tag : str
        ``"A-format"`` or ``"B-format"``.
    capsule_orientations : numpy.ndarray or None
        (4, 3) unit vectors, A-format only.
    meta : dict
        Free-form provenance (positions, order, ...), written to the sidecar.
    """

    channels: np.ndarray
    sample_rate: int = SAMPLE_RATE
    format_tag: str = A_FORMAT
    capsule_orientations: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=float)
        if ch.ndim != 2 or ch.shape[0] != 4:
            raise ShapeError(f"expected (4, n) channels, got {ch.shape}")
        if not np.all(np.isfinite(ch)):
            raise DomainError("impulse response contains non-finite samples")
        object.__setattr__(self, "channels", ch)
        if self.format_tag == A_FORMAT and self.capsule_orientations is None:
            object.__setattr__(self, "capsule_orientations", CAPSULES)
        elif self.format_tag not in (A_FORMAT, B_FORMAT):
            raise DomainError(f"unknown format tag {self.format_tag!r}")

    def __len__(self):
        return self.channels.shape[1]

    @classmethod
    def zeros(cls, length, sample_rate=SAMPLE_RATE, **kw):
        return cls(np.zeros((4, int(length))), sample_rate, **kw)

    @property
    def omni(self):
        """Channel mean, used as the omnidirectional proxy."""
        return self.channels.mean(axis=0)

    def padded(self, length):
        if length < len(self):
            raise ShapeError("cannot pad to a shorter length")
        out = np.zeros((4, length))
        out[:, : len(self)] = self.channels
        return replace(self, channels=out)

    def with_channels(self, channels):
        return replace(self, channels=channels)


def cardioid_gains(direction, orientations=CAPSULES):
    """Capsule gains 0.5 (1 + cos theta) for one or many arrival directions."""
    d = np.asarray(direction, dtype=float)
    return 0.5 * (1.0 + d @ np.asarray(orientations).T)


def sinc_kernel(delay, taps=SINC_TAPS):
    """Start index and tap values of the windowed-sinc kernel for real delays.

    ``delay`` may be scalar or 1-D; returns (start, values) with values of
    shape (..., taps).
    """
    delay = np.asarray(delay, dtype=float)
    half = taps // 2
    start = np.floor(delay).astype(np.int64) - (half - 1)
    n = start[..., None] + np.arange(taps)
    x = n - delay[..., None]
    window = 0.5 * (1.0 + np.cos(np.pi * x / half))
    window[np.abs(x) >= half] = 0.0
    return start, np.sinc(x) * window


def encode_arrivals(channels, directions, amplitudes, delays):
    """Accumulate many arrivals into a (4, n) buffer in place, in input order."""
    n = channels.shape[1]
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        return channels
    if np.any(delays < 0) or np.any(delays >= n):
        raise RangeError(f"arrival delay outside [0, {n}) samples")
    start, kern = sinc_kernel(delays)
    idx = start[:, None] + np.arange(kern.shape[1])
    gains = cardioid_gains(directions) * np.asarray(amplitudes, dtype=float)[:, None]
    ok = (idx >= 0) & (idx < n)
    rows = np.broadcast_to(np.arange(len(delays))[:, None], idx.shape)[ok]
    cols = idx[ok]
    vals = kern[ok]
    for c in range(4):
        np.add.at(channels[c], cols, gains[rows, c] * vals)
    return channels


def encode_contribution(direction, amplitude, delay_samples, ir):
    """Return a copy of ``ir`` with one arrival added.

    The arrival lands on channel c with gain ``amplitude * 0.5 (1 + cos theta_c)``
    where theta_c is the angle to capsule c.
    """
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    out = ir.channels.copy()
    encode_arrivals(out, direction[None], [amplitude], [delay_samples])
    return ir.with_channels(out)


def a_to_b_format(ir):
    if ir.format_tag != A_FORMAT:
        raise DomainError("a_to_b_format expects an A-format IR")
    if not np.allclose(ir.capsule_orientations, CAPSULES, atol=1e-12):
        raise DomainError("only the canonical tetrahedral capsule layout is supported")
    return AmbisonicIR(_A_TO_B @ ir.channels, ir.sample_rate, B_FORMAT, None, dict(ir.meta))


def b_to_a_format(ir):
    if ir.format_tag != B_FORMAT:
        raise DomainError("b_to_a_format expects a B-format IR")
    return AmbisonicIR(_A_TO_B @ ir.channels, ir.sample_rate, A_FORMAT, CAPSULES, dict(ir.meta))


# -- WAV + JSON sidecar ----------------------------------------------------

def sidecar_path(wav_path):
    return Path(wav_path).with_suffix(".json")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_ir(path, ir, sidecar=True):
    """Write a 4-channel 32-bit float WAV and, optionally, its JSON sidecar."""
    path = Path(path)
    wavfile.write(path, int(ir.sample_rate), ir.channels.T.astype(np.float32))
    if sidecar:
        doc = {
            "format_tag": ir.format_tag,
            "sample_rate": int(ir.sample_rate),
            "n_samples": len(ir),
            "capsule_orientations": _jsonable(ir.capsule_orientations),
            **_jsonable(ir.meta),
        }
        sidecar_path(path).write_text(json.dumps(doc, indent=1))
    return path


def read_ir(path):
    path = Path(path)
    rate, data = wavfile.read(path)
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] != 4:
        raise ShapeError(f"{path}: expected 4 channels, found {data.shape[1]}")
    meta, tag, caps = {}, A_FORMAT, None
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        tag = meta.pop("format_tag", A_FORMAT)
        meta.pop("sample_rate", None)
        meta.pop("n_samples", None)
        caps = meta.pop("capsule_orientations", None)
        caps = None if caps is None else np.asarray(caps, dtype=float)
    return AmbisonicIR(data.T.copy(), int(rate), tag, caps, meta)


def read_mono(path):
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.dtype.kind in "iu":
        data = data / float(np.iinfo(data.dtype).max)
    data = data.astype(float)
    if data.ndim > 1:
        data = data.mean(axis=1)
    return int(rate), data

"""Parametric SRIR synthesis.

An SRIR is rebuilt from a handful of perceptual parameters::

    h = g_er * h_er_norm + h_lor + g_lr * h_lr_norm
    h_lr_norm = sum_f interp(e_lr[f], T60) * noise_f

where ``noise_f`` is octave-band noise and the late part is normalized to
unit energy jointly over the four channels. :func:`extract_params` goes the
other way and is used for round-trip checks and to build training targets.
"""

from dataclasses import dataclass, replace
import json
from pathlib import Path

import numpy as np
from scipy import signal

from .ambisonics import AmbisonicIR, read_ir, write_ir
from .config import (
    BAND_CENTERS,
    ER_BOUNDARY_MS,
    MIN_LATE_MS,
    N_BANDS,
    N_ENV_POINTS,
    SAMPLE_RATE,
    band_edges,
)
from .errors import AlignmentError, ConfigError, DomainError
from .metrics import t60_schroeder


@dataclass(frozen=True, eq=False)
class PerceptualParams:
    """Perceptual description of one SRIR.

    Attributes
    ----------
    t60 : float
        Duration of the late reverberation in seconds.
    g_er, g_lr : float
        Early-reflection and late-reverberation amplitude (root energy).
    h_er_norm : numpy.ndarray
        (4, n) early reflections without the low-order part, unit energy or all zero.
    e_lr : numpy.ndarray
        (n_bands, n_points) non-negative late-reverb envelopes.
    """

    t60: float
    g_er: float
    g_lr: float
    h_er_norm: np.ndarray
    e_lr: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if not self.t60 > 0:
            raise DomainError("t60 must be positive")
        if self.g_er < 0 or self.g_lr < 0:
            raise DomainError("gains must be non-negative")
        h = np.asarray(self.h_er_norm, dtype=float)
        if h.ndim != 2 or h.shape[0] != 4:
            raise DomainError("h_er_norm must have shape (4, n)")
        e = np.asarray(self.e_lr, dtype=float)
        if e.ndim != 2 or e.shape[1] < 2 or np.any(e < 0):
            raise DomainError("e_lr must be a non-negative (bands, >=2 points) matrix")
        object.__setattr__(self, "h_er_norm", h)
        object.__setattr__(self, "e_lr", e)

    def scaled(self, er=1.0, lr=1.0):
        return replace(self, g_er=self.g_er * er, g_lr=self.g_lr * lr)


def octave_sos(band, sample_rate=SAMPLE_RATE):
    """Second-order sections of the 4th-order Butterworth band-pass for ``band``."""
    lo, hi = band_edges(band)
    if hi >= sample_rate / 2:
        raise DomainError(f"band {band} upper edge {hi:.1f} Hz exceeds Nyquist")
    return signal.butter(2, [lo, hi], btype="bandpass", fs=sample_rate, output="sos")


def octave_filter(x, band, sample_rate=SAMPLE_RATE):
    """Zero-phase octave-band filtering along the last axis."""
    x = np.asarray(x, dtype=float)
    sos = octave_sos(band, sample_rate)
    # sosfiltfilt needs a minimum length for its edge padding
    padlen = min(x.shape[-1] - 1, 3 * (2 * len(sos) + 1))
    return signal.sosfiltfilt(sos, x, axis=-1, padlen=max(padlen, 0))


def bandlimited_noise(band_index, length, sample_rate=SAMPLE_RATE, seed=0):
    """Unit-energy zero-mean noise confined to one octave band.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    if length <= 0:
        raise DomainError("length must be positive")
    if not 0 <= band_index < N_BANDS:
        raise DomainError(f"band index must lie in [0, {N_BANDS})")
    rng = np.random.default_rng(seed)
    x = octave_filter(rng.standard_normal(length), band_index, sample_rate)
    x -= x.mean()
    energy = np.sum(x * x)
    return x / np.sqrt(energy) if energy > 0 else x


def interp_envelope(envelope, target_length):
    """Linear resampling of E control points onto ``target_length`` samples."""
    env = np.asarray(envelope, dtype=float)
    if env.ndim != 1 or len(env) < 2:
        raise DomainError("an envelope needs at least 2 points")
    if target_length < 1:
        raise DomainError("target length must be >= 1")
    if target_length == 1:
        return env[:1].copy()
    x = np.linspace(0.0, len(env) - 1.0, int(target_length))
    return np.interp(x, np.arange(len(env)), env)


def late_length(t60, sample_rate=SAMPLE_RATE):
    return max(int(np.ceil(t60 * sample_rate)), int(np.ceil(MIN_LATE_MS * 1e-3 * sample_rate)))


def late_reverb(e_lr, t60, sample_rate=SAMPLE_RATE, seed=0):
    """Unit-energy 4-channel late reverberation of length ``late_length(t60)``."""
    n = late_length(t60, sample_rate)
    out = np.zeros((4, n))
    for c in range(4):
        for f, env in enumerate(e_lr):
            if not np.any(env):
                continue
            out[c] += interp_envelope(env, n) * bandlimited_noise(f, n, sample_rate, (seed ^ c, f))
    energy = np.sum(out * out)
    return out / np.sqrt(energy) if energy > 0 else out


def synthesize(params, h_lor, seed=0):
    """Rebuild an SRIR from perceptual parameters and the low-order reflections.

    ``h_lor`` is added unmodified, so the low-order part of the output is
    exactly the input.
    """
    if h_lor.sample_rate != params.sample_rate:
        raise ConfigError(
            f"sample rate mismatch: LoR {h_lor.sample_rate} Hz, params {params.sample_rate} Hz"
        )
    fs = params.sample_rate
    late = late_reverb(params.e_lr, params.t60, fs, seed)
    n = max(late.shape[1], len(h_lor), params.h_er_norm.shape[1])
    er = np.zeros((4, n))
    er[:, : params.h_er_norm.shape[1]] = params.h_er_norm
    lor = np.zeros((4, n))
    lor[:, : len(h_lor)] = h_lor.channels
    lr = np.zeros((4, n))
    lr[:, : late.shape[1]] = late
    out = params.g_er * er + lor + params.g_lr * lr
    return AmbisonicIR(out, fs, meta=dict(h_lor.meta))


def direct_index(h_lor, h_s=None):
    """Sample index of the direct arrival (peak of the channel mean)."""
    ref = h_lor.omni
    if not np.any(ref) and h_s is not None:
        ref = h_s.omni
    return int(np.argmax(np.abs(ref)))


def _envelope_points(late, n_late, n_points, sample_rate):
    """RMS band envelopes of a (4, n) signal at ``n_points`` uniform positions in [0, n_late)."""
    x = np.zeros((4, n_late))
    m = min(n_late, late.shape[1])
    x[:, :m] = late[:, :m]
    centers = np.linspace(0.0, n_late - 1.0, n_points)
    edges = np.concatenate([[0], np.round(0.5 * (centers[1:] + centers[:-1])).astype(int) + 1, [n_late]])
    env = np.zeros((N_BANDS, n_points))
    for f in range(N_BANDS):
        power = np.sum(octave_filter(x, f, sample_rate) ** 2, axis=0)
        csum = np.concatenate([[0.0], np.cumsum(power)])
        width = np.maximum(np.diff(edges), 1)
        env[f] = np.sqrt((csum[edges[1:]] - csum[edges[:-1]]) / width)
    return env


def extract_params(h_s, h_lor, er_boundary_ms=ER_BOUNDARY_MS, n_points=N_ENV_POINTS):
    """Perceptual parameters of ``h_s`` given its low-order part ``h_lor``.

    The residual ``h_s - h_lor`` is split at ``er_boundary_ms`` after the
    direct arrival. Envelopes are measured on the late-reverb timeline
    ``[0, ceil(T60 fs))`` that :func:`synthesize` renders on, and scaled so
    that the synthesized late part has unit energy per channel before the
    final normalization.
    """
    if h_s.sample_rate != h_lor.sample_rate:
        raise ConfigError("h_s and h_lor sample rates differ")
    if len(h_lor) > len(h_s):
        raise AlignmentError(f"LoR ({len(h_lor)} samples) is longer than the SRIR ({len(h_s)})")
    fs = h_s.sample_rate
    residual = h_s.channels - h_lor.padded(len(h_s)).channels
    boundary = min(len(h_s), direct_index(h_lor, h_s) + int(round(er_boundary_ms * 1e-3 * fs)))
    h_er = residual[:, :boundary]
    g_er = float(np.sqrt(np.sum(h_er * h_er)))
    h_er_norm = h_er / g_er if g_er >= 1e-12 else np.zeros_like(h_er)
    late = residual.copy()
    late[:, :boundary] = 0.0
    g_lr = float(np.sqrt(np.sum(late * late)))
    t60 = float(t60_schroeder(h_s))
    n_late = late_length(t60, fs)
    env = _envelope_points(late, n_late, n_points, fs)
    # interpolated envelope power summed over bands, averaged over time
    power = sum(np.mean(interp_envelope(e, n_late) ** 2) for e in env)
    if power > 0:
        env = env / np.sqrt(power)
    return PerceptualParams(t60, g_er, g_lr, h_er_norm, env, fs)


def save_params(params, path):
    """Write parameters as JSON plus a WAV holding ``h_er_norm`` next to it."""
    path = Path(path)
    wav = path.with_name(path.stem + "_er.wav")
    write_ir(wav, AmbisonicIR(params.h_er_norm, params.sample_rate), sidecar=False)
    doc = {
        "t60": params.t60,
        "g_er": params.g_er,
        "g_lr": params.g_lr,
        "sample_rate": params.sample_rate,
        "band_centers_hz": BAND_CENTERS.tolist(),
        "e_lr": params.e_lr.tolist(),
        "h_er_norm": wav.name,
    }
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_params(path):
    path = Path(path)
    doc = json.loads(path.read_text())
    h_er = read_ir(path.with_name(doc["h_er_norm"])).channels
    return PerceptualParams(doc["t60"], doc["g_er"], doc["g_lr"], h_er, np.asarray(doc["e_lr"]),
                            int(doc["sample_rate"]))

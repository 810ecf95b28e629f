"""Objective SRIR metrics: waveform MAE, T60, energy, DRR and mel distances.

Waveform metrics use every channel; T60 and DRR use the channel mean as an
omnidirectional proxy.
"""

from dataclasses import dataclass
import math

import numpy as np
import torch

from .config import DEFAULTS, DRR_WINDOW_MS, LOG_FLOOR, SAMPLE_RATE
from .errors import DomainError, InsufficientDecayError, ShapeError

_DB_PER_NEPER = 20.0 / math.log(10.0)


@dataclass(frozen=True)
class MelConfig:
    n_fft: int
    hop: int
    n_mels: int
    sample_rate: int = SAMPLE_RATE
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        if self.hop > self.n_fft or self.hop < 1:
            raise DomainError("hop must lie in [1, n_fft]")
        if self.n_mels < 1:
            raise DomainError("n_mels must be >= 1")
        if not self.log_floor > 0:
            raise DomainError("log_floor must be positive")


SPECTRAL = MelConfig(**DEFAULTS["mel"]["spectral"])
TEMPORAL = MelConfig(**DEFAULTS["mel"]["temporal"])


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(cfg):
    """(n_mels, n_fft // 2 + 1) triangular filters spanning 0 Hz to Nyquist.

    A filter too narrow to cover any FFT bin gets unit weight on the bin
    nearest its center, so every row has positive sum.
    """
    freqs = np.fft.rfftfreq(cfg.n_fft, 1.0 / cfg.sample_rate)
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(cfg.sample_rate / 2), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, len(freqs)))
    for m in range(cfg.n_mels):
        lo, mid, hi = edges[m : m + 3]
        rise = (freqs - lo) / (mid - lo)
        fall = (hi - freqs) / (hi - mid)
        fb[m] = np.clip(np.minimum(rise, fall), 0.0, None)
        if fb[m].sum() <= 0:
            fb[m, np.argmin(np.abs(freqs - mid))] = 1.0
    return fb


_fb_cache = {}


def _torch_filterbank(cfg, dtype):
    key = (cfg.n_fft, cfg.n_mels, cfg.sample_rate, dtype)
    if key not in _fb_cache:
        _fb_cache[key] = torch.as_tensor(mel_filterbank(cfg), dtype=dtype)
    return _fb_cache[key]


def log_mel(x, cfg):
    """Log-mel magnitude of a tensor (..., T) -> (..., K frames, n_mels). Differentiable."""
    if x.shape[-1] < cfg.n_fft:
        raise ShapeError(f"signal of {x.shape[-1]} samples is shorter than n_fft={cfg.n_fft}")
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    window = torch.hann_window(cfg.n_fft, periodic=True, dtype=x.dtype)
    spec = torch.stft(flat, cfg.n_fft, cfg.hop, window=window, center=False, return_complex=True)
    mag = spec.abs().transpose(-1, -2)  # (B, K, bins)
    mel = mag @ _torch_filterbank(cfg, x.dtype).T
    return torch.log(mel + cfg.log_floor).reshape(*lead, *mel.shape[-2:])


def _channels(ir):
    if hasattr(ir, "channels"):
        return ir.channels
    arr = np.asarray(ir, dtype=float)
    return arr[None] if arr.ndim == 1 else arr


def _rate(ir, sample_rate):
    return getattr(ir, "sample_rate", sample_rate)


def mel_spectrogram(ir, cfg=SPECTRAL, average=True):
    """Log-mel matrix (frames x mels); per channel when ``average`` is False."""
    x = torch.as_tensor(_channels(ir), dtype=torch.float64)
    out = log_mel(x, cfg).numpy()
    return out.mean(axis=0) if average else out


def pad_to_common(*irs):
    """Zero-pad channel arrays (or IRs) to the longest length."""
    arrs = [_channels(ir) for ir in irs]
    n = max(a.shape[-1] for a in arrs)
    return [np.pad(a, [(0, 0)] * (a.ndim - 1) + [(0, n - a.shape[-1])]) for a in arrs]


def mae_waveform(pred, target):
    p, t = _channels(pred), _channels(target)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch {p.shape} vs {t.shape}")
    return float(np.mean(np.abs(p - t)))


def energy_decay_curve(x):
    """Schroeder backward integral of a mono signal, in dB re. total energy."""
    e = np.cumsum((x * x)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def t60_schroeder(ir, sample_rate=SAMPLE_RATE, lo_db=-5.0, hi_db=-35.0):
    """Reverberation time from a line fit to the -5..-35 dB decay, extrapolated to 60 dB."""
    fs = _rate(ir, sample_rate)
    x = _channels(ir).mean(axis=0)
    if not np.any(x):
        raise InsufficientDecayError("silent impulse response")
    edc = energy_decay_curve(x)
    start = int(np.argmax(edc <= lo_db))
    stop = int(np.argmax(edc <= hi_db))
    if edc[-1] > hi_db or stop - start < 2 or not np.isfinite(edc[stop - 1]):
        raise InsufficientDecayError(f"decay does not reach {hi_db} dB over a usable span")
    t = np.arange(start, stop) / fs
    slope, _ = np.polyfit(t, edc[start:stop], 1)
    if slope >= 0:
        raise InsufficientDecayError("energy decay curve is not decreasing")
    return float(-60.0 / slope)


def energy_db(ir):
    x = _channels(ir)
    e = float(np.sum(x * x))
    if e <= 0:
        raise DomainError("energy of a zero signal is undefined")
    return 10.0 * math.log10(e)


def drr_db(ir, direct_window_ms=DRR_WINDOW_MS, sample_rate=SAMPLE_RATE):
    """Direct-to-reverberant ratio around the peak of the channel mean.

    Returns ``math.inf`` when everything falls inside the direct window.
    """
    fs = _rate(ir, sample_rate)
    x = _channels(ir).mean(axis=0)
    if not np.any(x):
        raise DomainError("DRR of a zero signal is undefined")
    peak = int(np.argmax(np.abs(x)))
    half = int(round(direct_window_ms * 1e-3 * fs / 2))
    lo, hi = max(0, peak - half), min(len(x), peak + half + 1)
    power = x * x
    direct = float(power[lo:hi].sum())
    rest = float(power.sum()) - direct
    if rest <= 0:
        return math.inf
    return 10.0 * math.log10(direct / rest)


def mel_distance_db(pred, target, cfg=SPECTRAL):
    """Mean absolute difference of channel-averaged log-mel spectra, in dB."""
    a, b = pad_to_common(pred, target)
    return float(np.mean(np.abs(mel_spectrogram(a, cfg) - mel_spectrogram(b, cfg))) * _DB_PER_NEPER)


def _safe(fn, *args):
    try:
        return fn(*args)
    except (InsufficientDecayError, DomainError):
        return None


def metric_report(pred, target, sample_rate=SAMPLE_RATE):
    """Errors between two SRIRs under the table column names.

    Columns: ``MAE`` (raw units), ``T60`` (s), ``En.``, ``DRR``, ``Mel`` and
    ``Mel-T`` (dB). A column is ``None`` when it cannot be measured.
    """
    fs = _rate(target, sample_rate)
    a, b = pad_to_common(pred, target)
    t60s = [_safe(t60_schroeder, x, fs) for x in (a, b)]
    ens = [_safe(energy_db, x) for x in (a, b)]
    drrs = [_safe(drr_db, x, DRR_WINDOW_MS, fs) for x in (a, b)]

    def diff(pair):
        if None in pair or math.inf in pair:
            return None
        return abs(pair[0] - pair[1])

    return {
        "MAE": mae_waveform(a, b),
        "T60": diff(t60s),
        "En.": diff(ens),
        "DRR": diff(drrs),
        "Mel": mel_distance_db(a, b, SPECTRAL),
        "Mel-T": mel_distance_db(a, b, TEMPORAL),
    }

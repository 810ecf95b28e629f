"""Independent straight-from-formula reference implementations used by the tests."""

import math

import numpy as np

C = 343.0
FS = 48000
TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / math.sqrt(3)


def windowed_sinc(delay, n):
    """Length-n signal holding a 16-tap Hann-windowed sinc centred at ``delay``."""
    t = np.arange(n) - delay
    w = np.where(np.abs(t) < 8, 0.5 * (1 + np.cos(np.pi * t / 8)), 0.0)
    lo = math.floor(delay) - 7
    mask = (np.arange(n) >= lo) & (np.arange(n) <= lo + 15)
    return np.where(mask, np.sinc(t) * w, 0.0)


def mirror_images(dims, source, max_order):
    """Recursive mirroring across the six walls of [0, dims]; merges equal positions."""
    dims = np.asarray(dims, float)
    walls = [(a, s) for a in range(3) for s in (0.0, 1.0)]
    frontier = [(np.asarray(source, float), None)]
    found = {tuple(np.round(source, 9)): 0}
    for order in range(1, max_order + 1):
        nxt = []
        for pos, last in frontier:
            for w, (axis, side) in enumerate(walls):
                if w == last:
                    continue
                p = pos.copy()
                p[axis] = 2 * side * dims[axis] - p[axis]
                nxt.append((p, w))
                found.setdefault(tuple(np.round(p, 9)), order)
        frontier = nxt
    return found


def ray_hits_triangle(a, b, tri):
    """Does the open segment a->b cross triangle ``tri``? (linear solve, no shortcuts)"""
    v0, v1, v2 = tri
    m = np.column_stack([b - a, v0 - v1, v0 - v2])
    if abs(np.linalg.det(m)) < 1e-14:
        return False
    t, u, v = np.linalg.solve(m, v0 - a)
    return 1e-9 < t < 1 - 1e-9 and u >= 0 and v >= 0 and u + v <= 1


def eyring_t60(dims, amplitude_reflectivity):
    w, d, h = dims
    volume = w * d * h
    area = 2 * (w * d + w * h + d * h)
    alpha = 1 - amplitude_reflectivity**2
    return 0.161 * volume / (-area * math.log(1 - alpha))


def hz_to_mel(f):
    return 2595 * math.log10(1 + f / 700)


def mel_to_hz(m):
    return 700 * (10 ** (m / 2595) - 1)


def mel_matrix(n_fft, n_mels, fs):
    n_bins = n_fft // 2 + 1
    top = hz_to_mel(fs / 2)
    pts = [mel_to_hz(top * i / (n_mels + 1)) for i in range(n_mels + 2)]
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = pts[m], pts[m + 1], pts[m + 2]
        for k in range(n_bins):
            f = k * fs / n_fft
            if lo < f <= mid:
                fb[m, k] = (f - lo) / (mid - lo)
            elif mid < f < hi:
                fb[m, k] = (hi - f) / (hi - mid)
        if fb[m].sum() == 0:
            fb[m, int(np.argmin([abs(k * fs / n_fft - mid) for k in range(n_bins)]))] = 1.0
    return fb


def log_mel_loop(x, n_fft, hop, n_mels, fs, floor=1e-5):
    """Frame loop + explicit DFT magnitude; frames x mels."""
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    fb = mel_matrix(n_fft, n_mels, fs)
    frames = []
    for start in range(0, len(x) - n_fft + 1, hop):
        seg = x[start : start + n_fft] * window
        k = np.arange(n_fft // 2 + 1)[:, None]
        basis = np.exp(-2j * np.pi * k * np.arange(n_fft)[None] / n_fft)
        frames.append(np.log(fb @ np.abs(basis @ seg) + floor))
    return np.array(frames)


def schroeder_t60_loop(x, fs, lo=-5.0, hi=-35.0):
    energy = [0.0] * len(x)
    acc = 0.0
    for i in range(len(x) - 1, -1, -1):
        acc += x[i] * x[i]
        energy[i] = acc
    edc = [10 * math.log10(e / energy[0]) if e > 0 else -math.inf for e in energy]
    start = next(i for i, v in enumerate(edc) if v <= lo)
    stop = next(i for i, v in enumerate(edc) if v <= hi)
    t = np.arange(start, stop) / fs
    y = np.array(edc[start:stop])
    slope = ((t - t.mean()) * (y - y.mean())).sum() / ((t - t.mean()) ** 2).sum()
    return -60.0 / slope


def drr_loop(x, fs, window_ms=2.5):
    peak = max(range(len(x)), key=lambda i: abs(x[i]))
    half = round(window_ms * 1e-3 * fs / 2)
    direct = sum(x[i] ** 2 for i in range(max(0, peak - half), min(len(x), peak + half + 1)))
    rest = sum(v * v for v in x) - direct
    return 10 * math.log10(direct / rest)

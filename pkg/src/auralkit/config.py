"""Package-wide defaults, loaded from the versioned ``defaults.json``.

Every tunable the library relies on lives in that one file. Modules read
constants from here; the CLI merges a user config file on top with
:func:`load_config`.
"""

import copy
import json
from importlib import resources
from pathlib import Path

import numpy as np


def _read_defaults():
    text = resources.files("auralkit").joinpath("defaults.json").read_text()
    return json.loads(text)


DEFAULTS = _read_defaults()

SPEED_OF_SOUND = float(DEFAULTS["speed_of_sound"])
SAMPLE_RATE = int(DEFAULTS["sample_rate"])
BAND_CENTERS = np.asarray(DEFAULTS["band_centers_hz"], dtype=float)
N_BANDS = len(BAND_CENTERS)
LOR_ORDER = int(DEFAULTS["lor_order"])
SINC_TAPS = int(DEFAULTS["sinc_taps"])
ER_BOUNDARY_MS = float(DEFAULTS["er_boundary_ms"])
N_ENV_POINTS = int(DEFAULTS["n_env_points"])
MIN_LATE_MS = float(DEFAULTS["min_late_ms"])
LOG_FLOOR = float(DEFAULTS["mel"]["log_floor"])
DRR_WINDOW_MS = float(DEFAULTS["drr_window_ms"])


def band_edges(band):
    """Lower and upper edge (Hz) of an octave band."""
    fc = BAND_CENTERS[band]
    return fc / np.sqrt(2.0), fc * np.sqrt(2.0)


def _merge(base, override):
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def load_config(path=None, **overrides):
    """Return a deep copy of the defaults with a JSON file and keyword overrides applied."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        _merge(cfg, json.loads(Path(path).read_text()))
    _merge(cfg, overrides)
    return cfg

"""Stage timings for the inference pipeline: GA-LoR, DL-model, PS, end-to-end."""

from dataclasses import asdict, dataclass, field
import math
import os
import platform
import time

import numpy as np
import torch

from .config import DEFAULTS, LOR_ORDER
from .errors import DomainError, InvariantError
from .ga import compute_lor
from .scene import PositionPair, SceneGraph
from .synth import direct_index, synthesize

STAGES = ("GA-LoR", "DL-model", "PS", "end-to-end")
# published per-stage means in milliseconds, for orientation only
REFERENCE_MS = {"GA-LoR": 310.09, "DL-model": 88.97, "PS": 86.43}
BANNER = "reference timings come from different hardware and a full-size model; not a pass/fail comparison"


@dataclass
class BenchRow:
    stage: str
    mean_ms: float
    p95_ms: float
    runs: int


@dataclass
class BenchReport:
    rows: list
    machine: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.rows:
            if r.runs < 10:
                raise InvariantError(f"{r.stage}: a report needs >= 10 runs")
            if not (math.isfinite(r.mean_ms) and r.mean_ms > 0):
                raise InvariantError(f"{r.stage}: non-positive or non-finite timing")
            if r.mean_ms > r.p95_ms:
                raise InvariantError(f"{r.stage}: mean {r.mean_ms:.3f} ms exceeds p95 {r.p95_ms:.3f} ms")

    def row(self, stage):
        return next(r for r in self.rows if r.stage == stage)

    def to_dict(self):
        return {"rows": [asdict(r) for r in self.rows], "machine": self.machine,
                "reference_ms": REFERENCE_MS, "note": BANNER}

    def format(self):
        lines = [f"{'stage':<12}{'mean ms':>10}{'p95 ms':>10}{'runs':>6}{'ref ms':>10}"]
        for r in self.rows:
            ref = REFERENCE_MS.get(r.stage)
            ref_s = f"{ref:>10.2f}" if ref is not None else f"{'-':>10}"
            lines.append(f"{r.stage:<12}{r.mean_ms:>10.2f}{r.p95_ms:>10.2f}{r.runs:>6}{ref_s}")
        lines.append(f"NOTE: {BANNER}")
        return "\n".join(lines)


def _row(stage, times):
    ms = np.asarray(times) * 1e3
    # nearest-rank percentile: always an observed run time
    p95 = float(np.sort(ms)[max(0, math.ceil(0.95 * len(ms)) - 1)])
    return BenchRow(stage, float(ms.mean()), p95, len(ms))


def machine_info():
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "torch": torch.__version__,
        "cpu_count": os.cpu_count(),
        "torch_threads": torch.get_num_threads(),
    }


def bench(scene, pair, model, runs=DEFAULTS["bench"]["runs"], warmup=DEFAULTS["bench"]["warmup"],
          n_o=LOR_ORDER, seed=0):
    """Time each stage ``runs`` times after ``warmup`` untimed rounds.

    GA-LoR runs on a fresh copy of the scene every time so cached reflector
    planes never carry over between runs.
    """
    from .neural.model import lor_tensor, scene_inputs, to_params

    if runs < 10:
        raise DomainError("runs must be >= 10")
    if not isinstance(pair, PositionPair):
        pair = PositionPair(*pair)
    model.eval()
    fs = model.cfg.sample_rate

    def ga():
        return compute_lor(SceneGraph(scene.faces, scene.adjacency), pair, n_o, fs)

    def dl(h_lor):
        feats, adj, pos = scene_inputs(scene, pair)
        with torch.no_grad():
            return model(feats, adj, pos, lor_tensor(h_lor, model.cfg.lor_length))

    def ps(h_lor, out):
        return synthesize(to_params(out, direct_index(h_lor), fs), h_lor, seed)

    h_lor = ga()
    out = dl(h_lor)
    stages = {
        "GA-LoR": ga,
        "DL-model": lambda: dl(h_lor),
        "PS": lambda: ps(h_lor, out),
        "end-to-end": lambda: (lambda h: ps(h, dl(h)))(ga()),
    }
    rows = []
    for name in STAGES:
        fn = stages[name]
        for _ in range(warmup):
            fn()
        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        rows.append(_row(name, times))
    return BenchReport(rows, machine_info())

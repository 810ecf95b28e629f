"""Desk-scale SRIR dataset generation and diversity analysis.

Each base shoebox is turned into several material variants; each variant is
rendered for several source/listener pairs with the lattice oracle (ground
truth), the general-mesh engine (low-order part) and parameter extraction.

Layout under ``out_dir``::

    manifest.json
    scenes/<scene>_<variant>.json
    srir/<entry>.wav   lor/<entry>.wav   params/<entry>.json (+ _er.wav)
"""

from dataclasses import asdict, dataclass, field
import csv
import json
from pathlib import Path

import numpy as np
from scipy import special

from .ambisonics import read_ir, write_ir
from .config import DEFAULTS, LOR_ORDER, N_BANDS, SAMPLE_RATE
from .errors import DomainError, InfeasibleSceneError, UnsupportedSceneError
from .ga import _shoebox_walls, compute_lor, simulate_reference
from .scene import PositionPair, load_scene, save_scene
from .synth import extract_params, load_params, octave_filter, save_params

_DS = DEFAULTS["dataset"]
MANIFEST_FORMAT = "auralkit-dataset"


def _check_range(rng, name):
    lo, hi = (float(v) for v in rng)
    if not 0.0 <= lo <= hi <= 1.0:
        raise DomainError(f"{name} range must satisfy 0 <= lo <= hi <= 1, got {rng}")
    return lo, hi


def _copula_uniform(n_faces, seed, stream, correlation):
    """(n_faces, bands) uniforms sharing one scene-level Gaussian factor.

    Each entry is marginally U(0, 1); ``correlation`` is the latent Gaussian
    correlation between any two entries of the same scene.
    """
    rng = np.random.default_rng([*np.atleast_1d(seed).tolist(), stream])
    common = rng.standard_normal()
    own = rng.standard_normal((n_faces, N_BANDS))
    z = np.sqrt(correlation) * common + np.sqrt(1.0 - correlation) * own
    return special.ndtr(z)


def perturb_materials(scene, refl_range=_DS["refl_range"], scat_range=_DS["scat_range"], seed=0,
                      correlation=_DS["material_correlation"]):
    """Redraw every face's per-band reflectivity and scattering inside the given ranges.

    Draws are uniform per face and band. They are tied together through a
    shared latent factor so that a variant as a whole can be live or dead;
    ``correlation=0`` gives independent draws. Geometry is untouched.
    """
    r_lo, r_hi = _check_range(refl_range, "reflectivity")
    s_lo, s_hi = _check_range(scat_range, "scattering")
    if not 0.0 <= correlation <= 1.0:
        raise DomainError("correlation must lie in [0, 1]")
    n = len(scene)
    refl = r_lo + (r_hi - r_lo) * _copula_uniform(n, seed, 0, correlation)
    scat = s_lo + (s_hi - s_lo) * _copula_uniform(n, seed, 1, correlation)
    # the degenerate range must be exact, not lo + 0 * u rounding
    refl = np.where(r_hi == r_lo, r_lo, refl)
    scat = np.where(s_hi == s_lo, s_lo, scat)
    return scene.with_materials(refl, scat)


def point_triangle_distance(points, tri):
    """Euclidean distances (P, M) from points (P, 3) to triangles (M, 3, 3)."""
    p = np.asarray(points, dtype=float)[:, None, :]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    h = np.einsum("pmk,mk->pm", p - a, n)
    proj = p - h[..., None] * n
    # barycentric test of the projection
    e1, e2, w = b - a, c - a, proj - a
    d11, d12, d22 = (e1 * e1).sum(1), (e1 * e2).sum(1), (e2 * e2).sum(1)
    w1, w2 = (w * e1).sum(-1), (w * e2).sum(-1)
    den = d11 * d22 - d12 * d12
    u = (d22 * w1 - d12 * w2) / den
    v = (d11 * w2 - d12 * w1) / den
    inside = (u >= 0) & (v >= 0) & (u + v <= 1)

    def seg(s0, s1):
        d = s1 - s0
        t = np.clip(((p - s0) * d).sum(-1) / (d * d).sum(-1), 0.0, 1.0)
        return np.linalg.norm(p - (s0 + t[..., None] * d), axis=-1)

    edge = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))
    return np.where(inside, np.abs(h), edge)


def sample_positions(scene, n, min_clearance_m=_DS["min_clearance_m"], seed=0,
                     min_pair_distance_m=_DS["min_pair_distance_m"], max_rejections=100_000):
    """Uniform rejection sampling of ``n`` source/listener pairs in the bounding box.

    Both points keep ``min_clearance_m`` from every face and the pair is at
    least ``min_pair_distance_m`` apart.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    if scene.bounding_box is None:
        raise InfeasibleSceneError("empty scene has no interior")
    lo, hi = scene.bounding_box
    tri = scene.vertices
    rng = np.random.default_rng(seed)
    pairs, misses, batch = [], 0, 1024
    while len(pairs) < n:
        cand = rng.uniform(lo, hi, size=(batch, 2, 3))
        clear = point_triangle_distance(cand.reshape(-1, 3), tri).min(axis=1).reshape(batch, 2)
        ok = (
            np.all(clear >= min_clearance_m, axis=1)
            & (np.linalg.norm(cand[:, 0] - cand[:, 1], axis=1) >= min_pair_distance_m)
            & np.all((cand > lo) & (cand < hi), axis=(1, 2))
        )
        for i in range(batch):
            if ok[i]:
                misses = 0
                pairs.append(PositionPair(cand[i, 0], cand[i, 1]))
                if len(pairs) == n:
                    break
            else:
                misses += 1
                if misses >= max_rejections:
                    raise InfeasibleSceneError(
                        f"{max_rejections} consecutive rejections; clearance {min_clearance_m} m "
                        "cannot be met"
                    )
    return pairs


@dataclass
class ManifestEntry:
    entry_id: str
    scene_id: str
    variant_id: int
    source: list
    listener: list
    scene_path: str
    lor_path: str
    srir_path: str = None
    params_path: str = None
    t60: float = None

    @property
    def key(self):
        return (self.scene_id, self.variant_id, tuple(self.source), tuple(self.listener))


@dataclass
class DatasetManifest:
    entries: list
    config: dict = field(default_factory=dict)
    root: Path = None

    def __len__(self):
        return len(self.entries)

    def path(self, relative):
        return None if relative is None else Path(self.root) / relative

    def to_dict(self):
        return {
            "format": MANIFEST_FORMAT,
            "version": 1,
            "config": self.config,
            "entries": [asdict(e) for e in self.entries],
        }

    def save(self, path=None):
        path = Path(path) if path else Path(self.root) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    def validate(self):
        """Check that every referenced file exists and that entries are unique."""
        seen = set()
        for e in self.entries:
            if e.key in seen:
                raise DomainError(f"duplicate entry {e.key}")
            seen.add(e.key)
            for rel in (e.scene_path, e.lor_path, e.srir_path, e.params_path):
                if rel is not None and not self.path(rel).exists():
                    raise FileNotFoundError(f"entry {e.entry_id}: missing {self.path(rel)}")
        return self

    def scene(self, entry):
        return load_scene(self.path(entry.scene_path))

    def pair(self, entry):
        return PositionPair(entry.source, entry.listener)

    def srir(self, entry):
        return read_ir(self.path(entry.srir_path))

    def lor(self, entry):
        return read_ir(self.path(entry.lor_path))

    def params(self, entry):
        return load_params(self.path(entry.params_path))


def load_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    doc = json.loads(path.read_text())
    if doc.get("format") != MANIFEST_FORMAT:
        raise DomainError(f"{path} is not a dataset manifest")
    entries = [ManifestEntry(**e) for e in doc["entries"]]
    return DatasetManifest(entries, doc.get("config", {}), path.parent).validate()


def _is_shoebox(scene):
    try:
        _shoebox_walls(scene)
    except UnsupportedSceneError:
        return False
    return True


def generate_dataset(scenes, variants_per_scene=_DS["variants_per_scene"],
                     pairs_per_variant=_DS["pairs_per_variant"], max_order=_DS["max_order"],
                     out_dir="dataset", seed=0, refl_range=_DS["refl_range"],
                     scat_range=_DS["scat_range"], min_clearance_m=_DS["min_clearance_m"],
                     correlation=_DS["material_correlation"], n_o=LOR_ORDER,
                     sample_rate=SAMPLE_RATE):
    """Render a dataset and write its manifest.

    ``scenes`` maps scene ids to :class:`SceneGraph` (a list gets ids
    ``scene00``, ...). Shoeboxes get an oracle SRIR and extracted parameters;
    other meshes get the low-order part only. Output is a deterministic
    function of ``seed``.
    """
    if not isinstance(scenes, dict):
        scenes = {f"scene{i:02d}": s for i, s in enumerate(scenes)}
    root = Path(out_dir)
    for sub in ("scenes", "srir", "lor", "params"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    config = {
        "seed": seed, "variants_per_scene": variants_per_scene,
        "pairs_per_variant": pairs_per_variant, "max_order": max_order, "lor_order": n_o,
        "refl_range": list(refl_range), "scat_range": list(scat_range),
        "material_correlation": correlation, "min_clearance_m": min_clearance_m,
        "sample_rate": sample_rate,
    }
    entries = []
    for s_idx, (scene_id, base) in enumerate(scenes.items()):
        oracle = _is_shoebox(base)
        for v in range(variants_per_scene):
            variant = perturb_materials(base, refl_range, scat_range, [seed, s_idx, v], correlation)
            scene_rel = f"scenes/{scene_id}_v{v:02d}.json"
            save_scene(variant, root / scene_rel)
            pairs = sample_positions(variant, pairs_per_variant, min_clearance_m, [seed, s_idx, v, 1])
            for p_idx, pair in enumerate(pairs):
                eid = f"{scene_id}_v{v:02d}_p{p_idx:02d}"
                try:
                    entry = _render_entry(root, eid, scene_id, v, scene_rel, variant, pair,
                                          oracle, max_order, n_o, sample_rate)
                except OSError as exc:
                    raise OSError(f"entry {eid}: {exc}") from exc
                entries.append(entry)
    manifest = DatasetManifest(entries, config, root)
    manifest.save()
    return manifest


def _render_entry(root, eid, scene_id, v, scene_rel, variant, pair, oracle, max_order, n_o, fs):
    entry = ManifestEntry(eid, scene_id, v, pair.source.tolist(), pair.listener.tolist(),
                          scene_rel, f"lor/{eid}.wav")
    if oracle:
        srir = simulate_reference(variant, pair, max_order, fs)
        lor = compute_lor(variant, pair, n_o, fs, length=len(srir))
        params = extract_params(srir, lor)
        entry.srir_path = f"srir/{eid}.wav"
        entry.params_path = f"params/{eid}.json"
        entry.t60 = params.t60
        write_ir(root / entry.srir_path, srir)
        save_params(params, root / entry.params_path)
    else:
        lor = compute_lor(variant, pair, n_o, fs)
    write_ir(root / entry.lor_path, lor)
    return entry


# -- diversity analysis --------------------------------------------------------

def band_energy_spectrum(ir):
    """Octave-band energies of the channel sum, normalized to unit sum."""
    x = np.asarray(getattr(ir, "channels", ir), dtype=float)
    x = x.sum(axis=0) if x.ndim == 2 else x
    fs = getattr(ir, "sample_rate", SAMPLE_RATE)
    e = np.array([np.sum(octave_filter(x, b, fs) ** 2) for b in range(N_BANDS)])
    total = e.sum()
    return e / total if total > 0 else e


def pca_2d(spectra):
    """Project rows onto the two leading principal components.

    Returns (coords (n, 2), eigenvalues (2,), components (2, d)). Components
    are ordered by eigenvalue and signed so their largest-magnitude loading is
    positive. Zero-variance input projects to the origin.
    """
    x = np.asarray(spectra, dtype=float)
    centered = x - x.mean(axis=0)
    # a constant column can still leave rounding residue in the mean
    centered[:, np.ptp(x, axis=0) == 0] = 0.0
    cov = centered.T @ centered / max(len(x) - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:2]
    vals, comps = np.clip(vals[order], 0.0, None), vecs[:, order].T
    for k in range(len(comps)):
        if vals[k] == 0:
            comps[k] = 0.0
            continue
        if comps[k, np.argmax(np.abs(comps[k]))] < 0:
            comps[k] = -comps[k]
    return centered @ comps.T, vals, comps


@dataclass
class DiversityReport:
    entry_ids: list
    coords: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    t60: np.ndarray
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    @property
    def zero_variance(self):
        return bool(np.all(self.eigenvalues == 0))

    @property
    def t60_ratio(self):
        return float(self.t60.max() / self.t60.min())

    def summary(self):
        return {
            "entries": len(self.entry_ids),
            "pca_variance": self.coords.var(axis=0, ddof=1).tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "zero_variance": self.zero_variance,
            "t60_min": float(self.t60.min()),
            "t60_max": float(self.t60.max()),
            "t60_ratio": self.t60_ratio,
            "t60_histogram": {"counts": self.hist_counts.tolist(), "edges": self.hist_edges.tolist()},
        }

    def write_csv(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "pca.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["entry_id", "pc1", "pc2", "t60"])
            for eid, (a, b), t in zip(self.entry_ids, self.coords, self.t60):
                w.writerow([eid, repr(float(a)), repr(float(b)), repr(float(t))])
        with open(out / "t60_hist.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lo_s", "hi_s", "count"])
            for lo, hi, c in zip(self.hist_edges[:-1], self.hist_edges[1:], self.hist_counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        return out / "pca.csv", out / "t60_hist.csv"

    def plot(self, path):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
        ax1.scatter(self.coords[:, 0], self.coords[:, 1], s=8, c=self.t60, cmap="viridis")
        ax1.set_xlabel("PC 1")
        ax1.set_ylabel("PC 2")
        ax1.set_title("Band energy spectra")
        ax2.stairs(self.hist_counts, self.hist_edges, fill=True)
        ax2.set_xlabel("T60 (s)")
        ax2.set_ylabel("count")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return Path(path)


def analyze_diversity(manifest, bins=20, out_dir=None, plot=False):
    """PCA of normalized band-energy spectra plus a T60 histogram for oracle entries."""
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    entries = [e for e in manifest.entries if e.srir_path is not None]
    if len(entries) < 10:
        raise DomainError(f"diversity analysis needs >= 10 oracle entries, got {len(entries)}")
    spectra = np.array([band_energy_spectrum(manifest.srir(e)) for e in entries])
    coords, vals, comps = pca_2d(spectra)
    t60 = np.array([e.t60 if e.t60 is not None else manifest.params(e).t60 for e in entries])
    counts, edges = np.histogram(t60, bins=bins)
    report = DiversityReport([e.entry_id for e in entries], coords, vals, comps, t60, counts, edges)
    if out_dir is not None:
        report.write_csv(out_dir)
        if plot:
            report.plot(Path(out_dir) / "diversity.png")
    return report


def desk_scenes(n=_DS["n_scenes"], seed=0):
    """Base shoeboxes with dimensions drawn between 3 x 2.5 x 2.4 and 9 x 7 x 4 m."""
    from .scene import make_shoebox

    rng = np.random.default_rng([seed, 7])
    dims = rng.uniform([3.0, 2.5, 2.4], [9.0, 7.0, 4.0], size=(n, 3)).round(2)
    return {f"box{i:02d}": make_shoebox(d) for i, d in enumerate(dims)}

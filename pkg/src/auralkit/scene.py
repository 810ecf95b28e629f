"""Triangle-face scene graphs with per-band acoustic materials.

A scene is a set of triangular faces. Each face carries its geometry plus
octave-band reflectivity and scattering coefficients, and two faces are
adjacent when they share an edge. The same graph feeds the image-source
engine and the graph encoder of the neural model.

File formats
------------
Meshes are a subset of Wavefront OBJ: ``v x y z``, ``f i j k`` (1-based,
negative indices allowed, ``i/j/k`` forms accepted) and ``usemtl name``.
Materials live in a JSON sidecar::

    {"concrete": {"reflectivity": 0.9, "scattering": 0.1},
     "carpet":   {"reflectivity": [0.95, 0.9, ...8 values], "scattering": 0.3}}

A scalar is broadcast to all 8 bands. Faces declared before any
``usemtl`` use the material named ``"default"``.
"""

from dataclasses import dataclass, field
from functools import cached_property
import json
from pathlib import Path

import numpy as np

from .config import N_BANDS
from .errors import (
    DegreeZeroError,
    DomainError,
    MaterialReferenceError,
    SceneParseError,
    UnsupportedGeometryError,
)

SCENE_FORMAT = "auralkit-scene"
SCENE_VERSION = 1
# vertex coordinates are matched after rounding to this many decimals
_VERTEX_DECIMALS = 9


def _bands(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(N_BANDS, float(arr))
    if arr.shape != (N_BANDS,):
        raise DomainError(f"{name} needs 1 or {N_BANDS} values, got shape {arr.shape}")
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} entries must lie in [0, 1]")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Face:
    """One triangle with its acoustic material.

    ``vertices`` is a (3, 3) array of corner points in meters; the normal
    follows the winding order (right-hand rule).
    """

    vertices: np.ndarray
    reflectivity: np.ndarray
    scattering: np.ndarray
    material: str = "default"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (3, 3) or not np.all(np.isfinite(v)):
            raise UnsupportedGeometryError("a face needs exactly 3 finite vertices")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "reflectivity", _frozen(_bands(self.reflectivity, "reflectivity")))
        object.__setattr__(self, "scattering", _frozen(_bands(self.scattering, "scattering")))
        if not self.area > 0.0:
            raise UnsupportedGeometryError("degenerate triangle with zero area")

    @property
    def _cross(self):
        v0, v1, v2 = self.vertices
        return np.cross(v1 - v0, v2 - v0)

    @property
    def area(self):
        return 0.5 * float(np.linalg.norm(self._cross))

    @property
    def normal(self):
        c = self._cross
        return c / np.linalg.norm(c)

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    def with_materials(self, reflectivity, scattering):
        return Face(self.vertices, reflectivity, scattering, self.material)


def _edge_adjacency(vertices):
    """Shared-edge adjacency for an (N, 3, 3) stack of triangles."""
    n = len(vertices)
    adj = np.zeros((n, n), dtype=np.int8)
    if n == 0:
        return adj
    flat = np.round(vertices.reshape(-1, 3), _VERTEX_DECIMALS) + 0.0
    _, ids = np.unique(flat, axis=0, return_inverse=True)
    ids = ids.reshape(n, 3)
    edges = {}
    for f, (a, b, c) in enumerate(ids):
        for e in ((a, b), (b, c), (c, a)):
            edges.setdefault((min(e), max(e)), []).append(f)
    for faces in edges.values():
        for i in faces:
            for j in faces:
                if i != j:
                    adj[i, j] = 1
    return adj


@dataclass(frozen=True, eq=False)
class SceneGraph:
    """Immutable face graph G(V, A).

    Stacked per-face arrays (``vertices``, ``normals``, ``reflectivity``...)
    are computed lazily and shared; treat them as read-only.
    """

    faces: tuple = ()
    adjacency: np.ndarray = field(default=None)

    def __post_init__(self):
        faces = tuple(self.faces)
        object.__setattr__(self, "faces", faces)
        if self.adjacency is None:
            adj = _edge_adjacency(np.array([f.vertices for f in faces]).reshape(-1, 3, 3))
        else:
            adj = np.asarray(self.adjacency, dtype=np.int8)
            if adj.shape != (len(faces), len(faces)):
                raise DomainError("adjacency shape does not match face count")
            if np.any(adj != adj.T) or np.any(np.diag(adj) != 0):
                raise DomainError("adjacency must be symmetric with a zero diagonal")
        adj = adj.copy()
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)

    def __len__(self):
        return len(self.faces)

    @cached_property
    def vertices(self):
        return _frozen(np.array([f.vertices for f in self.faces]).reshape(-1, 3, 3))

    @cached_property
    def normals(self):
        return _frozen(np.array([f.normal for f in self.faces]).reshape(-1, 3))

    @cached_property
    def centroids(self):
        return _frozen(self.vertices.mean(axis=1))

    @cached_property
    def areas(self):
        return _frozen([f.area for f in self.faces])

    @cached_property
    def reflectivity(self):
        return _frozen(np.array([f.reflectivity for f in self.faces]).reshape(-1, N_BANDS))

    @cached_property
    def scattering(self):
        return _frozen(np.array([f.scattering for f in self.faces]).reshape(-1, N_BANDS))

    @cached_property
    def bounding_box(self):
        """(2, 3) array of min and max corners, or ``None`` for an empty scene."""
        if not self.faces:
            return None
        pts = self.vertices.reshape(-1, 3)
        return _frozen([pts.min(axis=0), pts.max(axis=0)])

    def contains(self, point):
        """True if ``point`` lies strictly inside the bounding box (always true when empty)."""
        if self.bounding_box is None:
            return True
        p = np.asarray(point, dtype=float)
        lo, hi = self.bounding_box
        return bool(np.all(p > lo) and np.all(p < hi))

    def face_features(self, broadband=False):
        """Vertex-feature matrix **V**, one row per face.

        Columns: centroid (3), unit normal (3), sorted edge lengths (3), area (1),
        then reflectivity and scattering, either as 8 bands each or as their
        band means when ``broadband`` is set.
        """
        v = self.vertices
        edges = np.sort(np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2), axis=1)
        refl, scat = self.reflectivity, self.scattering
        if broadband:
            refl = refl.mean(axis=1, keepdims=True)
            scat = scat.mean(axis=1, keepdims=True)
        return np.hstack(
            [self.centroids, self.normals, edges, self.areas[:, None], refl, scat]
        )

    def permuted(self, order):
        """Return the scene with faces relabeled so new face i is old face ``order[i]``."""
        order = np.asarray(order)
        adj = self.adjacency[np.ix_(order, order)]
        return SceneGraph(tuple(self.faces[i] for i in order), adj)

    def translated(self, offset):
        offset = np.asarray(offset, dtype=float)
        faces = tuple(
            Face(f.vertices + offset, f.reflectivity, f.scattering, f.material) for f in self.faces
        )
        return SceneGraph(faces, self.adjacency)

    def with_materials(self, reflectivity, scattering):
        """Copy of the scene with (N, 8) reflectivity and scattering arrays."""
        faces = tuple(
            f.with_materials(r, s) for f, r, s in zip(self.faces, reflectivity, scattering)
        )
        return SceneGraph(faces, self.adjacency)


@dataclass(frozen=True)
class PositionPair:
    source: np.ndarray
    listener: np.ndarray

    def __post_init__(self):
        s = _frozen(np.asarray(self.source, dtype=float).reshape(3))
        l = _frozen(np.asarray(self.listener, dtype=float).reshape(3))
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(l))):
            raise DomainError("positions must be finite")
        if np.array_equal(s, l):
            raise DomainError("source and listener coincide")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "listener", l)

    def validate(self, scene):
        for name, p in (("source", self.source), ("listener", self.listener)):
            if not scene.contains(p):
                raise DomainError(f"{name} {p.tolist()} is not strictly inside the scene")
        return self

    def swapped(self):
        return PositionPair(self.listener, self.source)


# -- construction ----------------------------------------------------------

_BOX_QUADS = (
    # corner index = 4*z + 2*y + x over the unit cube; each quad is wound so
    # that its normal points into the box
    (0, 2, 3, 1),  # z = 0 floor, normal +z
    (4, 5, 7, 6),  # z = 1 ceiling, normal -z
    (0, 1, 5, 4),  # y = 0, normal +y
    (2, 6, 7, 3),  # y = 1, normal -y
    (0, 4, 6, 2),  # x = 0, normal +x
    (1, 3, 7, 5),  # x = 1, normal -x
)


def _box_triangles(lo, hi, inward=True):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array(
        [[(hi if (k >> a) & 1 else lo)[a] for a in range(3)] for k in range(8)]
    )
    tris = []
    for a, b, c, d in _BOX_QUADS:
        quad = (a, d, c, b) if inward else (a, b, c, d)
        tris.append(corners[[quad[0], quad[1], quad[2]]])
        tris.append(corners[[quad[0], quad[2], quad[3]]])
    return tris


def make_shoebox(dims, reflectivity=0.9, scattering=0.1):
    """Axis-aligned box from the origin to ``dims`` as 12 inward-facing triangles."""
    dims = np.asarray(dims, dtype=float)
    if dims.shape != (3,) or np.any(dims <= 0) or not np.all(np.isfinite(dims)):
        raise DomainError(f"shoebox dimensions must be three positive numbers, got {dims}")
    refl = _bands(reflectivity, "reflectivity")
    scat = _bands(scattering, "scattering")
    faces = tuple(Face(t, refl, scat, "wall") for t in _box_triangles(np.zeros(3), dims))
    return SceneGraph(faces)


def make_furnished_room(dims=(10.0, 8.0, 3.0), n_boxes=83, reflectivity=0.8,
                        scattering=0.2, seed=0):
    """Shoebox room cluttered with ``n_boxes`` outward-facing furniture blocks.

    Blocks float slightly above the floor so that no two faces are coplanar
    by construction; the result has ``12 * (n_boxes + 1)`` faces.
    """
    rng = np.random.default_rng(seed)
    room = make_shoebox(dims, reflectivity, scattering)
    dims = np.asarray(dims, dtype=float)
    faces = list(room.faces)
    refl = _bands(reflectivity, "reflectivity")
    scat = _bands(scattering, "scattering")
    for _ in range(n_boxes):
        size = rng.uniform([0.2, 0.2, 0.2], [0.8, 0.8, 1.2])
        lo = rng.uniform([0.1, 0.1, 0.01], dims - size - 0.1)
        faces += [Face(t, refl, scat, "furniture") for t in _box_triangles(lo, lo + size, inward=False)]
    return SceneGraph(tuple(faces))


def normalize_adjacency(graph, add_self_loops=True):
    """Symmetric normalization D^-1/2 A D^-1/2 of a graph's adjacency.

    Parameters
    ----------
    graph : SceneGraph or array_like
        Scene or a square adjacency matrix.
    add_self_loops : bool
        Use A + I instead of A.

    Returns
    -------
    numpy.ndarray
        Dense (N, N) float matrix.
    """
    adj = graph.adjacency if isinstance(graph, SceneGraph) else graph
    adj = np.asarray(adj, dtype=float)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] == 0:
        raise DomainError("normalize_adjacency needs a nonempty square matrix")
    if add_self_loops:
        adj = adj + np.eye(len(adj))
    deg = adj.sum(axis=1)
    zero = np.flatnonzero(deg <= 0)
    if zero.size:
        raise DegreeZeroError(int(zero[0]))
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * adj * inv_sqrt[None, :]


# -- file IO ---------------------------------------------------------------

def _parse_obj(text):
    vertices, tris, mats = [], [], []
    current = "default"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise SceneParseError("vertex needs 3 coordinates", lineno)
            try:
                vertices.append([float(x) for x in rest[:3]])
            except ValueError:
                raise SceneParseError(f"bad vertex coordinates {rest[:3]}", lineno) from None
        elif tag == "f":
            if len(rest) != 3:
                raise UnsupportedGeometryError(
                    f"line {lineno}: face with {len(rest)} vertices (only triangles are supported)"
                )
            idx = []
            for tok in rest:
                try:
                    k = int(tok.split("/")[0])
                except ValueError:
                    raise SceneParseError(f"bad face index {tok!r}", lineno) from None
                k = k - 1 if k > 0 else len(vertices) + k
                if not 0 <= k < len(vertices):
                    raise SceneParseError(f"face index {tok} out of range", lineno)
                idx.append(k)
            tris.append(idx)
            mats.append(current)
        elif tag == "usemtl":
            if not rest:
                raise SceneParseError("usemtl without a name", lineno)
            current = rest[0]
        elif tag in ("o", "g", "s", "vn", "vt", "mtllib", "l"):
            continue
        else:
            raise SceneParseError(f"unknown record {tag!r}", lineno)
    return np.asarray(vertices, dtype=float), tris, mats


def load_materials(path):
    data = json.loads(Path(path).read_text())
    out = {}
    for name, spec in data.items():
        out[name] = (
            _bands(spec.get("reflectivity", 0.0), f"{name}.reflectivity"),
            _bands(spec.get("scattering", 0.0), f"{name}.scattering"),
        )
    return out


def load_scene(mesh_path, materials_path=None):
    """Load a scene from an OBJ mesh plus materials JSON, or from a scene JSON.

    A ``.json`` mesh path is read as a serialized scene (see
    :func:`save_scene`) and ``materials_path`` is ignored.
    """
    mesh_path = Path(mesh_path)
    if mesh_path.suffix.lower() == ".json":
        return scene_from_dict(json.loads(mesh_path.read_text()))
    vertices, tris, mats = _parse_obj(mesh_path.read_text())
    materials = load_materials(materials_path) if materials_path is not None else {}
    faces = []
    for tri, mat in zip(tris, mats):
        if mat not in materials:
            raise MaterialReferenceError(mat)
        refl, scat = materials[mat]
        faces.append(Face(vertices[tri], refl, scat, mat))
    return SceneGraph(tuple(faces))


def scene_to_dict(scene):
    return {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "n_bands": N_BANDS,
        "faces": [
            {
                "vertices": f.vertices.tolist(),
                "material": f.material,
                "reflectivity": f.reflectivity.tolist(),
                "scattering": f.scattering.tolist(),
            }
            for f in scene.faces
        ],
    }


def scene_from_dict(data):
    if data.get("format") != SCENE_FORMAT:
        raise SceneParseError(f"not an {SCENE_FORMAT} document")
    faces = tuple(
        Face(f["vertices"], f["reflectivity"], f["scattering"], f.get("material", "default"))
        for f in data["faces"]
    )
    return SceneGraph(faces)


def save_scene(scene, path):
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1))
    return Path(path)


def save_obj(scene, mesh_path, materials_path):
    """Write a scene as OBJ + materials JSON, one material per distinct coefficient set."""
    lines, names, materials = [], {}, {}
    current = None
    for i, f in enumerate(scene.faces):
        key = (f.reflectivity.tobytes(), f.scattering.tobytes())
        if key not in names:
            names[key] = f"m{len(names)}"
            materials[names[key]] = {
                "reflectivity": f.reflectivity.tolist(),
                "scattering": f.scattering.tolist(),
            }
        if names[key] != current:
            current = names[key]
            lines.append(f"usemtl {current}")
        for p in f.vertices:
            lines.append("v {!r} {!r} {!r}".format(*map(float, p)))
        lines.append(f"f {3 * i + 1} {3 * i + 2} {3 * i + 3}")
    Path(mesh_path).write_text("\n".join(lines) + "\n")
    Path(materials_path).write_text(json.dumps(materials, indent=1))

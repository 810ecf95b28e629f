"""Image-source geometrical acoustics.

Two routes produce Ambisonic room impulse responses:

* :func:`compute_lor` handles arbitrary triangle meshes up to a small
  reflection order (the low-order reflections, direct sound included). Images
  are built by mirroring across *reflector planes* (coplanar faces grouped
  together) and every candidate path is validated against the mesh.
* :func:`simulate_reference` handles axis-aligned shoeboxes to high order
  using the rectangular image lattice, and serves as ground truth.

Both use the same arrival rule: amplitude ``mean(band_gains) / path_length``,
delay ``path_length / c * fs``, direction from the listener toward the image.
Reflectivity is an amplitude coefficient, so band gains multiply along a
path. Scattering is carried by the scene but the specular engine ignores it.
"""

from dataclasses import dataclass
import itertools
import weakref

import numpy as np

from .ambisonics import AmbisonicIR, encode_arrivals
from .config import LOR_ORDER, N_BANDS, SAMPLE_RATE, SINC_TAPS, SPEED_OF_SOUND
from .errors import DomainError, UnsupportedSceneError
from .scene import PositionPair

_PLANE_TOL = 1e-9
_EDGE_TOL = 1e-9
_SEG_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class ImageSource:
    """A virtual source.

    ``face_path`` lists one representative face per reflector plane, source
    side first. ``alternate_paths`` holds other plane orderings that land on
    the same position (perpendicular walls commute); a listener validates
    at most one of them in general position.
    """

    position: np.ndarray
    order: int
    band_gains: np.ndarray
    face_path: tuple = ()
    alternate_paths: tuple = ()


@dataclass(frozen=True, eq=False)
class ReflectionPath:
    image: ImageSource
    points: np.ndarray  # (order, 3) reflection points, source side first
    faces: tuple  # faces actually hit, source side first
    length: float
    band_gains: np.ndarray
    direction: np.ndarray  # unit vector from listener toward the arrival


@dataclass(frozen=True)
class Arrivals:
    """Validated arrivals sorted by (order, face path)."""

    delays: np.ndarray
    amplitudes: np.ndarray
    directions: np.ndarray
    lengths: np.ndarray
    orders: np.ndarray
    band_gains: np.ndarray
    paths: tuple

    def __len__(self):
        return len(self.delays)


# -- reflector planes ------------------------------------------------------

@dataclass(frozen=True)
class _Planes:
    normals: np.ndarray  # (P, 3)
    offsets: np.ndarray  # (P,)  n . x = d
    members: tuple  # tuple of int arrays, faces per plane
    face_plane: np.ndarray  # (F,) plane id of each face
    representative: np.ndarray  # (P,) lowest face index per plane


_plane_cache = weakref.WeakKeyDictionary()


def _reflector_planes(scene, vertices=None):
    """Group faces by supporting plane (either orientation)."""
    if vertices is None and scene in _plane_cache:
        return _plane_cache[scene]
    v = scene.vertices if vertices is None else vertices
    n = scene.normals
    d = np.einsum("ij,ij->i", n, v[:, 0])
    scale = max(1.0, float(np.abs(v).max())) if len(v) else 1.0
    face_plane = np.full(len(v), -1)
    normals, offsets, members = [], [], []
    for i in range(len(v)):
        if face_plane[i] >= 0:
            continue
        dots = n @ n[i]
        sign = np.sign(dots)
        same = (np.abs(dots) > 1.0 - _PLANE_TOL) & (np.abs(d * sign - d[i]) < _PLANE_TOL * scale)
        same &= face_plane < 0
        idx = np.flatnonzero(same)
        face_plane[idx] = len(normals)
        normals.append(n[i])
        offsets.append(d[i])
        members.append(idx)
    planes = _Planes(
        np.array(normals).reshape(-1, 3),
        np.array(offsets, dtype=float),
        tuple(members),
        face_plane,
        np.array([m[0] for m in members], dtype=int),
    )
    if vertices is None:
        _plane_cache[scene] = planes
    return planes


def _reflect(points, normals, offsets):
    dist = np.einsum("ij,ij->i", points, normals) - offsets
    return points - 2.0 * dist[:, None] * normals, dist


# -- image tree ------------------------------------------------------------

def _image_levels(planes, source, max_order):
    """Image positions level by level.

    Returns a list over orders of (positions, parent index, plane id) arrays.
    """
    levels = [(source[None, :].copy(), np.array([-1]), np.array([-1]))]
    n_planes = len(planes.offsets)
    for _ in range(max_order):
        pos, _, last = levels[-1]
        if n_planes == 0 or len(pos) == 0:
            levels.append((np.zeros((0, 3)), np.zeros(0, int), np.zeros(0, int)))
            continue
        parent = np.repeat(np.arange(len(pos)), n_planes)
        plane = np.tile(np.arange(n_planes), len(pos))
        keep = plane != last[parent]
        parent, plane = parent[keep], plane[keep]
        new, dist = _reflect(pos[parent], planes.normals[plane], planes.offsets[plane])
        keep = np.abs(dist) > _PLANE_TOL
        levels.append((new[keep], parent[keep], plane[keep]))
    return levels


def _plane_chains(levels, order):
    """(M, order) plane ids and (M, order+1, 3) image chain for one level."""
    pos, parent, plane = levels[order]
    m = len(pos)
    chain = np.zeros((m, order + 1, 3))
    planes = np.zeros((m, order), dtype=int)
    idx = np.arange(m)
    for k in range(order, 0, -1):
        p, par, pl = levels[k]
        chain[:, k] = p[idx]
        planes[:, k - 1] = pl[idx]
        idx = par[idx]
    chain[:, 0] = levels[0][0][0]
    return planes, chain


def enumerate_image_sources(scene, source, max_order):
    """All image sources up to ``max_order`` reflections.

    Orderings of the same reflector planes that produce the same position
    are merged into one image (see :class:`ImageSource`); genuinely distinct
    paths landing on one position are kept separately.
    """
    source = np.asarray(source, dtype=float)
    if max_order < 0:
        raise DomainError("max_order must be >= 0")
    if not scene.contains(source):
        raise DomainError(f"source {source.tolist()} is outside the scene")
    planes = _reflector_planes(scene)
    levels = _image_levels(planes, source, max_order)
    refl = scene.reflectivity
    images = [ImageSource(source.copy(), 0, np.ones(N_BANDS), ())]
    scale = max(1.0, float(np.abs(source).max()))
    for order in range(1, max_order + 1):
        plane_ids, chain = _plane_chains(levels, order)
        faces = planes.representative[plane_ids] if len(plane_ids) else plane_ids
        rows = sorted(range(len(faces)), key=lambda r: tuple(faces[r]))
        groups = {}
        for r in rows:
            pos_key = tuple(np.round(chain[r, -1] / (scale * 1e-9)).astype(np.int64))
            groups.setdefault((pos_key, tuple(sorted(faces[r]))), []).append(r)
        for rs in groups.values():
            paths = [tuple(int(f) for f in faces[r]) for r in rs]
            gains = np.prod(refl[list(paths[0])], axis=0)
            images.append(ImageSource(chain[rs[0], -1].copy(), order, gains, paths[0], tuple(paths[1:])))
    return images


# -- visibility ------------------------------------------------------------

def _segment_blocked(a, b, tri, exclude_a, exclude_b, face_plane, chunk=4096):
    """Möller-Trumbore test of segments a->b against all triangles.

    Triangles on the plane of either endpoint (plane ids ``exclude_*``, -1
    for none) are ignored. Returns a bool array over segments.
    """
    m = len(a)
    blocked = np.zeros(m, dtype=bool)
    if m == 0 or len(tri) == 0:
        return blocked
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    step = max(1, chunk * 256 // len(tri))
    for s in range(0, m, step):
        sl = slice(s, s + step)
        d = (b[sl] - a[sl])[:, None, :]
        o = a[sl][:, None, :]
        p = np.cross(d, e2[None])
        det = np.einsum("mfk,fk->mf", p, e1)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - v0[None]
        u = np.einsum("mfk,mfk->mf", tvec, p) * inv
        q = np.cross(tvec, e1[None])
        v = np.einsum("mfk,mk->mf", q, d[:, 0]) * inv
        t = np.einsum("mfk,fk->mf", q, e2) * inv
        hit = ok & (u >= -_EDGE_TOL) & (v >= -_EDGE_TOL) & (u + v <= 1 + _EDGE_TOL)
        hit &= (t > _SEG_EPS) & (t < 1 - _SEG_EPS)
        fp = face_plane[None, :]
        hit &= (fp != exclude_a[sl][:, None]) & (fp != exclude_b[sl][:, None])
        blocked[sl] = hit.any(axis=1)
    return blocked


def _locate_on_plane(points, plane_ids, planes, tri):
    """Index of a face of the given plane containing each point, -1 if none."""
    found = np.full(len(points), -1)
    if len(points) == 0:
        return found
    order = np.argsort(plane_ids, kind="stable")
    sorted_ids = plane_ids[order]
    bounds = np.flatnonzero(np.diff(sorted_ids)) + 1
    for grp in np.split(order, bounds):
        members = planes.members[plane_ids[grp[0]]]
        p = points[grp]
        hit = np.full(len(grp), -1)
        for f in members:
            a, b, c = tri[f]
            e1, e2, w = b - a, c - a, p - a
            d11, d12, d22 = e1 @ e1, e1 @ e2, e2 @ e2
            denom = d11 * d22 - d12 * d12
            w1, w2 = w @ e1, w @ e2
            u = (d22 * w1 - d12 * w2) / denom
            v = (d11 * w2 - d12 * w1) / denom
            inside = (u >= -_EDGE_TOL) & (v >= -_EDGE_TOL) & (u + v <= 1 + _EDGE_TOL)
            hit = np.where((hit < 0) & inside, f, hit)
        found[grp] = hit
    return found


def _validate_paths(plane_ids, chain, listener, planes, tri):
    """Vectorized unfolding test for all paths of one order.

    Returns (valid, points, faces) where points/faces run source side first.
    """
    m, order = plane_ids.shape
    valid = np.ones(m, dtype=bool)
    points = np.zeros((m, order, 3))
    faces = np.full((m, order), -1)
    cur = np.broadcast_to(listener, (m, 3)).copy()
    for k in range(order, 0, -1):
        target = chain[:, k]
        pl = plane_ids[:, k - 1]
        n = planes.normals[pl]
        denom = np.einsum("ij,ij->i", n, target - cur)
        num = planes.offsets[pl] - np.einsum("ij,ij->i", n, cur)
        safe = np.abs(denom) > 1e-15
        t = np.where(safe, num / np.where(safe, denom, 1.0), -1.0)
        valid &= (t > _SEG_EPS) & (t < 1 - _SEG_EPS)
        pt = cur + t[:, None] * (target - cur)
        idx = np.flatnonzero(valid)
        f = _locate_on_plane(pt[idx], pl[idx], planes, tri)
        faces[idx, k - 1] = f
        valid[idx[f < 0]] = False
        points[:, k - 1] = pt
        cur = pt
    idx = np.flatnonzero(valid)
    if len(idx) == 0 or len(tri) == 0:
        return valid, points, faces
    # occlusion: listener -> p_k -> ... -> p_1 -> source
    stops = [np.broadcast_to(listener, (len(idx), 3))]
    stop_planes = [np.full(len(idx), -1)]
    for k in range(order, 0, -1):
        stops.append(points[idx, k - 1])
        stop_planes.append(plane_ids[idx, k - 1])
    stops.append(chain[idx, 0])
    stop_planes.append(np.full(len(idx), -1))
    a = np.concatenate(stops[:-1])
    b = np.concatenate(stops[1:])
    ea = np.concatenate(stop_planes[:-1])
    eb = np.concatenate(stop_planes[1:])
    blocked = _segment_blocked(a, b, tri, ea, eb, planes.face_plane)
    blocked = blocked.reshape(order + 1, len(idx)).any(axis=0)
    valid[idx[blocked]] = False
    return valid, points, faces


def check_visibility(scene, image, listener):
    """Validate an image source for a listener.

    Returns a :class:`ReflectionPath`, or ``None`` when no stored ordering
    of the image's reflectors yields an unoccluded specular path.
    """
    listener = np.asarray(listener, dtype=float)
    planes = _reflector_planes(scene)
    if image.order == 0:
        if len(scene):
            blocked = _segment_blocked(
                listener[None], image.position[None], scene.vertices,
                np.array([-1]), np.array([-1]), planes.face_plane,
            )
            if blocked[0]:
                return None
        vec = image.position - listener
        length = float(np.linalg.norm(vec))
        return ReflectionPath(image, np.zeros((0, 3)), (), length, image.band_gains.copy(), vec / length)
    # rebuild the image chain from the true source for each ordering
    for path in (image.face_path,) + tuple(image.alternate_paths):
        pl = planes.face_plane[list(path)]
        chain = [None] * (image.order + 1)
        chain[image.order] = image.position
        pos = image.position[None]
        for k in range(image.order, 0, -1):
            pos, _ = _reflect(pos, planes.normals[pl[k - 1]][None], planes.offsets[pl[k - 1]][None])
            chain[k - 1] = pos[0]
        chain = np.array(chain)
        chain[image.order] = image.position
        valid, points, faces = _validate_paths(pl[None], chain[None], listener, planes, scene.vertices)
        if valid[0]:
            hit = tuple(int(f) for f in faces[0])
            vec = image.position - listener
            length = float(np.linalg.norm(vec))
            gains = np.prod(scene.reflectivity[list(hit)], axis=0)
            return ReflectionPath(image, points[0], hit, length, gains, vec / length)
    return None


# -- impulse responses -----------------------------------------------------

def _arrivals(orders, faces, positions, gains, listener, sample_rate, c):
    vec = positions - listener
    lengths = np.linalg.norm(vec, axis=1)
    key = sorted(range(len(orders)), key=lambda i: (orders[i], faces[i]))
    key = np.asarray(key, dtype=int)
    lengths = lengths[key]
    gains = gains[key]
    return Arrivals(
        delays=lengths / c * sample_rate,
        amplitudes=gains.mean(axis=1) / lengths,
        directions=vec[key] / lengths[:, None],
        lengths=lengths,
        orders=np.asarray(orders, dtype=int)[key],
        band_gains=gains,
        paths=tuple(faces[i] for i in key),
    )


def _render(arrivals, sample_rate, length, meta):
    if length is None:
        length = int(np.ceil(arrivals.delays.max())) + SINC_TAPS // 2 + 1 if len(arrivals) else 1
    ir = AmbisonicIR.zeros(length, sample_rate, meta=meta)
    encode_arrivals(ir.channels, arrivals.directions, arrivals.amplitudes, arrivals.delays)
    return ir


def lor_arrivals(scene, pair, n_o=LOR_ORDER, sample_rate=SAMPLE_RATE, speed_of_sound=SPEED_OF_SOUND):
    """Validated arrivals of all paths with at most ``n_o`` reflections."""
    if n_o < 0:
        raise DomainError("reflection order must be >= 0")
    pair.validate(scene)
    listener = pair.listener
    # work in listener-centered coordinates so rigid translations are exact
    source = pair.source - listener
    tri = scene.vertices - listener
    planes = _reflector_planes(scene, tri) if len(scene) else None
    orders, faces, positions, gains = [0], [()], [source], [np.ones(N_BANDS)]
    origin = np.zeros(3)
    if len(scene):
        blocked = _segment_blocked(origin[None], source[None], tri, np.array([-1]),
                                   np.array([-1]), planes.face_plane)
        if blocked[0]:
            orders, faces, positions, gains = [], [], [], []
        levels = _image_levels(planes, source, n_o)
        refl = scene.reflectivity
        for order in range(1, n_o + 1):
            if len(levels[order][0]) == 0:
                continue
            plane_ids, chain = _plane_chains(levels, order)
            valid, _, hit = _validate_paths(plane_ids, chain, origin, planes, tri)
            for r in np.flatnonzero(valid):
                f = tuple(int(x) for x in hit[r])
                orders.append(order)
                faces.append(f)
                positions.append(chain[r, -1])
                gains.append(np.prod(refl[list(f)], axis=0))
    positions = np.array(positions).reshape(-1, 3)
    gains = np.array(gains).reshape(-1, N_BANDS)
    return _arrivals(orders, faces, positions, gains, origin, sample_rate, speed_of_sound)


def compute_lor(scene, pair, n_o=LOR_ORDER, sample_rate=SAMPLE_RATE, length=None,
                speed_of_sound=SPEED_OF_SOUND, return_arrivals=False):
    """Low-order reflections (direct sound included) as an A-format IR.

    Parameters
    ----------
    scene : SceneGraph
    pair : PositionPair
    n_o : int
        Highest reflection order kept.
    length : int, optional
        Output length in samples; by default just long enough for the last
        arrival's kernel.
    return_arrivals : bool
        Also return the :class:`Arrivals` used to render the IR.
    """
    arr = lor_arrivals(scene, pair, n_o, sample_rate, speed_of_sound)
    meta = {"source": pair.source.tolist(), "listener": pair.listener.tolist(), "n_o": int(n_o)}
    ir = _render(arr, sample_rate, length, meta)
    return (ir, arr) if return_arrivals else ir


# -- shoebox lattice oracle --------------------------------------------------

def _shoebox_walls(scene):
    """Map each face to (axis, side) and check the scene is a closed box."""
    if len(scene) == 0:
        raise UnsupportedSceneError("empty scene is not a shoebox")
    lo, hi = scene.bounding_box
    dims = hi - lo
    v = scene.vertices
    wall = np.full(len(v), -1)
    for axis, side in itertools.product(range(3), range(2)):
        coord = (lo, hi)[side][axis]
        on = np.all(np.abs(v[:, :, axis] - coord) <= 1e-9 * max(1.0, abs(coord)), axis=1)
        wall[on & (wall < 0)] = 2 * axis + side
    if np.any(wall < 0):
        raise UnsupportedSceneError("every face must lie on a bounding-box wall")
    for axis, side in itertools.product(range(3), range(2)):
        area = scene.areas[wall == 2 * axis + side].sum()
        other = np.prod(np.delete(dims, axis))
        if not np.isclose(area, other, rtol=1e-9):
            raise UnsupportedSceneError(f"wall {axis}/{side} is not fully covered by faces")
    return lo, dims, wall


def _lattice_axis(n_max):
    """1-D images: (q, j, hits) with hits = |j - q| + |j| <= n_max."""
    out = [(q, j, abs(j - q) + abs(j)) for q in (0, 1) for j in range(-n_max, n_max + 2)]
    return np.array([r for r in out if r[2] <= n_max], dtype=int).reshape(-1, 3)


def lattice_images(dims, source, max_order):
    """Positions and orders of all shoebox images up to ``max_order``.

    Room spans [0, dims]; returns (positions (M, 3), cells (M, 3), orders (M,)).
    The cell index along an axis counts wall crossings, so |cell| is that
    axis' share of the order.
    """
    axes = [_lattice_axis(max_order) for _ in range(3)]
    q = np.stack(np.meshgrid(*(a[:, 0] for a in axes), indexing="ij"), -1).reshape(-1, 3)
    j = np.stack(np.meshgrid(*(a[:, 1] for a in axes), indexing="ij"), -1).reshape(-1, 3)
    h = np.stack(np.meshgrid(*(a[:, 2] for a in axes), indexing="ij"), -1).reshape(-1, 3)
    keep = h.sum(axis=1) <= max_order
    q, j, h = q[keep], j[keep], h[keep]
    dims = np.asarray(dims, dtype=float)
    pos = (1 - 2 * q) * np.asarray(source, dtype=float) + 2 * j * dims
    cells = 2 * j - q
    return pos, cells, h.sum(axis=1)


def _fold(x, width):
    y = np.mod(x, 2.0 * width)
    return np.where(y > width, 2.0 * width - y, y)


def shoebox_arrivals(scene, pair, max_order, sample_rate=SAMPLE_RATE, speed_of_sound=SPEED_OF_SOUND):
    """Arrivals of every lattice image, with reflectivity taken from the faces hit."""
    lo, dims, wall = _shoebox_walls(scene)
    pair.validate(scene)
    src = pair.source - lo
    lis = pair.listener - lo
    tri = scene.vertices - lo
    pos, cells, orders = lattice_images(dims, src, max_order)
    m = len(pos)
    # every crossing of a lattice plane between listener and image is a reflection
    img, tt, wall_id = [], [], []
    for axis in range(3):
        c = cells[:, axis]
        for i in np.flatnonzero(c):
            ks = np.arange(1, c[i] + 1) if c[i] > 0 else np.arange(c[i] + 1, 1)
            t = (ks * dims[axis] - lis[axis]) / (pos[i, axis] - lis[axis])
            img.append(np.full(len(ks), i))
            tt.append(t)
            wall_id.append(2 * axis + np.mod(ks, 2))
    faces = [() for _ in range(m)]
    gains = np.ones((m, N_BANDS))
    if img:
        img = np.concatenate(img)
        tt = np.concatenate(tt)
        wall_id = np.concatenate(wall_id)
        pts = lis + tt[:, None] * (pos[img] - lis)
        pts = _fold(pts, dims)
        axis = wall_id // 2
        pts[np.arange(len(pts)), axis] = np.where(wall_id % 2 == 1, dims[axis], 0.0)
        hit = np.full(len(pts), -1)
        for w in range(6):
            sel = np.flatnonzero(wall_id == w)
            members = np.flatnonzero(wall == w)
            for f in members:
                a, b, c = tri[f]
                e1, e2, wv = b - a, c - a, pts[sel] - a
                d11, d12, d22 = e1 @ e1, e1 @ e2, e2 @ e2
                den = d11 * d22 - d12 * d12
                w1, w2 = wv @ e1, wv @ e2
                u = (d22 * w1 - d12 * w2) / den
                v = (d11 * w2 - d12 * w1) / den
                inside = (u >= -_EDGE_TOL) & (v >= -_EDGE_TOL) & (u + v <= 1 + _EDGE_TOL)
                hit[sel] = np.where((hit[sel] < 0) & inside, f, hit[sel])
            miss = sel[hit[sel] < 0]
            hit[miss] = members[0]
        np.multiply.at(gains, img, scene.reflectivity[hit])
        # path faces, source side first = decreasing crossing parameter
        order = np.lexsort((-tt, img))
        split = np.flatnonzero(np.diff(img[order])) + 1
        for grp in np.split(order, split):
            faces[img[grp[0]]] = tuple(int(f) for f in hit[grp])
    return _arrivals(list(orders), faces, pos - lis, gains, np.zeros(3), sample_rate, speed_of_sound)


def simulate_reference(shoebox, pair, max_order, sample_rate=SAMPLE_RATE, length=None,
                       speed_of_sound=SPEED_OF_SOUND, return_arrivals=False):
    """High-order ground-truth IR of a shoebox scene.

    Raises :class:`UnsupportedSceneError` when the scene is not a closed
    axis-aligned box.
    """
    if not 0 <= max_order <= 40:
        raise DomainError("max_order must lie in [0, 40]")
    arr = shoebox_arrivals(shoebox, pair, max_order, sample_rate, speed_of_sound)
    meta = {"source": pair.source.tolist(), "listener": pair.listener.tolist(),
            "max_order": int(max_order)}
    ir = _render(arr, sample_rate, length, meta)
    return (ir, arr) if return_arrivals else ir


__all__ = [
    "ImageSource", "ReflectionPath", "Arrivals", "PositionPair",
    "enumerate_image_sources", "check_visibility", "compute_lor", "lor_arrivals",
    "simulate_reference", "shoebox_arrivals", "lattice_images",
]

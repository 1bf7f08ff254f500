"""Box geometries: edges, oriented plaquettes, loops and neighborhoods.

A geometry is an axis-aligned box of integer points ``lo <= x <= hi`` in
``Z^d``. Axis 0 plays the role of time. Edges are stored axis-major: all
edges along axis 0 first (ordered by their base vertex in C order), then
axis 1, and so on. The base of an edge is its lexicographically smaller
endpoint, so edge ``(base, axis)`` runs from ``base`` to ``base + e_axis``.

An edge is a *boundary edge* when both endpoints lie on a common face of the
box. For a slab, boundary edges lying in a face ``x_0 = lo_0`` or
``x_0 = hi_0`` are *temporal*; the remaining boundary edges form the spatial
boundary.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class LoopOutOfBounds(ValueError):
    pass


class NotALoop(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    """An axis-aligned box of lattice points.

    Use :meth:`cube`, :meth:`slab` or :meth:`box` rather than the raw
    constructor.
    """

    lo: tuple
    hi: tuple
    kind: str = "box"
    N: int | None = None
    M: int | None = None

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")
        if len(self.lo) < 2:
            raise ValueError("dimension must be at least 2")
        if any(h - l < 1 for l, h in zip(self.lo, self.hi)):
            raise ValueError("every side must contain at least one edge")

    # ------------------------------------------------------------ builders
    @classmethod
    def box(cls, lo, hi) -> "Geometry":
        return cls(tuple(int(x) for x in lo), tuple(int(x) for x in hi), "box")

    @classmethod
    def cube(cls, d: int, N: int) -> "Geometry":
        """The cube ``[-N, N]^d``."""
        if d < 2:
            raise ValueError("dimension must be at least 2")
        if N < 1:
            raise ValueError("N must be at least 1")
        return cls((-N,) * d, (N,) * d, "cube", N=N)

    @classmethod
    def slab(cls, d: int, M: int, N: int, centered: bool = True) -> "Geometry":
        """A slab with time extent set by ``N`` and spatial half-width ``M``.

        ``centered=True`` gives ``{-N..N} x {-M..M}^(d-1)``. ``centered=False``
        gives the thin slab ``{0..N} x {-M..M}^(d-1)``, in which a vertical
        chain has exactly ``N`` edges.
        """
        if d < 2:
            raise ValueError("dimension must be at least 2")
        if N < 1:
            raise ValueError("N must be at least 1")
        if M < N:
            raise ValueError("M must be at least N")
        t_lo = -N if centered else 0
        return cls((t_lo,) + (-M,) * (d - 1), (N,) + (M,) * (d - 1),
                   "slab" if centered else "thin_slab", N=N, M=M)

    # ------------------------------------------------------------ basic data
    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def _edge_blocks(self):
        """Per-axis (offset, shape of base-vertex grid)."""
        blocks, off = [], 0
        for ax in range(self.dim):
            shp = list(self.shape)
            shp[ax] -= 1
            blocks.append((off, tuple(shp)))
            off += int(np.prod(shp))
        return blocks, off

    @property
    def n_edges(self) -> int:
        return self._edge_blocks[1]

    @cached_property
    def edge_base(self) -> np.ndarray:
        """``(E, d)`` integer base vertices."""
        out = []
        for ax, (off, shp) in enumerate(self._edge_blocks[0]):
            grid = np.indices(shp).reshape(self.dim, -1).T
            out.append(grid + np.array(self.lo))
        return np.concatenate(out).astype(np.int64)

    @cached_property
    def edge_axis(self) -> np.ndarray:
        return np.concatenate(
            [np.full(int(np.prod(shp)), ax, dtype=np.int64)
             for ax, (off, shp) in enumerate(self._edge_blocks[0])]
        )

    @cached_property
    def edge_tip(self) -> np.ndarray:
        return self.edge_base + np.eye(self.dim, dtype=np.int64)[self.edge_axis]

    @cached_property
    def edge_midpoint(self) -> np.ndarray:
        return self.edge_base + 0.5 * np.eye(self.dim)[self.edge_axis]

    def edge_id(self, base, axis: int) -> int:
        """Index of the edge from ``base`` to ``base + e_axis``."""
        base = tuple(int(x) for x in base)
        if not 0 <= axis < self.dim:
            raise KeyError(f"axis {axis} out of range")
        off, shp = self._edge_blocks[0][axis]
        rel = tuple(b - l for b, l in zip(base, self.lo))
        if any(r < 0 or r >= s for r, s in zip(rel, shp)):
            raise KeyError(f"no edge at base {base} along axis {axis}")
        return off + int(np.ravel_multi_index(rel, shp))

    def has_edge(self, base, axis: int) -> bool:
        try:
            self.edge_id(base, axis)
        except KeyError:
            return False
        return True

    def edge_label(self, e: int) -> str:
        return f"{tuple(int(x) for x in self.edge_base[e])}+e{int(self.edge_axis[e])}"

    # ------------------------------------------------------------ boundary
    @cached_property
    def boundary_mask(self) -> np.ndarray:
        base, ax = self.edge_base, self.edge_axis
        mask = np.zeros(self.n_edges, dtype=bool)
        for j in range(self.dim):
            on_face = (base[:, j] == self.lo[j]) | (base[:, j] == self.hi[j])
            mask |= on_face & (ax != j)
        return mask

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @cached_property
    def temporal_mask(self) -> np.ndarray:
        """Edges lying in a face ``x_0 = lo_0`` or ``x_0 = hi_0``."""
        base, ax = self.edge_base, self.edge_axis
        return ((base[:, 0] == self.lo[0]) | (base[:, 0] == self.hi[0])) & (ax != 0)

    @property
    def spatial_boundary_mask(self) -> np.ndarray:
        return self.boundary_mask & ~self.temporal_mask

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    # ------------------------------------------------------------ plaquettes
    @cached_property
    def _plaquettes(self):
        edges, signs, info = [], [], []
        for mu, nu in itertools.combinations(range(self.dim), 2):
            shp = list(self.shape)
            shp[mu] -= 1
            shp[nu] -= 1
            grid = np.indices(shp).reshape(self.dim, -1).T + np.array(self.lo)
            emu, enu = np.eye(self.dim, dtype=np.int64)[[mu, nu]]
            for v in grid:
                edges.append([
                    self.edge_id(v, mu),
                    self.edge_id(v + emu, nu),
                    self.edge_id(v + enu, mu),
                    self.edge_id(v, nu),
                ])
                signs.append([1, 1, -1, -1])
                info.append((tuple(int(x) for x in v), mu, nu))
        return (np.array(edges, dtype=np.intp).reshape(-1, 4),
                np.array(signs, dtype=np.intp).reshape(-1, 4), info)

    @property
    def plaq_edges(self) -> np.ndarray:
        """``(P, 4)`` edge ids of each plaquette in traversal order."""
        return self._plaquettes[0]

    @property
    def plaq_signs(self) -> np.ndarray:
        """``(P, 4)`` orientation signs: +1 along the edge, -1 against it."""
        return self._plaquettes[1]

    @property
    def plaq_info(self) -> list:
        """``(base, mu, nu)`` per plaquette."""
        return self._plaquettes[2]

    @property
    def n_plaquettes(self) -> int:
        return self.plaq_edges.shape[0]

    def plaquette_id(self, base, mu: int, nu: int) -> int:
        if mu > nu:
            mu, nu = nu, mu
        key = (tuple(int(x) for x in base), mu, nu)
        try:
            return self.plaq_info.index(key)
        except ValueError:
            raise KeyError(f"no plaquette {key}") from None

    @cached_property
    def incidence(self):
        """CSR incidence ``(ptr, plaq, pos)``: plaquettes containing each edge."""
        pe = self.plaq_edges.ravel()
        order = np.argsort(pe, kind="stable")
        counts = np.bincount(pe, minlength=self.n_edges)
        ptr = np.zeros(self.n_edges + 1, dtype=np.intp)
        ptr[1:] = np.cumsum(counts)
        return ptr, (order // 4).astype(np.intp), (order % 4).astype(np.intp)

    def plaquettes_of(self, e: int) -> np.ndarray:
        ptr, plaq, _ = self.incidence
        return plaq[ptr[e]:ptr[e + 1]]

    @property
    def max_plaquettes_per_edge(self) -> int:
        return 2 * (self.dim - 1)

    @cached_property
    def edge_neighbors(self) -> list:
        """Edges sharing at least one plaquette with each edge."""
        out = []
        for e in range(self.n_edges):
            ps = self.plaquettes_of(e)
            nb = set(self.plaq_edges[ps].ravel().tolist())
            nb.discard(e)
            out.append(np.array(sorted(nb), dtype=np.intp))
        return out

    def checkerboard_classes(self, edges=None) -> list:
        """Partition ``edges`` into classes of edges sharing no plaquette.

        Greedy colouring in edge-id order, so the result is deterministic.
        """
        edges = np.arange(self.n_edges) if edges is None else np.asarray(edges)
        colour = {}
        for e in edges.tolist():
            used = {colour[f] for f in self.edge_neighbors[e].tolist() if f in colour}
            c = 0
            while c in used:
                c += 1
            colour[e] = c
        n = 1 + max(colour.values()) if colour else 0
        return [np.array([e for e in edges.tolist() if colour[e] == c], dtype=np.intp)
                for c in range(n)]

    # ------------------------------------------------------------ sub-boxes
    def subbox_edges(self, lo, hi) -> np.ndarray:
        """Edges with both endpoints inside ``[lo, hi]``."""
        lo, hi = np.asarray(lo), np.asarray(hi)
        inside = np.all(self.edge_base >= lo, axis=1) & np.all(self.edge_tip <= hi, axis=1)
        return np.flatnonzero(inside)

    def subbox_boundary_edges(self, lo, hi) -> np.ndarray:
        ids = self.subbox_edges(lo, hi)
        base, ax = self.edge_base[ids], self.edge_axis[ids]
        mask = np.zeros(len(ids), dtype=bool)
        for j in range(self.dim):
            mask |= ((base[:, j] == lo[j]) | (base[:, j] == hi[j])) & (ax != j)
        return ids[mask]

    def subbox_interior_edges(self, lo, hi) -> np.ndarray:
        ids = self.subbox_edges(lo, hi)
        return np.setdiff1d(ids, self.subbox_boundary_edges(lo, hi))

    def subgeometry(self, lo, hi):
        """A standalone geometry for ``[lo, hi]`` and its edge map into ``self``."""
        sub = Geometry.box(lo, hi)
        mapping = np.array(
            [self.edge_id(sub.edge_base[i], int(sub.edge_axis[i])) for i in range(sub.n_edges)],
            dtype=np.intp,
        )
        return sub, mapping

    # ------------------------------------------------------------ distances
    def dist(self, e: int, f: int) -> float:
        """Euclidean distance between edge midpoints."""
        return float(np.linalg.norm(self.edge_midpoint[e] - self.edge_midpoint[f]))

    def dist_to_spatial_boundary(self, e: int) -> float:
        sb = np.flatnonzero(self.spatial_boundary_mask)
        if len(sb) == 0:
            return float("inf")
        return float(np.min(np.linalg.norm(self.edge_midpoint[sb] - self.edge_midpoint[e], axis=1)))


# ---------------------------------------------------------------- loops
@dataclass(frozen=True)
class Loop:
    """A closed edge path: edge ids and traversal signs."""

    edges: tuple
    signs: tuple
    label: str = field(default="", compare=False)

    def __len__(self):
        return len(self.edges)


def make_loop(geom: Geometry, steps, label: str = "") -> Loop:
    """Build a loop from ``(edge_id, sign)`` steps, checking it closes up."""
    steps = list(steps)
    if not steps:
        raise NotALoop("empty path")
    pos = None
    start = None
    for e, s in steps:
        a, b = geom.edge_base[e], geom.edge_tip[e]
        if s < 0:
            a, b = b, a
        if pos is None:
            start = a
        elif not np.array_equal(pos, a):
            raise NotALoop(f"step {geom.edge_label(e)} does not continue the path")
        pos = b
    if not np.array_equal(pos, start):
        raise NotALoop("path does not return to its start")
    return Loop(tuple(int(e) for e, _ in steps), tuple(int(s) for _, s in steps), label)


def rect_loop(geom: Geometry, R: int, T: int, plane=(0, 1), anchor=None) -> Loop:
    """The ``R x T`` rectangle: ``R`` steps along ``plane[0]``, ``T`` along ``plane[1]``.

    The loop starts at ``anchor`` (default: the lower corner of the box),
    runs forward along ``plane[0]``, then along ``plane[1]``, and returns.
    """
    a, b = plane
    if a == b or not (0 <= a < geom.dim and 0 <= b < geom.dim):
        raise ValueError(f"invalid plane {plane}")
    if R < 1 or T < 1:
        raise ValueError("R and T must be positive")
    x = np.array(geom.lo if anchor is None else anchor, dtype=np.int64)
    ea, eb = np.eye(geom.dim, dtype=np.int64)[[a, b]]
    steps = []
    try:
        for i in range(R):
            steps.append((geom.edge_id(x + i * ea, a), 1))
        for j in range(T):
            steps.append((geom.edge_id(x + R * ea + j * eb, b), 1))
        for i in reversed(range(R)):
            steps.append((geom.edge_id(x + i * ea + T * eb, a), -1))
        for j in reversed(range(T)):
            steps.append((geom.edge_id(x + j * eb, b), -1))
    except KeyError as exc:
        raise LoopOutOfBounds(f"{R}x{T} loop at {tuple(x)} leaves the box") from exc
    return make_loop(geom, steps, label=f"W({R},{T})")


def plaquette_loop(geom: Geometry, p: int) -> Loop:
    return make_loop(geom, zip(geom.plaq_edges[p].tolist(), geom.plaq_signs[p].tolist()),
                     label=f"plaq{p}")


def plaquette_readings(geom: Geometry, p: int) -> list:
    """The eight readings of a plaquette: four starting points, two directions."""
    e, s = geom.plaq_edges[p].tolist(), geom.plaq_signs[p].tolist()
    out = []
    for k in range(4):
        fwd = [(e[(k + i) % 4], s[(k + i) % 4]) for i in range(4)]
        out.append(fwd)
        out.append([(ed, -sg) for ed, sg in reversed(fwd)])
    return out


def vertical_chain(geom: Geometry, spatial=None) -> Loop | list:
    """Edges along axis 0 from the bottom face to the top, at a spatial point.

    Returns the list of edge ids (a chain is open, so it is not a :class:`Loop`).
    """
    sp = [0] * (geom.dim - 1) if spatial is None else list(spatial)
    ids = []
    for t in range(geom.lo[0], geom.hi[0]):
        ids.append(geom.edge_id([t] + sp, 0))
    return ids


# ---------------------------------------------------------------- neighborhoods
@dataclass(frozen=True)
class Neighborhood:
    lo: tuple
    hi: tuple
    edges: np.ndarray = field(compare=False)
    boundary: np.ndarray = field(compare=False)


def _neighborhood_box(geom: Geometry, e: int, r: float):
    x = geom.edge_base[e]
    w = 2 * r
    lo, hi = [], []
    for i in range(geom.dim):
        L, H = geom.lo[i], geom.hi[i]
        if 2 * w >= H - L:
            a = L
            b = H
        else:
            if x[i] < L + w:
                a = L
            elif x[i] > H - w:
                a = H - 2 * w
            else:
                a = x[i] - w
            b = a + 2 * w
        lo.append(int(round(a)))
        hi.append(int(round(b)))
    return tuple(lo), tuple(hi)


def _check_r(r) -> float:
    r = float(r)
    if r <= 0 or abs(2 * r - round(2 * r)) > 1e-12:
        raise ValueError("r must be a positive multiple of 1/2")
    return r


def r_neighborhood(geom: Geometry, e: int, r: float, clamp: bool = False) -> Neighborhood:
    """The cube ``B(e, r)`` of side ``4r`` around a boundary edge ``e``.

    Coordinate by coordinate, with ``x`` the base vertex of ``e``: the lower
    corner is ``x_i - 2r`` when that keeps the cube inside, and otherwise the
    cube is pushed against the nearer face. ``r`` must be a positive multiple
    of 1/2 and at most ``N/4``; with ``clamp=True`` larger radii are allowed
    and a side that would exceed the box is replaced by the whole side.
    """
    if not geom.boundary_mask[e]:
        raise ValueError(f"edge {geom.edge_label(e)} is not a boundary edge")
    r = _check_r(r)
    if not clamp:
        side = min(h - l for l, h in zip(geom.lo, geom.hi))
        if 4 * r > side:
            raise ValueError(f"r={r} exceeds a quarter of the box side {side}")
    lo, hi = _neighborhood_box(geom, e, r)
    return Neighborhood(lo, hi, geom.subbox_edges(lo, hi), geom.subbox_boundary_edges(lo, hi))


def union_neighborhood(geom: Geometry, A, r: float, clamp: bool = False) -> np.ndarray:
    """Edge ids of ``E(A, r)``, the union of ``E(e, r)`` over ``e`` in ``A``."""
    ids = [r_neighborhood(geom, int(e), r, clamp=clamp).edges for e in A]
    if not ids:
        return np.zeros(0, dtype=np.intp)
    return np.unique(np.concatenate(ids))


def share_cube(geom: Geometry, e: int, f: int, width: float) -> bool:
    """Whether some axis-parallel cube of side ``width`` contains both edges."""
    pts = np.stack([geom.edge_base[e], geom.edge_tip[e], geom.edge_base[f], geom.edge_tip[f]])
    return bool(np.all(pts.max(axis=0) - pts.min(axis=0) <= width + 1e-12))


# ---------------------------------------------------------------- slab cubes
def cubes_in_slab(geom: Geometry) -> list:
    """Full-height cubes ``[lo_0, hi_0] x prod [a_i, a_i + h]`` strictly inside.

    ``h = hi_0 - lo_0`` is the slab height; a cube qualifies when
    ``lo_i < a_i`` and ``a_i + h < hi_i`` in every spatial direction, so it
    never touches the spatial boundary. Returns a list of ``(lo, hi)`` pairs.
    """
    h = geom.hi[0] - geom.lo[0]
    ranges = [range(geom.lo[i] + 1, geom.hi[i] - h) for i in range(1, geom.dim)]
    out = []
    for a in itertools.product(*ranges):
        lo = (geom.lo[0],) + tuple(a)
        hi = (geom.hi[0],) + tuple(x + h for x in a)
        out.append((lo, hi))
    return out


def cubes_containing(geom: Geometry, e: int) -> list:
    """Slab cubes having ``e`` as an interior edge."""
    return [c for c in cubes_in_slab(geom) if e in set(geom.subbox_interior_edges(*c).tolist())]

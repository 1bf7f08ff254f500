"""Exact Gibbs measures for cyclic groups.

Two independent routes are provided:

* **Enumeration** over every assignment of the free edges, streamed in
  chunks. States are encoded little-endian in mixed radix ``n``: state
  ``s`` assigns ``(s // n**j) % n`` to the ``j``-th free edge (free edges in
  increasing id order). The number of states is capped (default ``2**24``).
* **Tensor contraction**: the partition function with edge-local insertions
  is a contraction of one weight tensor per plaquette and one vector per
  edge, evaluated with ``numpy.einsum``. This reaches state spaces far beyond
  the enumeration cap for observables that factorize over edges (Wilson
  loops and chain variables in one-dimensional representations).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .groups import GroupSpec
from .lattice import Geometry
from .model import BoundaryCondition, plaquette_values

DEFAULT_CAP = 1 << 24


class ResourceCapError(RuntimeError):
    """Raised when an exact computation would exceed the state-count cap."""


class IncompatibleMeasures(ValueError):
    pass


class ZeroProbabilityCondition(ValueError):
    pass


# ====================================================================== measures
@dataclass
class DiscreteMeasure:
    """A probability vector on an indexed finite set.

    ``key`` identifies the underlying set; measures are only compared when
    their keys agree. ``edges`` and ``n`` describe the encoding when the set
    is a space of edge assignments.
    """

    probs: np.ndarray
    key: tuple = ()
    edges: tuple = ()
    n: int = 0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)

    @classmethod
    def on_set(cls, probs, name: str = "set") -> "DiscreteMeasure":
        p = np.asarray(probs, dtype=float)
        return cls(p, key=(name, len(p)))

    @property
    def size(self) -> int:
        return len(self.probs)

    def digits(self, idx=None) -> np.ndarray:
        """Edge values of states ``idx`` (all states by default), shape ``(k, F)``."""
        idx = np.arange(self.size) if idx is None else np.asarray(idx)
        return (idx[:, None] // (self.n ** np.arange(len(self.edges)))) % self.n


def exact_tv(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Total variation distance ``(1/2) sum |mu - nu|``."""
    if mu.key != nu.key or mu.size != nu.size:
        raise IncompatibleMeasures("measures live on different spaces")
    return 0.5 * float(np.abs(mu.probs - nu.probs).sum())


# ====================================================================== enumeration
class EnumeratedSpace:
    """All assignments of the free edges of a geometry, for a cyclic group."""

    def __init__(self, geom: Geometry, group: GroupSpec, bc: BoundaryCondition | None = None,
                 cap: int = DEFAULT_CAP):
        if group.kind != "cyclic":
            raise ValueError("exact enumeration needs a cyclic group")
        self.geometry = geom
        self.group = group
        self.bc = bc if bc is not None else BoundaryCondition.free(geom, group)
        self.free = self.bc.free_edges
        self.n = group.n
        self.n_states = self.n ** len(self.free)
        if self.n_states > cap:
            raise ResourceCapError(f"{self.n}^{len(self.free)} = {self.n_states} states exceed cap {cap}")
        self._base = self.bc.values.astype(np.int64).copy()
        self._base[~self.bc.fixed] = 0
        self._signs = geom.plaq_signs.astype(np.int16)
        self._trace_tab = np.cos(2 * np.pi * np.arange(self.n) / self.n)

    @property
    def key(self) -> tuple:
        return ("edges", self.geometry.lo, self.geometry.hi, tuple(self.free.tolist()), self.n)

    def decode(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.n == 2:
            return ((idx[:, None] >> np.arange(len(self.free))) & 1).astype(np.int16)
        return ((idx[:, None] // (self.n ** np.arange(len(self.free), dtype=np.int64))) % self.n).astype(np.int16)

    def encode(self, digits) -> np.ndarray:
        digits = np.asarray(digits, dtype=np.int64)
        return digits @ (self.n ** np.arange(len(self.free), dtype=np.int64))

    def values(self, idx) -> np.ndarray:
        """Full edge-value arrays for states ``idx``, shape ``(k, E)``, dtype int16."""
        idx = np.asarray(idx)
        out = np.broadcast_to(self._base, (len(idx), self.geometry.n_edges)).astype(np.int16)
        out[:, self.free] = self.decode(idx)
        return out

    def energies(self, values: np.ndarray) -> np.ndarray:
        pv = (values[:, self.geometry.plaq_edges] * self._signs).sum(axis=-1, dtype=np.int32) % self.n
        return -self._trace_tab[pv].sum(axis=1)

    def chunks(self, chunk: int = 1 << 17):
        for start in range(0, self.n_states, chunk):
            idx = np.arange(start, min(start + chunk, self.n_states), dtype=np.int64)
            yield idx, self.values(idx)

    def energy_shift(self, beta: float) -> float:
        """Upper bound on ``-beta H`` used to keep weights at most 1."""
        return abs(beta) * self.geometry.n_plaquettes


@dataclass
class GibbsMeasure(DiscreteMeasure):
    space: EnumeratedSpace | None = field(default=None, repr=False)
    beta: float = 0.0
    log_z: float = 0.0


def exact_gibbs(space: EnumeratedSpace, beta: float) -> GibbsMeasure:
    """The normalized Gibbs vector over every state of ``space``."""
    shift = space.energy_shift(beta)
    w = np.empty(space.n_states)
    for idx, vals in space.chunks():
        w[idx[0]:idx[-1] + 1] = np.exp(-beta * space.energies(vals) - shift)
    z = float(w.sum())
    return GibbsMeasure(w / z, key=space.key, edges=tuple(space.free.tolist()), n=space.n,
                        space=space, beta=float(beta), log_z=math.log(z) + shift)


def exact_expectation(measure: GibbsMeasure, f, chunk: int = 1 << 17) -> complex:
    """``<f>`` for ``f`` acting on batches of full value arrays ``(B, E)``."""
    space = measure.space
    parts = []
    for idx, vals in space.chunks(chunk):
        parts.append(np.dot(measure.probs[idx[0]:idx[-1] + 1], np.asarray(f(vals), dtype=complex)))
    return complex(np.sum(parts))


def stream_expectations(space: EnumeratedSpace, betas, observables: dict, chunk: int = 1 << 17) -> dict:
    """Expectations for several ``beta`` in one pass without storing the Gibbs vector.

    Returns ``{beta: {name: value}}``. Chunk sums are combined with numpy's
    pairwise summation, so the result does not depend on the chunk size
    beyond rounding.
    """
    betas = [float(b) for b in betas]
    acc = {b: {"__z__": []} | {k: [] for k in observables} for b in betas}
    for idx, vals in space.chunks(chunk):
        H = space.energies(vals)
        fv = {k: np.asarray(f(vals), dtype=complex) for k, f in observables.items()}
        for b in betas:
            w = np.exp(-b * H - space.energy_shift(b))
            acc[b]["__z__"].append(w.sum())
            for k in observables:
                acc[b][k].append(np.dot(w, fv[k]))
    out = {}
    for b in betas:
        z = np.sum(acc[b]["__z__"])
        out[b] = {k: complex(np.sum(acc[b][k]) / z) for k in observables}
    return out


def exact_marginal(measure: DiscreteMeasure, edges) -> DiscreteMeasure:
    """Marginal on a subset of the encoded edges, encoded in the order given."""
    edges = [int(e) for e in edges]
    pos = {e: j for j, e in enumerate(measure.edges)}
    try:
        cols = [pos[e] for e in edges]
    except KeyError as exc:
        raise ValueError(f"edge {exc.args[0]} is not a variable of this measure") from None
    n = measure.n
    m = n ** len(edges)
    out = np.zeros(m)
    chunk = 1 << 20
    for start in range(0, measure.size, chunk):
        idx = np.arange(start, min(start + chunk, measure.size), dtype=np.int64)
        d = (idx[:, None] // (n ** np.array(cols, dtype=np.int64))) % n
        proj = d @ (n ** np.arange(len(edges), dtype=np.int64))
        out += np.bincount(proj, weights=measure.probs[start:start + len(idx)], minlength=m)
    key = measure.key[:-2] + (tuple(edges), n) if measure.key and measure.key[0] == "edges" else ("marg", tuple(edges), n)
    return DiscreteMeasure(out, key=key, edges=tuple(edges), n=n)


def exact_conditional(measure: DiscreteMeasure, fixed: dict) -> DiscreteMeasure:
    """Condition on ``{edge: value}`` and return the law of the remaining edges."""
    n = measure.n
    pos = {e: j for j, e in enumerate(measure.edges)}
    rest = [e for e in measure.edges if e not in fixed]
    idx = np.arange(measure.size, dtype=np.int64)
    keep = np.ones(measure.size, dtype=bool)
    for e, v in fixed.items():
        keep &= (idx // n ** pos[int(e)]) % n == int(v) % n
    p = measure.probs[keep]
    tot = p.sum()
    if tot <= 0:
        raise ZeroProbabilityCondition("conditioning event has probability zero")
    key = measure.key[:-2] + (tuple(rest), n) if measure.key and measure.key[0] == "edges" else ("cond", tuple(rest), n)
    return DiscreteMeasure(p / tot, key=key, edges=tuple(rest), n=n)


def heatbath_conditional(space: EnumeratedSpace, beta: float, edge: int) -> np.ndarray:
    """For every state, the heat-bath probability of its own value at ``edge``."""
    idx = np.arange(space.n_states, dtype=np.int64)
    vals = space.values(idx)
    logw = np.empty((space.n, space.n_states))
    for g in range(space.n):
        v = vals.copy()
        v[:, edge] = g
        logw[g] = -beta * space.energies(v)
    logw -= logw.max(axis=0)
    w = np.exp(logw)
    return w[vals[:, edge], idx] / w.sum(axis=0)


def heatbath_apply(vec: np.ndarray, space: EnumeratedSpace, beta: float, edge: int) -> np.ndarray:
    """Push a distribution vector through one exact single-edge heat-bath update.

    The new law is the old marginal of the other edges times the conditional
    of ``edge`` given them.
    """
    j = int(np.flatnonzero(space.free == edge)[0])
    F = len(space.free)
    shape = (space.n,) * F
    # little-endian states: digit j is axis F-1-j of the C-ordered reshape
    marg = np.asarray(vec).reshape(shape).sum(axis=F - 1 - j, keepdims=True)
    return np.broadcast_to(marg, shape).reshape(-1) * heatbath_conditional(space, beta, edge)


# ====================================================================== contraction
def _plaquette_weight(n: int, signs, beta: float) -> np.ndarray:
    grids = np.indices((n,) * 4)
    j = sum(s * g for s, g in zip(signs, grids)) % n
    return np.exp(beta * np.cos(2 * np.pi * j / n))


def contract_partition(geom: Geometry, group: GroupSpec, bc: BoundaryCondition, beta: float,
                       edge_factors: dict | None = None) -> complex:
    """``sum_omega prod_e phi_e(omega_e) exp(-beta H(omega))`` by tensor contraction.

    ``edge_factors`` maps an edge id to a length-``n`` vector ``phi_e``; edges
    without a factor get the all-ones vector. Pinned edges are sliced out.
    Plaquette weights are scaled by ``exp(-beta)`` to keep magnitudes tame;
    the scale cancels in ratios but not in the returned value.
    """
    if group.kind != "cyclic":
        raise ValueError("contraction is implemented for cyclic groups")
    n = group.n
    edge_factors = edge_factors or {}
    free_pos = {int(e): i for i, e in enumerate(bc.free_edges.tolist())}
    operands = []
    const = 1.0 + 0.0j
    for p in range(geom.n_plaquettes):
        es, ss = geom.plaq_edges[p].tolist(), geom.plaq_signs[p].tolist()
        W = _plaquette_weight(n, ss, beta) * math.exp(-abs(beta))
        idx = []
        sl = []
        for e in es:
            if e in free_pos:
                sl.append(slice(None))
                idx.append(free_pos[e])
            else:
                sl.append(int(bc.values[e]) % n)
        W = W[tuple(sl)]
        # repeated free edges within one plaquette cannot occur in a box
        operands += [W, idx]
    for e, vec in edge_factors.items():
        vec = np.asarray(vec, dtype=complex)
        if int(e) in free_pos:
            operands += [vec, [free_pos[int(e)]]]
        else:
            const *= vec[int(bc.values[e]) % n]
    for e, i in free_pos.items():
        if not any(i in op for op in operands[1::2]):
            operands += [np.ones(n), [i]]  # isolated free edge
    val = np.einsum(*operands, [], optimize="greedy")
    return complex(val) * const


def contract_expectation(geom: Geometry, group: GroupSpec, bc: BoundaryCondition, beta: float,
                         edge_factors: dict) -> complex:
    """``<prod_e phi_e(omega_e)>`` as a ratio of two contractions."""
    z = contract_partition(geom, group, bc, beta)
    return contract_partition(geom, group, bc, beta, edge_factors) / z


def loop_edge_factors(group: GroupSpec, rep_k: int, edges, signs) -> dict:
    """Edge factors for a product of characters ``chi_k(omega_e)^{sign}`` along a path."""
    n = group.n
    out = {}
    g = np.arange(n)
    for e, s in zip(edges, signs):
        vec = np.exp(1j * 2 * np.pi * rep_k * s * g / n)
        out[int(e)] = out[int(e)] * vec if int(e) in out else vec
    return out

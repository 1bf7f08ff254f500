"""Gauge configurations, the Wilson action, and Monte Carlo sampling.

The Hamiltonian is ``H(omega) = -sum_p Re Tr(omega_p)`` over all plaquettes of
the geometry, and the Gibbs weight is proportional to ``exp(-beta H)``.
Boundary conditions either leave every edge free or pin a subset of edges
(the boundary edges, or only the temporal or spatial part of them) to given
values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import kernels as _kernels
from .groups import GroupElement, GroupSpec, NotCentralError, element, quat_conj, quat_mul
from .lattice import Geometry
from .rng import PURPOSE_CHAIN, PURPOSE_INIT, substream


class FixedEdgeError(ValueError):
    """Raised when a fixed boundary edge is treated as a free variable."""


class InsufficientStatistics(RuntimeError):
    """Raised when a run has too few measurements for a trustworthy error bar."""


class NonFiniteObservable(ValueError):
    pass


# ====================================================================== configurations
@dataclass
class BoundaryCondition:
    """Which edges are pinned, and to what.

    ``fixed`` is a boolean mask over all edges; ``values`` holds a full value
    array whose entries are only read where ``fixed`` is true.
    """

    geometry: Geometry
    group: GroupSpec
    fixed: np.ndarray
    values: np.ndarray
    label: str = "custom"

    @classmethod
    def free(cls, geom: Geometry, group: GroupSpec) -> "BoundaryCondition":
        return cls(geom, group, np.zeros(geom.n_edges, dtype=bool),
                   group.identity_array(geom.n_edges), "free")

    @classmethod
    def fixed_to(cls, geom: Geometry, group: GroupSpec, values=None, on: str = "all",
                 label: str = "fixed") -> "BoundaryCondition":
        """Pin boundary edges to ``values`` (identity when omitted).

        ``on`` selects ``"all"`` boundary edges, only the ``"temporal"`` faces
        or only the ``"spatial"`` part.
        """
        mask = {"all": geom.boundary_mask, "temporal": geom.temporal_mask,
                "spatial": geom.spatial_boundary_mask}[on].copy()
        vals = group.identity_array(geom.n_edges) if values is None else np.array(values, dtype=group.dtype)
        if vals.shape[0] != geom.n_edges:
            raise ValueError("values must cover every edge")
        return cls(geom, group, mask, vals, label)

    @classmethod
    def random(cls, geom: Geometry, group: GroupSpec, seed: int, on: str = "all") -> "BoundaryCondition":
        vals = group.haar(substream(seed, PURPOSE_INIT), geom.n_edges)
        return cls.fixed_to(geom, group, vals, on=on, label=f"random:{seed}")

    @property
    def free_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Overwrite the pinned entries of ``values`` (any leading batch dims)."""
        if self.group.kind == "su2":
            values[..., self.fixed, :] = self.values[self.fixed]
        else:
            values[..., self.fixed] = self.values[self.fixed]
        return values

    def agrees_with(self, other: "BoundaryCondition", mask: np.ndarray) -> bool:
        both = mask & self.fixed & other.fixed
        return bool(np.all(self.group.equal(self.values[both], other.values[both])))


def crossing_edges(geom: Geometry) -> np.ndarray:
    """Edges along axis 0 from the bottom layer ``lo_0`` to ``lo_0 + 1``."""
    return np.flatnonzero((geom.edge_axis == 0) & (geom.edge_base[:, 0] == geom.lo[0]))


def center_twisted(bc: BoundaryCondition, g0, faces: str = "all") -> BoundaryCondition:
    """Multiply the pinned crossing edges on the spatial boundary by ``g0``.

    ``faces="all"`` twists every spatial face; ``faces="upper"`` only the face
    ``x_1 = hi_1``.
    """
    geom, group = bc.geometry, bc.group
    g0v = np.asarray(g0.value if isinstance(g0, GroupElement) else g0)
    if not group.is_central(g0v):
        raise NotCentralError("twist element must be central")
    sel = np.intersect1d(crossing_edges(geom), np.flatnonzero(geom.spatial_boundary_mask & bc.fixed))
    if faces == "upper":
        sel = sel[geom.edge_base[sel, 1] == geom.hi[1]]
    vals = bc.values.copy()
    vals[sel] = group.multiply(g0v, vals[sel])
    return BoundaryCondition(geom, group, bc.fixed.copy(), vals, bc.label + "+twist")


@dataclass
class GaugeConfig:
    """Group values on every edge of a geometry."""

    geometry: Geometry
    group: GroupSpec
    values: np.ndarray

    @classmethod
    def identity(cls, geom: Geometry, group: GroupSpec, bc: BoundaryCondition | None = None):
        v = group.identity_array(geom.n_edges)
        if bc is not None:
            bc.apply(v)
        return cls(geom, group, v)

    @classmethod
    def random(cls, geom: Geometry, group: GroupSpec, rng: np.random.Generator,
               bc: BoundaryCondition | None = None):
        v = group.haar(rng, geom.n_edges)
        if bc is not None:
            bc.apply(v)
        return cls(geom, group, v)

    def copy(self) -> "GaugeConfig":
        return GaugeConfig(self.geometry, self.group, self.values.copy())

    def link(self, e: int, sign: int = 1) -> GroupElement:
        v = self.values[e]
        g = element(self.group, v)
        return g if sign > 0 else g.inv()


# ====================================================================== action
def plaquette_values(group: GroupSpec, geom: Geometry, values: np.ndarray) -> np.ndarray:
    """Raw group values of every oriented plaquette, batched over leading dims."""
    pe, ps = geom.plaq_edges, geom.plaq_signs
    values = np.asarray(values)
    if group.kind == "cyclic":
        return (values[..., pe] * ps).sum(axis=-1) % group.n
    if group.kind == "circle":
        return (values[..., pe] * ps).sum(axis=-1)
    q = values[..., pe, :]  # (..., P, 4, 4)
    q = q.copy()
    q[..., 1:] *= ps[..., None]
    out = quat_mul(quat_mul(q[..., 0, :], q[..., 1, :]), quat_mul(q[..., 2, :], q[..., 3, :]))
    return out


def plaquette_traces(group: GroupSpec, geom: Geometry, values: np.ndarray) -> np.ndarray:
    """``Re Tr(omega_p)`` for every plaquette, shape ``(..., P)``."""
    return group.re_trace(plaquette_values(group, geom, values))


def hamiltonian_values(group: GroupSpec, geom: Geometry, values: np.ndarray) -> np.ndarray:
    """Batched Hamiltonian on raw value arrays."""
    return -plaquette_traces(group, geom, values).sum(axis=-1)


def hamiltonian(config: GaugeConfig) -> float:
    return float(hamiltonian_values(config.group, config.geometry, config.values))


def plaquette_product(config: GaugeConfig, p: int) -> GroupElement:
    """``omega_p`` as the ordered product around plaquette ``p``."""
    geom = config.geometry
    out = None
    for e, s in zip(geom.plaq_edges[p].tolist(), geom.plaq_signs[p].tolist()):
        g = config.link(e, s)
        out = g if out is None else out * g
    return out


def plaquette_trace(config: GaugeConfig, p: int) -> float:
    return float(config.group.re_trace(np.asarray(plaquette_product(config, p).value)))


def staples(group: GroupSpec, geom: Geometry, values: np.ndarray, e: int):
    """Local data determining the action as a function of the value on ``e``.

    Returns ``(signs, rest)`` for abelian groups, where plaquette ``p`` has
    trace ``re_trace(s_p * g + rest_p)``; for SU(2) returns the quaternion sum
    ``Q`` of the staples, with ``sum_p Re Tr(omega_p) = Re Tr(g Q)``.
    """
    ptr, plaq, pos = geom.incidence
    rows = plaq[ptr[e]:ptr[e + 1]]
    cols = pos[ptr[e]:ptr[e + 1]]
    if group.kind in ("cyclic", "circle"):
        s = geom.plaq_signs[rows, cols]
        pv = (values[geom.plaq_edges[rows]] * geom.plaq_signs[rows]).sum(axis=1)
        rest = pv - s * values[e]
        if group.kind == "cyclic":
            rest = rest % group.n
        return s, rest
    Q = np.zeros(4)
    for p, k in zip(rows.tolist(), cols.tolist()):
        a = np.array([1.0, 0, 0, 0])
        for r in range(1, 4):
            j = (k + r) % 4
            f = geom.plaq_edges[p, j]
            a = quat_mul(a, group.power(values[f], geom.plaq_signs[p, j]))
        if geom.plaq_signs[p, k] < 0:
            a = quat_conj(a)
        Q += a
    return Q


def _trace_sum(group: GroupSpec, st, g):
    g = np.asarray(g)
    if group.kind == "cyclic":
        s, rest = st
        return np.cos(2 * np.pi * ((np.multiply.outer(g, s) + rest) % group.n) / group.n).sum(axis=-1)
    if group.kind == "circle":
        s, rest = st
        return np.cos(np.multiply.outer(g, s) + rest).sum(axis=-1)
    return 2.0 * quat_mul(g, np.broadcast_to(st, g.shape))[..., 0]


def local_action(config: GaugeConfig, e: int, bc: BoundaryCondition | None = None):
    """The part of ``H`` depending on the value at edge ``e``, as a function of it.

    For a cyclic group the function is returned as an array over all ``n``
    values; otherwise as a vectorized callable on raw values.
    """
    if bc is not None and bc.fixed[e]:
        raise FixedEdgeError(f"edge {config.geometry.edge_label(e)} is fixed")
    group = config.group
    st = staples(group, config.geometry, config.values, e)
    if group.kind == "cyclic":
        return -_trace_sum(group, st, group.elements())
    return lambda g: -_trace_sum(group, st, g)


def density_bounds(group: GroupSpec, beta: float, d: int):
    """Bounds ``a <= density <= b`` for every conditional link density.

    Each edge lies in at most ``2(d-1)`` plaquettes and ``|Re Tr| <= m``,
    so the local action varies by at most ``4(d-1) m`` and the density
    relative to Haar measure lies in ``[exp(-4|beta|(d-1)m), exp(4|beta|(d-1)m)]``.
    """
    c = 2.0 * abs(beta) * 2 * (d - 1) * group.matrix_dim
    return math.exp(-c), math.exp(c)


@dataclass
class ConditionalDensity:
    """Density, with respect to Haar measure, of one edge given all others."""

    group: GroupSpec
    beta: float
    staple: object
    lower: float
    upper: float
    probs: np.ndarray | None = None

    def __call__(self, g):
        """Density at raw values ``g``."""
        grp = self.group
        if grp.kind == "cyclic":
            return grp.n * self.probs[np.asarray(g) % grp.n]
        if grp.kind == "circle":
            s, rest = self.staple
            z = np.sum(np.exp(1j * s * rest))
            k, phi = abs(z), np.angle(z)
            x = self.beta * k
            # ive(v, x) = iv(v, x) exp(-|x|), valid for either sign of beta
            return np.exp(x * np.cos(np.asarray(g) + phi) - abs(x)) / special.ive(0, x)
        Q = np.asarray(self.staple)
        k = float(np.linalg.norm(Q))
        c = 2.0 * self.beta * k
        if c == 0.0:
            return np.ones(np.shape(g)[:-1])
        w0 = quat_mul(g, Q / k)[..., 0]
        # normalizer of exp(c w0) over Haar measure is 2 I_1(c)/c; for tiny c
        # I_1 underflows, so use its series 1 + c^2/8 + c^4/192
        if abs(c) < 1e-4:
            return np.exp(c * w0) / (1.0 + c * c / 8.0 + c ** 4 / 192.0)
        return np.exp(c * w0 - abs(c)) * c / (2.0 * special.ive(1, c))


def conditional_density(config: GaugeConfig, e: int, beta: float,
                        bc: BoundaryCondition | None = None) -> ConditionalDensity:
    if bc is not None and bc.fixed[e]:
        raise FixedEdgeError(f"edge {config.geometry.edge_label(e)} is fixed")
    group = config.group
    st = staples(group, config.geometry, config.values, e)
    a, b = density_bounds(group, beta, config.geometry.dim)
    probs = None
    if group.kind == "cyclic":
        logw = beta * _trace_sum(group, st, group.elements())
        w = np.exp(logw - logw.max())
        probs = w / w.sum()
    return ConditionalDensity(group, beta, st, a, b, probs)


# ====================================================================== sampling
@dataclass
class SamplerParams:
    """Monte Carlo run parameters.

    ``algorithm="auto"`` means heat-bath for cyclic groups and Metropolis for
    U(1) and SU(2). During thermalization the Metropolis proposal width is
    adapted towards an acceptance rate inside ``target_acceptance`` and then
    frozen.
    """

    beta: float
    sweeps: int = 1000
    therm: int = 100
    stride: int = 1
    seed: int = 0
    chain: int = 0
    algorithm: str = "auto"
    proposal_width: float = 0.5
    target_acceptance: tuple = (0.3, 0.6)
    init: str = "identity"
    backend: str | None = None


class Chain:
    """A single Markov chain with checkerboard sweep order."""

    def __init__(self, geom: Geometry, group: GroupSpec, bc: BoundaryCondition | None,
                 params: SamplerParams):
        self.geometry = geom
        self.group = group
        self.bc = bc if bc is not None else BoundaryCondition.free(geom, group)
        self.params = params
        self.rng = substream(params.seed, PURPOSE_CHAIN, params.chain)
        if params.init == "random":
            cfg = GaugeConfig.random(geom, group, substream(params.seed, PURPOSE_INIT, params.chain), self.bc)
        else:
            cfg = GaugeConfig.identity(geom, group, self.bc)
        self.config = cfg
        if group.kind == "cyclic":
            self.config.values = np.ascontiguousarray(cfg.values, dtype=np.int64)
        else:
            self.config.values = np.ascontiguousarray(cfg.values, dtype=np.float64)
        alg = params.algorithm
        if alg == "auto":
            alg = "heatbath" if group.kind == "cyclic" else "metropolis"
        if alg == "heatbath" and group.kind != "cyclic":
            raise ValueError("heat-bath is implemented for cyclic groups only")
        if alg == "metropolis" and group.kind == "cyclic":
            raise ValueError("use heat-bath for cyclic groups")
        self.algorithm = alg
        classes = geom.checkerboard_classes(self.bc.free_edges)
        self.order = np.ascontiguousarray(np.concatenate(classes) if classes else np.zeros(0), dtype=np.intp)
        self._ptr, self._plaq, self._pos = (np.ascontiguousarray(a, dtype=np.intp) for a in geom.incidence)
        self._pe = np.ascontiguousarray(geom.plaq_edges, dtype=np.intp)
        self._ps = np.ascontiguousarray(geom.plaq_signs, dtype=np.intp)
        if group.kind == "cyclic":
            self._costab = np.cos(2 * np.pi * np.arange(group.n) / group.n)
        self.width = float(params.proposal_width)
        self.kernel = _kernels.get_backend(params.backend)
        self.counter = 0
        self.accepted = 0
        self.proposed = 0
        self.sweeps_done = 0

    @property
    def _draws_per_edge(self) -> int:
        return {"cyclic": 1, "circle": 2, "su2": 4}[self.group.kind]

    def sweep(self, n: int = 1) -> None:
        if n <= 0 or len(self.order) == 0:
            self.sweeps_done += max(n, 0)
            return
        u = self.rng.random(n * len(self.order) * self._draws_per_edge)
        k = self.kernel
        beta = float(self.params.beta)
        v = self.config.values
        if self.group.kind == "cyclic":
            k.sweep_cyclic(v, self.order, self._ptr, self._plaq, self._pos, self._pe, self._ps,
                           self.group.n, beta, self._costab, u, n)
        elif self.group.kind == "circle":
            self.accepted += k.sweep_circle(v, self.order, self._ptr, self._plaq, self._pos,
                                            self._pe, self._ps, beta, self.width, u, n)
            self.proposed += n * len(self.order)
        else:
            acc, self.counter = k.sweep_su2(v, self.order, self._ptr, self._plaq, self._pos,
                                            self._pe, self._ps, beta, self.width, u, n, self.counter)
            self.accepted += acc
            self.proposed += n * len(self.order)
        self.sweeps_done += n

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 1.0

    def thermalize(self, n: int | None = None, block: int = 10) -> None:
        n = self.params.therm if n is None else n
        if self.algorithm != "metropolis":
            self.sweep(n)
            return
        lo, hi = self.params.target_acceptance
        cap = math.pi if self.group.kind == "circle" else 2.0
        done = 0
        while done < n:
            m = min(block, n - done)
            a0, p0 = self.accepted, self.proposed
            self.sweep(m)
            done += m
            rate = (self.accepted - a0) / max(self.proposed - p0, 1)
            if rate < lo:
                self.width *= 0.8
            elif rate > hi:
                self.width = min(self.width * 1.25, cap)
        self.accepted = self.proposed = 0

    def run(self, observables: dict) -> dict:
        """Thermalize, then record each observable every ``stride`` sweeps."""
        self.thermalize()
        n_meas = self.params.sweeps // self.params.stride
        out = {name: np.empty(n_meas, dtype=complex) for name in observables}
        for i in range(n_meas):
            self.sweep(self.params.stride)
            for name, f in observables.items():
                out[name][i] = f(self.config)
        return out


# ====================================================================== statistics
@dataclass
class EstimateResult:
    mean: complex
    stderr: float
    stderr_re: float
    stderr_im: float
    tau_int: float
    n: int
    n_batches: int
    series: np.ndarray = field(repr=False)

    @property
    def n_eff(self) -> float:
        return self.n / max(2.0 * self.tau_int, 1.0)


def batch_means(series, n_batches: int = 50) -> EstimateResult:
    """Mean and batch-means error of a (possibly complex) time series.

    The series is split into ``n_batches`` equal consecutive batches; any
    remainder is dropped from the start of the series. The integrated
    autocorrelation time is estimated as ``b var(batch means) / (2 var(x))``
    for batch size ``b``.
    """
    x = np.asarray(series, dtype=complex)
    if not np.all(np.isfinite(x)):
        raise NonFiniteObservable("observable produced a non-finite value")
    if n_batches < 2 or len(x) < n_batches:
        raise InsufficientStatistics(f"{len(x)} measurements cannot fill {n_batches} batches")
    b = len(x) // n_batches
    x = x[len(x) - b * n_batches:]
    bm = x.reshape(n_batches, b).mean(axis=1)
    se_re = float(np.std(bm.real, ddof=1) / math.sqrt(n_batches))
    se_im = float(np.std(bm.imag, ddof=1) / math.sqrt(n_batches))
    var_x = float(np.var(x.real, ddof=1) + np.var(x.imag, ddof=1))
    var_bm = float(np.var(bm.real, ddof=1) + np.var(bm.imag, ddof=1))
    tau = 0.5 * b * var_bm / var_x if var_x > 0 else 0.5
    return EstimateResult(complex(x.mean()), math.hypot(se_re, se_im), se_re, se_im,
                          max(tau, 0.5), len(x), n_batches, x)


def estimate(f, geom: Geometry, bc: BoundaryCondition | None, params: SamplerParams,
             group: GroupSpec, n_batches: int = 50) -> EstimateResult:
    """Monte Carlo estimate of ``<f>`` with a batch-means error bar.

    ``f`` maps a :class:`GaugeConfig` to a real or complex number.
    """
    chain = Chain(geom, group, bc, params)
    series = chain.run({"f": f})["f"]
    return batch_means(series, n_batches)


# ====================================================================== gradient identity
def gradient_identity_check(f, e: int, geom: Geometry, bc: BoundaryCondition, beta: float,
                            nodes: int = 64, step: float = 1e-4, max_points: int = 1 << 26,
                            chunk: int = 1 << 18) -> dict:
    """Compare both sides of the boundary-gradient identity for U(1).

    For a pinned boundary edge ``e`` with angle ``theta`` the identity reads
    ``d<f>/dtheta = -beta <f dH/dtheta> + beta <f><dH/dtheta>``. The left side
    is a central finite difference of ``<f>``; every expectation is a
    tensor-product trapezoid quadrature with ``nodes`` points per free angle.

    ``f`` takes a batch of value arrays ``(B, E)`` and returns ``(B,)``; it
    must not depend on the value at ``e``.
    """
    group = bc.group
    if group.kind != "circle":
        raise ValueError("gradient identity check is implemented for U(1)")
    if not geom.boundary_mask[e] or not bc.fixed[e]:
        raise ValueError("e must be a pinned boundary edge")
    free = bc.free_edges
    k = len(free)
    if nodes ** k > max_points:
        raise ValueError(f"{nodes}^{k} quadrature points exceed the cap {max_points}")
    grid = 2 * np.pi * np.arange(nodes) / nodes
    ptr, plaq, pos = geom.incidence
    rows, cols = plaq[ptr[e]:ptr[e + 1]], pos[ptr[e]:ptr[e + 1]]
    s_e = geom.plaq_signs[rows, cols]
    theta0 = float(bc.values[e])

    def moments(theta):
        base = bc.values.astype(float).copy()
        base[e] = theta
        acc = np.zeros(4)  # Z, <f>, <dH>, <f dH> (unnormalized, shifted)
        shift = abs(beta) * geom.n_plaquettes
        total = nodes ** k
        for start in range(0, total, chunk):
            idx = np.arange(start, min(start + chunk, total))
            vals = np.broadcast_to(base, (len(idx), geom.n_edges)).copy()
            if k:
                digits = (idx[:, None] // nodes ** np.arange(k)) % nodes
                vals[:, free] = grid[digits]
            pv = plaquette_values(group, geom, vals)
            H = -np.cos(pv).sum(axis=1)
            dH = (np.sin(pv[:, rows]) * s_e).sum(axis=1)
            w = np.exp(-beta * H - shift)
            fv = np.asarray(f(vals), dtype=float)
            acc += [w.sum(), (w * fv).sum(), (w * dH).sum(), (w * fv * dH).sum()]
        return acc[1:] / acc[0]

    fp = moments(theta0 + step)[0]
    fm = moments(theta0 - step)[0]
    ef, edh, efdh = moments(theta0)
    lhs = (fp - fm) / (2 * step)
    rhs = -beta * efdh + beta * ef * edh
    return {"lhs": float(lhs), "rhs": float(rhs), "abs_diff": float(abs(lhs - rhs)),
            "points": nodes ** k}

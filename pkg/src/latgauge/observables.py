"""Wilson loops, chain variables, center transforms, link expectations,
correlation decay and static-potential extraction.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .groups import GroupElement, GroupSpec, NotCentralError, Representation, quat_conj, quat_mul
from .lattice import Geometry, Loop
from .model import (BoundaryCondition, Chain, GaugeConfig, InsufficientStatistics,
                    SamplerParams, crossing_edges, staples)


# ====================================================================== Wilson loops
def _path_matrices(group: GroupSpec, values, edges, signs, rep: Representation):
    """``(B, k, m, m)`` representation matrices along a path (inverses for sign -1)."""
    v = np.asarray(values)[..., list(edges)] if group.kind != "su2" else np.asarray(values)[..., list(edges), :]
    v = group.power(v, np.asarray(signs)) if group.kind != "su2" else group.power(v, np.asarray(signs, dtype=float))
    return rep.matrices(v)


def wilson_loop_values(group: GroupSpec, values, loop: Loop, rep: Representation) -> np.ndarray:
    """Batched ``Tr pi(omega_loop)`` over leading dims of ``values``."""
    if rep.group != group:
        raise ValueError("representation belongs to another group")
    mats = _path_matrices(group, values, loop.edges, loop.signs, rep)
    prod = mats[..., 0, :, :]
    for i in range(1, len(loop)):
        prod = prod @ mats[..., i, :, :]
    return np.trace(prod, axis1=-2, axis2=-1)


def wilson_loop(config: GaugeConfig, loop: Loop, rep: Representation) -> complex:
    return complex(wilson_loop_values(config.group, config.values, loop, rep))


def loop_components(config: GaugeConfig, loop: Loop, rep: Representation, cap: int = 1 << 20) -> np.ndarray:
    """The ``m^k`` component variables whose sum is the Wilson loop.

    Component ``(i_1, ..., i_k)`` is ``prod_j pi(omega_j)[i_j, i_{j+1}]`` with
    ``i_{k+1} = i_1``.
    """
    m, k = rep.dim, len(loop)
    if m ** k > cap:
        raise ValueError(f"{m}^{k} components exceed cap {cap}")
    mats = _path_matrices(config.group, config.values, loop.edges, loop.signs, rep)
    out = np.empty(m ** k, dtype=complex)
    for c, idx in enumerate(itertools.product(range(m), repeat=k)):
        val = 1.0 + 0.0j
        for j in range(k):
            val *= mats[j, idx[j], idx[(j + 1) % k]]
        out[c] = val
    return out


# ====================================================================== chain variables
@dataclass(frozen=True)
class ChainVariableSpec:
    """``prod_i pi(omega_{e_i})[r_i, c_i]`` along ``edges`` (0-based indices)."""

    edges: tuple
    indices: tuple

    def __post_init__(self):
        if len(self.edges) != len(self.indices):
            raise ValueError("one (row, col) pair per edge is required")

    def validate(self, rep: Representation):
        for r, c in self.indices:
            if not (0 <= r < rep.dim and 0 <= c < rep.dim):
                raise ValueError(f"index ({r}, {c}) outside 0..{rep.dim - 1}")


def chain_variable_values(group: GroupSpec, values, spec: ChainVariableSpec, rep: Representation) -> np.ndarray:
    spec.validate(rep)
    mats = _path_matrices(group, values, spec.edges, [1] * len(spec.edges), rep)
    out = np.ones(mats.shape[:-3], dtype=complex)
    for j, (r, c) in enumerate(spec.indices):
        out = out * mats[..., j, r, c]
    return out


def chain_variable(config: GaugeConfig, spec: ChainVariableSpec, rep: Representation) -> complex:
    return complex(chain_variable_values(config.group, config.values, spec, rep))


# ====================================================================== center transform
def center_transform_values(group: GroupSpec, geom: Geometry, values, g0) -> np.ndarray:
    """Left-multiply every edge from layer ``lo_0`` to ``lo_0 + 1`` by central ``g0``."""
    g0v = np.asarray(g0.value if isinstance(g0, GroupElement) else g0)
    if not group.is_central(g0v):
        raise NotCentralError("center transform needs a central element")
    out = np.array(values, copy=True)
    sel = crossing_edges(geom)
    if group.kind == "su2":
        out[..., sel, :] = group.multiply(g0v, out[..., sel, :])
    else:
        out[..., sel] = group.multiply(g0v, out[..., sel])
    return out


def center_transform(config: GaugeConfig, g0) -> GaugeConfig:
    return GaugeConfig(config.geometry, config.group,
                       center_transform_values(config.group, config.geometry, config.values, g0))


# ====================================================================== link expectations
@dataclass
class LinkExpectation:
    matrix: np.ndarray
    op_norm: float

    @property
    def gap(self) -> float:
        """``epsilon`` with ``op_norm = 1 - epsilon``."""
        return 1.0 - self.op_norm


def _gauss_chebyshev_u(n: int):
    """Nodes and weights for ``int_{-1}^{1} sqrt(1 - x^2) g(x) dx``."""
    i = np.arange(1, n + 1)
    t = i * np.pi / (n + 1)
    return np.cos(t), np.pi / (n + 1) * np.sin(t) ** 2


def conditional_link_expectation(config: GaugeConfig, e: int, rep: Representation, beta: float,
                                 bc: BoundaryCondition | None = None, nodes: int = 512) -> LinkExpectation:
    """``<pi(omega_e)>`` given every other edge, and its operator norm.

    Cyclic groups sum over the elements. U(1) uses a trapezoid rule with
    ``nodes`` angles (spectrally accurate for the periodic integrand). For
    SU(2) the staple sum ``Q = k V`` reduces the integral to
    ``<pi(w)> pi(V^-1)`` with ``w`` distributed as ``exp(2 beta k w_0)`` times
    Haar measure, and ``<pi(w)>`` is the scalar ``<chi(w)>/m``, computed by
    Gauss-Chebyshev quadrature in ``w_0``.
    """
    group = config.group
    if bc is not None and bc.fixed[e]:
        from .model import FixedEdgeError

        raise FixedEdgeError("edge is fixed by the boundary condition")
    st = staples(group, config.geometry, config.values, e)
    if group.kind in ("cyclic", "circle"):
        s, rest = st
        if group.kind == "cyclic":
            g = group.elements()
            tr = np.cos(2 * np.pi * ((np.multiply.outer(g, s) + rest) % group.n) / group.n).sum(axis=1)
        else:
            g = 2 * np.pi * np.arange(nodes) / nodes
            tr = np.cos(np.multiply.outer(g, s) + rest).sum(axis=1)
        logw = beta * tr
        w = np.exp(logw - logw.max())
        w /= w.sum()
        mat = np.einsum("g,gij->ij", w, rep.matrices(g))
    else:
        Q = np.asarray(st)
        k = float(np.linalg.norm(Q))
        V = Q / k if k > 0 else np.array([1.0, 0, 0, 0])
        x, wq = _gauss_chebyshev_u(128)
        c = 2 * beta * k
        dens = wq * np.exp(c * (x - 1.0))
        w = np.zeros((len(x), 4))
        w[:, 0] = x
        w[:, 1] = np.sqrt(np.clip(1 - x * x, 0, None))
        chi = rep.character(w).real
        scal = float(np.dot(dens, chi) / dens.sum()) / rep.dim
        mat = scal * rep.matrices(quat_conj(V))
    return LinkExpectation(mat, float(np.linalg.norm(mat, 2)))


# ====================================================================== correlations
@dataclass(frozen=True)
class LocalFunction:
    """A bounded function supported near one edge.

    ``kind="plaquette"``: mean of ``Re Tr(omega_p)/m`` over plaquettes
    containing the edge. ``kind="link"``: ``Re Tr(omega_e)/m``.
    """

    edge: int
    kind: str = "plaquette"

    def values(self, group: GroupSpec, geom: Geometry, vals) -> np.ndarray:
        m = group.matrix_dim
        if self.kind == "link":
            v = vals[..., self.edge] if group.kind != "su2" else vals[..., self.edge, :]
            return group.re_trace(v) / m
        ps = geom.plaquettes_of(self.edge)
        from .model import plaquette_values

        pv = plaquette_values(group, geom, vals)
        tr = group.re_trace(pv[..., ps] if group.kind != "su2" else pv[..., ps, :])
        return tr.mean(axis=-1) / m


@dataclass
class CorrelationRequest:
    f: LocalFunction
    g: list


@dataclass
class CorrelationResult:
    distances: np.ndarray
    cov: np.ndarray
    err: np.ndarray
    K1: float | None = None
    K2: float | None = None
    fitted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    sufficient: bool = False


def fit_decay(distances, cov, err, window=None):
    """Fit ``|cov| ~ K1 exp(-K2 d)`` on points whose signal exceeds twice the error.

    Returns ``(K1, K2, used_indices)``; ``K1``/``K2`` are ``None`` when fewer
    than two points qualify.
    """
    d, c, s = map(np.asarray, (distances, cov, err))
    ok = np.abs(c) > 2 * s
    ok &= np.abs(c) > 0
    if window is not None:
        ok &= (d >= window[0]) & (d <= window[1])
    used = np.flatnonzero(ok)
    if len(np.unique(d[used])) < 2:
        return None, None, used
    y = np.log(np.abs(c[used]))
    sig = np.where(s[used] > 0, s[used] / np.abs(c[used]), 1.0)
    A = np.stack([np.ones(len(used)), d[used]], axis=1)
    coef, *_ = np.linalg.lstsq(A / sig[:, None], y / sig, rcond=None)
    return float(math.exp(coef[0])), float(-coef[1]), used


def correlation_decay(req: CorrelationRequest, geom: Geometry, group: GroupSpec,
                      bc: BoundaryCondition | None, params: SamplerParams,
                      n_blocks: int = 50, window=None) -> CorrelationResult:
    """Monte Carlo covariances ``Cov(f, g_j)`` with jackknife errors and a decay fit."""
    chain = Chain(geom, group, bc, params)
    chain.thermalize()
    n_meas = params.sweeps // params.stride
    if n_meas < n_blocks:
        raise InsufficientStatistics(f"{n_meas} measurements for {n_blocks} jackknife blocks")
    fs = np.empty(n_meas)
    gs = np.empty((n_meas, len(req.g)))
    for i in range(n_meas):
        chain.sweep(params.stride)
        v = chain.config.values
        fs[i] = req.f.values(group, geom, v)
        gs[i] = [g.values(group, geom, v) for g in req.g]
    b = n_meas // n_blocks
    fs, gs = fs[-b * n_blocks:], gs[-b * n_blocks:]

    def cov(fv, gv):
        return (fv[:, None] * gv).mean(axis=0) - fv.mean() * gv.mean(axis=0)

    full = cov(fs, gs)
    blocks = np.arange(len(fs)) // b
    jk = np.array([cov(fs[blocks != k], gs[blocks != k]) for k in range(n_blocks)])
    err = np.sqrt((n_blocks - 1) / n_blocks * ((jk - jk.mean(axis=0)) ** 2).sum(axis=0))
    d = np.array([geom.dist(req.f.edge, g.edge) for g in req.g])
    K1, K2, used = fit_decay(d, full, err, window)
    return CorrelationResult(d, full, err, K1, K2, used, K2 is not None)


def exact_correlation(req: CorrelationRequest, space, beta: float) -> CorrelationResult:
    """Exact covariances on an enumerable space (zero error bars)."""
    from .exact import stream_expectations

    geom, group = space.geometry, space.group
    obs = {"f": lambda v: req.f.values(group, geom, v)}
    for j, g in enumerate(req.g):
        obs[f"g{j}"] = (lambda g: lambda v: g.values(group, geom, v))(g)
        obs[f"fg{j}"] = (lambda g: lambda v: req.f.values(group, geom, v) * g.values(group, geom, v))(g)
    r = stream_expectations(space, [beta], obs)[float(beta)]
    cov = np.array([(r[f"fg{j}"] - r["f"] * r[f"g{j}"]).real for j in range(len(req.g))])
    d = np.array([geom.dist(req.f.edge, g.edge) for g in req.g])
    err = np.zeros_like(cov)
    K1, K2, used = fit_decay(d, cov, err)
    return CorrelationResult(d, cov, err, K1, K2, used, K2 is not None)


# ====================================================================== potential
@dataclass
class PotentialResult:
    V: dict
    creutz: dict
    sigma: float | None
    sigma_err: float | None
    perimeter: float | None
    perimeter_err: float | None
    const: float | None
    excluded: list


def _table_rows(table):
    rows = []
    for r in table:
        if isinstance(r, dict):
            rows.append((int(r["R"]), int(r["T"]), float(r["mean"]), float(r.get("stderr", 0.0))))
        else:
            R, T, mean, se = r
            rows.append((int(R), int(T), float(mean), float(se)))
    return rows


def _wls(A, y, s):
    """Weighted least squares; unit weights when every error is zero."""
    if np.all(s > 0):
        w = 1.0 / s
    else:
        w = np.ones_like(y)
    coef, *_ = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)
    resid = y - A @ coef
    dof = len(y) - A.shape[1]
    if np.all(s > 0):
        cov = np.linalg.pinv((A * w[:, None] ** 2).T @ A)
    else:
        s2 = float(resid @ resid) / dof if dof > 0 else 0.0
        cov = s2 * np.linalg.pinv(A.T @ A)
    return coef, np.sqrt(np.clip(np.diag(cov), 0, None))


def potential_extract(table) -> PotentialResult:
    """Static potential, Creutz ratios and area/perimeter fits from a loop table.

    ``table`` holds ``(R, T, mean, stderr)`` rows (or dicts with those keys).
    A cell is excluded when ``mean - 2 stderr <= 0``: its logarithm is not
    meaningful. ``V(R)`` is minus the slope of ``log W(R, T)`` in ``T`` and is
    reported only for ``R`` with at least two surviving cells.
    """
    rows = _table_rows(table)
    cells = {}
    excluded = []
    for R, T, m, s in rows:
        if m - 2 * s <= 0 or m <= 0:
            excluded.append((R, T))
        else:
            cells[(R, T)] = (m, s)
    V = {}
    for R in sorted({R for R, _ in cells}):
        Ts = sorted(T for (r, T) in cells if r == R)
        if len(Ts) < 2:
            continue
        y = np.array([math.log(cells[(R, T)][0]) for T in Ts])
        s = np.array([cells[(R, T)][1] / cells[(R, T)][0] for T in Ts])
        A = np.stack([np.ones(len(Ts)), -np.array(Ts, dtype=float)], axis=1)
        coef, err = _wls(A, y, s)
        V[R] = (float(coef[1]), float(err[1]))
    creutz = {}
    for (R, T) in cells:
        need = [(R, T), (R - 1, T - 1), (R, T - 1), (R - 1, T)]
        if R >= 2 and T >= 2 and all(c in cells for c in need):
            lw = {c: math.log(cells[c][0]) for c in need}
            chi = -(lw[(R, T)] + lw[(R - 1, T - 1)] - lw[(R, T - 1)] - lw[(R - 1, T)])
            err = math.sqrt(sum((cells[c][1] / cells[c][0]) ** 2 for c in need))
            creutz[(R, T)] = (chi, err)
    sigma = sigma_err = per = per_err = const = None
    keys = sorted(cells)
    if len(keys) >= 3:
        A = np.array([[1.0, -R * T, -(R + T)] for R, T in keys])
        y = np.array([math.log(cells[k][0]) for k in keys])
        s = np.array([cells[k][1] / cells[k][0] for k in keys])
        if np.linalg.matrix_rank(A) == 3:
            coef, err = _wls(A, y, s)
            const, sigma, per = (float(c) for c in coef)
            _, sigma_err, per_err = (float(x) for x in err)
    return PotentialResult(V, creutz, sigma, sigma_err, per, per_err, const, excluded)

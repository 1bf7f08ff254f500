"""Couplings of probability measures on finite spaces.

The central object is the optimal coupling of two measures ``mu`` and ``nu``
with probability vectors ``f`` and ``g``: put ``h = min(f, g)`` on the
diagonal and spread the remaining mass as the product
``f_1(x) g_1(y) / TV`` with ``f_1 = f - h`` and ``g_1 = g - h``. Its
off-diagonal mass equals ``TV(mu, nu)``, the smallest possible value.

On top of it sit the cube coupling of two lattice gauge measures that differ
only through their boundary conditions, and the numerical checks of the
stability and gluing bounds. The iterated slab couplings live in
:mod:`latgauge.slab`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exact import (DEFAULT_CAP, DiscreteMeasure, EnumeratedSpace, IncompatibleMeasures,
                    ResourceCapError, exact_gibbs, exact_marginal, exact_tv)
from .groups import GroupSpec, Representation, acts_nontrivially_on_center
from .lattice import Geometry, union_neighborhood
from .model import BoundaryCondition


class CouplingError(ValueError):
    pass


# ====================================================================== discrete couplings
@dataclass
class DiscreteCoupling:
    """A joint probability matrix with prescribed marginals."""

    joint: np.ndarray
    mu: DiscreteMeasure
    nu: DiscreteMeasure

    def check_marginals(self, tol: float = 1e-12) -> float:
        """Largest marginal violation; raises ``CouplingError`` above ``tol``."""
        err = max(float(np.max(np.abs(self.joint.sum(axis=1) - self.mu.probs))),
                  float(np.max(np.abs(self.joint.sum(axis=0) - self.nu.probs))))
        if err > tol:
            raise CouplingError(f"marginal violation {err:.3e} exceeds {tol:.1e}")
        return err

    def off_diagonal_mass(self) -> float:
        if self.mu.key != self.nu.key:
            raise IncompatibleMeasures("off-diagonal mass needs a common space")
        return float(self.joint.sum() - np.trace(self.joint))


def optimal_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteCoupling:
    """Optimal coupling: diagonal ``min(f, g)`` plus product of the excesses."""
    if mu.key != nu.key or mu.size != nu.size:
        raise IncompatibleMeasures("measures live on different spaces")
    f, g = mu.probs, nu.probs
    h = np.minimum(f, g)
    f1, g1 = f - h, g - h
    tv = f1.sum()
    joint = np.diag(h)
    if tv > 0:
        joint = joint + np.outer(f1, g1) / tv
    return DiscreteCoupling(joint, mu, nu)


def coupling_tv(gamma: DiscreteCoupling, gamma2: DiscreteCoupling) -> float:
    if gamma.joint.shape != gamma2.joint.shape:
        raise IncompatibleMeasures("couplings live on different spaces")
    return 0.5 * float(np.abs(gamma.joint - gamma2.joint).sum())


@dataclass
class BoundReport:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-15


def coupling_stability_check(mu, nu, mu2, nu2) -> BoundReport:
    """``TV(gamma, gamma') <= 10 sqrt(b)`` with ``b = max(TV(mu, mu'), TV(nu, nu'))``."""
    b = max(exact_tv(mu, mu2), exact_tv(nu, nu2))
    lhs = coupling_tv(optimal_coupling(mu, nu), optimal_coupling(mu2, nu2))
    return BoundReport(lhs, 10.0 * math.sqrt(b))


# ====================================================================== gluing
def compose(mu: DiscreteMeasure, kernel: np.ndarray) -> np.ndarray:
    """Joint ``gamma(x, y) = mu(x) phi(x, y)`` of a measure and a row-stochastic kernel."""
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape[0] != mu.size:
        raise CouplingError("kernel rows must match the measure")
    if np.max(np.abs(kernel.sum(axis=1) - 1.0)) > 1e-10 or np.min(kernel) < 0:
        raise CouplingError("kernel rows must be probability vectors")
    return mu.probs[:, None] * kernel


def gluing_bound_check(mu, mu2, phi, phi2, alpha=None) -> BoundReport:
    """``TV(mu o phi, mu' o phi') <= a TV(mu, mu') + sup |f - f'|``.

    ``f = phi / alpha`` are densities with respect to the probability vector
    ``alpha`` on the target space (uniform by default) and ``a`` bounds both.
    """
    phi, phi2 = np.asarray(phi, dtype=float), np.asarray(phi2, dtype=float)
    alpha = np.full(phi.shape[1], 1.0 / phi.shape[1]) if alpha is None else np.asarray(alpha, dtype=float)
    if abs(alpha.sum() - 1.0) > 1e-12 or np.min(alpha) <= 0:
        raise CouplingError("alpha must be a strictly positive probability vector")
    f, f2 = phi / alpha, phi2 / alpha
    a = max(f.max(), f2.max())
    lhs = 0.5 * float(np.abs(compose(mu, phi) - compose(mu2, phi2)).sum())
    rhs = a * exact_tv(mu, mu2) + float(np.max(np.abs(f - f2)))
    return BoundReport(lhs, rhs)


def glue(gamma: DiscreteCoupling, phi: np.ndarray, phi2: np.ndarray) -> DiscreteCoupling:
    """Couple ``mu o phi`` and ``mu' o phi'`` through ``gamma`` and independent kernels.

    The joint on ``(X x Y)^2`` is ``gamma(x, x') phi(x, y) phi'(x', y')``, with
    states ``(x, y)`` flattened as ``x * |Y| + y``.
    """
    phi, phi2 = np.asarray(phi, float), np.asarray(phi2, float)
    J = np.einsum("ab,ay,bz->aybz", gamma.joint, phi, phi2)
    K = phi.shape[0] * phi.shape[1]
    m1 = DiscreteMeasure((gamma.mu.probs[:, None] * phi).reshape(-1), key=("glued",) + tuple(gamma.mu.key))
    m2 = DiscreteMeasure((gamma.nu.probs[:, None] * phi2).reshape(-1), key=("glued",) + tuple(gamma.nu.key))
    return DiscreteCoupling(J.reshape(K, K), m1, m2)


# ====================================================================== Haar gap
def su2_haar_quadrature(n_psi: int = 24, n_theta: int = 16, n_phi: int = 32):
    """Product quadrature on the 3-sphere for the normalized Haar measure.

    Hyperspherical angles ``(psi, theta, phi)`` with density proportional to
    ``sin(psi)^2 sin(theta)``: Gauss-Legendre in ``psi`` and ``theta``,
    trapezoid in ``phi``. Returns ``(quaternions (K, 4), weights (K,))``.
    """
    xp, wp = np.polynomial.legendre.leggauss(n_psi)
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    psi, wpsi = 0.5 * np.pi * (xp + 1), 0.5 * np.pi * wp * np.sin(0.5 * np.pi * (xp + 1)) ** 2
    th, wth = 0.5 * np.pi * (xt + 1), 0.5 * np.pi * wt * np.sin(0.5 * np.pi * (xt + 1))
    ph = 2 * np.pi * np.arange(n_phi) / n_phi
    P, T, F = np.meshgrid(psi, th, ph, indexing="ij")
    W = np.einsum("i,j,k->ijk", wpsi, wth, np.full(n_phi, 2 * np.pi / n_phi))
    q = np.stack([np.cos(P), np.sin(P) * np.cos(T), np.sin(P) * np.sin(T) * np.cos(F),
                  np.sin(P) * np.sin(T) * np.sin(F)], axis=-1).reshape(-1, 4)
    w = W.reshape(-1)
    return q, w / w.sum()


def haar_nodes(group: GroupSpec, nodes: int = 512):
    """Quadrature nodes and weights for the normalized Haar measure."""
    if group.kind == "cyclic":
        return group.elements(), np.full(group.n, 1.0 / group.n)
    if group.kind == "circle":
        return 2 * np.pi * np.arange(nodes) / nodes, np.full(nodes, 1.0 / nodes)
    return su2_haar_quadrature()


@dataclass
class HaarGapReport:
    max_ratio: float
    eps_observed: float
    normalization: float


def haar_gap_check(group: GroupSpec, density, rep: Representation, n_random: int = 1000,
                   seed: int = 0) -> HaarGapReport:
    """Largest ``|int f rho|^2 / int |f|^2 rho`` over ``f = Tr(L pi(g))``.

    ``density`` is either an array of values on the quadrature nodes or a
    callable on raw group values; it must integrate to one against Haar
    measure. ``L`` runs over the matrix units and ``n_random`` random complex
    matrices. The observed gap is ``1 - sqrt(max_ratio)``.
    """
    if not acts_nontrivially_on_center(rep):
        raise ValueError("the representation must act nontrivially on the center")
    g, w = haar_nodes(group)
    rho = np.asarray(density(g) if callable(density) else density, dtype=float)
    norm = float(np.dot(w, rho))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"density integrates to {norm}, not 1")
    mats = rep.matrices(g)  # (K, m, m)
    m = rep.dim
    units = np.zeros((m * m, m, m), dtype=complex)
    for i in range(m * m):
        units[i].flat[i] = 1.0
    rng = np.random.default_rng(seed)
    Ls = np.concatenate([units, rng.standard_normal((n_random, m, m)) + 1j * rng.standard_normal((n_random, m, m))])
    F = np.einsum("lij,kji->lk", Ls, mats)
    num = np.abs(F @ (w * rho)) ** 2
    den = (np.abs(F) ** 2) @ (w * rho)
    ratio = float(np.max(num / den))
    return HaarGapReport(ratio, 1.0 - math.sqrt(ratio), norm)


# ====================================================================== cube coupling
@dataclass
class CubeCoupling:
    """The cube coupling of ``mu_delta`` and ``mu_delta'`` on the interior edges.

    Edges outside ``E(A, r)`` are coupled optimally; given that pair, the
    edges inside ``E(A, r)`` are drawn independently from the two
    conditional laws. ``certificate`` is the probability of a disagreement
    outside ``E(A, r)``, which equals ``TV`` of the two outside marginals.
    """

    geometry: Geometry
    A: np.ndarray
    near: np.ndarray
    outside: tuple
    inside: tuple
    mu: DiscreteMeasure
    mu2: DiscreteMeasure
    mu_out: DiscreteMeasure
    mu2_out: DiscreteMeasure
    certificate: float
    _f1: np.ndarray = field(repr=False, default=None)
    _g1: np.ndarray = field(repr=False, default=None)
    _h: np.ndarray = field(repr=False, default=None)

    @property
    def interior(self) -> tuple:
        return tuple(self.mu.edges)

    def _outside_index(self) -> np.ndarray:
        """Outside-marginal state of every interior state."""
        n = self.mu.n
        pos = {e: j for j, e in enumerate(self.mu.edges)}
        idx = np.arange(self.mu.size, dtype=np.int64)
        out = np.zeros(self.mu.size, dtype=np.int64)
        for k, e in enumerate(self.outside):
            out += ((idx // n ** pos[e]) % n) * n ** k
        return out

    def outside_coupling(self) -> np.ndarray:
        """Dense optimal coupling of the two outside marginals."""
        J = np.diag(self._h)
        if self.certificate > 0:
            J = J + np.outer(self._f1, self._g1) / self.certificate
        return J

    def joint(self, cap: int = DEFAULT_CAP) -> np.ndarray:
        """The full coupling as a dense matrix over interior states."""
        K = self.mu.size
        if K * K > cap:
            raise ResourceCapError(f"{K}^2 joint entries exceed cap {cap}")
        o = self._outside_index()
        c1 = self.mu.probs / self.mu_out.probs[o]
        c2 = self.mu2.probs / self.mu2_out.probs[o]
        c1 = np.where(self.mu_out.probs[o] > 0, c1, 0.0)
        c2 = np.where(self.mu2_out.probs[o] > 0, c2, 0.0)
        return self.outside_coupling()[np.ix_(o, o)] * c1[:, None] * c2[None, :]

    def rho(self) -> dict:
        """Disagreement probability of every interior edge, without the dense joint."""
        n = self.mu.n
        tv = self.certificate
        out = {}
        n_out = self.mu_out.size
        for e in self.interior:
            if e in self.outside:
                k = self.outside.index(e)
                v = (np.arange(n_out) // n ** k) % n
                F = np.bincount(v, weights=self._f1, minlength=n)
                G = np.bincount(v, weights=self._g1, minlength=n)
                out[e] = (tv * tv - float(F @ G)) / tv if tv > 0 else 0.0
            else:
                p = exact_marginal(self.mu, list(self.outside) + [e]).probs.reshape(n, n_out).T
                q = exact_marginal(self.mu2, list(self.outside) + [e]).probs.reshape(n, n_out).T
                with np.errstate(invalid="ignore", divide="ignore"):
                    p = np.nan_to_num(p / self.mu_out.probs[:, None])
                    q = np.nan_to_num(q / self.mu2_out.probs[:, None])
                diag = float(np.dot(self._h, 1.0 - (p * q).sum(axis=1)))
                off = 0.0
                if tv > 0:
                    off = (tv * tv - float((self._f1 @ p) @ (self._g1 @ q))) / tv
                out[e] = diag + off
        return out


def cube_coupling(geom: Geometry, group: GroupSpec, beta: float, bc: BoundaryCondition,
                  bc2: BoundaryCondition, r: float, cap: int = DEFAULT_CAP) -> CubeCoupling:
    """Build the cube coupling for boundary conditions ``bc`` and ``bc2``.

    Both boundary conditions must pin every boundary edge of ``geom``. ``A``
    is the set of boundary edges where they differ. When ``4r`` exceeds a
    side of the box the neighborhoods are clamped to that whole side.
    """
    for b in (bc, bc2):
        if not np.array_equal(b.fixed, geom.boundary_mask):
            raise ValueError("cube coupling needs every boundary edge pinned")
    A = np.flatnonzero(geom.boundary_mask & ~group.equal(bc.values, bc2.values))
    near = union_neighborhood(geom, A, r, clamp=True)
    interior = geom.interior_edges
    near_set = set(near.tolist())
    outside = tuple(int(e) for e in interior if e not in near_set)
    inside = tuple(int(e) for e in interior if e in near_set)
    s1 = EnumeratedSpace(geom, group, bc, cap=cap)
    s2 = EnumeratedSpace(geom, group, bc2, cap=cap)
    mu, mu2 = exact_gibbs(s1, beta), exact_gibbs(s2, beta)
    mu_out, mu2_out = exact_marginal(mu, outside), exact_marginal(mu2, outside)
    h = np.minimum(mu_out.probs, mu2_out.probs)
    f1, g1 = mu_out.probs - h, mu2_out.probs - h
    cert = float(f1.sum())
    if cert <= 1e-14:  # identical outside marginals up to rounding
        f1, g1, cert = np.zeros_like(f1), np.zeros_like(g1), 0.0
    return CubeCoupling(geom, A, near, outside, inside, mu, mu2, mu_out, mu2_out, cert, f1, g1, h)

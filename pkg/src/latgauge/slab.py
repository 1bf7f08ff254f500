"""Iterated cube couplings on a slab.

Two Gibbs measures ``mu`` and ``mu'`` on the same slab have boundary
conditions that agree on the temporal faces and may differ on the spatial
boundary. A coupling ``gamma`` of them is improved by local updates: for a
full-height cube ``B`` strictly inside the slab, ``tau_B`` keeps the joint law
of the edges outside the interior ``B°`` of ``B`` and redraws the pair on
``B°`` from the cube coupling determined by the pair of values on the sides
of ``B``. The global update averages ``tau_B`` over all such cubes, and the
iteration starts from the product coupling ``mu x mu'``.

Exact representation
--------------------
A pair configuration assigns ``(v, v')`` to each interior edge, encoded as
``p = v * n + v'``. The full pair space has ``n**(2|E°|)`` states, which is
out of reach beyond tiny slabs. The update only *reads* the side edges of
each cube, so for a set ``S`` of edges that contains the sides of every cube
whose interior meets ``S`` (a *closed* set), the marginal of ``gamma`` on
``S`` evolves on its own:

* if ``B°`` misses ``S`` the marginal is unchanged;
* otherwise the new marginal is the old marginal on ``S`` minus ``B°``
  times the cube kernel restricted to ``B°`` inside ``S``.

:class:`ClosedMarginal` stores that marginal as a dense tensor with one axis
of size ``n**2`` per edge of ``S``. Disagreement probabilities and both
one-copy marginals on ``S`` are read off exactly. Covering every interior
edge by a small closed set gives the exact disagreement profile of the
iterates without ever forming the full joint.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .coupling import cube_coupling
from .exact import DEFAULT_CAP, ResourceCapError, EnumeratedSpace, exact_gibbs, exact_marginal
from .groups import GroupSpec
from .lattice import Geometry, cubes_in_slab, share_cube
from .model import BoundaryCondition


@dataclass
class SlabCube:
    lo: tuple
    hi: tuple
    interior: tuple  # slab edge ids of B°, increasing
    sides: tuple     # slab-interior edges on the boundary of B, increasing
    pinned: tuple    # boundary edges of B that the slab boundary condition pins


def _closure(cubes, edges) -> tuple:
    S = set(int(e) for e in edges)
    changed = True
    while changed:
        changed = False
        for c in cubes:
            if S.intersection(c.interior) and not S.issuperset(c.sides):
                S.update(c.sides)
                changed = True
    return tuple(sorted(S))


def _axis_marginal(T: np.ndarray, axes) -> np.ndarray:
    """Marginal of a tensor on ``axes`` (in that order).

    The kept axes are moved to the front and the rest flattened into one
    contiguous axis, so numpy sums with pairwise summation; reducing many
    strided axes at once loses several digits on large tensors.
    """
    axes = list(axes)
    rest = [j for j in range(T.ndim) if j not in axes]
    kept = tuple(T.shape[j] for j in axes)
    M = np.ascontiguousarray(T.transpose(axes + rest)).reshape(int(np.prod(kept, dtype=np.int64)), -1)
    return M.sum(axis=1).reshape(kept)


def _pair_tensor(probs: np.ndarray, k: int, n: int) -> np.ndarray:
    """Little-endian probability vector over ``k`` edges -> tensor with axes in edge order."""
    return probs.reshape((n,) * k).transpose(tuple(reversed(range(k)))) if k else probs.reshape(())


class SlabCouplingProblem:
    """Everything fixed by the slab, the group, ``beta`` and the two boundary conditions."""

    def __init__(self, geom: Geometry, group: GroupSpec, beta: float, bc: BoundaryCondition,
                 bc2: BoundaryCondition, r: float = 1, cap: int = DEFAULT_CAP):
        if geom.kind not in ("slab", "thin_slab"):
            raise ValueError("slab couplings need a slab geometry")
        if group.kind != "cyclic":
            raise ValueError("slab couplings are exact-mode only and need a cyclic group")
        for b in (bc, bc2):
            if not np.array_equal(b.fixed, geom.boundary_mask):
                raise ValueError("both boundary conditions must pin every boundary edge")
        tm = geom.temporal_mask
        if not np.all(group.equal(bc.values[tm], bc2.values[tm])):
            raise ValueError("boundary conditions must agree on the temporal faces")
        self.geometry, self.group, self.beta = geom, group, float(beta)
        self.bc, self.bc2, self.r, self.cap = bc, bc2, r, cap
        self.n = group.n
        self.interior = tuple(int(e) for e in geom.interior_edges)
        self.cubes = []
        for lo, hi in cubes_in_slab(geom):
            bnd = geom.subbox_boundary_edges(lo, hi)
            inner = geom.subbox_interior_edges(lo, hi)
            sides = tuple(int(e) for e in bnd if not geom.boundary_mask[e])
            pinned = tuple(int(e) for e in bnd if geom.boundary_mask[e])
            self.cubes.append(SlabCube(lo, hi, tuple(int(e) for e in inner), sides, pinned))
        self.mu = exact_gibbs(EnumeratedSpace(geom, group, bc, cap=cap), beta)
        self.mu2 = exact_gibbs(EnumeratedSpace(geom, group, bc2, cap=cap), beta)
        self._kernels = {}

    # ------------------------------------------------------------ kernels
    def kernel(self, b: int) -> np.ndarray:
        """Cube-coupling kernel of cube ``b`` as a tensor.

        Axes: one per side edge (pair index of the conditioning values), then
        one per edge of ``B°`` (pair index of the new values). Entries along
        the ``B°`` axes sum to one.
        """
        if b in self._kernels:
            return self._kernels[b]
        c = self.cubes[b]
        geom, group, n = self.geometry, self.group, self.n
        sub, mapping = geom.subgeometry(c.lo, c.hi)
        inv = {int(e): i for i, e in enumerate(mapping.tolist())}
        sub_sides = [inv[e] for e in c.sides]
        sub_interior = [inv[e] for e in c.interior]
        if sub_interior != sorted(sub_interior):
            raise AssertionError("sub-box edge order differs from slab order")
        k, s = len(c.interior), len(c.sides)
        vals = group.identity_array(sub.n_edges)
        for e in c.pinned:
            vals[inv[e]] = self.bc.values[e]
        K = np.zeros((n * n,) * s + (n * n,) * k)
        for x in itertools.product(range(n), repeat=s):
            for x2 in itertools.product(range(n), repeat=s):
                v1, v2 = vals.copy(), vals.copy()
                v1[sub_sides] = x
                v2[sub_sides] = x2
                b1 = BoundaryCondition.fixed_to(sub, group, v1)
                b2 = BoundaryCondition.fixed_to(sub, group, v2)
                J = cube_coupling(sub, group, self.beta, b1, b2, self.r, cap=self.cap).joint(cap=self.cap)
                T = J.reshape((n,) * (2 * k))
                # C-order reshape of little-endian states: reverse each copy's axes
                T = T.transpose(tuple(reversed(range(k))) + tuple(k + i for i in reversed(range(k))))
                T = T.transpose([ax for i in range(k) for ax in (i, k + i)]).reshape((n * n,) * k)
                idx = tuple(a * n + a2 for a, a2 in zip(x, x2))
                K[idx] = T / T.sum()  # remove rounding drift so rows are probability vectors
        self._kernels[b] = K
        return K

    # ------------------------------------------------------------ closed sets
    def closure(self, edges) -> tuple:
        return _closure(self.cubes, edges)

    def is_closed(self, S) -> bool:
        return self.closure(S) == tuple(sorted(S))

    def initial(self, S=None) -> "ClosedMarginal":
        """Marginal of the product coupling ``mu x mu'`` on a closed set ``S``."""
        S = self.interior if S is None else tuple(sorted(int(e) for e in S))
        if not self.is_closed(S):
            raise ValueError("edge set is not closed under the local updates")
        if (self.n * self.n) ** len(S) > self.cap:
            raise ResourceCapError(f"pair space over {len(S)} edges exceeds cap {self.cap}")
        n, k = self.n, len(S)
        a = _pair_tensor(exact_marginal(self.mu, S).probs, k, n)
        b = _pair_tensor(exact_marginal(self.mu2, S).probs, k, n)
        T = np.multiply.outer(a, b)
        T = T.transpose([ax for i in range(k) for ax in (i, k + i)]).reshape((n * n,) * k)
        return ClosedMarginal(self, S, T)

    @property
    def core(self) -> tuple:
        """Smallest closed set holding every side edge."""
        return self.closure({e for c in self.cubes for e in c.sides})

    @property
    def satellites(self) -> tuple:
        """Interior edges outside the core; no update ever reads them."""
        core = set(self.core)
        return tuple(e for e in self.interior if e not in core)

    def distances(self) -> dict:
        return {e: self.geometry.dist_to_spatial_boundary(e) for e in self.interior}


@dataclass
class ClosedMarginal:
    """Exact marginal of a slab coupling on a closed edge set."""

    problem: SlabCouplingProblem
    S: tuple
    T: np.ndarray = field(repr=False)

    def _axis(self, e: int) -> int:
        return self.S.index(e)

    def local_update(self, b: int) -> "ClosedMarginal":
        """``tau_B`` for cube ``b``."""
        c = self.problem.cubes[b]
        inS = [e for e in c.interior if e in self.S]
        if not inS:
            return ClosedMarginal(self.problem, self.S, self.T.copy())
        K = self.problem.kernel(b)
        s = len(c.sides)
        # drop kernel axes for B° edges outside S
        drop = tuple(s + i for i, e in enumerate(c.interior) if e not in self.S)
        if drop:
            K = K.sum(axis=drop)
        ax = list(range(len(self.S)))
        keep = [self._axis(e) for e in self.S if e not in inS]
        marg = self.T.sum(axis=tuple(self._axis(e) for e in inS))
        out = np.einsum(marg, keep, K, [self._axis(e) for e in c.sides] + [self._axis(e) for e in inS], ax)
        return ClosedMarginal(self.problem, self.S, out)

    def global_update(self) -> "ClosedMarginal":
        cubes = self.problem.cubes
        if not cubes:
            return ClosedMarginal(self.problem, self.S, self.T.copy())
        acc = np.zeros_like(self.T)
        for b in range(len(cubes)):
            acc += self.local_update(b).T
        return ClosedMarginal(self.problem, self.S, acc / len(cubes))

    def rho(self) -> dict:
        """Disagreement probability of each edge of ``S``."""
        n = self.problem.n
        dis = np.array([(p // n) != (p % n) for p in range(n * n)])
        out = {}
        for i, e in enumerate(self.S):
            v = _axis_marginal(self.T, [i])
            out[e] = float(v[dis].sum())
        return out

    def copy_marginals(self):
        """The two one-copy marginals on ``S`` as tensors with axes in ``S`` order."""
        n, k = self.problem.n, len(self.S)
        X = self.T.reshape(tuple(d for _ in range(k) for d in (n, n)))
        first = _axis_marginal(X, [2 * i for i in range(k)])
        second = _axis_marginal(X, [2 * i + 1 for i in range(k)])
        return first, second

    def marginal_error(self) -> float:
        """Largest deviation of the one-copy marginals from ``mu`` and ``mu'`` on ``S``."""
        p = self.problem
        k = len(self.S)
        a = _pair_tensor(exact_marginal(p.mu, self.S).probs, k, p.n)
        b = _pair_tensor(exact_marginal(p.mu2, self.S).probs, k, p.n)
        f, s = self.copy_marginals()
        return max(float(np.max(np.abs(f - a))), float(np.max(np.abs(s - b))))


class SlabIteration:
    """Exact state of ``gamma_n`` as seen by the disagreement profile.

    The joint law on the core is tracked as a :class:`ClosedMarginal`. Each
    satellite edge ``h`` is only ever written, so its pair marginal obeys

        m_{n+1}(h) = avg_B [ K_B(h | sides) composed with gamma_n on sides  if h in B°
                             m_n(h)                                          otherwise ],

    which only needs the core marginal of ``gamma_n``.
    """

    def __init__(self, problem: SlabCouplingProblem):
        self.problem = problem
        self.core = problem.initial(problem.core)
        n, pairs = problem.n, problem.n * problem.n
        self.sat = {}
        for h in problem.satellites:
            a = exact_marginal(problem.mu, [h]).probs
            b = exact_marginal(problem.mu2, [h]).probs
            self.sat[h] = np.outer(a, b).reshape(pairs)
        self.n_steps = 0
        self._dis = np.array([(q // n) != (q % n) for q in range(pairs)])

    def _satellite_law(self, b: int, h: int) -> np.ndarray:
        p, st = self.problem, self.core
        c = p.cubes[b]
        s = len(c.sides)
        i = c.interior.index(h)
        K = p.kernel(b).sum(axis=tuple(s + j for j in range(len(c.interior)) if j != i))
        side_axes = [st._axis(e) for e in c.sides]
        marg = _axis_marginal(st.T, side_axes)
        return np.tensordot(marg, K, axes=(list(range(s)), list(range(s))))

    def step(self) -> "SlabIteration":
        p = self.problem
        m = len(p.cubes)
        new_sat = {}
        for h, old in self.sat.items():
            acc = np.zeros_like(old)
            for b, c in enumerate(p.cubes):
                acc += self._satellite_law(b, h) if h in c.interior else old
            new_sat[h] = acc / m if m else old.copy()
        self.core = self.core.global_update()
        self.sat = new_sat
        self.n_steps += 1
        return self

    def rho(self) -> dict:
        out = dict(self.core.rho())
        for h, v in self.sat.items():
            out[h] = float(v[self._dis].sum())
        return {e: out[e] for e in self.problem.interior}


@dataclass
class IterationResult:
    profiles: list          # rho dict per iteration, starting with the product coupling
    converged_at: int | None
    state: SlabIteration = field(repr=False, default=None)

    @property
    def final(self) -> dict:
        return self.profiles[-1]

    def monotone_violations(self, tol: float = 1e-12) -> list:
        """``(n, e, increase)`` for every step where ``rho(gamma_n, e)`` grew by more than ``tol``.

        Monotone decrease is an empirical observation, not a guarantee, so
        callers treat a nonempty result as a warning rather than an error.
        """
        out = []
        for n in range(1, len(self.profiles)):
            prev, cur = self.profiles[n - 1], self.profiles[n]
            out.extend((n, e, cur[e] - prev[e]) for e in cur if cur[e] - prev[e] > tol)
        return out


def iterate_profile(problem: SlabCouplingProblem, n_max: int = 1000, tol: float = 1e-10,
                    min_iter: int = 0) -> IterationResult:
    """Exact disagreement profiles of ``gamma_0, gamma_1, ...`` on every interior edge.

    Iteration stops once the largest change of the profile between two
    consecutive iterates drops below ``tol`` (after ``min_iter`` steps) or
    after ``n_max`` global updates.
    """
    it = SlabIteration(problem)
    profiles = [it.rho()]
    converged = None
    for k in range(1, n_max + 1):
        it.step()
        profiles.append(it.rho())
        change = max(abs(profiles[-1][e] - profiles[-2][e]) for e in problem.interior)
        if k >= min_iter and change < tol:
            converged = k
            break
    res = IterationResult(profiles, converged, it)
    bad = res.monotone_violations()
    if bad:
        warnings.warn(f"disagreement profile increased at {len(bad)} (iteration, edge) pairs; "
                      f"largest increase {max(b[2] for b in bad):.3g}", RuntimeWarning, stacklevel=2)
    return res


def log_linear_slope(distances, rho) -> float:
    """Least-squares slope of ``log rho`` against distance."""
    d = np.asarray(distances, dtype=float)
    y = np.log(np.asarray(rho, dtype=float))
    A = np.stack([np.ones_like(d), d], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[1])


def recursion_bound(state: ClosedMarginal, b: int) -> dict:
    """Check the structural bound on ``rho(tau_B gamma, e)`` for ``e`` in ``B°``.

    With ``A`` the set of disagreeing side edges and ``U(e)`` the sides that
    share a cube of side ``4r`` with ``e``, every kernel satisfies
    ``P(y_e != y'_e) <= 1`` when ``A`` meets ``U(e)`` and
    ``P(y_e != y'_e) <= c(e) |A|`` otherwise, where ``c(e)`` is the largest
    observed ratio over the kernel's conditioning pairs. Averaging gives

        rho(tau_B gamma, e) <= c(e) sum_{u not in U(e)} rho(gamma, u)
                               + sum_{u in U(e)} rho(gamma, u).

    Returns ``{e: (rho_new, bound, c(e))}`` for ``e`` in ``B°`` inside ``S``.
    """
    p = state.problem
    c = p.cubes[b]
    n = p.n
    geom = p.geometry
    K = p.kernel(b)
    s = len(c.sides)
    rho_old = state.rho()
    rho_new = state.local_update(b).rho()
    out = {}
    for i, e in enumerate(c.interior):
        if e not in state.S:
            continue
        U = [j for j, u in enumerate(c.sides) if share_cube(geom, e, u, 4 * p.r)]
        Ke = K.sum(axis=tuple(s + j for j in range(len(c.interior)) if j != i))
        dis = np.array([(q // n) != (q % n) for q in range(n * n)])
        pdis = Ke[..., dis].sum(axis=-1)
        cmax = 0.0
        for idx in itertools.product(range(n * n), repeat=s):
            A = [j for j, q in enumerate(idx) if q // n != q % n]
            if A and not set(A) & set(U):
                cmax = max(cmax, pdis[idx] / len(A))
        bound = sum(rho_old[u] for j, u in enumerate(c.sides) if j in U)
        bound += cmax * sum(rho_old[u] for j, u in enumerate(c.sides) if j not in U)
        out[e] = (rho_new[e], bound, cmax)
    return out

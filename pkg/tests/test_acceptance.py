"""Acceptance gate: one test group per criterion, summarized at the end of the run.

Every tolerance below is pinned; none is tuned to make a check pass.
"""
import itertools
import math
import time

import numpy as np
import pytest

from latgauge.coupling import coupling_stability_check, gluing_bound_check, optimal_coupling
from latgauge.exact import (DiscreteMeasure, EnumeratedSpace, contract_expectation, exact_tv,
                            loop_edge_factors, stream_expectations)
from latgauge.groups import GroupSpec, acts_nontrivially_on_center, parse_rep
from latgauge.lattice import Geometry, rect_loop, vertical_chain
from latgauge.model import (BoundaryCondition, GaugeConfig, SamplerParams, center_twisted, estimate,
                            gradient_identity_check, hamiltonian_values, plaquette_values)
from latgauge.observables import (ChainVariableSpec, center_transform_values, chain_variable_values,
                                  conditional_link_expectation, wilson_loop, wilson_loop_values)
from latgauge.slab import SlabCouplingProblem, iterate_profile, log_linear_slope

pytestmark = pytest.mark.acceptance

BETAS = (0.2, 0.5, 0.9)
Z2 = GroupSpec.parse("Z2")


@pytest.fixture(scope="module")
def z2_4x4_exact():
    """Exact Wilson loops on the 4x4-vertex Z_2 lattice with free boundary (2^24 states)."""
    geom = Geometry.box((0, 0), (3, 3))
    rep = parse_rep(Z2, "fund")
    loops = {}
    for R, T in ((1, 1), (1, 2), (2, 1), (2, 2)):
        for a0 in range(0, 4 - R):
            for a1 in range(0, 4 - T):
                loops[(R, T, a0, a1)] = rect_loop(geom, R, T, anchor=(a0, a1))
    obs = {k: (lambda lp: lambda v: wilson_loop_values(Z2, v, lp, rep))(lp) for k, lp in loops.items()}
    space = EnumeratedSpace(geom, Z2, BoundaryCondition.free(geom, Z2))
    return geom, stream_expectations(space, BETAS, obs)


# ---------------------------------------------------------------- 1
@pytest.mark.criterion(1, "MC <W(1,1)> on 4x4 Z_2 matches exact enumeration within 3 sigma")
@pytest.mark.parametrize("beta", BETAS)
def test_c1_mc_matches_enumeration(beta, z2_4x4_exact):
    geom, exact = z2_4x4_exact
    rep = parse_rep(Z2, "fund")
    loop = rect_loop(geom, 1, 1, anchor=(1, 1))
    t0 = time.perf_counter()
    res = estimate(lambda c: wilson_loop(c, loop, rep), geom, None,
                   SamplerParams(beta=beta, sweeps=20000, therm=500, seed=1234), Z2, n_batches=50)
    elapsed = time.perf_counter() - t0
    target = exact[beta][(1, 1, 1, 1)].real
    assert abs(target - math.tanh(beta)) < 1e-12  # enumeration against the closed form
    assert abs(res.mean.real - target) < 3 * res.stderr, (res.mean, target, res.stderr)
    assert elapsed < 60.0


# ---------------------------------------------------------------- 2
@pytest.mark.criterion(2, "exact <W(R,T)> = s^(RT) with one s per beta (Z_2, d=2, free)")
@pytest.mark.parametrize("beta", BETAS)
def test_c2_factorization_4x4(beta, z2_4x4_exact):
    _, exact = z2_4x4_exact
    vals = exact[beta]
    s = vals[(1, 1, 0, 0)].real
    dev = max(abs(v.real - s ** (R * T)) / s ** (R * T) for (R, T, _, _), v in vals.items())
    assert dev < 1e-10
    assert max(abs(v.imag) for v in vals.values()) < 1e-12
    assert abs(s - math.tanh(beta)) < 1e-12


@pytest.mark.criterion(2, "exact <W(R,T)> = s^(RT) with one s per beta (Z_2, d=2, free)")
@pytest.mark.parametrize("hi", [(2, 2), (3, 2), (2, 3)])
def test_c2_factorization_small(hi):
    geom = Geometry.box((0, 0), hi)
    rep = parse_rep(Z2, "fund")
    shapes = [(R, T) for R, T in ((1, 1), (1, 2), (2, 2)) if R <= hi[0] and T <= hi[1]]
    obs = {rt: (lambda lp: lambda v: wilson_loop_values(Z2, v, lp, rep))(rect_loop(geom, *rt)) for rt in shapes}
    res = stream_expectations(EnumeratedSpace(geom, Z2, BoundaryCondition.free(geom, Z2)), BETAS, obs)
    for beta in BETAS:
        s = res[beta][(1, 1)].real
        for (R, T) in shapes:
            assert abs(res[beta][(R, T)].real - s ** (R * T)) / s ** (R * T) < 1e-10


# ---------------------------------------------------------------- 3
def _slab():
    return Geometry.slab(2, 2, 2, centered=False)


@pytest.mark.criterion(3, "exact chain-variable expectation vanishes for nontrivial characters")
def test_c3_z2_slab_enumeration():
    geom = _slab()
    space = EnumeratedSpace(geom, Z2, BoundaryCondition.free(geom, Z2))
    obs = {}
    for x in range(-2, 3):
        spec = ChainVariableSpec(tuple(vertical_chain(geom, [x])), ((0, 0),) * 2)
        for label in ("char:1", "char:0"):
            rep = parse_rep(Z2, label)
            obs[(x, label)] = (lambda s, r: lambda v: chain_variable_values(Z2, v, s, r))(spec, rep)
    res = stream_expectations(space, [0.3, 0.8, 1.5], obs)
    for beta, vals in res.items():
        for (x, label), v in vals.items():
            if label == "char:1":
                assert acts_nontrivially_on_center(parse_rep(Z2, label))
                assert abs(v) < 1e-12
            else:
                assert abs(v) > 0.5


@pytest.mark.criterion(3, "exact chain-variable expectation vanishes for nontrivial characters")
def test_c3_z3_slab_contraction():
    Z3 = GroupSpec.parse("Z3")
    geom = _slab()
    bc = BoundaryCondition.free(geom, Z3)
    for beta in (0.3, 0.8, 1.5):
        for x in range(-2, 3):
            edges = vertical_chain(geom, [x])
            for k in (0, 1, 2):
                rep = parse_rep(Z3, f"char:{k}")
                v = contract_expectation(geom, Z3, bc, beta, loop_edge_factors(Z3, k, edges, [1, 1]))
                if k:
                    assert acts_nontrivially_on_center(rep)
                    assert abs(v) < 1e-12
                else:
                    assert abs(v - 1) < 1e-12


@pytest.mark.criterion(3, "exact chain-variable expectation vanishes for nontrivial characters")
def test_c3_contraction_matches_enumeration():
    """Dual route: contraction and brute force agree where both are feasible and nonzero."""
    Z3 = GroupSpec.parse("Z3")
    geom = Geometry.box((0, -1), (2, 1))
    bc = BoundaryCondition.random(geom, Z3, seed=5, on="all")
    edges = vertical_chain(geom, [0])
    rep = parse_rep(Z3, "char:1")
    spec = ChainVariableSpec(tuple(edges), ((0, 0),) * len(edges))
    space = EnumeratedSpace(geom, Z3, bc)
    brute = stream_expectations(space, [0.9], {"c": lambda v: chain_variable_values(Z3, v, spec, rep)})[0.9]["c"]
    con = contract_expectation(geom, Z3, bc, 0.9, loop_edge_factors(Z3, 1, edges, [1] * len(edges)))
    assert abs(brute) > 1e-3
    assert abs(brute - con) < 1e-12


# ---------------------------------------------------------------- 4
@pytest.mark.criterion(4, "center transform leaves H invariant on 10^4 random configurations")
@pytest.mark.parametrize("name", ["Z2", "Z4", "U1", "SU2"])
@pytest.mark.parametrize("dims", [(2, 3, 2), (3, 2, 1)])
def test_c4_center_invariance(name, dims):
    group = GroupSpec.parse(name)
    geom = Geometry.slab(*dims)
    rng = np.random.default_rng(99)
    vals = group.haar(rng, (10_000, geom.n_edges))
    H = hamiltonian_values(group, geom, vals)
    centre = [z for z in group.center_elements() if not np.all(group.equal(z, group.identity_array()))]
    assert centre
    for z in centre:
        t = center_transform_values(group, geom, vals, z)
        assert not np.array_equal(t, vals)
        Ht = hamiltonian_values(group, geom, t)
        if group.kind == "cyclic":
            assert np.array_equal(plaquette_values(group, geom, t), plaquette_values(group, geom, vals))
            assert np.array_equal(Ht, H)
        else:
            assert np.max(np.abs(Ht - H)) < 1e-10


# ---------------------------------------------------------------- 5
@pytest.mark.criterion(5, "optimal coupling off-diagonal mass equals TV on 10^4 pairs")
def test_c5_coupling_attains_tv():
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(10_000):
        k = int(rng.integers(1, 17))
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        if i % 5 == 0:  # measures with holes in their support
            p[rng.random(k) < 0.3] = 0
            p = p / p.sum() if p.sum() > 0 else np.eye(k)[0]
        mu, nu = DiscreteMeasure.on_set(p), DiscreteMeasure.on_set(q)
        gamma = optimal_coupling(mu, nu)
        gamma.check_marginals(1e-12)
        assert gamma.joint.min() >= 0
        tv_oracle = 0.5 * float(np.abs(p - q).sum())
        worst = max(worst, abs(gamma.off_diagonal_mass() - exact_tv(mu, nu)),
                    abs(gamma.off_diagonal_mass() - tv_oracle))
    assert worst < 1e-12


# ---------------------------------------------------------------- 6
def _perturb(rng, p, scale):
    q = p * np.exp(scale * rng.standard_normal(len(p)))
    return q / q.sum()


@pytest.mark.criterion(6, "stability (10 sqrt b) and gluing bounds hold on 10^4 instances each")
def test_c6_stability_and_gluing():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    violations = 0
    for i in range(10_000):
        k = int(rng.integers(1, 17))
        scale = 10.0 ** rng.uniform(-6, 0.5)
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        p2 = _perturb(rng, p, scale) if i % 2 else rng.dirichlet(np.ones(k))
        q2 = _perturb(rng, q, scale)
        ms = [DiscreteMeasure.on_set(x) for x in (p, q, p2, q2)]
        violations += not coupling_stability_check(*ms).holds
    for i in range(10_000):
        kx, ky = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        scale = 10.0 ** rng.uniform(-6, 0.5)
        mu = DiscreteMeasure.on_set(rng.dirichlet(np.ones(kx)))
        mu2 = DiscreteMeasure.on_set(_perturb(rng, mu.probs, scale))
        phi = rng.dirichlet(np.ones(ky), size=kx)
        phi2 = np.array([_perturb(rng, r, scale) for r in phi])
        alpha = rng.dirichlet(np.ones(ky)) if i % 2 else None
        violations += not gluing_bound_check(mu, mu2, phi, phi2, alpha).holds
    assert violations == 0
    assert time.perf_counter() - t0 < 300


# ---------------------------------------------------------------- 7
@pytest.fixture(scope="module")
def c7_problem():
    geom = Geometry.slab(2, 3, 1)
    bc = BoundaryCondition.fixed_to(geom, Z2)
    return SlabCouplingProblem(geom, Z2, 0.3, bc, center_twisted(bc, 1))


C7 = "update maps preserve marginals, fix rho off the cube, average linearly; rho decays inward"


@pytest.mark.criterion(7, C7)
def test_c7_local_update_structure(c7_problem):
    P = c7_problem
    g0 = P.initial(P.core)
    g1 = g0.global_update()
    for state in (g0, g1):
        for b, cube in enumerate(P.cubes):
            new = state.local_update(b)
            assert new.marginal_error() < 1e-12
            r_old, r_new = state.rho(), new.rho()
            off = [e for e in state.S if e not in cube.interior]
            assert off
            # identical up to the last bits of floating-point summation
            assert max(abs(r_old[e] - r_new[e]) for e in off) <= 4 * np.finfo(float).eps


@pytest.mark.criterion(7, C7)
def test_c7_average_linearity(c7_problem):
    P = c7_problem
    g0 = P.initial(P.core)
    g1 = g0.global_update()
    avg = g0.global_update()
    parts = [g0.local_update(b) for b in range(len(P.cubes))]
    r_avg, r_parts = avg.rho(), [p.rho() for p in parts]
    for e in P.core:
        assert abs(r_avg[e] - np.mean([r[e] for r in r_parts])) < 1e-12
    # each tau_B is affine on couplings, hence so is the average
    a = 0.37
    mix = type(g0)(P, g0.S, a * g0.T + (1 - a) * g1.T)
    lhs = mix.global_update().T
    rhs = a * g0.global_update().T + (1 - a) * g1.global_update().T
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@pytest.mark.criterion(7, C7)
def test_c7_profile_decays_inward(c7_problem):
    P = c7_problem
    t0 = time.perf_counter()
    res = iterate_profile(P, n_max=1000, tol=1e-10)
    assert res.state.core.marginal_error() < 1e-12
    d = P.distances()
    slope = log_linear_slope([d[e] for e in P.interior], [res.final[e] for e in P.interior])
    print(f"criterion 7: {len(res.profiles) - 1} iterations, slope {slope:.6f}")
    assert slope < 0
    assert time.perf_counter() - t0 < 600


# ---------------------------------------------------------------- 8
def _neighbour_norms(name, beta):
    """Largest operator norm of <pi(omega_e)>' over every neighbour assignment, nontrivial pi."""
    group = GroupSpec.parse(name)
    geom = Geometry.cube(2, 1)
    reps = [parse_rep(group, f"char:{k}") for k in range(1, group.n)]
    worst = 0.0
    for e in geom.interior_edges:
        nb = sorted({int(f) for p in geom.plaquettes_of(e) for f in geom.plaq_edges[p]} - {int(e)})
        for assign in itertools.product(range(group.n), repeat=len(nb)):
            cfg = GaugeConfig.identity(geom, group)
            cfg.values[nb] = assign
            for rep in reps:
                worst = max(worst, conditional_link_expectation(cfg, int(e), rep, beta).op_norm)
    return worst


C8_CASES = [("Z2", 0.5), ("Z3", 0.5), ("Z3", 1.0),
            pytest.param("Z2", 1.0, marks=pytest.mark.xfail(
                strict=True, reason="largest conditional norm is tanh(2) = 0.964, so epsilon = 0.036 < 0.05"))]


@pytest.mark.criterion(8, "conditional link norm <= 1 - eps with eps >= 0.05; perimeter bound")
@pytest.mark.parametrize("name,beta", C8_CASES)
def test_c8_conditional_link_norm(name, beta):
    eps = 1.0 - _neighbour_norms(name, beta)
    print(f"criterion 8: {name} beta={beta} eps={eps:.6f}")
    assert eps >= 0.05


@pytest.mark.criterion(8, "conditional link norm <= 1 - eps with eps >= 0.05; perimeter bound")
@pytest.mark.parametrize("name,beta", [("Z2", 0.5), ("Z3", 0.5), ("Z3", 1.0), ("Z2", 1.0)])
def test_c8_perimeter_bound(name, beta):
    group = GroupSpec.parse(name)
    eps = 1.0 - _neighbour_norms(name, beta)
    geom = Geometry.cube(2, 1)
    rep = parse_rep(group, "char:1")
    C = rep.dim
    checked = 0
    for bc in (BoundaryCondition.free(geom, group), BoundaryCondition.random(geom, group, seed=3)):
        obs = {}
        for R, T in ((1, 1), (1, 2), (2, 1), (2, 2)):
            for anchor in itertools.product(range(-1, 1 - R + 1), range(-1, 1 - T + 1)):
                lp = rect_loop(geom, R, T, anchor=anchor)
                # the bound conditions on a longest side whose edges are all dynamic
                long_side = lp.edges[:R] if R >= T else lp.edges[R:R + T]
                if bc.fixed[list(long_side)].any():
                    continue
                obs[(R, T, anchor)] = (lambda lp: lambda v: wilson_loop_values(group, v, lp, rep))(lp)
        res = stream_expectations(EnumeratedSpace(geom, group, bc), [beta], obs)[beta]
        for (R, T, _), w in res.items():
            assert abs(w) <= C * (1 - eps) ** max(R, T) + 1e-12
            checked += 1
    assert checked >= 8


# ---------------------------------------------------------------- 9
@pytest.mark.criterion(9, "U(1) boundary gradient identity: finite difference vs covariance within 1e-6")
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_c9_gradient_identity(beta):
    U1 = GroupSpec.parse("U1")
    geom = Geometry.cube(2, 1)
    bc = BoundaryCondition.fixed_to(geom, U1, np.linspace(0.3, 5.0, geom.n_edges))
    fr = bc.free_edges
    e = int(geom.boundary_edges[0])

    def f(V):  # invariant under gauge rotations at the centre vertex
        return (np.cos(V[:, fr[0]] + V[:, fr[1]]) + 0.5 * np.sin(V[:, fr[2]] + V[:, fr[3]])
                + 0.3 * np.cos(V[:, fr[0]] + V[:, fr[3]]))

    r = gradient_identity_check(f, e, geom, bc, beta, nodes=32)
    assert abs(r["lhs"]) > 1e-4  # the check is not vacuous
    assert r["abs_diff"] < 1e-6

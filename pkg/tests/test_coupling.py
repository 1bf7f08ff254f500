import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from latgauge.coupling import (CouplingError, DiscreteCoupling, compose, coupling_stability_check,
                               cube_coupling, glue, gluing_bound_check, haar_gap_check, haar_nodes,
                               optimal_coupling, su2_haar_quadrature)
from latgauge.exact import DiscreteMeasure, IncompatibleMeasures, ResourceCapError, exact_tv
from latgauge.groups import GroupSpec, parse_rep
from latgauge.lattice import Geometry
from latgauge.model import BoundaryCondition, center_twisted

probs = st.integers(2, 6).flatmap(
    lambda k: st.tuples(*[st.lists(st.floats(0, 1), min_size=k, max_size=k).filter(lambda x: sum(x) > 1e-3)] * 2))


def _m(x):
    x = np.asarray(x, dtype=float)
    return DiscreteMeasure.on_set(x / x.sum())


@settings(max_examples=80, deadline=None)
@given(pq=probs)
def test_optimal_coupling(pq):
    mu, nu = map(_m, pq)
    g = optimal_coupling(mu, nu)
    assert g.check_marginals(1e-12) <= 1e-12
    assert np.all(g.joint >= 0)
    assert g.off_diagonal_mass() == pytest.approx(exact_tv(mu, nu), abs=1e-12)


def test_optimal_coupling_identical_and_disjoint():
    a = _m([0.2, 0.3, 0.5])
    assert optimal_coupling(a, a).off_diagonal_mass() == 0
    g = optimal_coupling(_m([1, 0]), _m([0, 1]))
    assert np.allclose(g.joint, [[0, 1], [0, 0]])
    with pytest.raises(IncompatibleMeasures):
        optimal_coupling(a, _m([1, 1]))


def test_check_marginals_raises():
    a = _m([0.5, 0.5])
    with pytest.raises(CouplingError):
        DiscreteCoupling(np.eye(2), a, a).check_marginals()


@settings(max_examples=60, deadline=None)
@given(pq=probs, seed=st.integers(0, 10**6))
def test_stability_and_gluing_bounds(pq, seed):
    rng = np.random.default_rng(seed)
    mu, nu = map(_m, pq)
    k = mu.size
    mu2, nu2 = _m(mu.probs + 0.05 * rng.random(k)), _m(nu.probs + 0.05 * rng.random(k))
    assert coupling_stability_check(mu, nu, mu2, nu2).holds
    phi = rng.random((k, 3)) + 0.1
    phi /= phi.sum(axis=1, keepdims=True)
    phi2 = phi + 0.02 * rng.random((k, 3))
    phi2 /= phi2.sum(axis=1, keepdims=True)
    assert gluing_bound_check(mu, mu2, phi, phi2).holds


@settings(max_examples=40, deadline=None)
@given(pq=probs, seed=st.integers(0, 10**6))
def test_glue_marginals(pq, seed):
    rng = np.random.default_rng(seed)
    mu, nu = map(_m, pq)
    phi, phi2 = rng.random((mu.size, 2)), rng.random((mu.size, 2))
    phi /= phi.sum(axis=1, keepdims=True)
    phi2 /= phi2.sum(axis=1, keepdims=True)
    g = glue(optimal_coupling(mu, nu), phi, phi2)
    assert np.allclose(g.joint.sum(axis=1), compose(mu, phi).reshape(-1), atol=1e-14)
    assert np.allclose(g.joint.sum(axis=0), compose(nu, phi2).reshape(-1), atol=1e-14)


def test_compose_validates_kernel():
    a = _m([0.5, 0.5])
    with pytest.raises(CouplingError):
        compose(a, np.ones((2, 2)))
    with pytest.raises(CouplingError):
        compose(a, np.eye(3))
    with pytest.raises(CouplingError):
        gluing_bound_check(a, a, np.eye(2), np.eye(2), alpha=[1.0, 0.0])


def test_haar_quadrature_integrates_characters():
    q, w = su2_haar_quadrature()
    assert w.sum() == pytest.approx(1.0)
    # orthonormality of the fundamental character: int chi^2 = 1, int chi = 0
    chi = 2 * q[:, 0]
    assert np.dot(w, chi) == pytest.approx(0.0, abs=1e-12)
    assert np.dot(w, chi ** 2) == pytest.approx(1.0, abs=1e-12)
    g, w1 = haar_nodes(GroupSpec.parse("Z4"))
    assert len(g) == 4 and w1.sum() == pytest.approx(1.0)


def test_haar_gap_cyclic():
    grp = GroupSpec.parse("Z3")
    rep = parse_rep(grp, "char:1")
    assert haar_gap_check(grp, np.ones(3), rep).eps_observed == pytest.approx(1.0)
    assert haar_gap_check(grp, np.array([3.0, 0, 0]), rep).eps_observed == pytest.approx(0.0, abs=1e-12)
    w = np.array([1.5, 1.0, 0.5])
    r = haar_gap_check(grp, w, rep)
    assert np.sqrt(r.max_ratio) == pytest.approx(abs(np.dot(w / 3, np.exp(2j * np.pi * np.arange(3) / 3))))


def test_haar_gap_su2_bessel():
    grp, c = GroupSpec.parse("SU2"), 1.7
    rep = parse_rep(grp, "fund")
    dens = lambda g: np.exp(c * g[..., 0]) * c / (2 * special.iv(1, c))  # noqa: E731
    r = haar_gap_check(grp, dens, rep, n_random=200)
    # L = E_11 gives f = w0 + i w3 with <f> = I2(c)/I1(c) and <|f|^2> <= 1
    assert np.sqrt(r.max_ratio) >= special.iv(2, c) / special.iv(1, c) - 1e-10
    assert r.max_ratio <= 1.0
    assert r.normalization == pytest.approx(1.0, abs=1e-10)


def test_haar_gap_rejects():
    grp = GroupSpec.parse("SU2")
    with pytest.raises(ValueError):
        haar_gap_check(grp, lambda g: np.ones(len(g)), parse_rep(grp, "adjoint"))
    with pytest.raises(ValueError):
        haar_gap_check(grp, lambda g: 2 * np.ones(len(g)), parse_rep(grp, "fund"))


def _box_pair(seed=1, r=0.5):
    g, grp = Geometry.box((0, 0), (3, 3)), GroupSpec.parse("Z2")
    bc = BoundaryCondition.random(g, grp, seed=seed)
    v2 = bc.values.copy()
    e = int(g.boundary_edges[0])
    v2[e] = 1 - v2[e]
    bc2 = BoundaryCondition.fixed_to(g, grp, v2)
    return g, grp, bc, bc2, cube_coupling(g, grp, 0.7, bc, bc2, r)


def test_cube_coupling_marginals_and_certificate():
    g, grp, bc, bc2, cc = _box_pair()
    J = cc.joint()
    assert np.allclose(J.sum(axis=1), cc.mu.probs, atol=1e-14)
    assert np.allclose(J.sum(axis=0), cc.mu2.probs, atol=1e-14)
    assert cc.certificate == pytest.approx(exact_tv(cc.mu_out, cc.mu2_out), abs=1e-15)
    assert len(cc.A) == 1
    assert set(cc.inside) | set(cc.outside) == set(cc.interior)
    # disagreement outside E(A, r) has probability exactly the certificate
    d = cc.mu.digits()
    pos = [cc.interior.index(e) for e in cc.outside]
    diff = np.any(d[:, None, pos] != d[None, :, pos], axis=2)
    assert float(J[diff].sum()) == pytest.approx(cc.certificate, abs=1e-14)


def test_cube_coupling_rho_matches_dense_joint():
    _, _, _, _, cc = _box_pair(seed=4, r=0.5)
    J = cc.joint()
    d = cc.mu.digits()
    rho = cc.rho()
    for j, e in enumerate(cc.interior):
        mask = d[:, None, j] != d[None, :, j]
        assert rho[e] == pytest.approx(float(J[mask].sum()), abs=1e-13)


def test_cube_coupling_equal_boundaries():
    g, grp = Geometry.box((0, 0), (2, 2)), GroupSpec.parse("Z3")
    bc = BoundaryCondition.random(g, grp, seed=2)
    cc = cube_coupling(g, grp, 0.9, bc, bc, 1)
    assert len(cc.A) == 0 and cc.certificate == 0
    assert all(v == pytest.approx(0.0, abs=1e-14) for v in cc.rho().values())
    with pytest.raises(ResourceCapError):
        cc.joint(cap=10)
    with pytest.raises(ValueError):
        cube_coupling(g, grp, 0.9, BoundaryCondition.free(g, grp), bc, 1)


def test_cube_coupling_twisted_slab():
    s, grp = Geometry.slab(2, 2, 1), GroupSpec.parse("Z2")
    bc = BoundaryCondition.fixed_to(s, grp)
    cc = cube_coupling(s, grp, 0.4, bc, center_twisted(bc, 1), 0.5)
    assert len(cc.A) == 2
    J = cc.joint()
    assert np.allclose(J.sum(axis=0), cc.mu2.probs, atol=1e-14)
    assert 0 <= cc.certificate <= 1


def test_cube_coupling_zero_beta_certificate():
    # at beta = 0 both measures are the uniform product law, so the outside marginals coincide
    g, grp, bc, bc2, _ = _box_pair(seed=5)
    cc = cube_coupling(g, grp, 0.0, bc, bc2, 0.5)
    assert len(cc.A) == 1
    assert cc.certificate == pytest.approx(0.0, abs=1e-15)

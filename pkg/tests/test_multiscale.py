import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import make_problem, rough_coefficient
from hplod.assembly import (
    Coefficient,
    assemble_mass,
    assemble_problem,
    energy_norm,
    h1_error_exact,
    l2_error_exact,
    l2_norm,
)
from hplod.correctors import CorrectorBasis, CorrectorConfig, CorrectorContext, compute_basis, compute_ideal_basis
from hplod.errors import ConfigError, SingularCoarseSystem
from hplod.mesh import build_mesh
from hplod.multiscale import (
    MultiscaleSolution,
    ResolutionWarning,
    check_resolution,
    coarse_system,
    error_report,
    phi,
    solve_multiscale,
    solve_reference,
)
from hplod.spaces import CoarseSpace, FineSpace


def _u(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _grad_u(x):
    s0, s1 = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
    c0, c1 = np.cos(np.pi * x[:, 0]), np.cos(np.pi * x[:, 1])
    return np.pi * np.stack([c0 * s1, s0 * c1], axis=-1)


def manufactured_errors(ns=(16, 32, 64)):
    l2, h1 = [], []
    for n in ns:
        fine = FineSpace(build_mesh(2, n))
        prob = assemble_problem(fine, Coefficient.constant(2), lambda x: 2 * np.pi**2 * _u(x), load_order=4)
        ref = solve_reference(prob)
        l2.append(l2_error_exact(fine, ref.u, _u, order=4))
        h1.append(h1_error_exact(fine, ref.u, _grad_u, order=4))
    return np.array(l2), np.array(h1)


# ---------------------------------------------------------------- reference


def test_reference_of_zero_load_is_zero():
    prob = assemble_problem(FineSpace(build_mesh(2, 8)), rough_coefficient(2, 8), 0.0)
    ref = solve_reference(prob)
    assert not ref.u.any()


def test_reference_residual_small(problem_32):
    assert solve_reference(problem_32).residual <= 1e-10


def test_manufactured_solution_rates():
    l2, h1 = manufactured_errors()
    eoc_l2 = np.log2(l2[:-1] / l2[1:])
    eoc_h1 = np.log2(h1[:-1] / h1[1:])
    assert np.all(np.abs(eoc_l2 - 2.0) <= 0.15), eoc_l2
    assert np.all(np.abs(eoc_h1 - 1.0) <= 0.15), eoc_h1


def test_nodal_error_decays_at_second_order():
    errs = []
    for n in (16, 32, 64):
        fine = FineSpace(build_mesh(2, n))
        prob = assemble_problem(fine, Coefficient.constant(2), lambda x: 2 * np.pi**2 * _u(x), load_order=4)
        d = solve_reference(prob).u - fine.interpolate(_u)
        errs.append(l2_norm(prob.mass, d))
    eoc = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(eoc >= 1.85), eoc


def test_discrete_stability_bound():
    fine = FineSpace(build_mesh(2, 32))
    coef = rough_coefficient(2, 16, seed=4)
    M = assemble_mass(fine)
    rng = np.random.default_rng(0)
    for _ in range(5):
        fv = rng.standard_normal(fine.num_dofs)
        prob = assemble_problem(fine, coef, 0.0)
        prob = type(prob)(fine, coef, prob.stiffness, prob.mass, M @ fv)
        u = solve_reference(prob).u
        grad = energy_norm(prob.laplacian, u)
        assert grad <= l2_norm(M, fv) / coef.alpha


# ---------------------------------------------------------------- multiscale


@pytest.fixture(scope="module")
def setup_ideal():
    prob = make_problem(2, 64, 32)
    ctx = CorrectorContext.build(prob, CoarseSpace(build_mesh(2, 8), 2))
    basis = compute_ideal_basis(ctx)
    return prob, ctx, basis, solve_reference(prob), solve_multiscale(basis, prob)


def test_equal_projections_with_ideal_basis(setup_ideal):
    prob, ctx, basis, ref, ms = setup_ideal
    P = ctx.projection
    lhs = ctx.coarse.l2_norm(P.apply(ref.u - ms.u))
    assert lhs <= 1e-8 * ctx.coarse.l2_norm(P.apply(ref.u))


def test_fine_representation_is_apply_R(setup_ideal):
    _, _, basis, _, ms = setup_ideal
    np.testing.assert_allclose(ms.u, basis.apply(ms.coarse), rtol=0, atol=0)
    assert ms.provenance["p"] == 2 and ms.provenance["H"] == 0.125


@pytest.mark.parametrize("ell", [1, 2])
def test_galerkin_orthogonality_and_best_approximation(problem_32, ell):
    ctx = CorrectorContext.build(problem_32, CoarseSpace(build_mesh(2, 4), 1))
    basis = compute_basis(ctx, CorrectorConfig(ell=ell))
    ref = solve_reference(problem_32)
    ms = solve_multiscale(basis, problem_32)
    A = problem_32.stiffness
    e = ref.u - ms.u
    rng = np.random.default_rng(ell)
    for _ in range(10):
        v = basis.apply(rng.standard_normal(ctx.coarse.num_dofs))
        assert abs(e @ (A @ v)) <= 1e-8 * energy_norm(A, ref.u) * energy_norm(A, v)
        z = rng.standard_normal(ctx.coarse.num_dofs)
        assert energy_norm(A, e) <= energy_norm(A, ref.u - basis.apply(ms.coarse + 0.1 * z))


@pytest.mark.parametrize("n,p,ell", [(4, 1, 1), (4, 2, 2), (8, 1, None), (8, 3, 1)])
def test_coarse_system_is_spd(n, p, ell):
    prob = make_problem(2, 64, 32)
    ctx = CorrectorContext.build(prob, CoarseSpace(build_mesh(2, n), p))
    K = coarse_system(compute_basis(ctx, CorrectorConfig(ell=ell)), prob.stiffness)
    assert np.abs(K - K.T).max() <= 1e-12 * np.abs(K).max()
    np.linalg.cholesky(K)


def test_coarse_system_sparse_and_dense_paths_agree(problem_32):
    import hplod.multiscale as ms_mod

    ctx = CorrectorContext.build(problem_32, CoarseSpace(build_mesh(2, 4), 1))
    basis = compute_basis(ctx, CorrectorConfig(ell=1))
    old = ms_mod._DENSE_FRACTION
    try:
        ms_mod._DENSE_FRACTION = 0.0
        dense = coarse_system(basis, problem_32.stiffness)
        ms_mod._DENSE_FRACTION = 1.0
        sparse = coarse_system(basis, problem_32.stiffness)
    finally:
        ms_mod._DENSE_FRACTION = old
    np.testing.assert_allclose(dense, sparse, rtol=1e-12, atol=1e-14 * np.abs(dense).max())


def test_duplicated_basis_is_singular(problem_32):
    ctx = CorrectorContext.build(problem_32, CoarseSpace(build_mesh(2, 4), 1))
    basis = compute_basis(ctx, CorrectorConfig(ell=1))
    C = basis.matrix.tolil()
    C[:, 1] = C[:, 0]
    bad = CorrectorBasis(basis.coarse, basis.fine, basis.ell, sp.csc_matrix(C))
    with pytest.raises(SingularCoarseSystem):
        solve_multiscale(bad, problem_32)


def test_mismatched_fine_mesh_rejected(problem_32):
    ctx = CorrectorContext.build(problem_32, CoarseSpace(build_mesh(2, 4), 1))
    basis = compute_basis(ctx, CorrectorConfig(ell=1))
    other = make_problem(2, 16, 16)
    with pytest.raises(ConfigError):
        solve_multiscale(basis, other)


def test_resolution_warning():
    prob = make_problem(2, 32, 16)
    ctx = CorrectorContext.build(prob, CoarseSpace(build_mesh(2, 4), 3))
    basis = compute_basis(ctx, CorrectorConfig(ell=1))
    with pytest.warns(ResolutionWarning):
        assert check_resolution(basis) == pytest.approx(9 / 8)
    ctx1 = CorrectorContext.build(prob, CoarseSpace(build_mesh(2, 4), 1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_resolution(compute_basis(ctx1, CorrectorConfig(ell=1)))


# ---------------------------------------------------------------- errors


def test_error_report_identical_is_zero(problem_32):
    ref = solve_reference(problem_32)
    err = error_report(ref, MultiscaleSolution(np.zeros(1), ref.u.copy()), problem_32)
    assert err == {"rel_energy_err": 0.0, "rel_l2_err": 0.0}


def test_error_report_matches_quadratic_forms(problem_32):
    ref = solve_reference(problem_32)
    other = ref.u + np.random.default_rng(0).standard_normal(ref.u.size) * 1e-3
    err = error_report(ref, MultiscaleSolution(np.zeros(1), other), problem_32)
    A, M = problem_32.stiffness.toarray(), problem_32.mass.toarray()
    d = ref.u - other
    assert err["rel_energy_err"] == pytest.approx(math.sqrt(d @ A @ d / (ref.u @ A @ ref.u)), rel=1e-12)
    assert err["rel_l2_err"] == pytest.approx(math.sqrt(d @ M @ d / (ref.u @ M @ ref.u)), rel=1e-12)
    assert err["rel_energy_err"] >= 0 and err["rel_l2_err"] >= 0


def test_error_report_zero_reference():
    prob = assemble_problem(FineSpace(build_mesh(2, 8)), rough_coefficient(2, 8), 0.0)
    ref = solve_reference(prob)
    with pytest.raises(ZeroDivisionError):
        error_report(ref, MultiscaleSolution(np.zeros(1), ref.u), prob)


def test_energy_error_decreases_with_p():
    prob = make_problem(2, 64, 32)
    ref = solve_reference(prob)
    errs = []
    for p in (1, 2, 3):
        ctx = CorrectorContext.build(prob, CoarseSpace(build_mesh(2, 4), p))
        ms = solve_multiscale(compute_ideal_basis(ctx), prob)
        errs.append(error_report(ref, ms, prob)["rel_energy_err"])
    assert errs[0] > errs[1] > errs[2], errs


def test_phi_values():
    assert phi(1, 0) == 1.0
    assert phi(1, 1) == pytest.approx(math.sqrt(1 / 6))
    assert phi(3, 2) == pytest.approx(math.sqrt(2 / 720))
    with pytest.raises(ValueError):
        phi(1, 3)

import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hplod.assembly import (
    Coefficient,
    assemble_coupling,
    assemble_load,
    assemble_mass,
    assemble_problem,
    assemble_stiffness,
    energy_norm,
    l2_norm,
    load_coefficient,
    patch_interior_dofs,
    q1_local_matrices,
    save_coefficient,
)
from hplod.errors import ConfigError, EmptyPatch, NonNestedMeshes, NonPositiveCoefficient
from hplod.harness.models import f1
from hplod.mesh import build_mesh, patch
from hplod.spaces import CoarseSpace, FineSpace, assemble_projection, gauss_rule


def _rough(dim, n_eps, seed=0, lo=0.25, hi=2.5):
    m = build_mesh(dim, n_eps)
    return Coefficient(m, np.random.default_rng(seed).uniform(lo, hi, m.num_elements))


# ---------------------------------------------------------------- coefficient


def test_coefficient_bounds_and_validation():
    c = _rough(2, 4)
    assert 0.25 <= c.alpha <= c.beta <= 2.5
    with pytest.raises(NonPositiveCoefficient):
        Coefficient(build_mesh(2, 2), np.array([1.0, 0.0, 1.0, 1.0]))
    with pytest.raises(NonPositiveCoefficient):
        Coefficient(build_mesh(1, 2), np.array([1.0, np.inf]))
    with pytest.raises(ConfigError):
        Coefficient(build_mesh(2, 2), np.ones(3))


def test_coefficient_is_read_only():
    c = _rough(2, 4)
    with pytest.raises(ValueError):
        c.values[0] = 5.0


@pytest.mark.parametrize("dim", [1, 2])
def test_coefficient_csv_round_trip(tmp_path, dim):
    c = _rough(dim, 8, seed=3)
    path = tmp_path / "a.csv"
    save_coefficient(c, path)
    back = load_coefficient(path)
    assert back.eps_mesh == c.eps_mesh
    np.testing.assert_array_equal(back.values, c.values)
    assert back.fingerprint() == c.fingerprint()
    buf = io.StringIO()
    save_coefficient(c, buf)
    assert buf.getvalue() == path.read_text()


def test_coefficient_csv_layout():
    buf = io.StringIO()
    save_coefficient(Coefficient(build_mesh(2, 2), np.array([1.0, 2.0, 3.0, 4.0])), buf)
    assert buf.getvalue() == "dim,n_eps\n2,2\n1.0,2.0\n3.0,4.0\n"


def test_coefficient_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("d,n\n2,2\n1,1\n1,1\n")
    with pytest.raises(ConfigError):
        load_coefficient(path)


def test_coefficient_on_finer_mesh_and_rejects_coarser():
    c = Coefficient(build_mesh(1, 2), np.array([1.0, 3.0]))
    np.testing.assert_array_equal(c.on_mesh(build_mesh(1, 4)), [1, 1, 3, 3])
    with pytest.raises(NonNestedMeshes):
        c.on_mesh(build_mesh(1, 1))


# ---------------------------------------------------------------- stiffness


def test_1d_unit_stiffness_is_tridiagonal():
    fine = FineSpace(build_mesh(1, 4))
    A = assemble_stiffness(fine, Coefficient.constant(1)).toarray()
    h = 0.25
    expect = (np.diag(2 * np.ones(3)) - np.diag(np.ones(2), 1) - np.diag(np.ones(2), -1)) / h
    np.testing.assert_allclose(A, expect, rtol=1e-15)


def _reference_q1_stiffness_by_quadrature():
    x, w = gauss_rule(3)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    # corners (0,0), (1,0), (0,1), (1,1)
    grads = [
        (-(1 - Y), -(1 - X)),
        ((1 - Y), -X),
        (-Y, (1 - X)),
        (Y, X),
    ]
    K = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            K[a, b] = np.sum(W * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]))
    return K


def test_2d_reference_stiffness():
    k, m = q1_local_matrices(2, 1.0)
    np.testing.assert_allclose(k, _reference_q1_stiffness_by_quadrature(), atol=1e-15)
    np.testing.assert_allclose(np.diag(k), 2 / 3, rtol=1e-15)
    np.testing.assert_allclose(k.sum(axis=1), 0, atol=1e-15)
    assert abs(m.sum() - 1.0) < 1e-15


def test_stiffness_scales_linearly():
    fine = FineSpace(build_mesh(2, 16))
    c = _rough(2, 8)
    A1 = assemble_stiffness(fine, c)
    A2 = assemble_stiffness(fine, c.scaled(2.0))
    assert abs(A2 - 2 * A1).max() == 0.0


def test_stiffness_symmetric_and_interior_row_sums_vanish():
    fine = FineSpace(build_mesh(2, 16))
    A = assemble_stiffness(fine, _rough(2, 16, seed=1))
    assert abs(A - A.T).max() < 1e-14
    # rows whose neighbours are all interior DOFs
    x = fine.dof_coords
    h = fine.mesh.size
    far = np.all((x > 1.5 * h) & (x < 1 - 1.5 * h), axis=1)
    rows = np.asarray(A.sum(axis=1)).ravel()
    assert np.abs(rows[far]).max() < 1e-12


def test_stiffness_rejects_unresolved_coefficient():
    with pytest.raises(NonNestedMeshes):
        assemble_stiffness(FineSpace(build_mesh(2, 4)), _rough(2, 8))
    with pytest.raises(NonNestedMeshes):
        assemble_stiffness(FineSpace(build_mesh(2, 4)), _rough(1, 2))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_energy_bounded_by_alpha_beta(seed):
    fine = FineSpace(build_mesh(2, 16))
    c = _rough(2, 8, seed=seed % 1000)
    A = assemble_stiffness(fine, c)
    L = assemble_stiffness(fine, Coefficient.constant(2))
    v = np.random.default_rng(seed).standard_normal(fine.num_dofs)
    e, g = v @ (A @ v), v @ (L @ v)
    assert c.alpha * g * (1 - 1e-12) <= e <= c.beta * g * (1 + 1e-12)


def test_mass_matches_product_rule():
    fine = FineSpace(build_mesh(1, 4))
    M = assemble_mass(fine).toarray()
    h = 0.25
    expect = (np.diag(4 * np.ones(3)) + np.diag(np.ones(2), 1) + np.diag(np.ones(2), -1)) * h / 6
    np.testing.assert_allclose(M, expect, rtol=1e-15)


# ---------------------------------------------------------------- load


def test_load_of_zero_is_zero():
    fine = FineSpace(build_mesh(2, 8))
    assert not assemble_load(fine, 0.0).any()
    assert not assemble_load(fine, lambda x: np.zeros(x.shape[0])).any()


def test_load_of_one_in_1d_is_h():
    fine = FineSpace(build_mesh(1, 8))
    np.testing.assert_allclose(assemble_load(fine, 1.0), 1 / 8, rtol=1e-14)


def test_load_f1_against_refined_quadrature():
    fine = FineSpace(build_mesh(2, 64))
    b = assemble_load(fine, f1, order=4)
    ref = assemble_load(fine, f1, order=7)
    assert np.abs(b - ref).max() <= 1e-10


# ---------------------------------------------------------------- coupling


def test_coupling_whole_domain_reproduces_global_B():
    fine = FineSpace(build_mesh(2, 16))
    coarse = CoarseSpace(build_mesh(2, 4), 2)
    P = assemble_projection(fine, coarse)
    B, dofs = assemble_coupling(fine, coarse, np.arange(16), P)
    np.testing.assert_array_equal(dofs, np.arange(fine.num_dofs))
    assert abs(B - P.B).max() == 0.0


def test_coupling_lowest_rows_sum_to_hat_integrals():
    fine = FineSpace(build_mesh(2, 16))
    coarse = CoarseSpace(build_mesh(2, 4), 1)
    K = 5
    elems = patch(coarse.mesh, K, 1)
    B, dofs = assemble_coupling(fine, coarse, elems)
    lo, hi = coarse.mesh.element_box(K)
    h = fine.mesh.size
    # integral over K of each hat: h^2 / 4 per fine cell of K in its support
    x = fine.dof_coords[dofs]
    ncells = np.ones(len(dofs))
    for ax in range(2):
        inside = (x[:, ax] > lo[ax] + 1e-12) & (x[:, ax] < hi[ax] - 1e-12)
        edge = np.isclose(x[:, ax], lo[ax]) | np.isclose(x[:, ax], hi[ax])
        ncells *= np.where(inside, 2, np.where(edge, 1, 0))
    row = int(np.searchsorted(elems, K)) * coarse.n_local
    assert abs(B[row].sum() - np.sum(ncells * h * h / 4)) < 1e-14


@pytest.mark.parametrize("ratio", [4, 8])
@pytest.mark.parametrize("K", [0, 5])
def test_coupling_single_element_full_rank(ratio, K):
    n = 4
    fine = FineSpace(build_mesh(2, n * ratio))
    coarse = CoarseSpace(build_mesh(2, n), 1)
    B, _ = assemble_coupling(fine, coarse, [K])
    assert np.linalg.matrix_rank(B.toarray()) == coarse.n_local


def test_coupling_single_element_at_half_ratio_is_underdetermined():
    # one interior fine vertex cannot meet four moment constraints
    fine = FineSpace(build_mesh(2, 8))
    coarse = CoarseSpace(build_mesh(2, 4), 1)
    B, dofs = assemble_coupling(fine, coarse, [5])
    assert dofs.size == 1 and B.shape == (4, 1)


def test_patch_interior_dofs_and_empty_patch():
    fine = FineSpace(build_mesh(2, 16))
    coarse = CoarseSpace(build_mesh(2, 4), 1)
    assert patch_interior_dofs(fine, coarse, [5]).size == 9
    assert patch_interior_dofs(fine, coarse, [0]).size == 9
    assert patch_interior_dofs(fine, coarse, np.arange(16)).size == fine.num_dofs
    with pytest.raises(EmptyPatch):
        patch_interior_dofs(fine, coarse, [])


# ---------------------------------------------------------------- norms


def test_norms_of_zero():
    fine = FineSpace(build_mesh(2, 8))
    A = assemble_stiffness(fine, Coefficient.constant(2))
    assert energy_norm(A, np.zeros(fine.num_dofs)) == 0.0
    assert l2_norm(assemble_mass(fine), np.zeros(fine.num_dofs)) == 0.0


def test_energy_of_product_sine_interpolant():
    exact = np.sqrt(np.pi**2 / 2)
    errs = []
    for n in (16, 32, 64):
        fine = FineSpace(build_mesh(2, n))
        A = assemble_stiffness(fine, Coefficient.constant(2))
        x = fine.interpolate(lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]))
        errs.append(abs(energy_norm(A, x) - exact))
    assert errs[0] < 1.0 / 16
    assert errs[2] < errs[1] < errs[0]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_norms_triangle_inequality(seed):
    fine = FineSpace(build_mesh(2, 8))
    A = assemble_stiffness(fine, _rough(2, 8, seed=1))
    M = assemble_mass(fine)
    x, y = np.random.default_rng(seed).standard_normal((2, fine.num_dofs))
    for norm, mat in ((energy_norm, A), (l2_norm, M)):
        assert norm(mat, x + y) <= (norm(mat, x) + norm(mat, y)) * (1 + 1e-12)


def test_assemble_problem_bundles_operators():
    fine = FineSpace(build_mesh(2, 8))
    prob = assemble_problem(fine, _rough(2, 8), f1, load_order=5)
    assert prob.load_order == 5
    assert isinstance(prob.stiffness, sp.csr_matrix)
    assert abs(prob.laplacian - assemble_stiffness(fine, Coefficient.constant(2))).max() == 0

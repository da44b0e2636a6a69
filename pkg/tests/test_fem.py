import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from smallbiot.fem import (MaterialField, SolverError, UNIFORM, assemble, make_materials,
                           solve_saddle, solve_spd)
from smallbiot.geometry import interval, named_shape
from smallbiot.mesh import generate
from smallbiot.oracle import dense_solve_oracle


def test_interval_p1_stiffness_pattern():
    ops = assemble(generate(interval(1.0), 0.5), UNIFORM, 1)
    K = ops.K_kappa.toarray()
    order = np.argsort(ops.space.dof_coords[:, 0])
    K = K[np.ix_(order, order)]
    assert np.allclose(K, 2 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))
    assert np.allclose(K @ np.ones(3), 0)


def test_two_region_interval_hand_assembly():
    m = generate(interval(1.0), 0.5).with_regions(lambda c: (c[:, 0] > 0.5).astype(int))
    mats = MaterialField({0: 1.0, 1: 1.0}, {0: 1.0, 1: 5.0}, default=None)
    ops = assemble(m, mats, 1)
    order = np.argsort(ops.space.dof_coords[:, 0])
    K = ops.K_kappa.toarray()[np.ix_(order, order)]
    assert np.allclose(K, [[2, -2, 0], [-2, 12, -10], [0, -10, 10]])


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("name", ["square", "sart1", "finned", "interval"])
def test_operator_invariants(name, order):
    shape = named_shape(name)
    m = generate(shape, 0.5 if name == "finned" else 0.2)
    ops = assemble(m, UNIFORM, order)
    one = np.ones(ops.space.n_dofs)
    K = ops.K_kappa
    assert abs(K - K.T).max() < 1e-12 * abs(K).max()
    assert np.abs(K @ one).max() <= 1e-10 * abs(K).max()
    assert one @ (ops.M_sigma @ one) == pytest.approx(m.volume(), rel=1e-10)
    assert ops.b_boundary.sum() == pytest.approx(m.boundary_measure(), rel=1e-10)
    assert ops.b_sigma.sum() == pytest.approx(m.volume(), rel=1e-10)


def test_square_perimeter_load():
    ops = assemble(generate(named_shape("square"), 0.25))
    assert ops.b_boundary.sum() == pytest.approx(4.0, rel=1e-12)


def test_mass_matrix_positive_definite():
    ops = assemble(generate(named_shape("sart1"), 0.2), UNIFORM, 2)
    assert np.linalg.eigvalsh(ops.M_sigma.toarray()).min() > 0


def _interior(ops):
    bd = np.unique(ops.space.facet_dofs)
    mask = np.ones(ops.space.n_dofs, bool)
    mask[bd] = False
    return mask


def test_p1_reproduces_linear_field():
    ops = assemble(generate(named_shape("equilateral"), 0.15), UNIFORM, 1)
    u = ops.space.interpolate(lambda p: p[:, 0])
    r = ops.K_kappa @ u
    assert np.abs(r[_interior(ops)]).max() < 1e-10


def test_p2_reproduces_quadratic_field():
    # -lap(x^2 + y^2) = -4, so interior rows of K u equal -4 * int v
    ops = assemble(generate(named_shape("square"), 0.2), UNIFORM, 2)
    u = ops.space.interpolate(lambda p: p[:, 0] ** 2 + p[:, 1] ** 2)
    r = ops.K_kappa @ u + 4 * ops.b_sigma
    assert np.abs(r[_interior(ops)]).max() < 1e-10


def test_assembly_linear_in_kappa():
    m = generate(named_shape("square"), 0.25).with_regions(lambda c: (c[:, 1] > 0.4).astype(int))
    k1 = MaterialField({0: 1.0, 1: 1.0}, {0: 1.0, 1: 2.0}, default=None)
    k2 = MaterialField({0: 1.0, 1: 1.0}, {0: 3.0, 1: 0.5}, default=None)
    k12 = MaterialField({0: 1.0, 1: 1.0}, {0: 4.0, 1: 2.5}, default=None)
    A = assemble(m, k1).K_kappa + assemble(m, k2).K_kappa
    assert abs(A - assemble(m, k12).K_kappa).max() < 1e-13 * abs(A).max()


def test_missing_region_rejected():
    m = generate(named_shape("square"), 0.5).with_regions(lambda c: (c[:, 0] > 0.5).astype(int))
    with pytest.raises(KeyError, match="region 1"):
        assemble(m, MaterialField({0: 1.0}, {0: 1.0}, default=None))


def test_make_materials_normalisation():
    mats = make_materials({0: 1e6, 1: 3e6}, {0: 2.0, 1: 8.0}, {0: 0.5, 1: 0.5})
    assert mats.sigma == {0: 0.5, 1: 1.5}
    assert mats.kappa == {0: 1.0, 1: 4.0}
    with pytest.raises(ValueError):
        make_materials({0: 1.0}, {0: 1.0}, {0: 0.5, 1: 0.5})


def test_solve_spd_identity():
    b = np.arange(5.0)
    sol = solve_spd(sp.identity(5, format="csc"), b)
    assert np.array_equal(sol.x, b)
    assert sol.residual == 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_solve_spd_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((50, 50))
    A = R @ R.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = solve_spd(sp.csc_matrix(A), b).x
    ref = dense_solve_oracle(A, b)
    assert np.abs(x - ref).max() <= 1e-10 * np.abs(ref).max()


def test_saddle_zero_mean_and_oracle():
    ops = assemble(generate(named_shape("isoceles-right"), 0.3), UNIFORM, 1)
    n = ops.space.n_dofs
    assert n < 400
    rng = np.random.default_rng(1)
    rhs = rng.standard_normal(n)
    rhs -= rhs.mean()  # any rhs works; the multiplier absorbs the mean
    sol = solve_saddle(ops.K_kappa, ops.b_sigma, rhs, 0.0)
    assert abs(ops.b_sigma @ sol.x) <= 1e-12 * np.abs(ops.b_sigma).sum() * np.abs(sol.x).max()
    big = np.block([[ops.K_kappa.toarray(), ops.b_sigma[:, None]], [ops.b_sigma[None, :], np.zeros((1, 1))]])
    ref = dense_solve_oracle(big, np.append(rhs, 0.0))
    assert np.abs(sol.x - ref[:n]).max() <= 1e-9 * np.abs(ref[:n]).max()
    assert sol.multiplier == pytest.approx(ref[n], rel=1e-8, abs=1e-12)


def test_saddle_nonzero_constraint_rhs():
    A = sp.csc_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    sol = solve_saddle(A, np.array([1.0, 1.0]), np.array([1.0, -1.0]), 4.0)
    assert sol.x.sum() == pytest.approx(4.0)
    assert sol.x[0] - sol.x[1] == pytest.approx(1.0)


def test_singular_system_reports_failure():
    ops = assemble(generate(named_shape("square"), 0.5), UNIFORM, 1)
    rhs = np.ones(ops.space.n_dofs)  # incompatible with the constant kernel
    with pytest.raises(SolverError) as exc:
        solve_spd(ops.K_kappa, rhs)
    assert "residual" in str(exc.value)

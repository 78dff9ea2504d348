import math

import numpy as np
import pytest

from cvbell.fock import (
    ModeId,
    StateVector,
    TruncationError,
    basis_state,
    build_space,
    count_rate_identity_deviation,
    count_rate_operator,
    expectation,
    guarded_indices,
    mode_operator,
    paired_squeezed_vector,
    quadrature_product_expectation,
    two_mode_squeezed_vector,
)

SINH_SQ_05 = 0.2715403174076219  # sinh(0.5)^2
SINH_1 = 1.1752011936438014
COSH_1 = 1.5430806348152437


@pytest.mark.parametrize(
    "modes,trunc,dim",
    [
        ([ModeId.A_H], 3, 4),
        ([ModeId.A_H, ModeId.B_H], 2, 9),
        ([ModeId.A_H, ModeId.A_V, ModeId.B_H, ModeId.B_V], 4, 625),
    ],
)
def test_build_space_dimension(modes, trunc, dim):
    assert build_space(modes, trunc).dimension == dim


def test_build_space_rejects_bad_input():
    with pytest.raises(ValueError):
        build_space([ModeId.A_H], 1)
    with pytest.raises(ValueError):
        build_space([ModeId.A_H], 17)
    with pytest.raises(ValueError):
        build_space([ModeId.A_H, ModeId.A_H], 4)
    with pytest.raises(ValueError):
        build_space([], 4)


def test_annihilation_matrix_elements():
    space = build_space([ModeId.A_H], 2)
    a = mode_operator(space, ModeId.A_H, "annihilate").matrix
    expected = np.zeros((3, 3), dtype=complex)
    expected[0, 1] = 1.0
    expected[1, 2] = math.sqrt(2)
    assert np.array_equal(a, expected)


def test_vacuum_x1_squared_is_one():
    # independent oracle: the hand-written 3-level X1 matrix
    space = build_space([ModeId.A_H], 2)
    x1_hand = np.array(
        [[0, 1, 0], [1, 0, math.sqrt(2)], [0, math.sqrt(2), 0]], dtype=complex
    )
    assert (x1_hand @ x1_hand)[0, 0] == pytest.approx(1.0, abs=1e-15)
    x1 = mode_operator(space, ModeId.A_H, "x1").matrix
    assert np.allclose(x1, x1_hand, atol=1e-15)
    vac = basis_state(space)
    number_op = mode_operator(space, ModeId.A_H, "number")
    assert number_op.is_hermitian
    assert expectation(vac, number_op) == 0
    sq = quadrature_product_expectation(vac, [[(ModeId.A_H, 0.0, 1.0)]] * 2)
    assert sq.real == pytest.approx(1.0, abs=1e-12)


def test_number_eigenvalue():
    space = build_space([ModeId.A_H], 4)
    st = basis_state(space, {ModeId.A_H: 2})
    n = mode_operator(space, ModeId.A_H, "number")
    assert expectation(st, n).real == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize(
    "n_signal,n_vacuum,expected",
    [(1, 0, 1.0), (0, 0, 0.0), (0, 1, -1.0)],
)
def test_count_rate_expectation(n_signal, n_vacuum, expected):
    space = build_space([ModeId.A_H, ModeId.V_A], 6)
    r = count_rate_operator(space, ModeId.A_H, ModeId.V_A)
    assert r.is_hermitian
    st = basis_state(space, {ModeId.A_H: n_signal, ModeId.V_A: n_vacuum})
    assert expectation(st, r).real == pytest.approx(expected, abs=1e-12)


def test_count_rate_rejects_same_mode():
    space = build_space([ModeId.A_H, ModeId.V_A], 4)
    with pytest.raises(ValueError):
        count_rate_operator(space, ModeId.A_H, ModeId.A_H)


@pytest.mark.parametrize("trunc", range(3, 11))
def test_count_rate_identity_guarded(trunc):
    space = build_space([ModeId.A_H, ModeId.V_A], trunc)
    dev = count_rate_identity_deviation(space, ModeId.A_H, ModeId.V_A)
    assert dev < 1e-12


def test_count_rate_identity_unguarded_truncation_artifact():
    space = build_space([ModeId.A_H, ModeId.V_A], 3)
    dev = count_rate_identity_deviation(space, ModeId.A_H, ModeId.V_A, guard=False)
    assert dev > 0.1


def test_count_rate_identity_minimum_truncation():
    # at N=2 the guarded subspace is vacuum only
    space = build_space([ModeId.A_H, ModeId.V_A], 2)
    assert len(guarded_indices(space)) == 1
    dev = count_rate_identity_deviation(space, ModeId.A_H, ModeId.V_A)
    assert dev < 1e-12


def test_count_rate_identity_fault_hook():
    space = build_space([ModeId.A_H, ModeId.V_A], 6)
    dev = count_rate_identity_deviation(
        space, ModeId.A_H, ModeId.V_A, count_rate_scale=4.0
    )
    assert dev > 1.0


@pytest.mark.parametrize("trunc", [4, 8])
def test_ladder_commutator_guarded(trunc):
    space = build_space([ModeId.A_H, ModeId.V_A], trunc)
    guard = guarded_indices(space)
    for mode in space.modes:
        a = mode_operator(space, mode, "annihilate").matrix
        comm = a @ a.conj().T - a.conj().T @ a
        dev = np.abs(comm - np.eye(space.dimension))[np.ix_(guard, guard)].max()
        assert dev < 1e-12


@pytest.mark.parametrize("trunc", [4, 8])
def test_quadrature_square_sum_identity(trunc):
    # X1^2 + X2^2 = 4 n + 2 on the guarded subspace
    space = build_space([ModeId.A_H, ModeId.V_A], trunc)
    guard = guarded_indices(space)
    for mode in space.modes:
        x1 = mode_operator(space, mode, "x1").matrix
        x2 = mode_operator(space, mode, "x2").matrix
        n = mode_operator(space, mode, "number").matrix
        delta = x1 @ x1 + x2 @ x2 - 4 * n - 2 * np.eye(space.dimension)
        assert np.abs(delta)[np.ix_(guard, guard)].max() < 1e-12


def test_two_mode_squeezed_r0_is_vacuum():
    space = build_space([ModeId.A_H, ModeId.B_H], 4)
    st = two_mode_squeezed_vector(space, ModeId.A_H, ModeId.B_H, 0.0)
    assert np.array_equal(st.amplitudes, basis_state(space).amplitudes)


def test_two_mode_squeezed_mean_photon():
    space = build_space([ModeId.A_H, ModeId.B_H], 10)
    st = two_mode_squeezed_vector(space, ModeId.A_H, ModeId.B_H, 0.5)
    n_i = expectation(st, mode_operator(space, ModeId.A_H, "number")).real
    assert n_i == pytest.approx(SINH_SQ_05, abs=1e-5)
    n_j = expectation(st, mode_operator(space, ModeId.B_H, "number")).real
    assert n_i - n_j == pytest.approx(0.0, abs=1e-12)


def test_two_mode_squeezed_truncation_error():
    space = build_space([ModeId.A_H, ModeId.B_H], 4)
    with pytest.raises(TruncationError, match="raise the truncation"):
        two_mode_squeezed_vector(space, ModeId.A_H, ModeId.B_H, 1.0)


def test_two_mode_squeezed_quadrature_moments():
    # second moments must match the covariance engine's analytic values
    space = build_space([ModeId.A_H, ModeId.B_H], 12)
    st = two_mode_squeezed_vector(space, ModeId.A_H, ModeId.B_H, 0.5)
    fi = [(ModeId.A_H, 0.0, 1.0)]
    fj = [(ModeId.B_H, 0.0, 1.0)]
    cross = quadrature_product_expectation(st, [fi, fj]).real
    assert cross == pytest.approx(SINH_1, abs=1e-4)
    var = quadrature_product_expectation(st, [fi, fi]).real
    assert var == pytest.approx(COSH_1, abs=1e-4)
    fj2 = [(ModeId.B_H, math.pi / 2, 1.0)]
    fi2 = [(ModeId.A_H, math.pi / 2, 1.0)]
    anti = quadrature_product_expectation(st, [fi2, fj2]).real
    assert anti == pytest.approx(-SINH_1, abs=1e-4)


def test_paired_squeezed_vector_network_moments():
    modes = [ModeId.A_H, ModeId.A_V, ModeId.B_H, ModeId.B_V]
    space = build_space(modes, 6)
    st = paired_squeezed_vector(
        space, [(ModeId.A_H, ModeId.B_H), (ModeId.A_V, ModeId.B_V)], 0.3
    )
    n_ah = expectation(st, mode_operator(space, ModeId.A_H, "number")).real
    assert n_ah == pytest.approx(math.sinh(0.3) ** 2, abs=1e-5)
    paired = quadrature_product_expectation(
        st, [[(ModeId.A_H, 0.0, 1.0)], [(ModeId.B_H, 0.0, 1.0)]]
    ).real
    assert paired == pytest.approx(math.sinh(0.6), abs=1e-5)
    unpaired = quadrature_product_expectation(
        st, [[(ModeId.A_H, 0.0, 1.0)], [(ModeId.B_V, 0.0, 1.0)]]
    ).real
    assert unpaired == pytest.approx(0.0, abs=1e-12)


def test_quadrature_product_matches_dense_operators():
    # oracle: dense matrix products of embedded operators
    space = build_space([ModeId.A_H, ModeId.B_H], 5)
    st = two_mode_squeezed_vector(space, ModeId.A_H, ModeId.B_H, 0.3)
    phis = [0.0, math.pi / 2, 0.7]
    for phi_a in phis:
        for phi_b in phis:
            xa = math.cos(phi_a) * mode_operator(space, ModeId.A_H, "x1").matrix
            xa = xa + math.sin(phi_a) * mode_operator(space, ModeId.A_H, "x2").matrix
            xb = math.cos(phi_b) * mode_operator(space, ModeId.B_H, "x1").matrix
            xb = xb + math.sin(phi_b) * mode_operator(space, ModeId.B_H, "x2").matrix
            dense = np.vdot(st.amplitudes, xa @ xa @ xb @ xb @ st.amplitudes)
            fa = [(ModeId.A_H, phi_a, 1.0)]
            fb = [(ModeId.B_H, phi_b, 1.0)]
            tensor = quadrature_product_expectation(st, [fa, fa, fb, fb])
            assert tensor == pytest.approx(dense, abs=1e-12)
    # weighted combination factor against its dense expansion
    w = (0.6, -0.8)
    combo = [(ModeId.A_H, 0.0, w[0]), (ModeId.B_H, math.pi / 2, w[1])]
    dense_op = (
        w[0] * mode_operator(space, ModeId.A_H, "x1").matrix
        + w[1] * mode_operator(space, ModeId.B_H, "x2").matrix
    )
    dense = np.vdot(st.amplitudes, dense_op @ dense_op @ st.amplitudes)
    tensor = quadrature_product_expectation(st, [combo, combo])
    assert tensor == pytest.approx(dense, abs=1e-12)


def test_expectation_space_mismatch():
    space_a = build_space([ModeId.A_H], 4)
    space_b = build_space([ModeId.B_H], 4)
    st = basis_state(space_a)
    op = mode_operator(space_b, ModeId.B_H, "number")
    with pytest.raises(ValueError, match="different spaces"):
        expectation(st, op)


def test_expectation_hermitian_is_real():
    space = build_space([ModeId.A_H, ModeId.B_H], 8)
    st = two_mode_squeezed_vector(space, ModeId.A_H, ModeId.B_H, 0.4)
    for kind in ("number", "x1", "x2"):
        value = expectation(st, mode_operator(space, ModeId.A_H, kind))
        assert abs(value.imag) < 1e-12


def test_state_vector_norm_validation():
    space = build_space([ModeId.A_H], 2)
    with pytest.raises(ValueError, match="norm"):
        StateVector(space=space, amplitudes=np.array([0.5, 0.5, 0.0], dtype=complex))


def test_mode_operator_unknown_mode():
    space = build_space([ModeId.A_H], 4)
    with pytest.raises(ValueError, match="not in this space"):
        mode_operator(space, ModeId.B_H, "x1")


def test_dense_embedding_guard():
    space = build_space(list(ModeId), 4)  # 5^6 = 15625 > dense limit
    with pytest.raises(MemoryError, match="dense embedding"):
        mode_operator(space, ModeId.A_H, "x1")

"""Truncated multi-mode Fock-space operator algebra.

Dense matrix representations of ladder, number and quadrature operators
on a finite photon-number basis.  Quadratures follow the convention

    X1 = C^dag + C,        X2 = i (C^dag - C),

so the vacuum quadrature variance is 1.  The module serves two roles:
it verifies the count-rate operator identity exactly (the statement
that the vacuum-referenced quadrature-square combination equals a
photon-number difference), and it provides an independent
expectation-value oracle for the Gaussian covariance engine.

Truncation caveat: squaring a quadrature matrix involves C^dag C^dag,
which maps the top Fock levels out of the truncated space.  Identities
are therefore asserted on the guarded subspace of basis states whose
occupations stay at least two levels below the truncation.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModeId",
    "VACUUM_MODES",
    "MultiModeSpace",
    "FockOperator",
    "StateVector",
    "TruncationError",
    "build_space",
    "mode_operator",
    "count_rate_operator",
    "count_rate_identity_deviation",
    "guarded_indices",
    "basis_state",
    "two_mode_squeezed_vector",
    "paired_squeezed_vector",
    "expectation",
    "quadrature_product_expectation",
]

HERMITIAN_ATOL = 1e-12

# dense embedding of a D x D complex operator above this is refused
# (use quadrature_product_expectation, which never embeds)
_MAX_DENSE_DIM = 4096

_TAIL_LIMIT = 1e-6


class ModeId(enum.Enum):
    """Optical mode labels: two polarization modes per station plus the
    vacuum ports that enter the detectors when a beam is blocked."""

    A_H = "A_H"
    A_V = "A_V"
    B_H = "B_H"
    B_V = "B_V"
    V_A = "V_A"
    V_B = "V_B"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


#: modes whose physical role is a detector vacuum port
VACUUM_MODES = frozenset({ModeId.V_A, ModeId.V_B})


class TruncationError(RuntimeError):
    """Raised when a truncated representation cannot hold the requested
    state or distribution to the required accuracy."""


@dataclass(frozen=True)
class MultiModeSpace:
    """Tensor product of single-mode Fock spaces truncated at ``truncation``
    photons per mode.

    Mode order is fixed: the first mode is the slowest tensor index
    (row-major), matching ``np.kron`` applied left to right.
    """

    modes: tuple[ModeId, ...]
    truncation: int

    @property
    def mode_dim(self) -> int:
        return self.truncation + 1

    @property
    def dimension(self) -> int:
        return self.mode_dim ** len(self.modes)

    def axis(self, mode: ModeId) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise ValueError(f"mode {mode} is not in this space") from None

    def index_of(self, occupations: Mapping[ModeId, int]) -> int:
        """Basis index of |n_0, n_1, ...>; unlisted modes are vacuum."""
        idx = 0
        for mode in self.modes:
            n = occupations.get(mode, 0)
            if not 0 <= n <= self.truncation:
                raise ValueError(f"occupation {n} outside 0..{self.truncation}")
            idx = idx * self.mode_dim + n
        return idx

    def occupation_table(self) -> np.ndarray:
        """(dimension, n_modes) array of basis occupations, basis order."""
        idx = np.arange(self.dimension)
        occ = np.empty((self.dimension, len(self.modes)), dtype=np.int64)
        for k in reversed(range(len(self.modes))):
            idx, occ[:, k] = np.divmod(idx, self.mode_dim)
        return occ


def build_space(modes: Iterable[ModeId], truncation: int) -> MultiModeSpace:
    """Construct a multi-mode space, rejecting sizes that would not fit
    dense linear algebra (the truncation bound is the memory guard)."""
    modes = tuple(modes)
    if not 1 <= len(modes) <= 6:
        raise ValueError(f"need 1..6 modes, got {len(modes)}")
    if len(set(modes)) != len(modes):
        raise ValueError(f"duplicate mode labels in {modes}")
    if not 2 <= truncation <= 16:
        raise ValueError(f"truncation must be in 2..16, got {truncation}")
    return MultiModeSpace(modes=modes, truncation=truncation)


@dataclass(frozen=True)
class FockOperator:
    """Dense operator on a :class:`MultiModeSpace`.

    When ``is_hermitian`` is set the matrix is checked against its
    adjoint at construction time.
    """

    space: MultiModeSpace
    matrix: np.ndarray
    is_hermitian: bool = False

    def __post_init__(self) -> None:
        d = self.space.dimension
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({d}, {d})")
        if self.is_hermitian:
            dev = np.abs(self.matrix - self.matrix.conj().T).max()
            if dev >= HERMITIAN_ATOL:
                raise ValueError(f"operator flagged Hermitian deviates by {dev:.3e}")
        self.matrix.setflags(write=False)


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on a :class:`MultiModeSpace`."""

    space: MultiModeSpace
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if self.amplitudes.shape != (self.space.dimension,):
            raise ValueError(
                f"amplitude length {self.amplitudes.shape} != {self.space.dimension}"
            )
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) >= 1e-12:
            raise ValueError(f"state norm {norm!r} is not 1 within 1e-12")
        self.amplitudes.setflags(write=False)


def _ladder(dim: int) -> np.ndarray:
    """Single-mode annihilation matrix: a|n> = sqrt(n)|n-1>."""
    a = np.zeros((dim, dim), dtype=complex)
    ns = np.arange(1, dim)
    a[ns - 1, ns] = np.sqrt(ns)
    return a


def single_mode_matrix(dim: int, kind: str) -> np.ndarray:
    """One-mode operator matrix of the given kind on a ``dim``-level ladder."""
    a = _ladder(dim)
    if kind == "annihilate":
        return a
    if kind == "create":
        return a.conj().T
    if kind == "x1":
        return a.conj().T + a
    if kind == "x2":
        return 1j * (a.conj().T - a)
    if kind == "number":
        return a.conj().T @ a
    raise ValueError(f"unknown operator kind {kind!r}")


def quadrature_matrix(dim: int, phi: float) -> np.ndarray:
    """Rotated quadrature X_phi = X1 cos(phi) + X2 sin(phi), one mode."""
    return math.cos(phi) * single_mode_matrix(dim, "x1") + math.sin(
        phi
    ) * single_mode_matrix(dim, "x2")


def mode_operator(space: MultiModeSpace, mode: ModeId, kind: str) -> FockOperator:
    """Embed a single-mode operator into the full tensor space (identity on
    the other modes)."""
    if space.dimension > _MAX_DENSE_DIM:
        raise MemoryError(
            f"dense embedding refused at dimension {space.dimension}; "
            "use quadrature_product_expectation for large spaces"
        )
    axis = space.axis(mode)
    small = single_mode_matrix(space.mode_dim, kind)
    mat = np.eye(1, dtype=complex)
    for k in range(len(space.modes)):
        mat = np.kron(mat, small if k == axis else np.eye(space.mode_dim))
    hermitian = kind in ("x1", "x2", "number")
    return FockOperator(space=space, matrix=mat, is_hermitian=hermitian)


def count_rate_operator(
    space: MultiModeSpace, signal_mode: ModeId, vacuum_mode: ModeId
) -> FockOperator:
    """Vacuum-referenced count-rate operator

        R = (X_{s;1}^2 + X_{s;2}^2 - X_{v;1}^2 - X_{v;2}^2) / 4 .

    The 1/4 makes R equal to n_signal - n_vacuum exactly (away from the
    truncation boundary), since X1^2 + X2^2 = 4 n + 2 per mode.
    """
    if signal_mode == vacuum_mode:
        raise ValueError("signal and vacuum modes must differ")
    xs1 = mode_operator(space, signal_mode, "x1").matrix
    xs2 = mode_operator(space, signal_mode, "x2").matrix
    xv1 = mode_operator(space, vacuum_mode, "x1").matrix
    xv2 = mode_operator(space, vacuum_mode, "x2").matrix
    mat = (xs1 @ xs1 + xs2 @ xs2 - xv1 @ xv1 - xv2 @ xv2) / 4.0
    return FockOperator(space=space, matrix=mat, is_hermitian=True)


def guarded_indices(space: MultiModeSpace, margin: int = 2) -> np.ndarray:
    """Basis indices with every mode occupation <= truncation - margin.

    Squared ladder terms corrupt the top ``margin`` levels of each mode,
    so operator identities are only exact on this subspace.
    """
    occ = space.occupation_table()
    return np.nonzero((occ <= space.truncation - margin).all(axis=1))[0]


def count_rate_identity_deviation(
    space: MultiModeSpace,
    signal_mode: ModeId,
    vacuum_mode: ModeId,
    guard: bool = True,
    count_rate_scale: float = 1.0,
) -> float:
    """Max matrix-element deviation |R - (n_signal - n_vacuum)|.

    With ``guard`` the comparison is restricted to the guarded subspace,
    where the identity holds exactly; on the full truncated space the
    top levels are corrupted and a nonzero deviation is expected.
    ``count_rate_scale`` rescales R before comparison; it exists as a
    fault-injection hook for self-tests (e.g. 4.0 drops the 1/4).
    """
    r = count_rate_operator(space, signal_mode, vacuum_mode).matrix * count_rate_scale
    n_diff = (
        mode_operator(space, signal_mode, "number").matrix
        - mode_operator(space, vacuum_mode, "number").matrix
    )
    delta = np.abs(r - n_diff)
    if guard:
        idx = guarded_indices(space)
        delta = delta[np.ix_(idx, idx)]
    return float(delta.max())


def basis_state(
    space: MultiModeSpace, occupations: Mapping[ModeId, int] | None = None
) -> StateVector:
    """Fock basis state |n_0, ..., n_m>; unlisted modes are vacuum."""
    amps = np.zeros(space.dimension, dtype=complex)
    amps[space.index_of(occupations or {})] = 1.0
    return StateVector(space=space, amplitudes=amps)


def paired_squeezed_vector(
    space: MultiModeSpace, pairs: Sequence[tuple[ModeId, ModeId]], r: float
) -> StateVector:
    """State with each mode pair in a two-mode squeezed vacuum of strength
    ``r``; all remaining modes in vacuum.

    Amplitudes per pair are tanh(r)^n / cosh(r) on |n, n>.  Raises
    :class:`TruncationError` when the truncated tail mass is >= 1e-6,
    in which case raise the truncation or lower ``r``.
    """
    if r < 0:
        raise ValueError(f"squeezing must be >= 0, got {r}")
    flat = [m for pair in pairs for m in pair]
    if len(set(flat)) != len(flat):
        raise ValueError("pair modes must be distinct")
    for m in flat:
        space.axis(m)

    n_levels = space.mode_dim
    coeff = np.tanh(r) ** np.arange(n_levels) / np.cosh(r)
    pair_mass = float(coeff @ coeff)  # = 1 - tanh(r)^(2(N+1))
    tail = 1.0 - pair_mass ** len(pairs)
    if tail >= _TAIL_LIMIT:
        raise TruncationError(
            f"truncated tail mass {tail:.3e} >= {_TAIL_LIMIT}; "
            f"raise the truncation above {space.truncation} or lower r={r}"
        )

    amps = np.zeros(space.dimension, dtype=complex)
    for ns in np.ndindex(*([n_levels] * len(pairs))):
        occ = {m: n for (mi, mj), n in zip(pairs, ns) for m in (mi, mj)}
        amps[space.index_of(occ)] = np.prod(coeff[list(ns)])
    amps /= np.linalg.norm(amps)
    return StateVector(space=space, amplitudes=amps)


def two_mode_squeezed_vector(
    space: MultiModeSpace, mode_i: ModeId, mode_j: ModeId, r: float
) -> StateVector:
    """Two-mode squeezed vacuum on (mode_i, mode_j), truncated and
    renormalized; remaining modes in vacuum."""
    return paired_squeezed_vector(space, [(mode_i, mode_j)], r)


def expectation(state: StateVector, op: FockOperator) -> complex:
    """<psi| M |psi>.  Real within 1e-12 for operators flagged Hermitian."""
    if state.space != op.space:
        raise ValueError("state and operator live on different spaces")
    value = complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    if op.is_hermitian and abs(value.imag) >= 1e-12:
        raise AssertionError(
            f"Hermitian expectation has imaginary part {value.imag:.3e}"
        )
    return value


def _apply_single_mode(
    space: MultiModeSpace, tensor: np.ndarray, axis: int, mat: np.ndarray
) -> np.ndarray:
    out = np.tensordot(mat, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def quadrature_product_expectation(
    state: StateVector,
    factors: Sequence[Sequence[tuple[ModeId, float, float]]],
) -> complex:
    """<psi| F_1 F_2 ... F_k |psi> for k <= 4 factors, each factor a real
    linear combination sum_j w_j X_{m_j, phi_j} of single-mode quadratures.

    Factors are applied right to left by tensor contraction, so no
    operator is ever embedded densely; this is the large-space path for
    cross-checking Gaussian moments against the Fock representation.
    """
    if not 1 <= len(factors) <= 4:
        raise ValueError(f"need 1..4 factors, got {len(factors)}")
    space = state.space
    d = space.mode_dim
    shape = (d,) * len(space.modes)
    psi = state.amplitudes.reshape(shape)
    for factor in reversed(factors):
        if not factor:
            raise ValueError("empty factor")
        acc = np.zeros_like(psi)
        for mode, phi, weight in factor:
            acc += weight * _apply_single_mode(
                space, psi, space.axis(mode), quadrature_matrix(d, phi)
            )
        psi = acc
    return complex(np.vdot(state.amplitudes, psi.reshape(-1)))

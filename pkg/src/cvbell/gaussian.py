"""Exact Gaussian-state engine on quadrature phase space.

States are (mean, covariance) pairs over the quadratures (x1, x2) of
each mode, ordered mode by mode.  The convention matches the Fock
module: x1 = a^dag + a, x2 = i(a^dag - a), so the vacuum covariance is
the identity and [x1, x2] = 2i.  Physicality is cov + i*Omega >= 0 with
Omega the direct sum of [[0, 1], [-1, 0]] blocks.

Provides symplectic state preparation (two-mode squeezing, polarization
rotation), exact joint sampling of commuting quadratures, an analytic
moment oracle (Isserlis pairings, zero-mean states), and photon-number
sampling of reduced single-mode states via their Fock-basis diagonal.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .fock import ModeId, TruncationError, _ladder

__all__ = [
    "GaussianState",
    "QuadratureRequest",
    "vacuum_state",
    "two_mode_squeeze",
    "polarization_rotation",
    "quadrature_marginal",
    "joint_quadrature_sample",
    "analytic_moment",
    "reduced_covariance",
    "photon_number_pmf",
    "photon_number_sample",
]

_SYMMETRY_ATOL = 1e-12
_PHYSICALITY_ATOL = 1e-10
_PMF_TAIL = 1e-9
_PMF_MAX_LEVELS = 512


def symplectic_form(n_modes: int) -> np.ndarray:
    """Direct sum of [[0, 1], [-1, 0]] blocks, (x1, x2) ordering."""
    omega = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        omega[2 * k, 2 * k + 1] = 1.0
        omega[2 * k + 1, 2 * k] = -1.0
    return omega


@dataclass(frozen=True)
class GaussianState:
    """Zero- or displaced-mean Gaussian state over ``modes``.

    ``mean`` has length 2M, ``cov`` is 2M x 2M, entries ordered
    (x1, x2) per mode in mode order.  Instances are immutable; all
    transforms return new states.
    """

    modes: tuple[ModeId, ...]
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        m = len(self.modes)
        if self.mean.shape != (2 * m,) or self.cov.shape != (2 * m, 2 * m):
            raise ValueError("mean/cov shapes do not match the mode list")
        asym = np.abs(self.cov - self.cov.T).max()
        if asym >= _SYMMETRY_ATOL:
            raise ValueError(f"covariance asymmetric by {asym:.3e}")
        min_eig = float(
            np.linalg.eigvalsh(self.cov + 1j * symplectic_form(m)).min()
        )
        if min_eig < -_PHYSICALITY_ATOL:
            raise ValueError(
                f"unphysical covariance: min eig(cov + i*Omega) = {min_eig:.3e}"
            )
        self.mean.setflags(write=False)
        self.cov.setflags(write=False)

    def axis(self, mode: ModeId) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise ValueError(f"mode {mode} is not in this state") from None

    def quad_index(self, mode: ModeId, quad: int) -> int:
        """Flat index of x1 (quad=1) or x2 (quad=2) of ``mode``."""
        if quad not in (1, 2):
            raise ValueError(f"quad must be 1 or 2, got {quad}")
        return 2 * self.axis(mode) + (quad - 1)


@dataclass(frozen=True)
class QuadratureRequest:
    """Request to measure X_phi = x1 cos(phi) + x2 sin(phi) of one mode."""

    mode: ModeId
    phi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))


def vacuum_state(modes: Iterable[ModeId]) -> GaussianState:
    """All-mode vacuum: zero mean, identity covariance."""
    modes = tuple(modes)
    if not modes:
        raise ValueError("need at least one mode")
    if len(set(modes)) != len(modes):
        raise ValueError(f"duplicate mode labels in {modes}")
    m = len(modes)
    return GaussianState(modes=modes, mean=np.zeros(2 * m), cov=np.eye(2 * m))


def _apply_symplectic(state: GaussianState, s: np.ndarray) -> GaussianState:
    omega = symplectic_form(len(state.modes))
    dev = np.abs(s.T @ omega @ s - omega).max()
    if dev >= _SYMMETRY_ATOL:
        raise AssertionError(f"transform is not symplectic (deviation {dev:.3e})")
    cov = s @ state.cov @ s.T
    cov = (cov + cov.T) / 2.0
    return GaussianState(modes=state.modes, mean=s @ state.mean, cov=cov)


def two_mode_squeeze(
    state: GaussianState, mode_i: ModeId, mode_j: ModeId, r: float
) -> GaussianState:
    """Two-mode squeezing on (mode_i, mode_j): from vacuum it produces
    <x1_i^2> = cosh(2r), <x1_i x1_j> = sinh(2r), <x2_i x2_j> = -sinh(2r)
    (x-x correlated, p-p anticorrelated)."""
    if mode_i == mode_j:
        raise ValueError("two-mode squeezing needs distinct modes")
    if r < 0:
        raise ValueError(f"squeezing must be >= 0, got {r}")
    i = state.axis(mode_i)
    j = state.axis(mode_j)
    s = np.eye(2 * len(state.modes))
    ch, sh = math.cosh(r), math.sinh(r)
    for a, b in ((2 * i, 2 * j), (2 * j, 2 * i)):  # x1 rows
        s[a, a] = ch
        s[a, b] = sh
    for a, b in ((2 * i + 1, 2 * j + 1), (2 * j + 1, 2 * i + 1)):  # x2 rows
        s[a, a] = ch
        s[a, b] = -sh
    return _apply_symplectic(state, s)


def polarization_rotation(
    state: GaussianState, mode_h: ModeId, mode_v: ModeId, theta: float
) -> GaussianState:
    """Passive rotation of the (H, V) mode pair by ``theta``.

    After the transform, ``mode_h`` carries the analyzer output aligned
    with theta (cos(theta) a_H + sin(theta) a_V) and ``mode_v`` the
    perpendicular output (-sin(theta) a_H + cos(theta) a_V).
    """
    if mode_h == mode_v:
        raise ValueError("rotation needs distinct modes")
    h = state.axis(mode_h)
    v = state.axis(mode_v)
    s = np.eye(2 * len(state.modes))
    c, sn = math.cos(theta), math.sin(theta)
    for q in (0, 1):  # same rotation on the x1 and the x2 plane
        s[2 * h + q, 2 * h + q] = c
        s[2 * h + q, 2 * v + q] = sn
        s[2 * v + q, 2 * h + q] = -sn
        s[2 * v + q, 2 * v + q] = c
    return _apply_symplectic(state, s)


def _projection(state: GaussianState, requests: Sequence[QuadratureRequest]) -> np.ndarray:
    p = np.zeros((len(requests), 2 * len(state.modes)))
    for row, req in enumerate(requests):
        p[row, state.quad_index(req.mode, 1)] = math.cos(req.phi)
        p[row, state.quad_index(req.mode, 2)] = math.sin(req.phi)
    return p


def quadrature_marginal(
    state: GaussianState, requests: Sequence[QuadratureRequest]
) -> tuple[np.ndarray, np.ndarray]:
    """Exact joint Gaussian marginal (mean, cov) of the requested
    quadratures.  At most one request per mode: different quadrature
    components of a single mode do not commute and cannot be measured
    simultaneously."""
    if not requests:
        raise ValueError("need at least one request")
    req_modes = [r.mode for r in requests]
    if len(set(req_modes)) != len(req_modes):
        raise ValueError(
            "duplicate mode in requests: different quadrature components of "
            "one mode do not commute and cannot be measured simultaneously"
        )
    p = _projection(state, requests)
    return p @ state.mean, p @ state.cov @ p.T


def joint_quadrature_sample(
    state: GaussianState,
    requests: Sequence[QuadratureRequest],
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw outcomes of simultaneously measured (commuting) quadratures.

    Returns shape (len(requests),), or (size, len(requests)) when
    ``size`` is given.
    """
    mean, cov = quadrature_marginal(state, requests)
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((size or 1, len(requests)))
    samples = mean + z @ chol.T
    return samples if size is not None else samples[0]


def analytic_moment(
    state: GaussianState, factors: Sequence[QuadratureRequest]
) -> float:
    """Exact expectation of a product of up to four quadrature factors on
    a zero-mean state, by Isserlis pairings of the covariance.

    Valid as an operator expectation whenever the factors commute
    pairwise (distinct modes, or repetitions of one quadrature), which
    covers everything measured in the protocol.
    """
    if not 1 <= len(factors) <= 4:
        raise ValueError(f"need 1..4 factors, got {len(factors)}")
    if np.abs(state.mean).max() > 1e-12:
        raise ValueError("analytic_moment requires a zero-mean state")
    p = _projection(state, factors)
    c = p @ state.cov @ p.T
    k = len(factors)
    if k % 2 == 1:
        return 0.0
    if k == 2:
        return float(c[0, 1])
    return float(c[0, 1] * c[2, 3] + c[0, 2] * c[1, 3] + c[0, 3] * c[1, 2])


def reduced_covariance(state: GaussianState, mode: ModeId) -> np.ndarray:
    """2x2 covariance block of one mode."""
    k = 2 * state.axis(mode)
    return np.array(state.cov[k : k + 2, k : k + 2])


def photon_number_pmf(
    state: GaussianState, mode: ModeId, tail: float = _PMF_TAIL
) -> np.ndarray:
    """Photon-number distribution of the reduced single-mode state,
    computed from its Fock-basis diagonal.

    Requires a zero-mean reduced state (the only kind the protocol
    produces: vacuum and thermal marginals, plus squeezed thermal for
    completeness).  The cutoff is grown until the retained mass exceeds
    1 - tail.
    """
    k = 2 * state.axis(mode)
    if np.abs(state.mean[k : k + 2]).max() > 1e-12:
        raise ValueError("photon-number sampling requires a zero-mean mode")
    c = reduced_covariance(state, mode)
    lam = np.linalg.eigvalsh((c + c.T) / 2.0)
    lam = np.clip(lam, 1e-12, None)
    # symplectic eigenvalue >= 1 for physical states; clamp numerical dips
    nu = max(1.0, math.sqrt(lam[0] * lam[1]))
    squeeze = 0.25 * math.log(lam[1] / lam[0])
    nbar = (nu - 1.0) / 2.0
    q = nbar / (1.0 + nbar)

    n_levels = 16
    while True:
        if squeeze > 1e-12:
            # the exponential is evaluated in a 2x padded space and sliced,
            # since truncating it corrupts the top levels it couples into
            work = 2 * n_levels
            weights = (1.0 - q) * q ** np.arange(work) if q > 0 else np.zeros(work)
            if q == 0:
                weights[0] = 1.0
            a = _ladder(work)
            s_op = expm(0.5 * squeeze * (a @ a - a.conj().T @ a.conj().T))
            pmf = np.einsum("nk,k,nk->n", s_op, weights, s_op.conj()).real[:n_levels]
        else:
            pmf = (1.0 - q) * q ** np.arange(n_levels) if q > 0 else np.zeros(n_levels)
            if q == 0:
                pmf[0] = 1.0
        pmf = np.clip(pmf, 0.0, None)
        mass = float(pmf.sum())
        if 1.0 - mass < tail:
            return pmf
        if n_levels >= _PMF_MAX_LEVELS:
            raise TruncationError(
                f"photon-number pmf tail {1.0 - mass:.3e} >= {tail} at "
                f"{n_levels} levels; state too energetic"
            )
        n_levels *= 2


def photon_number_sample(
    state: GaussianState,
    mode: ModeId,
    rng: np.random.Generator,
    size: int | None = None,
) -> int | np.ndarray:
    """Sample photon counts of one reduced mode by inverse CDF over its
    Fock-basis diagonal.  A vacuum mode yields 0, always."""
    pmf = photon_number_pmf(state, mode)
    cdf = np.cumsum(pmf)
    u = rng.random(size if size is not None else 1)
    counts = np.searchsorted(cdf, u, side="right")
    return counts if size is not None else int(counts[0])

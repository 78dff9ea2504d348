"""Positive-Wigner local-hidden-variable model.

The hidden variable is a phase-space point: one (x1, x2) pair per mode,
drawn from the Gaussian that doubles as the state's Wigner function.
Every measurement response is a deterministic, local function of that
point.  Quadrature responses therefore reproduce the quantum statistics
exactly; the model parts company with quantum mechanics on intensity:
the pointwise intensity of a vacuum mode averages 1/2 instead of 0, and
individual count rates can be negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import ModeId
from .gaussian import GaussianState

__all__ = [
    "PhaseSpacePoint",
    "sample_phase_space",
    "sample_phase_space_batch",
    "response_quadrature",
    "cnumber_count_rate",
    "cnumber_intensity",
    "rotated_station_point",
]


@dataclass(frozen=True)
class PhaseSpacePoint:
    """One hidden variable: c-number quadrature values (x1, x2) per mode,
    stored flat in mode order.  The per-mode complex amplitude is
    alpha = (x1 + i x2) / 2, the unique convention under which the
    c-number quadratures mirror x1 = a^dag + a, x2 = i(a^dag - a)."""

    modes: tuple[ModeId, ...]
    coords: np.ndarray

    def __post_init__(self) -> None:
        if self.coords.shape != (2 * len(self.modes),):
            raise ValueError("coordinate length does not match the mode list")
        if not np.isfinite(self.coords).all():
            raise ValueError("phase-space coordinates must be finite")
        self.coords.setflags(write=False)

    def axis(self, mode: ModeId) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise ValueError(f"mode {mode} is not in this point") from None

    def x1(self, mode: ModeId) -> float:
        return float(self.coords[2 * self.axis(mode)])

    def x2(self, mode: ModeId) -> float:
        return float(self.coords[2 * self.axis(mode) + 1])

    def alpha(self, mode: ModeId) -> complex:
        return complex(self.x1(mode), self.x2(mode)) / 2.0


def _cov_factor(state: GaussianState) -> np.ndarray:
    return np.linalg.cholesky(state.cov)


def sample_phase_space(
    state: GaussianState, rng: np.random.Generator
) -> PhaseSpacePoint:
    """Draw one hidden variable from the state's (positive) Wigner
    distribution, i.e. the multivariate normal with the state's mean and
    covariance.  Covers every mode, vacuum ports included."""
    coords = state.mean + _cov_factor(state) @ rng.standard_normal(
        2 * len(state.modes)
    )
    return PhaseSpacePoint(modes=state.modes, coords=coords)


def sample_phase_space_batch(
    state: GaussianState, rng: np.random.Generator, n: int
) -> np.ndarray:
    """(n, 2M) array of hidden-variable draws; row i matches the coords of
    one :class:`PhaseSpacePoint`."""
    z = rng.standard_normal((n, 2 * len(state.modes)))
    return state.mean + z @ _cov_factor(state).T


def response_quadrature(point: PhaseSpacePoint, mode: ModeId, phi: float) -> float:
    """Deterministic local response to a quadrature measurement:
    x1 cos(phi) + x2 sin(phi) of the requested mode only."""
    return point.x1(mode) * math.cos(phi) + point.x2(mode) * math.sin(phi)


def cnumber_count_rate(
    point: PhaseSpacePoint, signal_mode: ModeId, vacuum_mode: ModeId
) -> float:
    """C-number count rate of a (post-rotation) station output against its
    vacuum port.

    The quadrature-square form (x1_s^2 + x2_s^2 - x1_v^2 - x2_v^2)/4 and
    the intensity-difference form |alpha_s|^2 - |alpha_v|^2 are the same
    number; both are evaluated and cross-checked.  The value may be
    negative: pointwise positivity is exactly what this model cannot
    guarantee.
    """
    quad_form = (
        point.x1(signal_mode) ** 2
        + point.x2(signal_mode) ** 2
        - point.x1(vacuum_mode) ** 2
        - point.x2(vacuum_mode) ** 2
    ) / 4.0
    amp_form = abs(point.alpha(signal_mode)) ** 2 - abs(point.alpha(vacuum_mode)) ** 2
    if abs(quad_form - amp_form) >= 1e-12:
        raise AssertionError(
            f"count-rate forms disagree by {abs(quad_form - amp_form):.3e}"
        )
    return amp_form


def cnumber_intensity(point: PhaseSpacePoint, mode: ModeId) -> float:
    """Pointwise intensity |alpha|^2 = (x1^2 + x2^2)/4.  Nonnegative, but
    on vacuum-mode coordinates its mean is 1/2, not 0: this is where the
    model fails the vacuum-intensity test."""
    return abs(point.alpha(mode)) ** 2


def rotated_station_point(
    point: PhaseSpacePoint, mode_h: ModeId, mode_v: ModeId, theta: float
) -> PhaseSpacePoint:
    """C-number mirror of the analyzer rotation: returns a point where
    ``mode_h`` carries the output aligned with theta and ``mode_v`` the
    perpendicular output.  Local: only the two listed modes change."""
    h = point.axis(mode_h)
    v = point.axis(mode_v)
    c, sn = math.cos(theta), math.sin(theta)
    coords = np.array(point.coords)
    for q in (0, 1):
        xh, xv = coords[2 * h + q], coords[2 * v + q]
        coords[2 * h + q] = c * xh + sn * xv
        coords[2 * v + q] = -sn * xh + c * xv
    return PhaseSpacePoint(modes=point.modes, coords=coords)

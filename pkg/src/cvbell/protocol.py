"""Two-station measurement protocol.

Prepares the entangled six-mode state (two parallel two-mode squeezers
pairing H with H and V with V, plus two untouched detector vacuum
ports), draws a randomized per-trial measurement schedule for the two
stations, and executes the trials under either the quantum measurement
model or the positive-Wigner hidden-variable model.

Per trial each station performs exactly one measurement: a signal
quadrature behind its analyzer (angle theta, parallel or perpendicular
output, quadrature 1 or 2), a vacuum-port quadrature used to calibrate
the vacuum reference terms of the count-rate estimator, or the
auxiliary intensity measurement (beam blocked, photon counting on the
vacuum port).

Randomness is counter-based: four Philox streams are keyed by
(seed, stream id) and consumed one row per trial, so any trial's inputs
are a pure function of (seed, trial id) and serial and parallel runs
produce byte-identical records.
"""

from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .fock import ModeId
from .gaussian import (
    GaussianState,
    QuadratureRequest,
    photon_number_pmf,
    polarization_rotation,
    quadrature_marginal,
    two_mode_squeeze,
    vacuum_state,
)

__all__ = [
    "Station",
    "OutputPort",
    "SettingKind",
    "Model",
    "ConfigError",
    "RecordsError",
    "ExperimentConfig",
    "MeasurementSetting",
    "Schedule",
    "TrialRecord",
    "LhvIndividuals",
    "RecordSet",
    "MODE_ORDER",
    "prepare_state",
    "build_schedule",
    "blocked_station_state",
    "run_experiment",
    "encode_setting",
    "decode_setting",
    "config_to_dict",
    "config_from_dict",
    "save_records",
    "load_records",
]

MODE_ORDER = (
    ModeId.A_H,
    ModeId.A_V,
    ModeId.B_H,
    ModeId.B_V,
    ModeId.V_A,
    ModeId.V_B,
)

#: Philox stream ids; key = (seed, stream), one row consumed per trial
_STREAM_SCHEDULE = 1
_STREAM_QUANTUM_NORMALS = 2
_STREAM_QUANTUM_AUX = 3
_STREAM_LHV = 4

_STREAM_SCHEME = (
    "philox-4x64 key=(seed, stream); streams 1=schedule 2=quantum-normals "
    "3=quantum-aux 4=lhv; row i of each stream belongs to trial i"
)


class Station(enum.Enum):
    A = "A"
    B = "B"


class OutputPort(enum.Enum):
    PARALLEL = "par"
    PERPENDICULAR = "perp"


class SettingKind(enum.Enum):
    QUADRATURE = "quad"
    VACUUM_QUADRATURE = "vacquad"
    AUX_INTENSITY = "aux"


class Model(enum.Enum):
    QUANTUM = "quantum"
    LHV = "lhv"
    BOTH = "both"


SIGNAL_MODES = {
    Station.A: (ModeId.A_H, ModeId.A_V),
    Station.B: (ModeId.B_H, ModeId.B_V),
}
VACUUM_MODE = {Station.A: ModeId.V_A, Station.B: ModeId.V_B}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


class RecordsError(ValueError):
    """Record files that fail schema validation or are incompatible."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, reproducible description of one experiment run."""

    squeezing: float = 0.5
    theta_a: tuple[float, ...] = (0.0, math.pi / 4)
    theta_b: tuple[float, ...] = (math.pi / 8, 3 * math.pi / 8)
    n_trials: int = 1_000_000
    p_aux: float = 0.1
    seed: int = 1
    model: Model = Model.BOTH
    truncation: int = 12

    def __post_init__(self) -> None:
        for name in ("squeezing", "p_aux"):
            try:
                object.__setattr__(self, name, float(getattr(self, name)))
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be a number, got {getattr(self, name)!r}")
        for name in ("n_trials", "seed", "truncation"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        try:
            object.__setattr__(self, "theta_a", tuple(float(t) for t in self.theta_a))
            object.__setattr__(self, "theta_b", tuple(float(t) for t in self.theta_b))
        except (TypeError, ValueError):
            raise ConfigError("theta_a/theta_b must be lists of angles in radians")
        if self.squeezing < 0:
            raise ConfigError(f"squeezing must be >= 0, got {self.squeezing}")
        if not self.theta_a:
            raise ConfigError("theta_a must list at least one analyzer angle")
        if not self.theta_b:
            raise ConfigError("theta_b must list at least one analyzer angle")
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be a positive integer, got {self.n_trials}")
        if not 0.0 <= self.p_aux < 1.0:
            raise ConfigError(f"p_aux must be in [0, 1), got {self.p_aux}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not isinstance(self.model, Model):
            raise ConfigError(f"model must be a Model value, got {self.model!r}")
        if not 2 <= self.truncation <= 16:
            raise ConfigError(f"truncation must be in 2..16, got {self.truncation}")


@dataclass(frozen=True)
class MeasurementSetting:
    """One scheduled measurement at one station."""

    station: Station
    kind: SettingKind
    theta: float | None = None
    output: OutputPort | None = None
    quad: int | None = None

    def __post_init__(self) -> None:
        if self.kind is SettingKind.QUADRATURE:
            if self.theta is None or self.output is None or self.quad not in (1, 2):
                raise ValueError("quadrature settings need theta, output and quad")
        elif self.kind is SettingKind.VACUUM_QUADRATURE:
            if self.theta is not None or self.output is not None or self.quad not in (1, 2):
                raise ValueError("vacuum-quadrature settings carry only quad")
        else:
            if (self.theta, self.output, self.quad) != (None, None, None):
                raise ValueError("aux-intensity settings carry no parameters")

    @property
    def phi(self) -> float:
        """Homodyne phase: quadrature 1 measures phi=0, quadrature 2 phi=pi/2."""
        if self.quad is None:
            raise ValueError("no quadrature phase for an intensity setting")
        return 0.0 if self.quad == 1 else math.pi / 2


def encode_setting(setting: MeasurementSetting) -> str:
    """`station:variant:theta:output:quad` with empty fields where absent."""
    theta = "" if setting.theta is None else format(setting.theta, ".17g")
    output = "" if setting.output is None else setting.output.value
    quad = "" if setting.quad is None else str(setting.quad)
    return f"{setting.station.value}:{setting.kind.value}:{theta}:{output}:{quad}"


def decode_setting(text: str) -> MeasurementSetting:
    parts = text.split(":")
    if len(parts) != 5:
        raise RecordsError(f"malformed setting {text!r}")
    station, kind, theta, output, quad = parts
    try:
        return MeasurementSetting(
            station=Station(station),
            kind=SettingKind(kind),
            theta=float(theta) if theta else None,
            output=OutputPort(output) if output else None,
            quad=int(quad) if quad else None,
        )
    except ValueError as exc:
        raise RecordsError(f"malformed setting {text!r}: {exc}") from exc


def _station_settings(station: Station, angles: tuple[float, ...]) -> tuple[MeasurementSetting, ...]:
    """Fixed per-station setting table; the schedule stores indexes into it.

    Order: all analyzer quadrature settings (theta-major, then output,
    then quad), the two vacuum-port calibration quadratures, and the
    auxiliary intensity measurement last.
    """
    quad_settings = [
        MeasurementSetting(station, SettingKind.QUADRATURE, theta=t, output=o, quad=q)
        for t in angles
        for o in (OutputPort.PARALLEL, OutputPort.PERPENDICULAR)
        for q in (1, 2)
    ]
    vac_settings = [
        MeasurementSetting(station, SettingKind.VACUUM_QUADRATURE, quad=q) for q in (1, 2)
    ]
    aux = MeasurementSetting(station, SettingKind.AUX_INTENSITY)
    return tuple(quad_settings + vac_settings + [aux])


@dataclass(frozen=True)
class Schedule:
    """Columnar per-trial settings: integer codes into the two station
    tables.  Behaves as a sequence of (setting_A, setting_B) pairs."""

    settings_a: tuple[MeasurementSetting, ...]
    settings_b: tuple[MeasurementSetting, ...]
    codes_a: np.ndarray
    codes_b: np.ndarray

    def __post_init__(self) -> None:
        if self.codes_a.shape != self.codes_b.shape or self.codes_a.ndim != 1:
            raise ValueError("code arrays must be equal-length vectors")
        self.codes_a.setflags(write=False)
        self.codes_b.setflags(write=False)

    def __len__(self) -> int:
        return len(self.codes_a)

    def __getitem__(self, i: int) -> tuple[MeasurementSetting, MeasurementSetting]:
        return (
            self.settings_a[self.codes_a[i]],
            self.settings_b[self.codes_b[i]],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def tables(self, station: Station) -> tuple[MeasurementSetting, ...]:
        return self.settings_a if station is Station.A else self.settings_b

    def codes(self, station: Station) -> np.ndarray:
        return self.codes_a if station is Station.A else self.codes_b


def _stream(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_codes(
    u_aux: np.ndarray, u_choice: np.ndarray, n_nonaux: int, p_aux: float
) -> np.ndarray:
    choice = np.minimum((u_choice * n_nonaux).astype(np.int64), n_nonaux - 1)
    return np.where(u_aux < p_aux, n_nonaux, choice).astype(np.uint16)


def build_schedule(config: ExperimentConfig) -> Schedule:
    """Randomized per-trial settings, independent between stations.

    Each station independently measures the auxiliary intensity with
    probability p_aux, and otherwise draws uniformly from its analyzer
    quadrature grid plus the two vacuum-port calibration quadratures.
    The schedule is a pure function of (seed, trial id).
    """
    settings_a = _station_settings(Station.A, config.theta_a)
    settings_b = _station_settings(Station.B, config.theta_b)
    u = _stream(config.seed, _STREAM_SCHEDULE).random((config.n_trials, 4))
    codes_a = _draw_codes(u[:, 0], u[:, 1], len(settings_a) - 1, config.p_aux)
    codes_b = _draw_codes(u[:, 2], u[:, 3], len(settings_b) - 1, config.p_aux)
    return Schedule(
        settings_a=settings_a,
        settings_b=settings_b,
        codes_a=codes_a,
        codes_b=codes_b,
    )


def prepare_state(config: ExperimentConfig) -> GaussianState:
    """Six-mode source state: H modes pair-squeezed across stations, V
    modes pair-squeezed across stations, vacuum ports untouched.  At low
    squeezing the two-photon component carries polarization correlations
    ~ cos 2(theta_A - theta_B)."""
    state = vacuum_state(MODE_ORDER)
    state = two_mode_squeeze(state, ModeId.A_H, ModeId.B_H, config.squeezing)
    state = two_mode_squeeze(state, ModeId.A_V, ModeId.B_V, config.squeezing)
    return state


def blocked_station_state(state: GaussianState, station: Station) -> GaussianState:
    """State with one station's signal beams blocked: its signal modes are
    replaced by fresh vacuum and all their correlations are severed."""
    idx = []
    for mode in SIGNAL_MODES[station]:
        k = 2 * state.axis(mode)
        idx.extend((k, k + 1))
    cov = np.array(state.cov)
    mean = np.array(state.mean)
    cov[idx, :] = 0.0
    cov[:, idx] = 0.0
    cov[np.ix_(idx, idx)] = np.eye(len(idx))
    mean[idx] = 0.0
    return GaussianState(modes=state.modes, mean=mean, cov=cov)


@dataclass(frozen=True)
class LhvIndividuals:
    """Hidden-variable quantities of one trial: the c-number count rates
    behind each station's measured analyzer output (NaN when the station
    did not run an analyzer quadrature that trial) and the pointwise
    vacuum-port intensities."""

    r_a: float
    r_b: float
    intensity_va: float
    intensity_vb: float


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    setting_a: MeasurementSetting
    setting_b: MeasurementSetting
    outcome_a: float
    outcome_b: float
    model: Model
    lhv_individuals: LhvIndividuals | None = None


@dataclass(frozen=True)
class RecordSet:
    """Columnar store of all trials of one run under one model.

    Iterating or indexing materializes :class:`TrialRecord` views;
    analysis code works on the arrays directly.
    """

    config: ExperimentConfig
    model: Model
    schedule: Schedule
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    provenance: dict
    lhv_r_a: np.ndarray | None = None
    lhv_r_b: np.ndarray | None = None
    lhv_intensity_va: np.ndarray | None = None
    lhv_intensity_vb: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.schedule)
        if self.model is Model.BOTH:
            raise ValueError("a RecordSet holds exactly one model's records")
        for name in ("outcome_a", "outcome_b"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            arr.setflags(write=False)
        lhv_arrays = (
            self.lhv_r_a,
            self.lhv_r_b,
            self.lhv_intensity_va,
            self.lhv_intensity_vb,
        )
        if self.model is Model.LHV:
            if any(a is None for a in lhv_arrays):
                raise ValueError("hidden-variable records need all individual columns")
            for arr in lhv_arrays:
                if arr.shape != (n,):
                    raise ValueError("individual columns must match the trial count")
                arr.setflags(write=False)
        elif any(a is not None for a in lhv_arrays):
            raise ValueError("individual columns only exist for the lhv model")

    def __len__(self) -> int:
        return len(self.schedule)

    def record(self, i: int) -> TrialRecord:
        i = int(i)
        if not 0 <= i < len(self):
            raise IndexError(i)
        individuals = None
        if self.model is Model.LHV:
            individuals = LhvIndividuals(
                r_a=float(self.lhv_r_a[i]),
                r_b=float(self.lhv_r_b[i]),
                intensity_va=float(self.lhv_intensity_va[i]),
                intensity_vb=float(self.lhv_intensity_vb[i]),
            )
        sa, sb = self.schedule[i]
        return TrialRecord(
            trial_id=i,
            setting_a=sa,
            setting_b=sb,
            outcome_a=float(self.outcome_a[i]),
            outcome_b=float(self.outcome_b[i]),
            model=self.model,
            lhv_individuals=individuals,
        )

    def __getitem__(self, i: int) -> TrialRecord:
        return self.record(i)

    def __iter__(self):
        for i in range(len(self)):
            yield self.record(i)

    def outcomes(self, station: Station) -> np.ndarray:
        return self.outcome_a if station is Station.A else self.outcome_b

    def mask(
        self,
        station: Station,
        kind: SettingKind | None = None,
        theta: float | None = None,
        output: OutputPort | None = None,
        quad: int | None = None,
    ) -> np.ndarray:
        """Boolean mask of trials whose setting at ``station`` matches all
        given criteria."""
        table = self.schedule.tables(station)
        codes = self.schedule.codes(station)
        ok = np.ones(len(table), dtype=bool)
        for i, s in enumerate(table):
            if kind is not None and s.kind is not kind:
                ok[i] = False
            elif theta is not None and (
                s.theta is None or abs(s.theta - theta) > 1e-12
            ):
                ok[i] = False
            elif output is not None and s.output is not output:
                ok[i] = False
            elif quad is not None and s.quad != quad:
                ok[i] = False
        return ok[codes]


def _env_workers() -> int:
    raw = os.environ.get("CVBELL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _for_each(tasks, workers: int) -> None:
    if workers <= 1:
        for task in tasks:
            task()
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda task: task(), tasks))


def _group_indices(codes_a: np.ndarray, codes_b: np.ndarray, n_codes_b: int):
    """Trial index arrays grouped by the joint (code_a, code_b) value."""
    pair = codes_a.astype(np.int64) * n_codes_b + codes_b.astype(np.int64)
    order = np.argsort(pair, kind="stable")
    cuts = np.nonzero(np.diff(pair[order]))[0] + 1
    yield from np.split(order, cuts)


def _quantum_request(setting: MeasurementSetting) -> QuadratureRequest | None:
    """Map a setting to the quadrature it measures on the rotated state
    (None for the auxiliary intensity measurement)."""
    if setting.kind is SettingKind.AUX_INTENSITY:
        return None
    if setting.kind is SettingKind.VACUUM_QUADRATURE:
        return QuadratureRequest(VACUUM_MODE[setting.station], setting.phi)
    h_mode, v_mode = SIGNAL_MODES[setting.station]
    mode = h_mode if setting.output is OutputPort.PARALLEL else v_mode
    return QuadratureRequest(mode, setting.phi)


def _run_quantum(
    config: ExperimentConfig,
    schedule: Schedule,
    state: GaussianState,
    workers: int,
) -> RecordSet:
    n = config.n_trials
    normals = _stream(config.seed, _STREAM_QUANTUM_NORMALS).standard_normal((n, 2))
    aux_u = _stream(config.seed, _STREAM_QUANTUM_AUX).random((n, 2))
    outcome_a = np.empty(n)
    outcome_b = np.empty(n)

    # photon-count inverse CDF of each station's vacuum port, beam blocked
    aux_cdf = {
        st: np.cumsum(
            photon_number_pmf(blocked_station_state(state, st), VACUUM_MODE[st])
        )
        for st in Station
    }

    # rotated source states, one per distinct analyzer-angle combination
    rotation_cache: dict[tuple[float | None, float | None], GaussianState] = {}

    def rotated(theta_a: float | None, theta_b: float | None) -> GaussianState:
        key = (theta_a, theta_b)
        if key not in rotation_cache:
            st = state
            if theta_a is not None:
                st = polarization_rotation(st, ModeId.A_H, ModeId.A_V, theta_a)
            if theta_b is not None:
                st = polarization_rotation(st, ModeId.B_H, ModeId.B_V, theta_b)
            rotation_cache[key] = st
        return rotation_cache[key]

    tasks = []
    for idx in _group_indices(
        schedule.codes_a, schedule.codes_b, len(schedule.settings_b)
    ):
        sa = schedule.settings_a[schedule.codes_a[idx[0]]]
        sb = schedule.settings_b[schedule.codes_b[idx[0]]]
        rot = rotated(
            sa.theta if sa.kind is SettingKind.QUADRATURE else None,
            sb.theta if sb.kind is SettingKind.QUADRATURE else None,
        )
        req_a = _quantum_request(sa)
        req_b = _quantum_request(sb)

        if req_a is not None and req_b is not None:
            mean, cov = quadrature_marginal(rot, [req_a, req_b])
            chol = np.linalg.cholesky(cov)

            def task(idx=idx, mean=mean, chol=chol):
                z = normals[idx]
                outcome_a[idx] = mean[0] + chol[0, 0] * z[:, 0]
                outcome_b[idx] = mean[1] + chol[1, 0] * z[:, 0] + chol[1, 1] * z[:, 1]

        else:
            parts = []
            for station, req, col, out in (
                (Station.A, req_a, 0, outcome_a),
                (Station.B, req_b, 1, outcome_b),
            ):
                if req is not None:
                    mean, cov = quadrature_marginal(rot, [req])
                    parts.append(("quad", out, col, float(mean[0]), math.sqrt(cov[0, 0])))
                else:
                    parts.append(("aux", out, col, aux_cdf[station], None))

            def task(idx=idx, parts=parts):
                for kind, out, col, p1, p2 in parts:
                    if kind == "quad":
                        out[idx] = p1 + p2 * normals[idx, col]
                    else:
                        out[idx] = np.searchsorted(p1, aux_u[idx, col], side="right")

        tasks.append(task)

    _for_each(tasks, workers)
    return RecordSet(
        config=config,
        model=Model.QUANTUM,
        schedule=schedule,
        outcome_a=outcome_a,
        outcome_b=outcome_b,
        provenance={"master_seed": config.seed, "stream_scheme": _STREAM_SCHEME},
    )


def _run_lhv(
    config: ExperimentConfig,
    schedule: Schedule,
    state: GaussianState,
    workers: int,
) -> RecordSet:
    n = config.n_trials
    z = _stream(config.seed, _STREAM_LHV).standard_normal((n, 2 * len(state.modes)))
    coords = state.mean + z @ np.linalg.cholesky(state.cov).T
    del z

    def col(mode: ModeId, quad: int) -> int:
        return state.quad_index(mode, quad)

    intensity = {
        st: (
            coords[:, col(VACUUM_MODE[st], 1)] ** 2
            + coords[:, col(VACUUM_MODE[st], 2)] ** 2
        )
        / 4.0
        for st in Station
    }

    outcome = {st: np.empty(n) for st in Station}
    count_rate = {st: np.full(n, np.nan) for st in Station}

    # responses at a station depend only on that station's setting and on
    # that station's share of the hidden variable (plus its vacuum port)
    tasks = []
    for station in Station:
        codes = schedule.codes(station)
        table = schedule.tables(station)
        h_mode, v_mode = SIGNAL_MODES[station]
        vac = VACUUM_MODE[station]
        for code, setting in enumerate(table):

            def task(
                station=station,
                setting=setting,
                idx=np.nonzero(codes == code)[0],
                h_mode=h_mode,
                v_mode=v_mode,
                vac=vac,
            ):
                if idx.size == 0:
                    return
                if setting.kind is SettingKind.AUX_INTENSITY:
                    outcome[station][idx] = intensity[station][idx]
                    return
                if setting.kind is SettingKind.VACUUM_QUADRATURE:
                    outcome[station][idx] = coords[idx, col(vac, setting.quad)]
                    return
                c, sn = math.cos(setting.theta), math.sin(setting.theta)
                w_h, w_v = (c, sn) if setting.output is OutputPort.PARALLEL else (-sn, c)
                x1 = w_h * coords[idx, col(h_mode, 1)] + w_v * coords[idx, col(v_mode, 1)]
                x2 = w_h * coords[idx, col(h_mode, 2)] + w_v * coords[idx, col(v_mode, 2)]
                outcome[station][idx] = x1 if setting.quad == 1 else x2
                count_rate[station][idx] = (x1**2 + x2**2) / 4.0 - intensity[station][idx]

            tasks.append(task)

    _for_each(tasks, workers)
    return RecordSet(
        config=config,
        model=Model.LHV,
        schedule=schedule,
        outcome_a=outcome[Station.A],
        outcome_b=outcome[Station.B],
        provenance={"master_seed": config.seed, "stream_scheme": _STREAM_SCHEME},
        lhv_r_a=count_rate[Station.A],
        lhv_r_b=count_rate[Station.B],
        lhv_intensity_va=intensity[Station.A],
        lhv_intensity_vb=intensity[Station.B],
    )


def run_experiment(
    config: ExperimentConfig, workers: int | None = None
) -> dict[Model, RecordSet]:
    """Execute the full protocol and return one RecordSet per requested
    model.  ``workers`` caps setting-group parallelism; it defaults to
    the CVBELL_THREADS environment variable and never changes results.
    """
    if workers is None:
        workers = _env_workers()
    models = (
        [Model.QUANTUM, Model.LHV] if config.model is Model.BOTH else [config.model]
    )
    schedule = build_schedule(config)
    state = prepare_state(config)
    runners = {Model.QUANTUM: _run_quantum, Model.LHV: _run_lhv}
    return {m: runners[m](config, schedule, state, workers) for m in models}


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "squeezing": config.squeezing,
        "theta_a": list(config.theta_a),
        "theta_b": list(config.theta_b),
        "trials": config.n_trials,
        "p_aux": config.p_aux,
        "seed": config.seed,
        "model": config.model.value,
        "truncation": config.truncation,
    }


_CONFIG_KEYS = {
    "squeezing",
    "theta_a",
    "theta_b",
    "trials",
    "p_aux",
    "seed",
    "model",
    "truncation",
}


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a key-value mapping, rejecting unknown keys."""
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    if "squeezing" in data:
        kwargs["squeezing"] = data["squeezing"]
    if "theta_a" in data:
        kwargs["theta_a"] = tuple(data["theta_a"])
    if "theta_b" in data:
        kwargs["theta_b"] = tuple(data["theta_b"])
    if "trials" in data:
        kwargs["n_trials"] = data["trials"]
    if "p_aux" in data:
        kwargs["p_aux"] = data["p_aux"]
    if "seed" in data:
        kwargs["seed"] = data["seed"]
    if "model" in data:
        try:
            kwargs["model"] = Model(data["model"])
        except ValueError:
            raise ConfigError(f"model must be one of quantum/lhv/both, got {data['model']!r}")
    if "truncation" in data:
        kwargs["truncation"] = data["truncation"]
    return ExperimentConfig(**kwargs)


_CSV_COLUMNS = ["trial_id", "model", "setting_a", "setting_b", "outcome_a", "outcome_b"]
_LHV_COLUMNS = ["lhv_r_a", "lhv_r_b", "lhv_intensity_va", "lhv_intensity_vb"]


def save_records(records: RecordSet, csv_path: str | Path) -> tuple[Path, Path]:
    """Write the records CSV and its JSON sidecar (config snapshot plus
    RNG provenance).  Floats carry 17 significant digits and round-trip
    exactly."""
    csv_path = Path(csv_path)
    strings_a = np.array(
        [encode_setting(s) for s in records.schedule.settings_a], dtype=object
    )
    strings_b = np.array(
        [encode_setting(s) for s in records.schedule.settings_b], dtype=object
    )
    frame = pd.DataFrame(
        {
            "trial_id": np.arange(len(records), dtype=np.int64),
            "model": records.model.value,
            "setting_a": strings_a[records.schedule.codes_a],
            "setting_b": strings_b[records.schedule.codes_b],
            "outcome_a": records.outcome_a,
            "outcome_b": records.outcome_b,
        }
    )
    if records.model is Model.LHV:
        frame["lhv_r_a"] = records.lhv_r_a
        frame["lhv_r_b"] = records.lhv_r_b
        frame["lhv_intensity_va"] = records.lhv_intensity_va
        frame["lhv_intensity_vb"] = records.lhv_intensity_vb
    frame.to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")

    sidecar = csv_path.with_suffix(".json")
    payload = {
        "config": config_to_dict(records.config),
        "model": records.model.value,
        "n_trials": len(records),
        "provenance": records.provenance,
    }
    sidecar.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return csv_path, sidecar


def _rebuild_schedule(
    config: ExperimentConfig, frame: pd.DataFrame
) -> Schedule:
    settings_a = _station_settings(Station.A, config.theta_a)
    settings_b = _station_settings(Station.B, config.theta_b)
    codes = {}
    for name, settings in (("setting_a", settings_a), ("setting_b", settings_b)):
        lookup = {encode_setting(s): i for i, s in enumerate(settings)}
        mapped = frame[name].map(lookup)
        if mapped.isna().any():
            bad = frame[name][mapped.isna()].iloc[0]
            raise RecordsError(f"setting {bad!r} not in the config's grid")
        codes[name] = mapped.to_numpy(dtype=np.uint16)
    return Schedule(
        settings_a=settings_a,
        settings_b=settings_b,
        codes_a=codes["setting_a"],
        codes_b=codes["setting_b"],
    )


def load_records(csv_path: str | Path) -> RecordSet:
    """Load a records CSV written by :func:`save_records`; the JSON sidecar
    must sit next to it."""
    csv_path = Path(csv_path)
    sidecar = csv_path.with_suffix(".json")
    if not csv_path.exists():
        raise FileNotFoundError(csv_path)
    if not sidecar.exists():
        raise RecordsError(f"missing sidecar {sidecar}")
    payload = json.loads(sidecar.read_text())
    config = config_from_dict(payload["config"])
    model = Model(payload["model"])
    if model is Model.BOTH:
        raise RecordsError("a records file holds exactly one model")

    frame = pd.read_csv(csv_path, float_precision="round_trip")
    missing = [c for c in _CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise RecordsError(f"records file lacks columns: {', '.join(missing)}")
    if len(frame) != payload["n_trials"]:
        raise RecordsError(
            f"row count {len(frame)} != sidecar n_trials {payload['n_trials']}"
        )
    if not (frame["model"] == model.value).all():
        raise RecordsError("model column disagrees with the sidecar")
    if not np.array_equal(frame["trial_id"].to_numpy(), np.arange(len(frame))):
        raise RecordsError("trial_id must run 0..n-1 in order")

    schedule = _rebuild_schedule(config, frame)
    outcome_a = frame["outcome_a"].to_numpy(dtype=float)
    outcome_b = frame["outcome_b"].to_numpy(dtype=float)
    if not (np.isfinite(outcome_a).all() and np.isfinite(outcome_b).all()):
        raise RecordsError("outcomes must be finite")

    lhv_kwargs = {}
    if model is Model.LHV:
        missing = [c for c in _LHV_COLUMNS if c not in frame.columns]
        if missing:
            raise RecordsError(f"lhv records lack columns: {', '.join(missing)}")
        lhv_kwargs = {c: frame[c].to_numpy(dtype=float) for c in _LHV_COLUMNS}
    return RecordSet(
        config=config,
        model=model,
        schedule=schedule,
        outcome_a=outcome_a,
        outcome_b=outcome_b,
        provenance=payload.get("provenance", {}),
        **lhv_kwargs,
    )

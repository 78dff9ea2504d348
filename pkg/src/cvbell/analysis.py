"""Ensemble analysis of trial records.

Turns per-trial outcomes into the protocol's headline quantities:
vacuum-referenced count-rate means, Bell correlations between the two
stations' analyzer outputs, the CHSH statistic, the positivity audit of
the hidden-variable individuals, and the vacuum-intensity check.  Each
sampled estimator has an exact analytic twin built on the Isserlis
moment oracle, used for acceptance testing.

The Bell correlation is the two-output intensity-difference over
intensity-sum form

    E = < (R_par - R_perp)_A (R_par - R_perp)_B >
        / < (R_par + R_perp)_A (R_par + R_perp)_B >

with every count rate R the vacuum-referenced quadrature-square
combination.  The vacuum terms cancel in each difference, so the
numerator expands into the 16 cross-station fourth moments
< X_{A,out,k}^2 X_{B,out',l}^2 >; the denominator keeps vacuum terms,
which factorize because the vacuum ports are independent of everything:
< X_s^2 X_v^2 > = < X_s^2 > < X_v^2 >.  Each moment is estimated from
the subensemble of trials in which exactly that quantity was measured;
the vacuum second moments come from the dedicated calibration
subensembles rather than being assumed equal to 1.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .fock import ModeId
from .gaussian import QuadratureRequest, analytic_moment, polarization_rotation
from .protocol import (
    SIGNAL_MODES,
    VACUUM_MODE,
    ExperimentConfig,
    Model,
    OutputPort,
    RecordSet,
    SettingKind,
    Station,
    config_to_dict,
    prepare_state,
)

__all__ = [
    "MIN_SUBENSEMBLE",
    "AnalysisError",
    "StarvedSubensembleError",
    "SubensembleStat",
    "CountRateEstimate",
    "CorrelationEstimate",
    "StationPositivity",
    "PositivityAudit",
    "VacuumCheck",
    "BellReport",
    "estimate_count_rate",
    "estimate_correlation",
    "oracle_correlation",
    "oracle_chsh",
    "chsh",
    "positivity_audit",
    "vacuum_check",
    "build_bell_report",
    "report_to_dict",
    "save_reports",
]

#: minimum trials per subensemble before an estimate is emitted
#: (below this the delta-method standard errors are not trustworthy)
MIN_SUBENSEMBLE = 30

_OUTPUTS = (OutputPort.PARALLEL, OutputPort.PERPENDICULAR)
_SIGN = {OutputPort.PARALLEL: 1.0, OutputPort.PERPENDICULAR: -1.0}


class AnalysisError(RuntimeError):
    """Analysis that cannot proceed on the given records."""


class StarvedSubensembleError(AnalysisError):
    """A required subensemble has fewer than MIN_SUBENSEMBLE trials."""


@dataclass(frozen=True)
class SubensembleStat:
    mean: float
    stderr: float
    n: int


@dataclass(frozen=True)
class CountRateEstimate:
    """Ensemble count rate of one analyzer output:
    (<X1^2> + <X2^2> - <Xv1^2> - <Xv2^2>) / 4, every term from its own
    subensemble because the four quantities cannot be measured at once."""

    station: Station
    theta: float
    output: OutputPort
    mean: float
    stderr: float
    n_trials: dict[str, int]


@dataclass(frozen=True)
class CorrelationEstimate:
    theta_a: float
    theta_b: float
    value: float
    stderr: float
    numerator: float
    denominator: float


@dataclass(frozen=True)
class StationPositivity:
    station: Station
    n: int
    negative_fraction: float
    min_value: float
    mean: float
    mean_stderr: float


@dataclass(frozen=True)
class PositivityAudit:
    per_station: dict[str, StationPositivity]


@dataclass(frozen=True)
class VacuumCheck:
    model: Model
    n_aux: dict[str, int]
    n_nonzero: int
    all_zero: bool | None
    mean_intensity: float | None


@dataclass(frozen=True)
class BellReport:
    model: Model
    correlations: tuple[CorrelationEstimate, ...]
    s_value: float
    s_stderr: float
    s_oracle: float | None
    positivity: PositivityAudit | None
    vacuum: VacuumCheck
    config: ExperimentConfig


def _subensemble(values: np.ndarray, label: str) -> SubensembleStat:
    n = int(values.size)
    if n < MIN_SUBENSEMBLE:
        raise StarvedSubensembleError(
            f"subensemble {label} has {n} trials, need >= {MIN_SUBENSEMBLE}"
        )
    return SubensembleStat(
        mean=float(np.mean(values)),
        stderr=float(np.std(values, ddof=1) / math.sqrt(n)),
        n=n,
    )


def estimate_count_rate(
    records: RecordSet, station: Station, theta: float, output: OutputPort
) -> CountRateEstimate:
    """Count-rate mean of one analyzer output with delta-method stderr."""
    out = records.outcomes(station)
    stats = {}
    for quad in (1, 2):
        mask = records.mask(
            station, SettingKind.QUADRATURE, theta=theta, output=output, quad=quad
        )
        stats[f"x{quad}"] = _subensemble(
            out[mask] ** 2,
            f"{station.value}:quad:theta={theta:.6g}:{output.value}:{quad}",
        )
        vac_mask = records.mask(station, SettingKind.VACUUM_QUADRATURE, quad=quad)
        stats[f"vac_x{quad}"] = _subensemble(
            out[vac_mask] ** 2, f"{station.value}:vacquad:{quad}"
        )
    mean = (
        stats["x1"].mean
        + stats["x2"].mean
        - stats["vac_x1"].mean
        - stats["vac_x2"].mean
    ) / 4.0
    stderr = math.sqrt(sum(s.stderr**2 for s in stats.values())) / 4.0
    return CountRateEstimate(
        station=station,
        theta=theta,
        output=output,
        mean=mean,
        stderr=stderr,
        n_trials={k: s.n for k, s in stats.items()},
    )


def _combine_correlation(
    m4: dict[tuple[OutputPort, int, OutputPort, int], float],
    u_a: dict[tuple[OutputPort, int], float],
    u_b: dict[tuple[OutputPort, int], float],
    v_a: dict[int, float],
    v_b: dict[int, float],
) -> tuple[float, float]:
    """Numerator and denominator (each x16) of the correlation from the
    moment values; shared by the sampled estimator and the exact oracle
    so both realize the identical construction."""
    num = 0.0
    total = 0.0
    for (out_a, _, out_b, _), value in m4.items():
        num += _SIGN[out_a] * _SIGN[out_b] * value
        total += value
    big_u_a = sum(u_a.values())
    big_u_b = sum(u_b.values())
    big_t_a = sum(v_a.values())
    big_t_b = sum(v_b.values())
    den = total - 2.0 * big_u_a * big_t_b - 2.0 * big_t_a * big_u_b + 4.0 * big_t_a * big_t_b
    return num, den


def _moment_tables(records: RecordSet, theta_a: float, theta_b: float):
    """Per-subensemble stats feeding the correlation estimate.

    Signal second moments are taken from trials whose partner station is
    NOT measuring at this angle pair, so every input below comes from a
    disjoint (hence independent) set of trials and the error propagation
    stays a plain quadratic form.
    """
    out_a = records.outcomes(Station.A)
    out_b = records.outcomes(Station.B)
    mask_a = {
        (o, q): records.mask(
            Station.A, SettingKind.QUADRATURE, theta=theta_a, output=o, quad=q
        )
        for o in _OUTPUTS
        for q in (1, 2)
    }
    mask_b = {
        (o, q): records.mask(
            Station.B, SettingKind.QUADRATURE, theta=theta_b, output=o, quad=q
        )
        for o in _OUTPUTS
        for q in (1, 2)
    }
    in_pair_a = records.mask(Station.A, SettingKind.QUADRATURE, theta=theta_a)
    in_pair_b = records.mask(Station.B, SettingKind.QUADRATURE, theta=theta_b)

    m4 = {}
    for (oa, qa), ma in mask_a.items():
        for (ob, qb), mb in mask_b.items():
            joint = ma & mb
            m4[(oa, qa, ob, qb)] = _subensemble(
                out_a[joint] ** 2 * out_b[joint] ** 2,
                f"A:quad:theta={theta_a:.6g}:{oa.value}:{qa} x "
                f"B:quad:theta={theta_b:.6g}:{ob.value}:{qb}",
            )
    u_a = {
        key: _subensemble(
            out_a[mask & ~in_pair_b] ** 2,
            f"A:quad:theta={theta_a:.6g}:{key[0].value}:{key[1]} (B off-pair)",
        )
        for key, mask in mask_a.items()
    }
    u_b = {
        key: _subensemble(
            out_b[mask & ~in_pair_a] ** 2,
            f"B:quad:theta={theta_b:.6g}:{key[0].value}:{key[1]} (A off-pair)",
        )
        for key, mask in mask_b.items()
    }
    v_a = {
        q: _subensemble(
            out_a[records.mask(Station.A, SettingKind.VACUUM_QUADRATURE, quad=q)] ** 2,
            f"A:vacquad:{q}",
        )
        for q in (1, 2)
    }
    v_b = {
        q: _subensemble(
            out_b[records.mask(Station.B, SettingKind.VACUUM_QUADRATURE, quad=q)] ** 2,
            f"B:vacquad:{q}",
        )
        for q in (1, 2)
    }
    return m4, u_a, u_b, v_a, v_b


def estimate_correlation(
    records: RecordSet, theta_a: float, theta_b: float
) -> CorrelationEstimate:
    """Bell correlation estimate for one analyzer angle pair, with the
    delta-method standard error of the moment-ratio."""
    m4, u_a, u_b, v_a, v_b = _moment_tables(records, theta_a, theta_b)
    num, den = _combine_correlation(
        {k: s.mean for k, s in m4.items()},
        {k: s.mean for k, s in u_a.items()},
        {k: s.mean for k, s in u_b.items()},
        {k: s.mean for k, s in v_a.items()},
        {k: s.mean for k, s in v_b.items()},
    )
    if den <= 0:
        raise AnalysisError(
            f"non-positive correlation denominator {den / 16.0:.3e} at "
            f"(theta_a={theta_a:.6g}, theta_b={theta_b:.6g})"
        )
    value = num / den

    var_m = {k: s.stderr**2 for k, s in m4.items()}
    var_num = sum(var_m.values())
    var_total = var_num
    cov_num_den = sum(
        _SIGN[out_a] * _SIGN[out_b] * v for (out_a, _, out_b, _), v in var_m.items()
    )
    big_u_a = sum(s.mean for s in u_a.values())
    big_u_b = sum(s.mean for s in u_b.values())
    big_t_a = sum(s.mean for s in v_a.values())
    big_t_b = sum(s.mean for s in v_b.values())
    var_u_a = sum(s.stderr**2 for s in u_a.values())
    var_u_b = sum(s.stderr**2 for s in u_b.values())
    var_t_a = sum(s.stderr**2 for s in v_a.values())
    var_t_b = sum(s.stderr**2 for s in v_b.values())
    var_den = (
        var_total
        + (2.0 * big_t_b) ** 2 * var_u_a
        + (2.0 * big_t_a) ** 2 * var_u_b
        + (2.0 * big_u_b - 4.0 * big_t_b) ** 2 * var_t_a
        + (2.0 * big_u_a - 4.0 * big_t_a) ** 2 * var_t_b
    )
    var_value = (var_num - 2.0 * value * cov_num_den + value**2 * var_den) / den**2
    return CorrelationEstimate(
        theta_a=theta_a,
        theta_b=theta_b,
        value=value,
        stderr=math.sqrt(max(var_value, 0.0)),
        numerator=num / 16.0,
        denominator=den / 16.0,
    )


def _oracle_request(station: Station, output: OutputPort, quad: int) -> QuadratureRequest:
    h_mode, v_mode = SIGNAL_MODES[station]
    mode = h_mode if output is OutputPort.PARALLEL else v_mode
    return QuadratureRequest(mode, 0.0 if quad == 1 else math.pi / 2)


def oracle_correlation(
    config: ExperimentConfig, theta_a: float, theta_b: float
) -> float:
    """Exact correlation for the configured source, from the analytic
    moment oracle; no sampling.  Same construction as
    :func:`estimate_correlation`."""
    state = prepare_state(config)
    rot = polarization_rotation(state, ModeId.A_H, ModeId.A_V, theta_a)
    rot = polarization_rotation(rot, ModeId.B_H, ModeId.B_V, theta_b)

    m4 = {}
    for oa in _OUTPUTS:
        for qa in (1, 2):
            ra = _oracle_request(Station.A, oa, qa)
            for ob in _OUTPUTS:
                for qb in (1, 2):
                    rb = _oracle_request(Station.B, ob, qb)
                    m4[(oa, qa, ob, qb)] = analytic_moment(rot, [ra, ra, rb, rb])
    u_a = {
        (o, q): analytic_moment(rot, [_oracle_request(Station.A, o, q)] * 2)
        for o in _OUTPUTS
        for q in (1, 2)
    }
    u_b = {
        (o, q): analytic_moment(rot, [_oracle_request(Station.B, o, q)] * 2)
        for o in _OUTPUTS
        for q in (1, 2)
    }
    v_a = {
        q: analytic_moment(
            rot, [QuadratureRequest(VACUUM_MODE[Station.A], 0.0 if q == 1 else math.pi / 2)] * 2
        )
        for q in (1, 2)
    }
    v_b = {
        q: analytic_moment(
            rot, [QuadratureRequest(VACUUM_MODE[Station.B], 0.0 if q == 1 else math.pi / 2)] * 2
        )
        for q in (1, 2)
    }
    num, den = _combine_correlation(m4, u_a, u_b, v_a, v_b)
    if den <= 1e-12:
        raise AnalysisError(
            "correlation undefined: the source emits no photons at this "
            "squeezing, so the intensity-sum denominator vanishes"
        )
    return num / den


def chsh(e11, e12, e21, e22) -> tuple[float, float]:
    """CHSH combination S = |E11 - E12 + E21 + E22| with the standard
    error propagated in quadrature.  Accepts floats or
    :class:`CorrelationEstimate` values."""

    def val_err(e):
        if isinstance(e, CorrelationEstimate):
            return e.value, e.stderr
        return float(e), 0.0

    values, errors = zip(*(val_err(e) for e in (e11, e12, e21, e22)))
    s = abs(values[0] - values[1] + values[2] + values[3])
    return s, math.sqrt(sum(err**2 for err in errors))


def _chsh_pairs(config: ExperimentConfig) -> list[tuple[float, float]]:
    if len(config.theta_a) < 2 or len(config.theta_b) < 2:
        raise AnalysisError("the CHSH statistic needs two analyzer angles per station")
    a0, a1 = config.theta_a[0], config.theta_a[1]
    b0, b1 = config.theta_b[0], config.theta_b[1]
    return [(a0, b0), (a0, b1), (a1, b0), (a1, b1)]


def oracle_chsh(config: ExperimentConfig) -> float:
    """Exact CHSH value at the configured angles (sign convention: the
    minus sits on the (theta_a[0], theta_b[1]) pair)."""
    es = [oracle_correlation(config, ta, tb) for ta, tb in _chsh_pairs(config)]
    return chsh(*es)[0]


def positivity_audit(records: RecordSet) -> PositivityAudit:
    """Distribution of the hidden-variable individual count rates.

    Only hidden-variable records carry individuals; the quantum model's
    underlying individual count rates are not accessible to measurement,
    so calling this on quantum records is an error.
    """
    if records.model is not Model.LHV:
        raise AnalysisError(
            "positivity audit requires hidden-variable records: individual "
            "count rates are inaccessible in the quantum measurement model"
        )
    per_station = {}
    for station, column in (
        (Station.A, records.lhv_r_a),
        (Station.B, records.lhv_r_b),
    ):
        values = column[~np.isnan(column)]
        if values.size == 0:
            raise AnalysisError(
                f"no analyzer-quadrature trials at station {station.value}"
            )
        per_station[station.value] = StationPositivity(
            station=station,
            n=int(values.size),
            negative_fraction=float(np.mean(values < 0.0)),
            min_value=float(values.min()),
            mean=float(values.mean()),
            mean_stderr=float(np.std(values, ddof=1) / math.sqrt(values.size)),
        )
    return PositivityAudit(per_station=per_station)


def vacuum_check(records: RecordSet) -> VacuumCheck:
    """Verdict of the auxiliary vacuum-intensity measurement.

    Quantum records must show every auxiliary outcome exactly zero;
    hidden-variable records report the mean pointwise intensity, which
    sits near 1/2 instead.  Without auxiliary trials at both stations
    the check (and with it the positivity of the count rates) cannot be
    certified, so that is an error.
    """
    masks = {
        st: records.mask(st, SettingKind.AUX_INTENSITY) for st in Station
    }
    n_aux = {st.value: int(m.sum()) for st, m in masks.items()}
    for st, count in n_aux.items():
        if count == 0:
            raise AnalysisError(
                f"no auxiliary intensity trials at station {st}: the vacuum "
                "intensity was never measured, so positivity cannot be certified"
            )
    outcomes = np.concatenate(
        [records.outcomes(st)[m] for st, m in masks.items()]
    )
    n_nonzero = int(np.count_nonzero(outcomes))
    if records.model is Model.QUANTUM:
        return VacuumCheck(
            model=records.model,
            n_aux=n_aux,
            n_nonzero=n_nonzero,
            all_zero=bool(n_nonzero == 0),
            mean_intensity=None,
        )
    return VacuumCheck(
        model=records.model,
        n_aux=n_aux,
        n_nonzero=n_nonzero,
        all_zero=None,
        mean_intensity=float(outcomes.mean()),
    )


def build_bell_report(records: RecordSet, include_oracle: bool = True) -> BellReport:
    """Full per-model report: the four CHSH correlations, S, the oracle S
    for the same configuration, the vacuum check, and (for
    hidden-variable records) the positivity audit."""
    pairs = _chsh_pairs(records.config)
    correlations = tuple(
        estimate_correlation(records, ta, tb) for ta, tb in pairs
    )
    s_value, s_stderr = chsh(*correlations)
    s_oracle = None
    if include_oracle:
        try:
            s_oracle = oracle_chsh(records.config)
        except AnalysisError:
            s_oracle = None
    positivity = positivity_audit(records) if records.model is Model.LHV else None
    return BellReport(
        model=records.model,
        correlations=correlations,
        s_value=s_value,
        s_stderr=s_stderr,
        s_oracle=s_oracle,
        positivity=positivity,
        vacuum=vacuum_check(records),
        config=records.config,
    )


def report_to_dict(report: BellReport) -> dict:
    """JSON-ready dictionary; floats keep full precision via repr."""
    return {
        "model": report.model.value,
        "config": config_to_dict(report.config),
        "correlations": [
            {
                "theta_a": c.theta_a,
                "theta_b": c.theta_b,
                "value": c.value,
                "stderr": c.stderr,
                "numerator": c.numerator,
                "denominator": c.denominator,
            }
            for c in report.correlations
        ],
        "chsh": {
            "s": report.s_value,
            "stderr": report.s_stderr,
            "s_oracle": report.s_oracle,
            "sign_convention": "S = |E(a0,b0) - E(a0,b1) + E(a1,b0) + E(a1,b1)|",
        },
        "positivity": None
        if report.positivity is None
        else {
            station: {
                "n": p.n,
                "negative_fraction": p.negative_fraction,
                "min": p.min_value,
                "mean": p.mean,
                "mean_stderr": p.mean_stderr,
            }
            for station, p in report.positivity.per_station.items()
        },
        "vacuum_check": {
            "n_aux": report.vacuum.n_aux,
            "n_nonzero": report.vacuum.n_nonzero,
            "all_zero": report.vacuum.all_zero,
            "mean_intensity": report.vacuum.mean_intensity,
        },
    }


def save_reports(
    reports: Sequence[BellReport], json_path: str | Path, csv_path: str | Path
) -> tuple[Path, Path]:
    """Write the combined report JSON and the plot-ready correlation CSV
    (model, theta_a, theta_b, E, stderr)."""
    json_path = Path(json_path)
    csv_path = Path(csv_path)
    payload = {"reports": [report_to_dict(r) for r in reports]}
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    rows = [
        {
            "model": r.model.value,
            "theta_a": c.theta_a,
            "theta_b": c.theta_b,
            "e": c.value,
            "stderr": c.stderr,
        }
        for r in reports
        for c in r.correlations
    ]
    pd.DataFrame(rows).to_csv(
        csv_path, index=False, float_format="%.17g", lineterminator="\n"
    )
    return json_path, csv_path

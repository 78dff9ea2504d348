import json
import math

import numpy as np
import pytest

from cvbell.analysis import (
    AnalysisError,
    StarvedSubensembleError,
    build_bell_report,
    chsh,
    estimate_correlation,
    estimate_count_rate,
    oracle_chsh,
    oracle_correlation,
    positivity_audit,
    save_reports,
    vacuum_check,
)
from cvbell.protocol import (
    ExperimentConfig,
    Model,
    OutputPort,
    Station,
    run_experiment,
)

SINH_SQ_05 = 0.2715403174076219
SINH_SQ_03 = 0.09273260912113383  # sinh(0.3)^2
NEG_FRACTION_03 = 0.45756848091331465  # P(R < 0) = 1 / (1 + cosh(2r)) at r = 0.3


def closed_form_e(r, delta):
    # hand-derived independent oracle for the two-squeezer network
    return math.cos(2 * delta) / (1.0 + 2.0 * math.tanh(r) ** 2)


def closed_form_s(r):
    return 2.0 * math.sqrt(2.0) / (1.0 + 2.0 * math.tanh(r) ** 2)


def run_one(model, **kw):
    defaults = dict(squeezing=0.5, n_trials=200_000, seed=404, model=model)
    defaults.update(kw)
    cfg = ExperimentConfig(**defaults)
    return cfg, run_experiment(cfg)[model]


# --- count rates ----------------------------------------------------------


def test_count_rate_vacuum_config_is_zero():
    cfg, records = run_one(Model.QUANTUM, squeezing=0.0, n_trials=40_000)
    est = estimate_count_rate(records, Station.A, cfg.theta_a[0], OutputPort.PARALLEL)
    assert abs(est.mean) < 3 * est.stderr
    assert est.stderr > 0
    assert set(est.n_trials) == {"x1", "x2", "vac_x1", "vac_x2"}
    assert all(n >= 30 for n in est.n_trials.values())


@pytest.mark.parametrize("theta_index,output", [(0, OutputPort.PARALLEL), (1, OutputPort.PERPENDICULAR)])
def test_count_rate_converges_to_thermal_mean(theta_index, output):
    cfg, records = run_one(Model.QUANTUM)
    est = estimate_count_rate(records, Station.A, cfg.theta_a[theta_index], output)
    assert abs(est.mean - SINH_SQ_05) < 3 * est.stderr


def test_count_rate_lhv_agrees_with_quantum():
    cfg_q, rec_q = run_one(Model.QUANTUM)
    cfg_l, rec_l = run_one(Model.LHV)
    eq = estimate_count_rate(rec_q, Station.B, cfg_q.theta_b[0], OutputPort.PARALLEL)
    el = estimate_count_rate(rec_l, Station.B, cfg_l.theta_b[0], OutputPort.PARALLEL)
    combined = math.hypot(eq.stderr, el.stderr)
    assert abs(eq.mean - el.mean) < 3 * combined


def test_count_rate_starved_subensemble_named():
    cfg, records = run_one(Model.QUANTUM, n_trials=200)
    with pytest.raises(StarvedSubensembleError, match="A:"):
        estimate_count_rate(records, Station.A, cfg.theta_a[0], OutputPort.PARALLEL)


# --- correlations ---------------------------------------------------------


def test_correlation_estimate_matches_oracle():
    cfg, records = run_one(Model.QUANTUM)
    for ta, tb in [(cfg.theta_a[0], cfg.theta_b[0]), (cfg.theta_a[1], cfg.theta_b[1])]:
        est = estimate_correlation(records, ta, tb)
        want = oracle_correlation(cfg, ta, tb)
        assert est.denominator > 0
        assert est.stderr > 0
        assert abs(est.value - want) < 5 * est.stderr
        assert abs(est.value) <= 1.0 + 3 * est.stderr  # soft sanity bound


def test_correlation_denominator_error_when_no_photons():
    # at r=0 the intensity-sum denominator is zero up to sampling noise;
    # this seed lands on the negative side, which must be refused
    cfg = ExperimentConfig(squeezing=0.0, n_trials=50_000, seed=13, model=Model.QUANTUM)
    records = run_experiment(cfg)[Model.QUANTUM]
    with pytest.raises(AnalysisError, match="non-positive"):
        estimate_correlation(records, cfg.theta_a[0], cfg.theta_b[0])


def test_correlation_estimate_lhv_agrees_with_quantum():
    cfg, rec_q = run_one(Model.QUANTUM)
    _, rec_l = run_one(Model.LHV)
    ta, tb = cfg.theta_a[0], cfg.theta_b[0]
    eq = estimate_correlation(rec_q, ta, tb)
    el = estimate_correlation(rec_l, ta, tb)
    assert abs(eq.value - el.value) < 5 * math.hypot(eq.stderr, el.stderr)


def test_correlation_starved_subensemble():
    cfg, records = run_one(Model.QUANTUM, n_trials=2_000)
    with pytest.raises(StarvedSubensembleError):
        estimate_correlation(records, cfg.theta_a[0], cfg.theta_b[0])


def test_oracle_matches_closed_form():
    for r in (0.1, 0.3, 0.5, 1.0):
        cfg = ExperimentConfig(squeezing=r, n_trials=1, model=Model.QUANTUM)
        for ta, tb in [(0.0, 0.0), (0.0, math.pi / 8), (0.4, 0.15)]:
            got = oracle_correlation(cfg, ta, tb)
            assert got == pytest.approx(closed_form_e(r, ta - tb), abs=1e-12)


def test_oracle_frozen_regression_value():
    # computed from the closed form before the sampling pipeline was built
    cfg = ExperimentConfig(squeezing=0.5, n_trials=1, model=Model.QUANTUM)
    got = oracle_correlation(cfg, 0.0, 0.0)
    assert got == pytest.approx(0.7007195171256104, abs=1e-12)


def test_oracle_degenerate_at_zero_squeezing():
    cfg = ExperimentConfig(squeezing=0.0, n_trials=1, model=Model.QUANTUM)
    with pytest.raises(AnalysisError, match="no photons"):
        oracle_correlation(cfg, 0.0, 0.0)


def test_oracle_depends_only_on_angle_difference():
    cfg = ExperimentConfig(squeezing=0.5, n_trials=1, model=Model.QUANTUM)
    base = oracle_correlation(cfg, 0.3, 0.1)
    for shift in np.linspace(0.0, 2.0, 5):
        shifted = oracle_correlation(cfg, 0.3 + shift, 0.1 + shift)
        assert shifted == pytest.approx(base, abs=1e-12)


def test_oracle_chsh_closed_form():
    for r in (0.1, 0.5, 1.0):
        cfg = ExperimentConfig(squeezing=r, n_trials=1, model=Model.QUANTUM)
        assert oracle_chsh(cfg) == pytest.approx(closed_form_s(r), abs=1e-12)


def test_chsh_a_setting_permutation_metamorphic():
    # swapping the two A angles in the config must equal feeding the
    # permuted correlations to the combiner by hand
    cfg = ExperimentConfig(squeezing=0.5, n_trials=1, model=Model.QUANTUM)
    swapped = ExperimentConfig(
        squeezing=0.5,
        theta_a=(cfg.theta_a[1], cfg.theta_a[0]),
        theta_b=cfg.theta_b,
        n_trials=1,
        model=Model.QUANTUM,
    )
    e = {
        (i, j): oracle_correlation(cfg, cfg.theta_a[i], cfg.theta_b[j])
        for i in (0, 1)
        for j in (0, 1)
    }
    by_hand, _ = chsh(e[(1, 0)], e[(1, 1)], e[(0, 0)], e[(0, 1)])
    assert oracle_chsh(swapped) == pytest.approx(by_hand, abs=1e-12)


def test_estimated_correlation_shift_symmetry():
    # E(a, b) and E(a+d, b+d) estimable from one run with shifted angle grids
    delta = 0.3
    cfg = ExperimentConfig(
        squeezing=0.5,
        theta_a=(0.0, delta),
        theta_b=(math.pi / 8, math.pi / 8 + delta),
        n_trials=300_000,
        seed=11,
        model=Model.QUANTUM,
    )
    records = run_experiment(cfg)[Model.QUANTUM]
    e1 = estimate_correlation(records, cfg.theta_a[0], cfg.theta_b[0])
    e2 = estimate_correlation(records, cfg.theta_a[1], cfg.theta_b[1])
    assert abs(e1.value - e2.value) < 3 * math.hypot(e1.stderr, e2.stderr)
    o1 = oracle_correlation(cfg, cfg.theta_a[0], cfg.theta_b[0])
    o2 = oracle_correlation(cfg, cfg.theta_a[1], cfg.theta_b[1])
    assert o1 == pytest.approx(o2, abs=1e-12)


# --- CHSH combiner --------------------------------------------------------


def test_chsh_standard_patterns():
    s2 = math.sqrt(2) / 2
    assert chsh(s2, -s2, s2, s2)[0] == pytest.approx(2 * math.sqrt(2), abs=1e-15)
    assert chsh(0.0, 0.0, 0.0, 0.0)[0] == 0.0
    assert chsh(1.0, 1.0, 1.0, 1.0)[0] == pytest.approx(2.0, abs=1e-15)


def test_chsh_linearity_and_stderr():
    gen = np.random.default_rng(8)
    for _ in range(20):
        e = gen.uniform(-1, 1, size=4)
        s, err = chsh(*e)
        assert s == pytest.approx(abs(e[0] - e[1] + e[2] + e[3]), abs=1e-15)
        assert err == 0.0
    # quadrature stderr propagation from estimates
    from cvbell.analysis import CorrelationEstimate

    ests = [
        CorrelationEstimate(0.0, 0.0, value=v, stderr=0.1, numerator=1, denominator=1)
        for v in (0.5, -0.5, 0.5, 0.5)
    ]
    s, err = chsh(*ests)
    assert err == pytest.approx(0.2, abs=1e-15)


# --- audits ---------------------------------------------------------------


def test_positivity_audit_rejects_quantum_records():
    _, records = run_one(Model.QUANTUM, n_trials=2_000)
    with pytest.raises(AnalysisError, match="inaccessible"):
        positivity_audit(records)


def test_positivity_audit_statistics():
    _, records = run_one(Model.LHV, squeezing=0.3, n_trials=100_000, seed=606)
    audit = positivity_audit(records)
    for station in ("A", "B"):
        p = audit.per_station[station]
        assert abs(p.mean - SINH_SQ_03) < 3 * p.mean_stderr
        se_frac = math.sqrt(NEG_FRACTION_03 * (1 - NEG_FRACTION_03) / p.n)
        assert abs(p.negative_fraction - NEG_FRACTION_03) < 5 * se_frac
        assert p.negative_fraction > 0.10
        assert p.min_value < 0


def test_positivity_audit_r0_symmetric():
    _, records = run_one(Model.LHV, squeezing=0.0, n_trials=60_000, seed=21)
    audit = positivity_audit(records)
    for p in audit.per_station.values():
        assert abs(p.mean) < 3 * p.mean_stderr
        se = math.sqrt(0.25 / p.n)
        assert abs(p.negative_fraction - 0.5) < 5 * se


def test_vacuum_check_quantum_all_zero():
    _, records = run_one(Model.QUANTUM, n_trials=50_000)
    check = vacuum_check(records)
    assert check.all_zero is True
    assert check.n_nonzero == 0
    assert check.mean_intensity is None
    assert all(n > 0 for n in check.n_aux.values())


def test_vacuum_check_lhv_intensity_mean():
    _, records = run_one(Model.LHV, n_trials=300_000, seed=5150)
    check = vacuum_check(records)
    assert check.all_zero is None
    assert check.mean_intensity == pytest.approx(0.5, abs=0.01)
    assert check.n_nonzero == sum(check.n_aux.values())


def test_vacuum_check_requires_aux_trials():
    _, records = run_one(Model.QUANTUM, p_aux=0.0, n_trials=2_000)
    with pytest.raises(AnalysisError, match="cannot be certified"):
        vacuum_check(records)


# --- report ---------------------------------------------------------------


def test_build_bell_report_and_serialization(tmp_path):
    cfg = ExperimentConfig(squeezing=0.5, n_trials=100_000, seed=909, model=Model.BOTH)
    results = run_experiment(cfg)
    reports = [build_bell_report(results[m]) for m in (Model.QUANTUM, Model.LHV)]
    rq, rl = reports

    assert rq.positivity is None and rl.positivity is not None
    assert rq.vacuum.all_zero is True
    assert rl.vacuum.mean_intensity == pytest.approx(0.5, abs=0.02)
    for rep in reports:
        assert rep.s_oracle == pytest.approx(closed_form_s(0.5), abs=1e-12)
        assert abs(rep.s_value - rep.s_oracle) < 5 * rep.s_stderr
        assert len(rep.correlations) == 4

    json_path, csv_path = save_reports(
        reports, tmp_path / "report.json", tmp_path / "correlations.csv"
    )
    payload = json.loads(json_path.read_text())
    assert len(payload["reports"]) == 2
    assert payload["reports"][0]["chsh"]["s"] == rq.s_value
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "model,theta_a,theta_b,e,stderr"
    assert len(lines) == 1 + 8


def test_report_needs_two_angles_per_station():
    cfg = ExperimentConfig(
        squeezing=0.5, theta_a=(0.0,), theta_b=(0.1,), n_trials=1_000, model=Model.QUANTUM
    )
    records = run_experiment(cfg)[Model.QUANTUM]
    with pytest.raises(AnalysisError, match="two analyzer angles"):
        build_bell_report(records)

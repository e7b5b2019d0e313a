"""Acceptance suite: each test checks one criterion at its stated tolerance.

A one-line PASS/FAIL summary per criterion is printed at the end of the run.
The figure-reproduction runs (criteria 5-7) are shared with criterion 9.
"""
import json
import statistics
import time

import numpy as np
import pytest

from tsdrop.cli import main
from tsdrop.config import Backend, SimConfig
from tsdrop.harness import run, verify_generalization_error
from tsdrop.learning import Dropout, MaskMode, Sgd
from tsdrop.model import activation, activation_deriv
from tsdrop.orderparams import (
    OrderParameters,
    analytic_generalization_error,
    monte_carlo_generalization_error,
)
from tsdrop.output import trajectory_csv
from tsdrop.rng import MONTE_CARLO, CounterRNG

from conftest import record_criterion

SEEDS = range(5)
FIG_STEPS = 5_000_000


def fig_config(seed, rule, kind="orthogonal", K=4):
    return SimConfig(M=2, K=K, N=300, eta=0.005, steps=FIG_STEPS, seed=seed, rule=rule, teacher_kind=kind)


@pytest.fixture(scope="module")
def learnable_run():
    start = time.perf_counter()
    records, summary = run(fig_config(0, Sgd(), K=2))
    return records, summary, time.perf_counter() - start


@pytest.fixture(scope="module")
def redundant_runs():
    return {name: [run(fig_config(s, rule)) for s in SEEDS]
            for name, rule in (("sgd", Sgd()), ("dropout", Dropout(0.5)))}


@pytest.fixture(scope="module")
def singular_runs():
    return {name: [run(fig_config(s, rule, "singular")) for s in SEEDS]
            for name, rule in (("sgd", Sgd()), ("dropout", Dropout(0.5)))}


def test_criterion_01_analytic_vs_monte_carlo():
    start = time.perf_counter()
    report = verify_generalization_error(50, 4, 4, 200_000, seed=0, N=400)
    elapsed = time.perf_counter() - start
    ok = report.pass_count >= 48 and elapsed <= 120
    record_criterion(1, ok, f"{report.pass_count}/50 trials within 5 std-err, {elapsed:.1f}s")
    assert report.pass_count >= 48
    assert elapsed <= 120


def test_criterion_02_null_student_value():
    op = OrderParameters(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2))
    eg = analytic_generalization_error(op, [0.5, 0.5], [0.0, 0.0])
    rep = monte_carlo_generalization_error(op, [0.5, 0.5], [0.0, 0.0], 1_000_000, CounterRNG(0, MONTE_CARLO))
    ok = abs(eg - 1 / 12) <= 1e-12 and abs(rep.z) <= 3
    record_criterion(2, ok, f"analytic-1/12={eg - 1 / 12:.2e}, MC z={rep.z:.2f}")
    assert eg == pytest.approx(1 / 12, abs=1e-12)
    assert abs(rep.z) <= 3


def test_criterion_03_incremental_tracking():
    cfg = SimConfig(M=2, K=4, N=200, steps=10_000, seed=0, rule=Sgd(), remeasure_every=10_000)
    start = time.perf_counter()
    _, summary = run(cfg)
    elapsed = time.perf_counter() - start
    ok = summary.max_tracking_drift <= 1e-8 and elapsed <= 10
    record_criterion(3, ok, f"max |tracked-measured|={summary.max_tracking_drift:.2e}, {elapsed:.1f}s")
    assert summary.max_tracking_drift <= 1e-8
    assert elapsed <= 10


def test_criterion_04_p_one_dropout_equals_sgd():
    base = SimConfig(M=2, K=4, N=100, steps=10_000, seed=3, rule=Sgd(), sample_every=100)
    a = trajectory_csv(run(base)[0])
    b = trajectory_csv(run(base.with_(rule=Dropout(1.0, MaskMode.FIXED_SIZE)))[0])
    record_criterion(4, a == b, f"byte-identical CSV ({len(a)} bytes)")
    assert a == b


def test_criterion_05_learnable_case(learnable_run):
    records, _, elapsed = learnable_run
    first, last = records[0].mse_window, records[-1].mse_window
    ok = last < 0.2 * first and last < 0.02 and elapsed <= 120
    record_criterion(5, ok, f"MSE {first:.4f} -> {last:.5f}, {elapsed:.1f}s")
    assert last < 0.2 * first
    assert last < 0.02
    assert elapsed <= 120


def test_criterion_06_redundant_dropout_advantage(redundant_runs):
    med = {k: statistics.median(r[0][-1].mse_window for r in runs) for k, runs in redundant_runs.items()}
    ok = med["dropout"] <= med["sgd"]
    record_criterion(6, ok, f"median final MSE dropout={med['dropout']:.5f} sgd={med['sgd']:.5f} "
                            "(seed-sensitive)")
    assert med["dropout"] <= med["sgd"]


def test_criterion_07_singular_escape(singular_runs):
    med = {k: statistics.median(r[1].singular_dwell for r in runs) for k, runs in singular_runs.items()}
    ok = med["dropout"] < med["sgd"]
    record_criterion(7, ok, f"median dwell dropout={med['dropout']:.1f} sgd={med['sgd']:.1f} (seed-sensitive)")
    assert med["dropout"] < med["sgd"]


def _diag_at_t1000(backend):
    qs, rs = [], []
    for s in SEEDS:
        cfg = SimConfig(M=2, K=2, N=2000, eta=0.005, steps=2_000_000, seed=s, rule=Sgd(),
                        backend=backend, sample_every=2_000_000)
        rec = run(cfg)[0][-1]
        assert rec.t == 1000.0
        qs.extend(np.abs(np.diag(rec.Q_matrix())))
        rs.extend(np.abs(np.diag(rec.R)))
    return float(np.mean(qs)), float(np.mean(rs))


def test_criterion_08_backend_consistency():
    qd, rd = _diag_at_t1000(Backend.DIRECT)
    qt, rt = _diag_at_t1000(Backend.THERMO)
    ok = abs(qd - qt) <= 0.1 and abs(rd - rt) <= 0.1
    record_criterion(8, ok, f"mean|Q_ii| direct={qd:.3f} limit={qt:.3f}; mean|R_ii| direct={rd:.3f} limit={rt:.3f}")
    assert abs(qd - qt) <= 0.1
    assert abs(rd - rt) <= 0.1


def test_criterion_09_numerics(learnable_run, redundant_runs, singular_runs):
    h = 1e-4
    x = np.linspace(-6, 6, 12001)
    fd = (activation(x + h) - activation(x - h)) / (2 * h)
    deriv_err = float(np.max(np.abs(activation_deriv(x) - fd)))
    runs = [learnable_run[:2]] + [r for group in (redundant_runs, singular_runs) for rs in group.values() for r in rs]
    bad = 0
    checked = 0
    for records, summary in runs:
        for rec in records:
            checked += 1
            bad += bool(rec.order_parameters(summary.T).violations())
    ok = deriv_err <= 1e-6 and bad == 0
    record_criterion(9, ok, f"max deriv error {deriv_err:.1e}; {bad} invariant violations in {checked} records")
    assert deriv_err <= 1e-6
    assert bad == 0


BASE = {"M": 2, "K": 4, "N": 100, "steps": 5000, "seed": 11, "rule": "dropout", "sample_every": 100}
COMMAND_CONFIGS = {
    "run": BASE,
    "compare": {**BASE, "compare": {"rule": "sgd", "seeds": [0, 1, 2]}},
    "sweep": {**BASE, "sweep": {"key": "p", "values": [0.5, 1.0]}},
    "verify": {"verify": {"trials": 5, "samples": 20_000, "seed": 4}},
}


def _snapshot(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.suffix in (".csv", ".json")}


def test_criterion_10_determinism(tmp_path):
    mismatched = []
    for cmd, cfg in COMMAND_CONFIGS.items():
        path = tmp_path / f"{cmd}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / cmd / rep
            assert main([cmd, "--config", str(path), "--out", str(out)]) == 0
            outs.append(_snapshot(out))
        if not outs[0] or outs[0] != outs[1]:
            mismatched.append(cmd)
    record_criterion(10, not mismatched, f"run/compare/sweep/verify reruns identical; mismatches: {mismatched or 'none'}")
    assert not mismatched

import math

import numpy as np
import pytest

from tsdrop.config import Backend, ConfigError, SimConfig
from tsdrop.harness import (
    FIGURES,
    compare,
    limit_initial_state,
    run,
    scenario,
    scenario_grid,
    verify_generalization_error,
)
from tsdrop.learning import Dropout, Sgd
from tsdrop.model import TeacherKind


def small(**kw):
    base = dict(M=2, K=3, N=50, steps=2000, seed=1, rule=Sgd(), eta=0.5, sample_every=100)
    base.update(kw)
    return SimConfig(**base)


def test_zero_steps_gives_single_initial_record():
    records, summary = run(small(steps=0))
    assert len(records) == 1 and records[0].t == 0.0
    assert records[0].mse_window == records[0].eg_analytic
    assert not summary.diverged


def test_record_count_and_times():
    records, _ = run(small())
    assert len(records) == 2000 // 100 + 1
    assert [r.t for r in records[:3]] == [0.0, 2.0, 4.0]


def test_partial_last_interval_is_recorded():
    records, _ = run(small(steps=250))
    assert [r.t for r in records] == [0.0, 2.0, 4.0, 5.0]


@pytest.mark.parametrize("backend", list(Backend))
def test_run_is_deterministic(backend):
    cfg = small(backend=backend, rule=Dropout(0.5))
    a, sa = run(cfg)
    b, sb = run(cfg)
    for ra, rb in zip(a, b):
        assert ra.mse_window == rb.mse_window and np.array_equal(ra.Q, rb.Q) and np.array_equal(ra.R, rb.R)
    assert sa.to_dict() == sb.to_dict()


def test_seed_changes_trajectory():
    a, _ = run(small(seed=1))
    b, _ = run(small(seed=2))
    assert a[-1].mse_window != b[-1].mse_window


def test_p_one_dropout_identical_to_sgd():
    a, _ = run(small(rule=Sgd()))
    b, _ = run(small(rule=Dropout(1.0)))
    for ra, rb in zip(a, b):
        assert ra.mse_window == rb.mse_window and np.array_equal(ra.Q, rb.Q) and np.array_equal(ra.w, rb.w)


def test_records_satisfy_invariants():
    records, summary = run(small(rule=Dropout(0.5), steps=5000))
    for r in records:
        assert math.isfinite(r.eg_analytic) and r.eg_analytic >= 0
        assert r.order_parameters(summary.T).violations(1e-8) == []


def test_remeasurement_drift_is_small():
    _, summary = run(small(steps=5000, remeasure_every=1000))
    assert summary.max_tracking_drift <= 1e-6


def test_divergence_reported():
    records, summary = run(small(eta=1e6, N=5, steps=2000))
    assert summary.diverged and summary.diverged_step is not None
    assert summary.diverged_step <= 2000


def test_singular_summary_has_dwell():
    _, summary = run(small(teacher_kind="singular"))
    assert summary.singular_dwell is not None
    _, summary = run(small())
    assert summary.singular_dwell is None


def test_limit_initial_state_statistics():
    Qs = []
    for s in range(300):
        op, w, v = limit_initial_state(small(seed=s, N=400))
        assert op.violations() == []
        Qs.append(op.Q)
    Qs = np.array(Qs)
    assert abs(Qs[:, 0, 0].mean() - 1) < 0.01
    assert abs(Qs[:, 0, 1].mean()) < 0.01
    assert Qs[:, 0, 1].std() == pytest.approx(1 / math.sqrt(400), rel=0.15)


def test_limit_initial_state_singular_teacher():
    op, _, _ = limit_initial_state(small(teacher_kind="singular"))
    assert op.T[0, 0] == op.T[1, 1] == op.T[0, 1]
    assert np.array_equal(op.R[:, 0], op.R[:, 1])


def test_compare_identical_configs_give_zero_diffs():
    cfg = small(steps=500)
    report = compare(cfg, cfg, [0, 1, 2])
    for row in report.rows:
        assert row.diff["final_mse"] == 0.0
    assert report.medians["final_mse"]["diff"] == 0.0


def test_compare_p_one_matches_sgd_exactly():
    report = compare(small(steps=500, teacher_kind="singular"),
                     small(steps=500, teacher_kind="singular", rule=Dropout(1.0)), [0, 1, 2])
    for row in report.rows:
        assert all(v in (0.0, None) for v in row.diff.values())


def test_compare_antisymmetric():
    a, b = small(steps=500), small(steps=500, rule=Dropout(0.5))
    ab, ba = compare(a, b, [0, 1, 2]), compare(b, a, [0, 1, 2])
    for r1, r2 in zip(ab.rows, ba.rows):
        assert r1.diff["final_mse"] == -r2.diff["final_mse"]


def test_compare_parallel_equals_serial(monkeypatch):
    a, b = small(steps=300), small(steps=300, rule=Dropout(0.5))
    serial = compare(a, b, [0, 1, 2]).to_dict()
    monkeypatch.setenv("SIM_THREADS", "3")
    assert compare(a, b, [0, 1, 2]).to_dict() == serial


def test_compare_preconditions():
    with pytest.raises(ConfigError):
        compare(small(), small(eta=0.1), [0, 1, 2])
    with pytest.raises(ConfigError):
        compare(small(), small(rule=Dropout(0.5)), [0, 1])


def test_verify_perfect_student():
    rep = verify_generalization_error(1, 3, 3, 2000, 0, perfect=True)
    assert rep.pass_count == 1 and rep.trials[0].z == 0.0


def test_verify_small_batch_and_determinism():
    a = verify_generalization_error(8, 3, 3, 20_000, 5)
    b = verify_generalization_error(8, 3, 3, 20_000, 5)
    assert a.to_dict() == b.to_dict()
    assert a.pass_count >= 7


def test_scenarios_match_figure_settings():
    for name, params in FIGURES.items():
        c = scenario(name)
        assert (c.N, c.eta, c.steps, c.M) == (1000, 0.005, 10**8, 2)
        assert c.K == params["K"] and c.rule == params["rule"]
    grid = scenario_grid()
    assert len(grid) == 8
    assert {(c.K, c.teacher_kind, type(c.rule)) for c in grid.values()} == {
        (K, kind, r) for K in (2, 4) for kind in TeacherKind for r in (Sgd, Dropout)}
    with pytest.raises(KeyError):
        scenario("fig9")

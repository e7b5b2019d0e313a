"""Experiment orchestration: runs, paired comparisons, eps_g verification."""
from __future__ import annotations

import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from tsdrop import rng as streams
from tsdrop._kernels import direct_chunk, thermo_chunk
from tsdrop.config import Backend, ConfigError, SimConfig
from tsdrop.learning import Dropout, InferenceMode, MaskMode, Sgd, WUpdate, keep_count
from tsdrop.metrics import detect_plateaus, detect_symmetry_break, singular_dwell
from tsdrop.model import (
    InputDist,
    StudentNetwork,
    TeacherKind,
    TeacherNetwork,
    make_student,
    make_teacher,
)
from tsdrop.orderparams import (
    CORRUPT,
    CorruptStateError,
    OrderParameters,
    analytic_generalization_error,
    measure,
    monte_carlo_generalization_error,
)
from tsdrop.rng import CounterRNG


@dataclass(frozen=True)
class TrajectoryRecord:
    t: float
    mse_window: float
    eg_analytic: float
    w: np.ndarray
    Q: np.ndarray  # upper triangle, row-major
    R: np.ndarray  # K x M

    @property
    def K(self) -> int:
        return self.w.shape[0]

    def Q_matrix(self) -> np.ndarray:
        K = self.K
        out = np.zeros((K, K))
        iu = np.triu_indices(K)
        out[iu] = self.Q
        out.T[iu] = self.Q
        return out

    def order_parameters(self, T: np.ndarray) -> OrderParameters:
        return OrderParameters(self.Q_matrix(), self.R, T)


@dataclass
class RunSummary:
    final_record: TrajectoryRecord
    plateaus: list[tuple[float, float, float]]
    symmetry_break_t: float | None
    singular_dwell: float | None
    diverged: bool = False
    diverged_step: int | None = None
    T: np.ndarray = field(default=None, repr=False)
    max_tracking_drift: float = 0.0

    def to_dict(self) -> dict:
        fr = self.final_record
        return {
            "final_record": {"t": fr.t, "mse_window": fr.mse_window, "eg_analytic": fr.eg_analytic,
                             "w": fr.w.tolist(), "Q": fr.Q.tolist(), "R": fr.R.tolist()},
            "plateaus": [list(p) for p in self.plateaus],
            "symmetry_break_t": self.symmetry_break_t,
            "singular_dwell": self.singular_dwell,
            "diverged": self.diverged,
            "diverged_step": self.diverged_step,
            "max_tracking_drift": self.max_tracking_drift,
        }


class _State:
    """Mutable buffers shared by the record loop and a compiled kernel."""

    def __init__(self, config: SimConfig, K: int, M: int):
        rule = config.rule
        self.dropout = isinstance(rule, Dropout) and rule.p < 1.0
        self.p = rule.keep_prob
        self.n_keep = keep_count(K, self.p)
        self.bernoulli = isinstance(rule, Dropout) and rule.mask_mode is MaskMode.BERNOULLI
        self.literal = isinstance(rule, Dropout) and rule.inference_mode is InferenceMode.PAPER_LITERAL
        self.w_literal = config.w_update is WUpdate.PAPER_LITERAL
        self.errs = np.zeros(config.window)
        self.prev_out = np.zeros(K)
        self.d, self.y = np.empty(M), np.empty(K)
        self.f, self.w_incr, self.w_prev = np.empty(K), np.empty(K), np.empty(K)
        self.selected = np.ones(K, dtype=np.bool_)
        self.order = np.empty(K, dtype=np.int64)


def limit_initial_state(config: SimConfig) -> tuple[OrderParameters, np.ndarray, np.ndarray]:
    """Initial (Q, R, T), w, v for the limit backend, without N-vectors.

    The Gram matrix of the teacher and student weight vectors is drawn from
    its exact finite-N Wishart law (Bartlett decomposition), so initial
    overlaps fluctuate at O(1/sqrt(N)) exactly as in the direct backend.
    """
    rng = CounterRNG(config.seed, streams.THERMO_INIT)
    M, K, N = config.M, config.K, config.N
    singular = config.teacher_kind is TeacherKind.SINGULAR
    n_teach = 1 if singular else M
    p = n_teach + K
    if p > N:
        raise ConfigError("N", f"limit backend needs N >= M + K, got N={N}")
    L = np.zeros((p, p))
    for i in range(p):
        L[i, i] = math.sqrt(float(np.sum(rng.normal(N - i) ** 2)))
        L[i, :i] = rng.normal(i)
    G = L @ L.T / N
    if config.orthonormalize and not singular:
        A = np.eye(p)
        A[:M, :M] = np.linalg.inv(np.linalg.cholesky(G[:M, :M]))
        G = A @ G @ A.T
    G = 0.5 * (G + G.T)
    T, R, Q = G[:n_teach, :n_teach], G[n_teach:, :n_teach], G[n_teach:, n_teach:]
    if singular:
        T = np.full((2, 2), T[0, 0])
        R = np.hstack([R, R])
    w = rng.normal(K) * math.sqrt(0.1)
    v = np.full(M, config.v_value)
    return OrderParameters(Q, R, T), w, v


def _record(m, config, state, Q, R, w, v, T) -> TrajectoryRecord:
    op = OrderParameters(Q, R, T)
    eg = analytic_generalization_error(op, v, state.p * w)
    if m == 0:
        mse = eg
    else:
        mse = float(np.mean(state.errs[:min(m, config.window)]))
    iu = np.triu_indices(Q.shape[0])
    return TrajectoryRecord(m / config.N, mse, eg, w.copy(), Q[iu].copy(), R.copy())


def _events(config: SimConfig, remeasure: bool):
    """Sorted step indices where the kernel must hand control back."""
    marks = set(range(config.sample_every, config.steps + 1, config.sample_every))
    marks.add(config.steps)
    if remeasure:
        marks.update(range(config.remeasure_every, config.steps, config.remeasure_every))
    marks.discard(0)
    return sorted(marks)


def run(config: SimConfig) -> tuple[list[TrajectoryRecord], RunSummary]:
    """Simulate ``config.steps`` online steps and sample the trajectory."""
    M, K, N = config.M, config.K, config.N
    state = _State(config, K, M)
    mask_key = streams.derive_key(config.seed, streams.MASK)
    drift = 0.0
    status, fail_step = 0, None
    if config.backend is Backend.DIRECT:
        teacher = make_teacher(M, N, config.teacher_kind, CounterRNG(config.seed, streams.TEACHER),
                               v_value=config.v_value, orthonormalize=config.orthonormalize)
        student = make_student(K, N, CounterRNG(config.seed, streams.STUDENT))
        op = measure(teacher, student)
        Q, R, T = op.Q.copy(), op.R.copy(), op.T
        w, v = student.w, teacher.v
        in_key = streams.derive_key(config.seed, streams.INPUT)
        xi = np.empty(N)
        rademacher = config.input_dist is InputDist.RADEMACHER

        def advance(m0, m1):
            return direct_chunk(student.J, w, teacher.B, v, Q, R, state.prev_out, state.errs,
                                in_key, mask_key, m0, m1, config.eta / N, rademacher,
                                state.dropout, state.p, state.n_keep, state.bernoulli, state.literal,
                                state.w_literal, xi, state.d, state.y, state.f, state.w_incr,
                                state.w_prev, state.selected, state.order)
    else:
        op, w, v = limit_initial_state(config)
        Q, R, T = op.Q.copy(), op.R.copy(), op.T.copy()
        step_key = streams.derive_key(config.seed, streams.THERMO_STEP)
        dim = M + K
        C, z = np.empty((dim, dim)), np.empty(dim)

        def advance(m0, m1):
            return thermo_chunk(Q, R, T, w, v, state.prev_out, state.errs, step_key, mask_key,
                                m0, m1, config.eta / N, config.eta, state.dropout, state.p,
                                state.n_keep, state.bernoulli, state.literal, state.w_literal,
                                C, z, state.d, state.y, state.f, state.w_incr, state.w_prev,
                                state.selected, state.order)

    direct = config.backend is Backend.DIRECT
    records = [_record(0, config, state, Q, R, w, v, T)]
    m = 0
    for mark in _events(config, direct):
        status, reached = advance(m, mark)
        if status != 0:
            fail_step = int(reached)
            break
        m = mark
        if direct and m % config.remeasure_every == 0:
            fresh = measure(teacher, student)
            drift = max(drift, float(np.abs(fresh.Q - Q).max()), float(np.abs(fresh.R - R).max()))
            Q[:], R[:] = fresh.Q, fresh.R
        if m % config.sample_every == 0 or m == config.steps:
            records.append(_record(m, config, state, Q, R, w, v, T))
    if status == CORRUPT:
        raise CorruptStateError(f"limit-state covariance lost PSD at step {fail_step}")
    summary = summarize(records, config, T)
    summary.max_tracking_drift = drift
    if fail_step is not None:
        summary.diverged = True
        summary.diverged_step = fail_step
    return records, summary


def summarize(records: list[TrajectoryRecord], config: SimConfig, T: np.ndarray) -> RunSummary:
    series = [(r.t, r.mse_window) for r in records]
    plateaus = detect_plateaus(series, config.slope_tol, config.min_duration) if len(series) >= 3 else []
    dwell = None
    if config.teacher_kind is TeacherKind.SINGULAR:
        dwell = singular_dwell([(r.t, r.R) for r in records], config.band)
    return RunSummary(records[-1], plateaus, detect_symmetry_break(series, config.drop_factor),
                      dwell, T=np.asarray(T))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SIM_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


METRICS = ("final_mse", "symmetry_break_t", "singular_dwell")


@dataclass
class CompareRow:
    seed: int
    base: dict
    variant: dict
    diff: dict


@dataclass
class CompareReport:
    rows: list[CompareRow]
    medians: dict  # metric -> {"base", "variant", "diff"}

    def to_dict(self) -> dict:
        return {"rows": [vars(r) for r in self.rows], "medians": self.medians}


def _metrics(summary: RunSummary) -> dict:
    return {"final_mse": summary.final_record.mse_window,
            "symmetry_break_t": summary.symmetry_break_t,
            "singular_dwell": summary.singular_dwell,
            "diverged": summary.diverged}


def _median(values):
    vals = [x for x in values if x is not None]
    return statistics.median(vals) if vals else None


def check_comparable(base: SimConfig, variant: SimConfig):
    if variant.with_(rule=base.rule) != base:
        diffs = [k for k, a in base.to_dict().items() if k != "rule" and variant.to_dict()[k] != a]
        raise ConfigError(diffs[0] if diffs else "rule", "compared configs may differ only in rule")


def compare(base: SimConfig, variant: SimConfig, seeds: list[int]) -> CompareReport:
    """Paired per-seed metrics for two configs that differ only in their rule."""
    check_comparable(base, variant)
    if len(seeds) < 3:
        raise ConfigError("seeds", "need at least 3 seeds")

    jobs = [c.with_(seed=s) for s in seeds for c in (base, variant)]
    results = _map(lambda cfg: _metrics(run(cfg)[1]), jobs)
    rows = []
    for k, s in enumerate(seeds):
        b, v = results[2 * k], results[2 * k + 1]
        diff = {m: (None if b[m] is None or v[m] is None else v[m] - b[m]) for m in METRICS}
        rows.append(CompareRow(s, b, v, diff))
    medians = {m: {"base": _median(r.base[m] for r in rows),
                   "variant": _median(r.variant[m] for r in rows),
                   "diff": _median(r.diff[m] for r in rows)} for m in METRICS}
    return CompareReport(rows, medians)


@dataclass
class VerifyTrial:
    index: int
    M: int
    K: int
    analytic: float
    mc_mean: float
    mc_stderr: float
    z: float
    passed: bool


@dataclass
class VerifyReport:
    trials: list[VerifyTrial]
    threshold: float

    @property
    def pass_count(self) -> int:
        return sum(t.passed for t in self.trials)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "pass_count": self.pass_count,
                "trials": [vars(t) for t in self.trials]}


def random_state(rng: CounterRNG, max_M: int, max_K: int, N: int = 400) -> tuple[OrderParameters, np.ndarray, np.ndarray]:
    """Order parameters of an actual random finite-N teacher/student pair.

    Student rows mix random teacher directions with fresh noise so that R
    and off-diagonal Q take non-trivial values; v and w are random.
    """
    M = 1 + int(rng.uniform()[0] * max_M)
    K = 1 + int(rng.uniform()[0] * max_K)
    singular = M == 2 and rng.uniform()[0] < 0.25
    teacher = make_teacher(M, N, TeacherKind.SINGULAR if singular else TeacherKind.ORTHOGONAL, rng)
    mixing = rng.normal((K, M)) * rng.uniform()[0] * 1.5
    noise = rng.normal((K, N)) / math.sqrt(N) * (0.1 + 1.4 * rng.uniform()[0])
    student = StudentNetwork(mixing @ teacher.B + noise, rng.normal(K))
    teacher = TeacherNetwork(teacher.B, rng.normal(M), teacher.kind)
    return measure(teacher, student), teacher.v, student.w


def verify_generalization_error(trials: int, max_M: int, max_K: int, samples: int, seed: int, *,
                                N: int = 400, perfect: bool = False, threshold: float = 5.0) -> VerifyReport:
    """Compare analytic and Monte-Carlo eps_g on random valid states.

    With ``perfect`` every trial uses a student cloned from its teacher.
    """
    if trials < 1:
        raise ValueError("need at least one trial")

    def one(i):
        rng = CounterRNG(seed, streams.VERIFY + 16 * (i + 1))
        if perfect:
            M = 1 + int(rng.uniform()[0] * max_M)
            teacher = make_teacher(M, N, TeacherKind.ORTHOGONAL, rng)
            student = StudentNetwork(np.array(teacher.B), np.array(teacher.v))
            op, v, w = measure(teacher, student), teacher.v, student.w
        else:
            op, v, w = random_state(rng, max_M, max_K, N)
        rep = monte_carlo_generalization_error(op, v, w, samples, rng.spawn(streams.MONTE_CARLO + 16 * (i + 1)))
        z = rep.z
        return VerifyTrial(i, op.M, op.K, rep.analytic, float(rep.mc_mean), rep.mc_stderr, z,
                           bool(abs(z) <= threshold))

    return VerifyReport(_map(one, list(range(trials))), threshold)


PAPER_N = 1000
PAPER_ETA = 0.005
PAPER_STEPS = 100_000 * PAPER_N

FIGURES = {
    "fig2": dict(M=2, K=2, teacher_kind=TeacherKind.ORTHOGONAL, rule=Sgd()),
    "fig3": dict(M=2, K=4, teacher_kind=TeacherKind.ORTHOGONAL, rule=Sgd()),
    "fig4": dict(M=2, K=4, teacher_kind=TeacherKind.ORTHOGONAL, rule=Dropout(0.5)),
    "fig5": dict(M=2, K=4, teacher_kind=TeacherKind.SINGULAR, rule=Sgd()),
    "fig6": dict(M=2, K=4, teacher_kind=TeacherKind.SINGULAR, rule=Dropout(0.5)),
}


def scenario(name: str, seed: int = 0, **overrides) -> SimConfig:
    """Figure setting by name (fig2..fig6) at N=1000, eta=0.005, t up to 1e5."""
    if name not in FIGURES:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(FIGURES)}")
    params = dict(N=PAPER_N, eta=PAPER_ETA, steps=PAPER_STEPS, seed=seed, **FIGURES[name])
    params.update(overrides)
    return SimConfig(**params)


def scenario_grid(seed: int = 0, **overrides) -> dict[str, SimConfig]:
    """Every (M, K) x teacher kind x rule combination used in the figures."""
    out = {}
    for K in (2, 4):
        for kind in TeacherKind:
            for rule in (Sgd(), Dropout(0.5)):
                name = f"M2_K{K}_{kind.value}_{'sgd' if isinstance(rule, Sgd) else 'dropout'}"
                params = dict(M=2, K=K, N=PAPER_N, eta=PAPER_ETA, steps=PAPER_STEPS, seed=seed,
                              teacher_kind=kind, rule=rule)
                params.update(overrides)
                out[name] = SimConfig(**params)
    return out

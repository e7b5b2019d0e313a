"""Order parameters Q, R, T and the generalization error they determine.

Also hosts the thermodynamic-limit backend: in the N -> infinity limit the
inner potentials (d, y) of a fresh input are jointly Gaussian with covariance

    C = [[T, R^T],
         [R, Q  ]]

so the state can be advanced by sampling (d, y) directly, without ever
holding N-dimensional weight vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from tsdrop.learning import (
    DivergenceError,
    Dropout,
    MaskMode,
    StepStats,
    WUpdate,
    g,
    g_prime,
    keep_count,
    mask_core,
)
from tsdrop.model import StudentNetwork, TeacherNetwork, activation
from tsdrop.rng import CounterRNG, fill_normal

PSD_TOL = 1e-9
REJECT_TOL = 1e-6
CLAMP_BELOW = 1e-10
ASIN_TOL = 1e-9
Z_FLOOR = 1e-14

# status codes shared with the compiled kernels
OK = 0
DIVERGED = 1
CORRUPT = 2


class CorruptStateError(ValueError):
    """Order parameters violate positive semidefiniteness beyond tolerance."""


@dataclass(frozen=True)
class OrderParameters:
    Q: np.ndarray
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R", "T"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        K, M = self.R.shape
        if self.Q.shape != (K, K) or self.T.shape != (M, M):
            raise ValueError(f"inconsistent shapes Q{self.Q.shape} R{self.R.shape} T{self.T.shape}")

    @property
    def K(self) -> int:
        return self.Q.shape[0]

    @property
    def M(self) -> int:
        return self.T.shape[0]

    def block(self) -> np.ndarray:
        return np.block([[self.T, self.R.T], [self.R, self.Q]])

    def violations(self, tol: float = PSD_TOL) -> list[str]:
        """Human-readable list of broken invariants (empty when all hold)."""
        problems = []
        if not np.array_equal(self.Q, self.Q.T):
            problems.append("Q not symmetric")
        if not np.array_equal(self.T, self.T.T):
            problems.append("T not symmetric")
        C = self.block()
        lam_min = np.linalg.eigvalsh(0.5 * (C + C.T)).min()
        if lam_min < -tol:
            problems.append(f"block matrix has eigenvalue {lam_min:.3e}")
        cs = self.R ** 2 - np.outer(np.diag(self.Q), np.diag(self.T))
        if cs.max() > tol:
            problems.append(f"Cauchy-Schwarz violated by {cs.max():.3e}")
        return problems


@dataclass(frozen=True)
class GenErrorReport:
    analytic: float
    mc_mean: float
    mc_stderr: float
    samples: int

    @property
    def z(self) -> float:
        diff = self.analytic - self.mc_mean
        # differences at round-off level carry no statistical information
        if abs(diff) <= Z_FLOOR:
            return 0.0
        if self.mc_stderr == 0.0:
            return math.inf
        return diff / self.mc_stderr


def measure(teacher: TeacherNetwork, student: StudentNetwork) -> OrderParameters:
    if teacher.N != student.N:
        raise ValueError(f"teacher has N={teacher.N}, student has N={student.N}")
    J, B = student.J, teacher.B
    Q = J @ J.T
    T = B @ B.T
    # exact symmetry regardless of BLAS summation order
    Q = np.triu(Q) + np.triu(Q, 1).T
    T = np.triu(T) + np.triu(T, 1).T
    return OrderParameters(Q, J @ B.T, T)


def _arcsin_terms(cross, diag_a, diag_b):
    arg = cross / np.sqrt(np.outer(1.0 + diag_a, 1.0 + diag_b))
    over = np.abs(arg) - 1.0
    if over.max(initial=-1.0) > ASIN_TOL:
        raise CorruptStateError(f"arcsin argument {np.abs(arg).max():.12f} outside [-1, 1]")
    return np.arcsin(np.clip(arg, -1.0, 1.0))


def analytic_generalization_error(op: OrderParameters, v, w) -> float:
    """Closed-form eps_g for the erf(x/sqrt2) two-layer network.

    eps_g = (1/pi) [ sum_nm v_n v_m asin(T_nm / sqrt((1+T_nn)(1+T_mm)))
                   + sum_ij w_i w_j asin(Q_ij / sqrt((1+Q_ii)(1+Q_jj)))
                   - 2 sum_in w_i v_n asin(R_in / sqrt((1+Q_ii)(1+T_nn))) ]
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != (op.M,) or w.shape != (op.K,):
        raise ValueError(f"weights v{v.shape}, w{w.shape} do not match M={op.M}, K={op.K}")
    qd, td = np.diag(op.Q), np.diag(op.T)
    tt = v @ _arcsin_terms(op.T, td, td) @ v
    ss = w @ _arcsin_terms(op.Q, qd, qd) @ w
    st = w @ _arcsin_terms(op.R, qd, td) @ v
    return float((tt + ss - 2.0 * st) / math.pi)


def assemble_covariance(op: OrderParameters) -> tuple[np.ndarray, np.ndarray]:
    """Block covariance of (d, y) and a factor F with C = F F^T.

    Uses an eigendecomposition so rank-deficient states (singular teacher)
    are sampled exactly; eigenvalues below 1e-10 are treated as zero.
    """
    C = op.block()
    C = 0.5 * (C + C.T)
    lam, V = np.linalg.eigh(C)
    if lam.min() < -REJECT_TOL:
        raise CorruptStateError(f"covariance has eigenvalue {lam.min():.3e} < -{REJECT_TOL}")
    lam = np.where(lam < CLAMP_BELOW, 0.0, lam)
    return C, V * np.sqrt(lam)


def sample_potentials(op: OrderParameters, n: int, rng: CounterRNG) -> tuple[np.ndarray, np.ndarray]:
    """Draw n joint samples; returns (d of shape (n, M), y of shape (n, K))."""
    _, F = assemble_covariance(op)
    z = rng.normal((n, op.M + op.K))
    x = z @ F.T
    return x[:, :op.M], x[:, op.M:]


def monte_carlo_generalization_error(op: OrderParameters, v, w, samples: int,
                                     rng: CounterRNG, *, chunk: int = 1 << 16) -> GenErrorReport:
    if samples < 2:
        raise ValueError("need at least two samples")
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    analytic = analytic_generalization_error(op, v, w)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        d, y = sample_potentials(op, n, rng)
        e = 0.5 * (activation(d) @ v - activation(y) @ w) ** 2
        total += e.sum()
        total_sq += (e * e).sum()
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return GenErrorReport(analytic, mean, math.sqrt(var / samples), samples)


def incremental_update(op: OrderParameters, stats: StepStats, eta: float, N: int) -> OrderParameters:
    """Exact Q, R after the rank-one update J_i += (eta/N) f_i xi."""
    s = eta / N
    f, y, d = stats.f, stats.y, stats.d
    R = op.R + s * np.outer(f, d)
    fy = np.outer(f, y)
    Q = op.Q + s * (fy + fy.T) + s * s * stats.norm_sq * np.outer(f, f)
    return OrderParameters(Q, R, op.T)


@nb.njit(nogil=True, cache=True)
def thermo_core(Q, R, T, w, v, key, counter, scale, eta, selected, w_literal,
                C, z, d, y, f, w_incr):
    """One thermodynamic-limit step in place.

    Returns (status, delta, next_counter). ``scale`` is eta / N, so the
    (eta/N)^2 |xi|^2 term of Q becomes scale * eta * f_i f_j.
    """
    M = T.shape[0]
    K = Q.shape[0]
    for a in range(M):
        for b in range(M):
            C[a, b] = T[a, b]
    for i in range(K):
        for n in range(M):
            C[M + i, n] = R[i, n]
            C[n, M + i] = R[i, n]
        for j in range(K):
            C[M + i, M + j] = Q[i, j]
    lam, V = np.linalg.eigh(C)
    if lam[0] < -1e-6:
        return 2, 0.0, counter
    if lam[0] < -1e-10:
        # project the student blocks back onto the PSD cone
        for a in range(lam.shape[0]):
            if lam[a] < 0.0:
                lam[a] = 0.0
        P = (V * lam) @ V.T
        for i in range(K):
            for n in range(M):
                R[i, n] = 0.5 * (P[M + i, n] + P[n, M + i])
            for j in range(K):
                Q[i, j] = 0.5 * (P[M + i, M + j] + P[M + j, M + i])
    nxt = fill_normal(key, counter, z)
    for a in range(lam.shape[0]):
        lam[a] = math.sqrt(lam[a]) if lam[a] >= 1e-10 else 0.0
    for r in range(M + K):
        acc = 0.0
        for a in range(M + K):
            acc += V[r, a] * lam[a] * z[a]
        if r < M:
            d[r] = acc
        else:
            y[r - M] = acc
    t_out = 0.0
    for n in range(M):
        t_out += v[n] * g(d[n])
    s_out = 0.0
    for i in range(K):
        if selected[i]:
            s_out += w[i] * g(y[i])
    delta = t_out - s_out
    if not math.isfinite(delta):
        return 1, delta, nxt
    for i in range(K):
        if selected[i]:
            f[i] = delta * w[i] * g_prime(y[i])
            if w_literal:
                w_incr[i] = scale * delta * y[i]
            else:
                w_incr[i] = scale * delta * g(y[i])
        else:
            f[i] = 0.0
            w_incr[i] = 0.0
    for i in range(K):
        for n in range(M):
            R[i, n] += scale * (f[i] * d[n])
    for i in range(K):
        for j in range(i, K):
            inc = scale * (f[i] * y[j] + f[j] * y[i]) + scale * eta * f[i] * f[j]
            Q[i, j] += inc
            if j != i:
                Q[j, i] = Q[i, j]
    for i in range(K):
        w[i] += w_incr[i]
    return 0, delta, nxt


def thermo_limit_step(op: OrderParameters, w, v, eta: float, rule, rng: CounterRNG, *,
                      N: int = 1000, w_update=WUpdate.GRADIENT) -> tuple[OrderParameters, np.ndarray]:
    """Advance the limit-state by one step (time 1/N); inputs are not materialized.

    The joint potentials are drawn from ``rng`` first, then (for dropout)
    the mask from the same generator.
    """
    Q, R, T = op.Q.copy(), op.R.copy(), op.T.copy()
    w = np.array(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    K, M = op.K, op.M
    dim = M + K
    z = np.empty(dim)
    start = rng.counter
    after_z = fill_normal(rng.key, start, z)
    selected = np.ones(K, dtype=np.bool_)
    if isinstance(rule, Dropout) and rule.p < 1.0:
        rng.counter = mask_core(rng.key, after_z, rule.p, keep_count(K, rule.p),
                                rule.mask_mode is MaskMode.BERNOULLI,
                                np.empty(K, dtype=np.int64), selected)
    else:
        rng.counter = after_z
    status, _, _ = thermo_core(Q, R, T, w, v, rng.key, start, eta / N, eta, selected,
                               WUpdate(w_update) is WUpdate.PAPER_LITERAL,
                               np.empty((dim, dim)), z, np.empty(M), np.empty(K), np.empty(K), np.empty(K))
    if status == CORRUPT:
        raise CorruptStateError("order-parameter covariance lost positive semidefiniteness")
    if status == DIVERGED:
        raise DivergenceError("non-finite error signal in limit step")
    return OrderParameters(Q, R, T), w

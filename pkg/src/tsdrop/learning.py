"""Online SGD and dropout learning rules for the two-layer student.

The per-step arithmetic lives in numba-compiled cores shared by the
Python-level operations here and by the run kernels, so a single step taken
through ``sgd_step`` is bit-identical to the same step inside a long run.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from tsdrop.model import InputSample, StudentNetwork, TeacherNetwork, activation
from tsdrop.rng import CounterRNG, uniform_at

INV_SQRT2 = 1.0 / math.sqrt(2.0)
DERIV_AT_ZERO = math.sqrt(2.0 / math.pi)


class WUpdate(str, enum.Enum):
    GRADIENT = "gradient"
    PAPER_LITERAL = "paper_literal"


class MaskMode(str, enum.Enum):
    FIXED_SIZE = "fixed_size"
    BERNOULLI = "bernoulli"


class InferenceMode(str, enum.Enum):
    RESCALED = "rescaled"
    PAPER_LITERAL = "paper_literal"


class DivergenceError(FloatingPointError):
    """A learning step produced a non-finite value."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class Sgd:
    """Plain online gradient descent on all hidden units."""

    @property
    def keep_prob(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Dropout:
    p: float = 0.5
    mask_mode: MaskMode = MaskMode.FIXED_SIZE
    inference_mode: InferenceMode = InferenceMode.RESCALED

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"dropout keep probability p must lie in (0, 1], got {self.p}")
        object.__setattr__(self, "mask_mode", MaskMode(self.mask_mode))
        object.__setattr__(self, "inference_mode", InferenceMode(self.inference_mode))

    @property
    def keep_prob(self) -> float:
        return self.p


@dataclass(frozen=True)
class DropoutMask:
    selected: np.ndarray
    keep_prob: float

    def __post_init__(self):
        sel = np.array(self.selected, dtype=np.bool_)
        sel.setflags(write=False)
        object.__setattr__(self, "selected", sel)
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep probability must lie in (0, 1], got {self.keep_prob}")

    @classmethod
    def full(cls, K: int) -> "DropoutMask":
        return cls(np.ones(K, dtype=np.bool_), 1.0)

    @property
    def K(self) -> int:
        return self.selected.shape[0]


@dataclass(frozen=True)
class StepStats:
    delta: float
    d: np.ndarray
    y: np.ndarray
    f: np.ndarray
    w_incr: np.ndarray
    mask: DropoutMask
    norm_sq: float


def keep_count(K: int, p: float) -> int:
    """round(p K) with halves rounded up, never below one unit."""
    return max(1, min(K, int(math.floor(p * K + 0.5))))


@nb.njit(inline="always")
def g(x):
    return math.erf(x * INV_SQRT2)


@nb.njit(inline="always")
def g_prime(x):
    return DERIV_AT_ZERO * math.exp(-0.5 * x * x)


@nb.njit(nogil=True, cache=True)
def potentials_into(W, xi, out):
    n = xi.shape[0]
    for r in range(W.shape[0]):
        acc = 0.0
        for k in range(n):
            acc += W[r, k] * xi[k]
        out[r] = acc


@nb.njit(nogil=True, cache=True)
def step_core(J, w, B, v, xi, scale, selected, w_literal, d, y, f, w_incr):
    """One learning step in place; returns the error signal.

    Unselected units get f = 0, w_incr = 0 and are left untouched.
    ``scale`` is eta / N.
    """
    potentials_into(B, xi, d)
    potentials_into(J, xi, y)
    t_out = 0.0
    for n in range(d.shape[0]):
        t_out += v[n] * g(d[n])
    s_out = 0.0
    for i in range(y.shape[0]):
        if selected[i]:
            s_out += w[i] * g(y[i])
    delta = t_out - s_out
    n_in = xi.shape[0]
    for i in range(y.shape[0]):
        if selected[i]:
            f[i] = delta * w[i] * g_prime(y[i])
            if w_literal:
                w_incr[i] = scale * delta * y[i]
            else:
                w_incr[i] = scale * delta * g(y[i])
        else:
            f[i] = 0.0
            w_incr[i] = 0.0
    for i in range(y.shape[0]):
        if selected[i]:
            coef = scale * f[i]
            for k in range(n_in):
                J[i, k] += coef * xi[k]
            w[i] += w_incr[i]
    return delta


@nb.njit(nogil=True, cache=True)
def mask_core(key, counter, p, n_keep, bernoulli, order, selected):
    """Draw a mask into ``selected``; returns the next counter.

    Fixed size: partial Fisher-Yates over unit indices, one uniform per slot.
    Bernoulli: one uniform per unit, whole vector redrawn while empty.
    """
    K = selected.shape[0]
    c = np.uint64(counter)
    if bernoulli:
        while True:
            count = 0
            for i in range(K):
                sel = uniform_at(key, c) < p
                c += np.uint64(1)
                selected[i] = sel
                if sel:
                    count += 1
            if count > 0:
                return c
    for i in range(K):
        order[i] = i
        selected[i] = False
    for j in range(n_keep):
        r = j + int(uniform_at(key, c) * (K - j))
        c += np.uint64(1)
        if r >= K:
            r = K - 1
        tmp = order[j]
        order[j] = order[r]
        order[r] = tmp
        selected[order[j]] = True
    return c


def draw_mask(K: int, p: float, mode=MaskMode.FIXED_SIZE, rng: CounterRNG | None = None) -> DropoutMask:
    if not 0.0 < p <= 1.0:
        raise ValueError(f"keep probability must lie in (0, 1], got {p}")
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    mode = MaskMode(mode)
    if p == 1.0:
        return DropoutMask.full(K)
    selected = np.empty(K, dtype=np.bool_)
    order = np.empty(K, dtype=np.int64)
    rng.counter = mask_core(rng.key, rng.counter, p, keep_count(K, p),
                            mode is MaskMode.BERNOULLI, order, selected)
    return DropoutMask(selected, p)


def _check_dims(student: StudentNetwork, teacher: TeacherNetwork, sample: InputSample):
    if not (student.N == teacher.N == sample.N):
        raise ValueError(f"input sizes disagree: student {student.N}, teacher {teacher.N}, input {sample.N}")


def _apply(student, teacher, sample, eta, mask, w_update) -> StepStats:
    _check_dims(student, teacher, sample)
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    if mask.K != student.K:
        raise ValueError(f"mask has {mask.K} units, student has {student.K}")
    K, M = student.K, teacher.M
    d, y = np.empty(M), np.empty(K)
    f, w_incr = np.empty(K), np.empty(K)
    J_old, w_old = student.J.copy(), student.w.copy()
    delta = step_core(student.J, student.w, teacher.B, teacher.v, sample.xi, eta / sample.N,
                      mask.selected, WUpdate(w_update) is WUpdate.PAPER_LITERAL, d, y, f, w_incr)
    if not (math.isfinite(delta) and np.all(np.isfinite(student.w)) and np.all(np.isfinite(y))
            and np.all(np.isfinite(student.J))):
        student.J[:], student.w[:] = J_old, w_old
        raise DivergenceError(f"non-finite value in learning step (delta={delta})")
    return StepStats(delta, d, y, f, w_incr, mask, sample.norm_sq)


def sgd_step(student: StudentNetwork, teacher: TeacherNetwork, sample: InputSample, eta: float,
             *, w_update=WUpdate.GRADIENT) -> StepStats:
    """Plain online gradient step on every hidden unit (mutates ``student``)."""
    return _apply(student, teacher, sample, eta, DropoutMask.full(student.K), w_update)


def dropout_step(student: StudentNetwork, teacher: TeacherNetwork, sample: InputSample, eta: float,
                 mask: DropoutMask, *, w_update=WUpdate.GRADIENT) -> StepStats:
    """Gradient step on the masked sub-network only.

    The error signal sums the student output over selected units, without
    1/p rescaling. Unselected rows of J and entries of w stay bit-identical.
    """
    return _apply(student, teacher, sample, eta, mask, w_update)


def dropout_inference(student: StudentNetwork, mask: DropoutMask, sample: InputSample,
                      prev_outputs=None, mode=InferenceMode.RESCALED) -> float:
    """Evaluation output of a dropout-trained student.

    RESCALED: p * sum_i w_i g(y_i) on the current input.
    PAPER_LITERAL: p * (sum over selected of w_i g(y_i) on the current input
    + sum over dropped of w_j * prev_outputs_j), prev_outputs holding the
    hidden outputs cached at the previous step.
    """
    if student.N != sample.N:
        raise ValueError(f"student has N={student.N}, input has N={sample.N}")
    if mask.K != student.K:
        raise ValueError(f"mask has {mask.K} units, student has {student.K}")
    hidden = activation(student.J @ sample.xi)
    p = mask.keep_prob
    if InferenceMode(mode) is InferenceMode.RESCALED:
        return float(p * np.dot(student.w, hidden))
    prev = np.asarray(prev_outputs, dtype=np.float64)
    if prev.shape != (student.K,):
        raise ValueError(f"prev_outputs must have length {student.K}")
    mixed = np.where(mask.selected, hidden, prev)
    return float(p * np.dot(student.w, mixed))


def squared_error(t_out: float, s_out: float) -> float:
    return 0.5 * (t_out - s_out) ** 2

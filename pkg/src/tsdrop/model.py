"""Teacher and student two-layer networks, activation, inputs, forward pass."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from tsdrop.rng import CounterRNG

SQRT2 = math.sqrt(2.0)
DERIV_AT_ZERO = math.sqrt(2.0 / math.pi)

TEACHER_OUT_WEIGHT = 0.5
STUDENT_W_VARIANCE = 0.1


class TeacherKind(str, enum.Enum):
    ORTHOGONAL = "orthogonal"
    SINGULAR = "singular"


class InputDist(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"


def activation(x):
    """g(x) = erf(x / sqrt(2)). Works elementwise on arrays."""
    return erf(np.divide(x, SQRT2))


def activation_deriv(x):
    """g'(x) = sqrt(2/pi) exp(-x^2 / 2)."""
    return DERIV_AT_ZERO * np.exp(-0.5 * np.square(x))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TeacherNetwork:
    B: np.ndarray
    v: np.ndarray
    kind: TeacherKind = TeacherKind.ORTHOGONAL

    def __post_init__(self):
        object.__setattr__(self, "B", _freeze(self.B))
        object.__setattr__(self, "v", _freeze(self.v))
        if self.B.ndim != 2 or self.v.shape != (self.B.shape[0],):
            raise ValueError(f"teacher shapes disagree: B {self.B.shape}, v {self.v.shape}")

    @property
    def M(self) -> int:
        return self.B.shape[0]

    @property
    def N(self) -> int:
        return self.B.shape[1]


@dataclass
class StudentNetwork:
    J: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.J = np.array(self.J, dtype=np.float64, order="C")
        self.w = np.array(self.w, dtype=np.float64)
        if self.J.ndim != 2 or self.w.shape != (self.J.shape[0],):
            raise ValueError(f"student shapes disagree: J {self.J.shape}, w {self.w.shape}")

    @property
    def K(self) -> int:
        return self.J.shape[0]

    @property
    def N(self) -> int:
        return self.J.shape[1]

    def copy(self) -> "StudentNetwork":
        return StudentNetwork(self.J.copy(), self.w.copy())


@dataclass(frozen=True)
class InputSample:
    xi: np.ndarray
    norm_sq: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "xi", _freeze(self.xi))
        object.__setattr__(self, "norm_sq", float(np.dot(self.xi, self.xi)))

    @property
    def N(self) -> int:
        return self.xi.shape[0]


def make_teacher(M: int, N: int, kind=TeacherKind.ORTHOGONAL, rng: CounterRNG | None = None,
                 *, v_value: float = TEACHER_OUT_WEIGHT, orthonormalize: bool = False) -> TeacherNetwork:
    """Draw B with i.i.d. N(0, 1/N) entries (row-major); v is constant.

    A singular teacher draws one row and copies it into both rows.
    ``orthonormalize`` applies Gram-Schmidt to the rows (orthogonal kind only).
    """
    kind = TeacherKind(kind)
    if M < 1 or N < 1:
        raise ValueError(f"need M >= 1 and N >= 1, got M={M}, N={N}")
    if rng is None:
        raise ValueError("make_teacher needs a generator")
    if kind is TeacherKind.SINGULAR:
        if M != 2:
            raise ValueError(f"singular teacher requires M=2, got M={M}")
        row = rng.normal(N) / math.sqrt(N)
        B = np.vstack([row, row])
    else:
        B = rng.normal((M, N)) / math.sqrt(N)
        if orthonormalize:
            if M > N:
                raise ValueError("cannot orthonormalize more rows than columns")
            q, r = np.linalg.qr(B.T)
            B = (q * np.sign(np.diag(r))).T
    return TeacherNetwork(B, np.full(M, float(v_value)), kind)


def make_student(K: int, N: int, rng: CounterRNG | None = None) -> StudentNetwork:
    """J entries N(0, 1/N) then w entries N(0, 0.1), drawn in that order."""
    if K < 1 or N < 1:
        raise ValueError(f"need K >= 1 and N >= 1, got K={K}, N={N}")
    if rng is None:
        raise ValueError("make_student needs a generator")
    J = rng.normal((K, N)) / math.sqrt(N)
    w = rng.normal(K) * math.sqrt(STUDENT_W_VARIANCE)
    return StudentNetwork(J, w)


def sample_input(N: int, dist=InputDist.GAUSSIAN, rng: CounterRNG | None = None) -> InputSample:
    if N < 1:
        raise ValueError(f"need N >= 1, got {N}")
    if InputDist(dist) is InputDist.RADEMACHER:
        return InputSample(rng.rademacher(N))
    return InputSample(rng.normal(N))


def inner_potentials(W: np.ndarray, sample: InputSample) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != sample.N:
        raise ValueError(f"weight matrix {W.shape} does not match input of length {sample.N}")
    return W @ sample.xi


def forward(out_weights, potentials) -> float:
    out_weights = np.asarray(out_weights, dtype=np.float64)
    potentials = np.asarray(potentials, dtype=np.float64)
    if out_weights.shape != potentials.shape:
        raise ValueError(f"length mismatch: {out_weights.shape} vs {potentials.shape}")
    return float(np.dot(out_weights, activation(potentials)))

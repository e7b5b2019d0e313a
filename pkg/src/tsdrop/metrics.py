"""Derived metrics over sampled trajectories."""
from __future__ import annotations

import numpy as np

TINY = 1e-300


def windowed_mse(errors, window: int) -> np.ndarray:
    """Trailing mean over ``window`` entries; the prefix averages what exists."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("empty error series")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    csum = np.concatenate([[0.0], np.cumsum(errors)])
    idx = np.arange(1, errors.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def _split(series):
    t = np.asarray([p[0] for p in series], dtype=np.float64)
    x = np.asarray([p[1] for p in series], dtype=np.float64)
    return t, x


def detect_plateaus(series, slope_tol: float = 1e-5, min_duration: float = 200.0,
                    fit_points: int = 5) -> list[tuple[float, float, float]]:
    """Maximal flat stretches of a positive (t, value) series.

    A window of ``fit_points`` consecutive samples is flat when the
    least-squares slope of log(value) against t has magnitude at most
    ``slope_tol``. Plateaus are unions of overlapping flat windows lasting at
    least ``min_duration``; each is reported as (t_start, t_end, mean level).
    """
    t, x = _split(series)
    if t.size < 3:
        raise ValueError("need at least 3 points to detect plateaus")
    if np.any(np.diff(t) < 0):
        raise ValueError("series must be sorted by t")
    k = min(fit_points, t.size)
    logx = np.log(np.maximum(x, TINY))
    covered = np.zeros(t.size, dtype=bool)
    for s in range(t.size - k + 1):
        tt = t[s:s + k]
        yy = logx[s:s + k]
        tc = tt - tt.mean()
        denom = np.dot(tc, tc)
        slope = 0.0 if denom == 0 else np.dot(tc, yy - yy.mean()) / denom
        if abs(slope) <= slope_tol:
            covered[s:s + k] = True
    out = []
    i = 0
    while i < t.size:
        if not covered[i]:
            i += 1
            continue
        j = i
        while j + 1 < t.size and covered[j + 1]:
            j += 1
        if t[j] - t[i] >= min_duration:
            out.append((float(t[i]), float(t[j]), float(x[i:j + 1].mean())))
        i = j + 1
    return out


def detect_symmetry_break(series, drop_factor: float = 0.5, *, lookback: int = 10,
                          smooth: int = 1, flat_tol: float = 0.5) -> float | None:
    """Earliest t where the error falls below ``drop_factor`` x the preceding plateau.

    The preceding plateau is the ``lookback`` samples before the trailing
    ``smooth``-sample window; it only counts as a plateau when its relative
    range (max - min) / mean is at most ``flat_tol``.
    """
    t, x = _split(series)
    if t.size == 0:
        raise ValueError("empty series")
    for k in range(lookback + smooth - 1, t.size):
        recent = x[k - smooth + 1:k + 1].mean()
        prior = x[k - smooth + 1 - lookback:k - smooth + 1]
        level = prior.mean()
        if level <= 0:
            continue
        if (prior.max() - prior.min()) / level > flat_tol:
            continue
        if recent < drop_factor * level:
            return float(t[k])
    return None


def singular_dwell(R_series, band: tuple[float, float] = (0.8, 0.98)) -> float:
    """Time max |R_in| spends inside ``band`` before first exceeding its top.

    Each sample interval [t_k, t_k+1) is attributed to the value at t_k.
    When the top of the band is never exceeded the whole series duration is
    returned (the run never escaped).
    """
    lo, hi = band
    if not 0 < lo < hi < 1:
        raise ValueError(f"need 0 < lo < hi < 1, got {band}")
    if len(R_series) == 0:
        raise ValueError("empty series")
    t = np.asarray([p[0] for p in R_series], dtype=np.float64)
    peak = np.asarray([np.max(np.abs(p[1])) for p in R_series])
    above = np.nonzero(peak > hi)[0]
    if above.size == 0:
        return float(t[-1] - t[0])
    stop = above[0]
    inside = (peak[:stop] >= lo) & (peak[:stop] <= hi)
    return float(np.sum(np.diff(t[:stop + 1])[inside]))

"""Friedman's variable-span super smoother.

The running smoother here is a local-linear fit over a window of a fixed
number of neighbours; at the ends of the series the window is shifted so it
keeps its size. Sums are accumulated per window with the abscissa centred on
the target point, which keeps exact lines exact to rounding even for long
series.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

PRIMARY_SPANS = (0.05, 0.2, 0.5)
MIN_POINTS = 10


class SmoothResult(NamedTuple):
    values: np.ndarray
    passthrough: bool


def window_size(span: float, n: int) -> int:
    half = int(0.5 * span * n + 0.5)
    return int(min(max(2 * half + 1, 3), n))


def running_line(x, y, span: float, cv: bool = False) -> np.ndarray:
    """Local-linear running smooth of `y` against sorted `x`.

    Parameters
    ----------
    x, y : array_like
        Abscissa (non-decreasing) and ordinates, same length.
    span : float
        Window size as a fraction of the number of points.
    cv : bool
        If True, return leave-one-out fits: each point is dropped from its
        own window before the line is fitted.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    j = window_size(span, n)
    idx = np.arange(n)
    lo = np.clip(idx - j // 2, 0, n - j)

    s_dx = np.zeros(n)
    s_dxx = np.zeros(n)
    s_y = np.zeros(n)
    s_dxy = np.zeros(n)
    for k in range(j):
        pos = lo + k
        dx = x[pos] - x
        yk = y[pos]
        s_dx += dx
        s_dxx += dx * dx
        s_y += yk
        s_dxy += dx * yk

    count = np.full(n, float(j))
    if cv:
        # the point itself sits at dx = 0, so only the count and s_y change
        count -= 1.0
        s_y = s_y - y
    mean_dx = s_dx / count
    mean_y = s_y / count
    var = s_dxx - count * mean_dx * mean_dx
    cov = s_dxy - count * mean_dx * mean_y
    scale = np.maximum(np.abs(s_dxx), 1e-300)
    flat = var <= 1e-12 * scale
    slope = np.where(flat, 0.0, cov / np.where(flat, 1.0, var))
    return mean_y - slope * mean_dx


def super_smooth(y, x=None, spans: Sequence[float] = PRIMARY_SPANS) -> SmoothResult:
    """Variable-span smooth of an ordered series.

    Three running lines (tweeter, midrange, woofer spans) are fitted with
    leave-one-out residuals. Their absolute residuals are smoothed with the
    midrange span and the best span is picked per point; the picked spans
    are themselves smoothed with the midrange span, the three fixed-span
    smooths are interpolated at the resulting span, and the interpolated
    curve gets a final tweeter-span pass.

    Parameters
    ----------
    y : array_like
        Ordered values with no missing entries.
    x : array_like, optional
        Abscissa (e.g. day ordinals); defaults to ``0..n-1``.
    spans : sequence of three floats
        Tweeter, midrange and woofer spans as fractions of n.

    Returns
    -------
    SmoothResult
        ``values`` holds one smoothed value per input; ``passthrough`` is
        True when fewer than 10 values were given and `y` was returned as is.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < MIN_POINTS:
        return SmoothResult(y.copy(), True)
    x = np.arange(n, dtype=float) if x is None else np.asarray(x, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    spans = np.sort(np.asarray(spans, dtype=float))
    if spans.size != 3 or spans[0] <= 0 or spans[-1] > 1:
        raise ValueError("spans must be three fractions in (0, 1]")
    tweeter, mid, woofer = spans

    fits = np.array([running_line(x, y, s) for s in spans])
    resid = np.abs(np.array([running_line(x, y, s, cv=True) for s in spans]) - y)
    smoothed_resid = np.array([running_line(x, r, mid) for r in resid])
    best = spans[np.argmin(smoothed_resid, axis=0)]
    best = np.clip(running_line(x, best, mid), tweeter, woofer)

    low = best <= mid
    f_low = (best - tweeter) / (mid - tweeter)
    f_high = (best - mid) / (woofer - mid)
    blended = np.where(
        low,
        (1.0 - f_low) * fits[0] + f_low * fits[1],
        (1.0 - f_high) * fits[1] + f_high * fits[2],
    )
    return SmoothResult(running_line(x, blended, tweeter), False)

"""Monotonicity-preserving cubic Hermite interpolation (Fritsch-Carlson)."""

from __future__ import annotations

import numpy as np


class MonotoneCubic:
    """Shape-preserving C1 cubic interpolant through (x, y).

    Knot slopes start from arithmetic means of adjacent secants and are
    limited with the Fritsch-Carlson rule (alpha^2 + beta^2 <= 9), so the
    interpolant is monotone wherever the data is.  For strictly monotone
    data the interpolant is invertible; ``inverse`` solves y -> x by
    bisection on the bracketing Hermite segment.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("need two equal-length 1-d arrays")
        if np.any(np.diff(x) <= 0.0):
            raise ValueError("x must be strictly increasing")
        self.x = x
        self.y = y
        self.m = _fritsch_carlson_slopes(x, y)

    def __call__(self, xq) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        i = self._segment(xq)
        h = self.x[i + 1] - self.x[i]
        t = (xq - self.x[i]) / h
        h00 = (1.0 + 2.0 * t) * (1.0 - t) ** 2
        h10 = t * (1.0 - t) ** 2
        h01 = t * t * (3.0 - 2.0 * t)
        h11 = t * t * (t - 1.0)
        return (self.y[i] * h00 + h * self.m[i] * h10
                + self.y[i + 1] * h01 + h * self.m[i + 1] * h11)

    def derivative(self, xq) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        i = self._segment(xq)
        h = self.x[i + 1] - self.x[i]
        t = (xq - self.x[i]) / h
        d00 = (6.0 * t * t - 6.0 * t) / h
        d10 = 3.0 * t * t - 4.0 * t + 1.0
        d01 = -d00
        d11 = 3.0 * t * t - 2.0 * t
        return (self.y[i] * d00 + self.m[i] * d10
                + self.y[i + 1] * d01 + self.m[i + 1] * d11)

    def inverse(self, yq, iterations: int = 80) -> np.ndarray:
        """Solve self(x) = yq for strictly increasing data."""
        if np.any(np.diff(self.y) <= 0.0):
            raise ValueError("inverse requires strictly increasing values")
        yq = np.asarray(yq, dtype=float)
        if np.any(yq < self.y[0]) or np.any(yq > self.y[-1]):
            raise ValueError("query outside interpolation range")
        i = np.clip(np.searchsorted(self.y, yq, side="right") - 1,
                    0, self.y.size - 2)
        lo = self.x[i].astype(float)
        hi = self.x[i + 1].astype(float)
        # Monotone on each segment, so plain bisection is safe and exact
        # to floating-point resolution after ~60 halvings.
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            too_low = self(mid) < yq
            lo = np.where(too_low, mid, lo)
            hi = np.where(too_low, hi, mid)
        out = 0.5 * (lo + hi)
        # Snap exact knot hits so round-trips are clean at the data points.
        exact = np.searchsorted(self.y, yq)
        exact = np.clip(exact, 0, self.y.size - 1)
        hit = self.y[exact] == yq
        return np.where(hit, self.x[exact], out)

    def _segment(self, xq: np.ndarray) -> np.ndarray:
        i = np.searchsorted(self.x, xq, side="right") - 1
        return np.clip(i, 0, self.x.size - 2)


def _fritsch_carlson_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    delta = np.diff(y) / h
    n = x.size
    m = np.empty(n)
    if n == 2:
        m[:] = delta[0]
        return m
    m[1:-1] = 0.5 * (delta[:-1] + delta[1:])
    # Three-point one-sided estimates at the ends, clipped to keep the
    # end segment shape-preserving.
    m[0] = ((2.0 * h[0] + h[1]) * delta[0] - h[0] * delta[1]) / (h[0] + h[1])
    m[-1] = ((2.0 * h[-1] + h[-2]) * delta[-1] - h[-1] * delta[-2]) / (h[-1] + h[-2])
    for k, d in ((0, delta[0]), (n - 1, delta[-1])):
        if m[k] * np.sign(d) < 0.0:
            m[k] = 0.0
        elif abs(m[k]) > 3.0 * abs(d):
            m[k] = 3.0 * d

    # Fritsch-Carlson limiter on every interval.
    for i in range(n - 1):
        if delta[i] == 0.0:
            m[i] = 0.0
            m[i + 1] = 0.0
            continue
        a = m[i] / delta[i]
        b = m[i + 1] / delta[i]
        if a < 0.0:
            m[i] = 0.0
            a = 0.0
        if b < 0.0:
            m[i + 1] = 0.0
            b = 0.0
        r2 = a * a + b * b
        if r2 > 9.0:
            tau = 3.0 / np.sqrt(r2)
            m[i] = tau * a * delta[i]
            m[i + 1] = tau * b * delta[i]
    return m

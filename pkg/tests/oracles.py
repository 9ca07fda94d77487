"""Reference implementations used only by the tests."""
import numpy as np


def grid_argmin(f, lo, hi, points=2001, rel=1e-10):
    """Global minimiser of a vectorised scalar function by zooming dense grids."""
    x = np.linspace(lo, hi, points)
    best = x[np.argmin(f(x))]
    step = x[1] - x[0]
    while step > rel * max(1.0, abs(best)):
        x = np.linspace(best - 2 * step, best + 2 * step, 41)
        best = x[np.argmin(f(x))]
        step = x[1] - x[0]
    return best


def scad_reference(u, lam, a):
    """SCAD value by integrating its piecewise-linear derivative lam * min(1, (a lam - u)_+ / ((a - 1) lam))."""
    u = abs(u)
    s = np.linspace(0.0, u, 2001)
    s = np.unique(np.concatenate([s, [k for k in (lam, a * lam) if k < u]]))
    d = lam * np.minimum(1.0, np.maximum(a * lam - s, 0.0) / ((a - 1) * lam))
    return float(np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(s)))

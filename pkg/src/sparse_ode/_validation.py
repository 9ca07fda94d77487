"""Input checks shared by the estimator façade and the CLI."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import InvalidDataError
from .expfam import get_family


def check_times(t, n_min: int = 2) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 1:
        raise InvalidDataError(f"times must be one-dimensional, got shape {t.shape}")
    if t.size < n_min:
        raise InvalidDataError(f"need at least {n_min} time points, got {t.size}")
    if not np.all(np.isfinite(t)):
        raise InvalidDataError("times must be finite")
    if np.any(np.diff(t) <= 0):
        raise InvalidDataError("times must be strictly increasing")
    return t


def check_observations(Y, n: int) -> np.ndarray:
    try:
        Y = check_array(Y, ensure_2d=False, dtype=float)
    except ValueError as exc:
        raise InvalidDataError(str(exc)) from exc
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != n:
        raise InvalidDataError(f"{Y.shape[0]} rows of observations for {n} time points")
    return Y


def infer_family(values) -> str:
    """All values in {0, 1} -> bernoulli; nonnegative integers -> poisson; else gaussian."""
    v = np.asarray(values, dtype=float)
    if np.all(np.isin(v, (0.0, 1.0))):
        return "bernoulli"
    if np.all(v >= 0) and np.all(v == np.round(v)):
        return "poisson"
    return "gaussian"


def resolve_families(families, Y: np.ndarray) -> tuple:
    """Expand ``"auto"``, a single family or a per-column sequence to one family per column."""
    p = Y.shape[1]
    if families is None or isinstance(families, str):
        families = [families or "auto"] * p
    families = list(families)
    if len(families) != p:
        raise InvalidDataError(f"{len(families)} families given for {p} processes")
    return tuple(get_family(infer_family(Y[:, j]) if f == "auto" else f)
                 for j, f in enumerate(families))

"""Lasso and SCAD penalties with exact scalar coordinate minimisers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidConfigurationError


@dataclass(frozen=True)
class Penalty:
    kind: str = "lasso"
    lam: float = 0.0
    a: float = 3.7

    def __post_init__(self):
        if self.kind not in ("lasso", "scad"):
            raise InvalidConfigurationError(f"unknown penalty {self.kind!r}")
        if self.lam < 0:
            raise InvalidConfigurationError("penalty lambda must be nonnegative")
        if self.kind == "scad" and self.a <= 2:
            raise InvalidConfigurationError("SCAD requires a > 2")

    def with_lambda(self, lam: float) -> "Penalty":
        return Penalty(self.kind, float(lam), self.a)


def lasso(lam: float) -> Penalty:
    return Penalty("lasso", lam)


def scad(lam: float, a: float = 3.7) -> Penalty:
    return Penalty("scad", lam, a)


def scad_penalty(u, lam, a=3.7):
    u = np.abs(np.asarray(u, dtype=float))
    mid = -(u ** 2 - 2 * a * lam * u + lam ** 2) / (2 * (a - 1))
    return np.where(u <= lam, lam * u,
                    np.where(u < a * lam, mid, (a + 1) * lam ** 2 / 2))


def penalty_value(pen: Penalty, v) -> float:
    v = np.asarray(v, dtype=float)
    if pen.kind == "lasso":
        return float(pen.lam * np.abs(v).sum())
    return float(scad_penalty(v, pen.lam, pen.a).sum())


def soft_threshold(z, thresh):
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def scalar_update(pen: Penalty, z: float, w: float) -> float:
    """argmin over g of ``(w/2)(g - z)^2 + p(|g|)``."""
    if w <= 0:
        raise ValueError("curvature w must be positive")
    lam = pen.lam
    if pen.kind == "lasso":
        t = lam / w
        return z - t if z > t else (z + t if z < -t else 0.0)
    if lam == 0:
        return float(z)
    a = pen.a
    s, az = (1.0 if z >= 0 else -1.0), abs(z)

    # Each SCAD piece is quadratic in |g|; take its clipped stationary point
    # when convex and its endpoints otherwise, then compare.
    cands = [0.0, min(max(az - lam / w, 0.0), lam), lam, a * lam, max(az, a * lam)]
    curv = w - 1.0 / (a - 1)
    if curv > 0:
        cands.append(min(max((w * az - a * lam / (a - 1)) / curv, lam), a * lam))
    cands = np.array(cands)
    obj = 0.5 * w * (cands - az) ** 2 + scad_penalty(cands, lam, a)
    best = cands[np.flatnonzero(obj <= obj.min() + 1e-15 * max(1.0, abs(obj.min())))]
    return float(s * best.min())

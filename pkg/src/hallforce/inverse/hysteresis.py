"""Bouc-Wen rate-independent hysteresis on a normalized displacement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

STATE_LIMIT = 1e6


@dataclass(frozen=True)
class HysteresisConfig:
    """``y = (1 - alpha) x + alpha z`` with the Bouc-Wen state

        dz = dx - beta |dx| |z|^(n-1) z - gamma dx |z|^n

    acting on ``x = signal / scale``. All-zero parameters give the identity.
    """

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    n: float = 1.0
    scale: float = 1.0

    @property
    def is_identity(self) -> bool:
        return self.alpha == 0.0 or (self.beta == 0.0 and self.gamma == 0.0)

    def validate(self) -> None:
        vals = (self.alpha, self.beta, self.gamma, self.n, self.scale)
        if not all(np.isfinite(vals)):
            raise DomainError("hysteresis parameters must be finite")
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError("alpha must lie in [0, 1]")
        if self.n <= 0 and not self.is_identity:
            raise DomainError("n must be positive")
        if self.scale <= 0:
            raise DomainError("scale must be positive")
        if not self.is_identity and (self.beta + self.gamma <= 0 or self.beta - self.gamma < 0):
            raise DomainError("unstable hysteresis: need beta + gamma > 0 and beta >= gamma")


DEFAULT_HYSTERESIS = HysteresisConfig(alpha=0.15, beta=2.0, gamma=1.0, n=1.0)


def hysteresis_apply(signal, cfg: HysteresisConfig, max_substep: float = 0.01) -> np.ndarray:
    """Run a uniformly sampled series (1-D, or 2-D with channels in columns)
    through the hysteresis operator, starting from a relaxed state.

    Explicit Euler on the input increments; large increments are split so
    each substep moves ``x`` by at most ``max_substep``.
    """
    cfg.validate()
    x = np.asarray(signal, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("signal must be finite")
    if cfg.is_identity or x.size == 0:
        return x.copy()
    flat = x.reshape(len(x), -1) / cfg.scale
    z = np.zeros(flat.shape[1])
    zs = np.empty_like(flat)
    zs[0] = z
    steps = np.diff(flat, axis=0)
    b, g, n = cfg.beta, cfg.gamma, cfg.n
    sub = np.maximum(1, np.ceil(np.max(np.abs(steps), axis=1) / max_substep)).astype(int)
    for k in range(len(steps)):
        m = sub[k]
        dx = steps[k] / m
        adx = np.abs(dx)
        for _ in range(m):
            az = np.abs(z)
            azn = az**n
            z = z + dx - b * adx * np.where(az > 0, azn / np.where(az > 0, az, 1.0), 0.0) * z - g * dx * azn
        if not np.all(np.abs(z) < STATE_LIMIT):
            raise DomainError("hysteresis state diverged")
        zs[k + 1] = z
    y = (1 - cfg.alpha) * flat + cfg.alpha * zs
    return (y * cfg.scale).reshape(x.shape)


def loop_area(x, y) -> float:
    """Absolute enclosed area of a closed (x, y) path by the shoelace formula."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(abs(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))

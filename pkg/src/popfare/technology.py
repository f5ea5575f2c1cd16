"""Inspection technologies: map inspector mass to inspection intensity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class MonitoringTechnology:
    """``phi`` and its derivative for one of three kinds.

    * ``linear``: phi(l) = k*l
    * ``power``:  phi(l) = l**gamma, 0 < gamma <= 1 (strictly concave below 1)
    * ``sampled``: piecewise-linear interpolation of a user curve
    """

    kind: str
    k: float = 1.0
    gamma: float = 1.0
    xs: Optional[np.ndarray] = None
    ys: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "linear":
            if not self.k > 0:
                raise ValueError("linear technology needs k > 0")
        elif self.kind == "power":
            if not 0 < self.gamma <= 1:
                raise ValueError("power technology needs 0 < gamma <= 1")
        elif self.kind == "sampled":
            xs = np.asarray(self.xs, dtype=float)
            ys = np.asarray(self.ys, dtype=float)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("sampled technology needs matching 1-D xs/ys with >= 2 points")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("sampled xs must be strictly increasing")
            if np.any(np.diff(ys) <= 0):
                raise ValueError("phi must be monotonically increasing")
            if ys[0] < 0:
                raise ValueError("phi(0) must be non-negative")
            object.__setattr__(self, "xs", xs)
            object.__setattr__(self, "ys", ys)
        else:
            raise ValueError(f"unknown technology kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "MonitoringTechnology":
        return cls("linear", k=1.0)

    @classmethod
    def linear(cls, k: float = 1.0) -> "MonitoringTechnology":
        return cls("linear", k=k)

    @classmethod
    def power(cls, gamma: float) -> "MonitoringTechnology":
        return cls("power", gamma=gamma)

    @classmethod
    def sampled(cls, xs: Sequence[float], ys: Sequence[float]) -> "MonitoringTechnology":
        return cls("sampled", xs=np.asarray(xs), ys=np.asarray(ys))

    @classmethod
    def parse(cls, text: str) -> "MonitoringTechnology":
        """Parse ``identity``, ``linear:K`` or ``power:GAMMA``."""
        name, _, arg = text.partition(":")
        if name == "identity":
            return cls.identity()
        if name == "linear":
            return cls.linear(float(arg or 1.0))
        if name == "power":
            return cls.power(float(arg))
        raise ValueError(f"cannot parse technology {text!r}")

    @property
    def is_identity(self) -> bool:
        return self.kind == "linear" and self.k == 1.0

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    @property
    def strictly_concave(self) -> bool:
        return self.kind == "power" and self.gamma < 1

    def spec(self) -> str:
        if self.kind == "linear":
            return "identity" if self.k == 1.0 else f"linear:{self.k!r}"
        if self.kind == "power":
            return f"power:{self.gamma!r}"
        return "sampled"

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind == "linear":
            out = self.k * lam
        elif self.kind == "power":
            out = np.power(lam, self.gamma)
        else:
            out = np.interp(lam, self.xs, self.ys)
        return out if out.ndim else float(out)

    def derivative(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind == "linear":
            out = np.full_like(lam, self.k)
        elif self.kind == "power":
            if self.gamma == 1:
                out = np.ones_like(lam)
            else:
                with np.errstate(divide="ignore"):
                    out = self.gamma * np.power(lam, self.gamma - 1.0)
        else:
            slopes = np.diff(self.ys) / np.diff(self.xs)
            idx = np.clip(np.searchsorted(self.xs, lam, side="right") - 1, 0, slopes.size - 1)
            out = slopes[idx]
        return out if out.ndim else float(out)

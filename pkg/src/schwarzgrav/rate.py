"""Fourier convergence factor of the two-subdomain optimized Schwarz iteration.

For the Laplace operator on two half-planes with Robin transmission
operators of symbol ``Lambda_s(k) = p_s + q_s k^2`` the error in frequency
``k`` is multiplied every two half-steps by

    rho(k) = |(Lambda_1 - k)/(Lambda_1 + k)| * |(Lambda_2 - k)/(Lambda_2 + k)|

The optimizer minimizes the maximum of ``rho`` over a frequency band.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MODES = ("oo0_sym", "oo0_unsym", "oo2_sym", "oo2_unsym")
MODE_DIMENSION = {"oo0_sym": 1, "oo0_unsym": 2, "oo2_sym": 2, "oo2_unsym": 4}


@dataclass(frozen=True)
class TransmissionParams:
    p1: float
    q1: float = 0.0
    p2: float | None = None
    q2: float | None = None
    order: str = "OO2"
    symmetric: bool = False

    def __post_init__(self):
        if self.p2 is None:
            object.__setattr__(self, "p2", self.p1)
        if self.q2 is None:
            object.__setattr__(self, "q2", self.q1)
        if self.order not in ("OO0", "OO2"):
            raise ValueError(f"order must be OO0 or OO2, got {self.order!r}")
        if self.order == "OO0" and (self.q1 != 0 or self.q2 != 0):
            raise ValueError("OO0 transmission has q1 = q2 = 0")
        if self.symmetric and (self.p1 != self.p2 or self.q1 != self.q2):
            raise ValueError("symmetric transmission needs equal sides")

    @classmethod
    def robin(cls, p: float) -> "TransmissionParams":
        """Plain symmetric Robin condition with constant ``p``."""
        return cls(p, 0.0, p, 0.0, order="OO0", symmetric=True)

    @classmethod
    def decode(cls, x, mode: str) -> "TransmissionParams":
        """Map an optimizer vector to parameters (no feasibility check)."""
        x = [float(v) for v in np.ravel(x)]
        if mode not in MODE_DIMENSION:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        if len(x) != MODE_DIMENSION[mode]:
            raise ValueError(f"mode {mode} takes {MODE_DIMENSION[mode]} parameters, got {len(x)}")
        if mode == "oo0_sym":
            return cls(x[0], 0.0, x[0], 0.0, "OO0", True)
        if mode == "oo0_unsym":
            return cls(x[0], 0.0, x[1], 0.0, "OO0", False)
        if mode == "oo2_sym":
            return cls(x[0], x[1], x[0], x[1], "OO2", True)
        return cls(x[0], x[1], x[2], x[3], "OO2", False)

    def encode(self, mode: str) -> np.ndarray:
        if mode == "oo0_sym":
            return np.array([self.p1])
        if mode == "oo0_unsym":
            return np.array([self.p1, self.p2])
        if mode == "oo2_sym":
            return np.array([self.p1, self.q1])
        if mode == "oo2_unsym":
            return np.array([self.p1, self.q1, self.p2, self.q2])
        raise ValueError(f"unknown mode {mode!r}")

    def swapped(self) -> "TransmissionParams":
        return TransmissionParams(self.p2, self.q2, self.p1, self.q1, self.order, self.symmetric)

    def as_row(self) -> tuple[float, float, float, float]:
        return (self.p1, self.q1, self.p2, self.q2)


@dataclass(frozen=True)
class FrequencyBand:
    k_min: float
    k_max: float
    n_samples: int = 10_000

    def __post_init__(self):
        if not (0 < self.k_min <= self.k_max):
            raise ValueError(f"need 0 < k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")

    def samples(self) -> np.ndarray:
        return _geometric_samples(self.k_min, self.k_max, self.n_samples)

    def __str__(self):
        return f"[{self.k_min:.6g}, {self.k_max:.6g}]"


@lru_cache(maxsize=32)
def _geometric_samples(k_min: float, k_max: float, n: int) -> np.ndarray:
    k = np.geomspace(k_min, k_max, n)
    k[0], k[-1] = k_min, k_max
    k.setflags(write=False)
    return k


def default_band(grid, n_samples: int = 10_000) -> FrequencyBand:
    """Frequencies resolvable on ``grid``: ``[pi / L_max, pi / h_min]``."""
    axes = grid.active_axes
    L = max(grid.extents[a] for a in axes)
    h = min(grid.spacings[a] for a in axes)
    return FrequencyBand(math.pi / L, math.pi / h, n_samples)


def recovered_band(p_opt: float, rho_opt: float, n_samples: int = 10_000) -> FrequencyBand:
    """Invert the symmetric zeroth-order optimum for the band it was computed on.

    With ``theta = sqrt(k_max / k_min)`` the optimum satisfies
    ``p = sqrt(k_min k_max)`` and ``rho = ((theta - 1)/(theta + 1))^2``.
    """
    s = math.sqrt(rho_opt)
    theta = (1 + s) / (1 - s)
    return FrequencyBand(p_opt / theta, p_opt * theta, n_samples)


REFERENCE_OPTIMA = {
    # mode: (p1, q1, p2, q2, rho_max)
    "oo0_sym": (0.1826, 0.0, 0.1826, 0.0, 0.6823),
    "oo0_unsym": (1.2193, 0.0, 0.0469, 0.0, 0.4464),
    "oo2_sym": (0.0471, 0.7050, 0.0471, 0.7050, 0.2143),
    "oo2_unsym": (0.1081, 0.3205, 0.0231, 1.5786, 0.1101),
}


def reference_band(n_samples: int = 10_000) -> FrequencyBand:
    p, _, _, _, rho = REFERENCE_OPTIMA["oo0_sym"]
    return recovered_band(p, rho, n_samples)


def reference_params(mode: str) -> TransmissionParams:
    p1, q1, p2, q2, _ = REFERENCE_OPTIMA[mode]
    order = "OO0" if mode.startswith("oo0") else "OO2"
    return TransmissionParams(p1, q1, p2, q2, order, mode.endswith("_sym"))


def lambda_symbol(k, p: float, q: float):
    """Fourier symbol ``p + q k^2`` of the interface operator ``p - q d_tt``."""
    return p + q * np.square(k)


def _factor(k, p, q):
    lam = lambda_symbol(k, p, q)
    return np.abs((lam - k) / (lam + k))


def convergence_rate(k, tp: TransmissionParams):
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr <= 0):
        raise ValueError("frequency must be positive")
    out = _factor(k_arr, tp.p1, tp.q1) * _factor(k_arr, tp.p2, tp.q2)
    return float(out) if np.ndim(k) == 0 else out


def rho_max(tp: TransmissionParams, band: FrequencyBand) -> tuple[float, float]:
    """Maximum of the convergence factor over ``band`` and where it occurs."""
    k = band.samples()
    rho = _factor(k, tp.p1, tp.q1) * _factor(k, tp.p2, tp.q2)
    i = int(np.argmax(rho))
    return float(rho[i]), float(k[i])


def optimal_oo0_symmetric(band: FrequencyBand) -> tuple[float, float]:
    """Closed-form min-max optimum for a single symmetric Robin constant."""
    a, b = math.sqrt(band.k_min), math.sqrt(band.k_max)
    return a * b, ((b - a) / (b + a)) ** 2


def cost_function(x, mode: str, band: FrequencyBand) -> float:
    """``rho_max`` of the decoded parameters; ``1 + violation`` if any is negative."""
    x = np.asarray(x, dtype=float).ravel()
    if mode not in MODE_DIMENSION:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if x.size != MODE_DIMENSION[mode]:
        raise ValueError(f"mode {mode} takes {MODE_DIMENSION[mode]} parameters, got {x.size}")
    violation = float(np.sum(np.clip(-x, 0.0, None)))
    if violation > 0:
        return 1.0 + violation
    tp = TransmissionParams.decode(x, mode)
    return rho_max(tp, band)[0]


def write_rate_curve(path, tp: TransmissionParams, band: FrequencyBand) -> None:
    k = band.samples()
    rho = convergence_rate(k, tp)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "rho"])
        for ki, ri in zip(k, rho):
            w.writerow([repr(float(ki)), repr(float(ri))])

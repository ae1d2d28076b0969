"""Covariance Matrix Adaptation Evolution Strategy (ask/tell interface).

Standard (mu/mu_w, lambda)-CMA-ES with log-rank recombination weights,
cumulative step-size adaptation and rank-one plus rank-mu covariance
updates, following the usual tutorial parameterisation.  Sampling uses a
fresh ``numpy`` PCG64 generator seeded with ``(seed, generation)`` so a run is
reproducible generation by generation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CmaEsConfig",
    "CmaEsState",
    "CmaEsResult",
    "CovarianceError",
    "cmaes_init",
    "cmaes_ask",
    "cmaes_tell",
    "cmaes_minimize",
    "write_trace",
]


class CovarianceError(RuntimeError):
    """The covariance matrix lost positive definiteness."""


def log_rank_weights(mu: int) -> np.ndarray:
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    return w / w.sum()


@dataclass
class CmaEsConfig:
    initial_mean: Sequence[float]
    initial_step_size: float = 1.0
    population_size: int = 25
    parent_count: int | None = None
    weights: np.ndarray | None = None
    max_iterations: int = 7200
    f_tolerance: float = 5e-11
    x_tolerance: float = 1e-14
    max_condition: float = 1e14
    rng_seed: int = 0

    def __post_init__(self):
        self.initial_mean = np.asarray(self.initial_mean, dtype=float).ravel()
        if self.initial_step_size <= 0:
            raise ValueError("initial_step_size must be positive")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.parent_count is None:
            self.parent_count = self.population_size // 2
        if not 1 <= self.parent_count <= self.population_size:
            raise ValueError("need 1 <= parent_count <= population_size")
        if self.weights is None:
            self.weights = log_rank_weights(self.parent_count)
        w = np.asarray(self.weights, dtype=float)
        if len(w) != self.parent_count or np.any(w <= 0) or np.any(np.diff(w) > 0):
            raise ValueError("weights must be positive, nonincreasing, one per parent")
        self.weights = w / w.sum()


@dataclass
class CmaEsState:
    mean: np.ndarray
    step_size: float
    covariance: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    generation: int
    best_point: np.ndarray
    best_value: float
    cfg: CmaEsConfig
    # strategy constants
    mueff: float = 0.0
    cc: float = 0.0
    cs: float = 0.0
    c1: float = 0.0
    cmu: float = 0.0
    damps: float = 0.0
    chi_n: float = 0.0
    # cached eigen-decomposition C = B diag(d^2) B^T
    _B: np.ndarray | None = field(default=None, repr=False)
    _d: np.ndarray | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.mean)

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        if self._B is None:
            evals, B = np.linalg.eigh(self.covariance)
            if not np.all(np.isfinite(evals)) or evals.min() <= 0:
                raise CovarianceError(
                    f"covariance not positive definite at generation {self.generation}: "
                    f"eigenvalues {evals}, step size {self.step_size}"
                )
            self._B, self._d = B, np.sqrt(evals)
        return self._B, self._d


def cmaes_init(cfg: CmaEsConfig, dimension: int | None = None) -> CmaEsState:
    m = np.array(cfg.initial_mean, dtype=float)
    n = len(m) if dimension is None else int(dimension)
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if len(m) != n:
        raise ValueError(f"initial_mean has {len(m)} components, dimension is {n}")
    w = cfg.weights
    mueff = 1.0 / float(np.sum(w ** 2))
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
    return CmaEsState(
        mean=m, step_size=float(cfg.initial_step_size), covariance=np.eye(n),
        path_sigma=np.zeros(n), path_c=np.zeros(n), generation=0,
        best_point=m.copy(), best_value=math.inf, cfg=cfg,
        mueff=mueff, cc=cc, cs=cs, c1=c1, cmu=cmu, damps=damps, chi_n=chi_n,
    )


def generation_rng(seed: int, generation: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(generation)])


def cmaes_ask(state: CmaEsState, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``lambda`` points from ``N(mean, sigma^2 C)`` as rows."""
    if rng is None:
        rng = generation_rng(state.cfg.rng_seed, state.generation)
    B, d = state.eigensystem()
    z = rng.standard_normal((state.cfg.population_size, state.dimension))
    y = (z * d) @ B.T
    return state.mean + state.step_size * y


def cmaes_tell(state: CmaEsState, points: np.ndarray, values: Sequence[float]) -> CmaEsState:
    """Update the search distribution from an evaluated population (in place)."""
    cfg = state.cfg
    points = np.asarray(points, dtype=float)
    vals = np.array(values, dtype=float)
    lam, n = points.shape
    if lam != cfg.population_size or len(vals) != lam:
        raise ValueError("population size does not match the configuration")
    vals[~np.isfinite(vals)] = np.inf
    order = np.lexsort((np.arange(lam), vals))  # by cost, then sample index
    mu = cfg.parent_count
    w = cfg.weights

    if vals[order[0]] < state.best_value:
        state.best_value = float(vals[order[0]])
        state.best_point = points[order[0]].copy()

    B, d = state.eigensystem()
    sigma = state.step_size
    old_mean = state.mean
    y = (points[order[:mu]] - old_mean) / sigma
    y_w = w @ y
    state.mean = old_mean + sigma * y_w

    # C^{-1/2} y_w
    c_inv_sqrt_yw = B @ ((B.T @ y_w) / d)
    state.path_sigma = (1 - state.cs) * state.path_sigma + math.sqrt(
        state.cs * (2 - state.cs) * state.mueff) * c_inv_sqrt_yw
    ps_norm = float(np.linalg.norm(state.path_sigma))
    g1 = state.generation + 1
    hsig = ps_norm / math.sqrt(1 - (1 - state.cs) ** (2 * g1)) / state.chi_n < 1.4 + 2 / (n + 1)
    state.path_c = (1 - state.cc) * state.path_c + hsig * math.sqrt(
        state.cc * (2 - state.cc) * state.mueff) * y_w

    delta_h = (1 - hsig) * state.cc * (2 - state.cc)
    rank_one = np.outer(state.path_c, state.path_c)
    rank_mu = (y.T * w) @ y
    C = ((1 - state.c1 - state.cmu) * state.covariance
         + state.c1 * (rank_one + delta_h * state.covariance)
         + state.cmu * rank_mu)
    state.covariance = 0.5 * (C + C.T)

    state.step_size = sigma * math.exp((state.cs / state.damps) * (ps_norm / state.chi_n - 1))
    state.generation = g1
    state._B = state._d = None
    return state


@dataclass
class CmaEsResult:
    best_point: np.ndarray
    best_value: float
    generations_used: int
    history: list[dict]
    stop_reason: str
    seed: int
    evaluations: int


def cmaes_minimize(objective: Callable[[np.ndarray], float], cfg: CmaEsConfig,
                   callback: Callable[[CmaEsState], None] | None = None,
                   evaluate: Callable = map) -> CmaEsResult:
    """Run ask/tell until a stopping rule fires and return the incumbent.

    Stops on ``max_iterations``; when the best values of the recent
    generations together with the current population span less than
    ``f_tolerance``; or when ``sigma * sqrt(max eig C)`` drops below
    ``x_tolerance``; or when the condition number of C exceeds
    ``max_condition`` (the search has collapsed onto a subspace).
    ``evaluate`` maps the objective over a population and may be swapped
    for a parallel map.
    """
    state = cmaes_init(cfg)
    n = state.dimension
    window = 10 + int(math.ceil(30 * n / cfg.population_size))
    recent: list[float] = []
    history: list[dict] = []
    evals = 0
    reason = "max_iterations"
    while state.generation < cfg.max_iterations:
        pts = cmaes_ask(state)
        vals = np.array(list(evaluate(objective, list(pts))), dtype=float)
        evals += len(vals)
        cmaes_tell(state, pts, vals)
        history.append({
            "generation": state.generation,
            "best_value": state.best_value,
            "mean": state.mean.copy(),
            "sigma": state.step_size,
        })
        if callback is not None:
            callback(state)
        finite = vals[np.isfinite(vals)]
        recent.append(float(finite.min()) if finite.size else math.inf)
        recent = recent[-window:]
        if len(recent) == window and finite.size == len(vals):
            spread = max(max(recent), finite.max()) - min(min(recent), finite.min())
            if spread < cfg.f_tolerance:
                reason = "f_tolerance"
                break
        evals_c = np.linalg.eigvalsh(state.covariance)
        if evals_c.min() <= 0 or evals_c.max() > cfg.max_condition * evals_c.min():
            reason = "condition_cov"
            break
        if state.step_size * float(np.sqrt(evals_c.max())) < cfg.x_tolerance:
            reason = "x_tolerance"
            break
    return CmaEsResult(state.best_point.copy(), state.best_value, state.generation,
                       history, reason, cfg.rng_seed, evals)


def write_trace(path, result: CmaEsResult) -> None:
    """Optimizer trace CSV: generation, best_value, mean components, sigma."""
    dim = len(result.best_point)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "best_value"] + [f"mean_{i}" for i in range(dim)] + ["sigma"])
        for h in result.history:
            w.writerow([h["generation"], repr(h["best_value"])]
                       + [repr(float(v)) for v in h["mean"]] + [repr(h["sigma"])])

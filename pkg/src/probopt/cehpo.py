"""Cross-entropy search over skip-gram hyperparameters (c, d, s_f, m_c).

Each round draws ``M`` candidate tuples: ``N_s = s * M * rho`` of them are
resampled from the previous round's elite set under the normalised weights,
the rest are uniform over the ranges. The elite threshold ``gamma`` is the
top-``rho`` quantile of the round's scores, and the search stops once
``gamma`` has stayed put for ``l`` consecutive rounds.

Weights are keyed by tuple value, not by sample index, so a weight carried
over from a previous round still refers to the same hyperparameters.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigInvalid, EmptyScores, NoEliteSamples, RangeEmpty, ZeroMass
from .rng import substream


@dataclass(frozen=True, order=True)
class HyperTuple:
    c: int
    d: int
    s_f: float
    m_c: int


@dataclass(frozen=True)
class Ranges:
    c: tuple[int, int] = (1, 5)
    d: tuple[int, int] = (2, 16)
    s_f: tuple[float, float] = (1e-3, 1e-1)
    m_c: tuple[int, int] = (1, 5)

    def validate(self) -> None:
        for name in ("c", "d", "s_f", "m_c"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise RangeEmpty(f"range for {name} is empty: [{lo}, {hi}]")
        if self.s_f[0] <= 0:
            raise RangeEmpty("s_f range must be strictly positive")

    def __contains__(self, t: HyperTuple) -> bool:
        return (
            self.c[0] <= t.c <= self.c[1]
            and self.d[0] <= t.d <= self.d[1]
            and self.s_f[0] <= t.s_f <= self.s_f[1]
            and self.m_c[0] <= t.m_c <= self.m_c[1]
        )

    def sample_uniform(self, rng: np.random.Generator, n: int) -> list[HyperTuple]:
        self.validate()
        c = rng.integers(self.c[0], self.c[1] + 1, size=n)
        d = rng.integers(self.d[0], self.d[1] + 1, size=n)
        s_f = rng.uniform(self.s_f[0], self.s_f[1], size=n)
        m_c = rng.integers(self.m_c[0], self.m_c[1] + 1, size=n)
        return [HyperTuple(int(a), int(b), float(f), int(m)) for a, b, f, m in zip(c, d, s_f, m_c)]


@dataclass(frozen=True)
class CEConfig:
    M: int = 100
    rho: float = 0.01
    alpha: float = 0.7
    s: float = 10.0
    l: int = 5
    max_rounds: int = 200
    eps_gamma: float = 1e-9
    seed: int = 0

    def validate(self) -> None:
        problems = []
        if self.M < 1:
            problems.append("M must be >= 1")
        if not 0 < self.rho <= 1:
            problems.append("rho must be in (0, 1]")
        elif elite_size(self.M, self.rho) < 1:
            problems.append("M * rho must be at least 1")
        if not 0 < self.alpha <= 1:
            problems.append("alpha must be in (0, 1]")
        if self.s < 0:
            problems.append("s must be >= 0")
        if self.l < 1:
            problems.append("l must be >= 1")
        if self.max_rounds < 1:
            problems.append("max_rounds must be >= 1")
        if self.eps_gamma < 0:
            problems.append("eps_gamma must be >= 0")
        if problems:
            raise ConfigInvalid("; ".join(problems))


@dataclass
class CEState:
    round: int = 0
    samples: list[HyperTuple] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    gamma_history: list[float] = field(default_factory=list)
    q: dict[HyperTuple, float] = field(default_factory=dict)
    q_norm: dict[HyperTuple, float] = field(default_factory=dict)
    elite: list[HyperTuple] = field(default_factory=list)
    rng_seed: int = 0
    log: list[dict] = field(default_factory=list)


def elite_size(M: int, rho: float) -> int:
    # guard against 0.07 * 100 = 7.000000000000001
    return math.ceil(rho * M - 1e-9)


def gamma_quantile(scores: Sequence[float], rho: float) -> float:
    """The ceil(rho * M)-th largest score."""
    if len(scores) == 0:
        raise EmptyScores("no scores to take a quantile of")
    n = elite_size(len(scores), rho)
    if not 0 < rho <= 1 or n < 1:
        raise ValueError("rho * len(scores) must be at least 1")
    return sorted(scores, reverse=True)[n - 1]


def estimate_probs(
    samples: Sequence[HyperTuple], scores: Sequence[float], gamma: float
) -> dict[HyperTuple, float]:
    hits = [1.0 if f >= gamma else 0.0 for f in scores]
    total = sum(hits)
    if total == 0:
        raise NoEliteSamples(f"no score reaches gamma={gamma}")
    q: dict[HyperTuple, float] = {}
    for x, h in zip(samples, hits):
        q[x] = q.get(x, 0.0) + h / total
    return q


def smooth_probs(
    q_est: dict[HyperTuple, float], q_prev: dict[HyperTuple, float], alpha: float
) -> dict[HyperTuple, float]:
    keys = list(q_est) + [x for x in q_prev if x not in q_est]
    return {x: alpha * q_est.get(x, 0.0) + (1 - alpha) * q_prev.get(x, 0.0) for x in keys}


def normalize_elite(q: dict[HyperTuple, float], elite: Iterable[HyperTuple]) -> dict[HyperTuple, float]:
    elite = list(dict.fromkeys(elite))
    mass = sum(q.get(x, 0.0) for x in elite)
    if mass <= 0:
        raise ZeroMass("elite tuples carry no probability mass")
    return {x: q.get(x, 0.0) / mass for x in elite}


def n_favoured(M: int, s: float, rho: float) -> int:
    """N_s = s * M * rho, rounded half-up and clamped to [0, M]."""
    return min(M, max(0, math.floor(s * M * rho + 0.5)))


def sample_round(
    state: CEState,
    ranges: Ranges,
    M: int,
    s: float,
    rho: float,
    rng: np.random.Generator | int,
) -> list[HyperTuple]:
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ranges.validate()
    if not state.elite:
        return ranges.sample_uniform(rng, M)
    n_s = n_favoured(M, s, rho)
    probs = np.array([state.q_norm[x] for x in state.elite])
    picks = rng.choice(len(state.elite), size=n_s, replace=True, p=probs / probs.sum())
    return [state.elite[i] for i in picks] + ranges.sample_uniform(rng, M - n_s)


def _converged(gammas: list[float], l: int, eps: float) -> bool:
    if len(gammas) < l + 1:
        return False
    last = gammas[-1]
    return all(abs(last - g) <= eps for g in gammas[-l - 1 : -1])


Objective = Callable[[HyperTuple, int], float]


def run_cehpo(
    objective: Objective, ranges: Ranges, config: CEConfig = CEConfig()
) -> tuple[HyperTuple, CEState]:
    """Maximise ``objective`` over ``ranges``; returns (best tuple, final state)."""
    config.validate()
    ranges.validate()
    rng = substream(config.seed, "cehpo.sampling")
    state = CEState(rng_seed=config.seed)
    memo: dict[HyperTuple, float] = {}
    best, best_f = None, -math.inf

    for t in range(1, config.max_rounds + 1):
        samples = sample_round(state, ranges, config.M, config.s, config.rho, rng)
        n_s = 0 if t == 1 else n_favoured(config.M, config.s, config.rho)
        for x in samples:
            if x not in memo:
                memo[x] = float(objective(x, config.seed))
        scores = [memo[x] for x in samples]

        gamma = gamma_quantile(scores, config.rho)
        q = smooth_probs(estimate_probs(samples, scores, gamma), state.q, config.alpha)
        elite = list(dict.fromkeys(x for x, f in zip(samples, scores) if f >= gamma))

        state.round = t
        state.samples, state.scores = samples, scores
        state.gamma_history.append(gamma)
        state.q = q
        state.elite = elite
        state.q_norm = normalize_elite(q, elite)

        for x, f in zip(samples, scores):
            if f > best_f:
                best, best_f = x, f
        state.log.append(
            {"t": t, "gamma": gamma, "best_F": best_f, "best_tuple": asdict(best), "N_s": n_s}
        )
        if _converged(state.gamma_history, config.l, config.eps_gamma):
            break
    return best, state


# synthetic objective -------------------------------------------------------


@dataclass(frozen=True)
class PlantedObjective:
    """Separable objective with a unique planted maximum on a finite grid.

    ``s_f`` enters only through the index of the equal-width bin it falls in,
    so the search space is effectively the grid
    ``c x d x s_f-bins x m_c``. The score is minus a weighted L1 distance to
    ``optimum`` in grid units, which is 0 at the optimum and <= -1 elsewhere.
    """

    ranges: Ranges
    optimum: tuple[int, int, int, int]
    sf_bins: int = 3
    weights: tuple[float, float, float, float] = (1.0, 1.3, 1.7, 1.1)

    def sf_bin(self, s_f: float) -> int:
        lo, hi = self.ranges.s_f
        if hi == lo:
            return 0
        return min(self.sf_bins - 1, int((s_f - lo) / (hi - lo) * self.sf_bins))

    def cell(self, x: HyperTuple) -> tuple[int, int, int, int]:
        return (x.c, x.d, self.sf_bin(x.s_f), x.m_c)

    def grid_size(self) -> int:
        r = self.ranges
        return (r.c[1] - r.c[0] + 1) * (r.d[1] - r.d[0] + 1) * self.sf_bins * (r.m_c[1] - r.m_c[0] + 1)

    def score_cell(self, cell: tuple[int, int, int, int]) -> float:
        return -sum(w * abs(a - b) for w, a, b in zip(self.weights, cell, self.optimum))

    def __call__(self, x: HyperTuple, seed: int = 0) -> float:
        return self.score_cell(self.cell(x))

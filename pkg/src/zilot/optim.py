"""Zero-order action-sequence optimizers.

Objectives are *batched*: they take an array of candidate sequences, shape
``(batch, horizon)`` for discrete actions or ``(batch, horizon, dim)`` for
continuous ones, and return one cost per candidate.
"""

from dataclasses import dataclass
import itertools
import math
from typing import NamedTuple

import numpy as np

from ._validation import ValidationError, check_random_state

__all__ = ["Plan", "IcemConfig", "colored_noise", "exhaustive_optimize", "icem_optimize"]

EXHAUSTIVE_LIMIT = 10**6
SHOOTING_BUDGET = 10**4
_CHUNK = 1 << 15


class Plan(NamedTuple):
    actions: np.ndarray
    cost: float
    info: dict


def _finite_costs(costs):
    costs = np.asarray(costs, dtype=float).reshape(-1)
    return np.where(np.isfinite(costs), costs, np.inf)


def _evaluate(objective, candidates):
    out = np.empty(len(candidates))
    for start in range(0, len(candidates), _CHUNK):
        out[start : start + _CHUNK] = _finite_costs(objective(candidates[start : start + _CHUNK]))
    return out


def exhaustive_optimize(objective, n_actions, h_steps, rng=None, limit=EXHAUSTIVE_LIMIT, budget=SHOOTING_BUDGET):
    """Exact argmin over all ``n_actions ** h_steps`` discrete sequences.

    Ties go to the lexicographically first sequence. When the enumeration
    would exceed ``limit`` sequences, ``budget`` uniformly random sequences are
    scored instead and ``info["method"]`` is ``"shooting"``.
    """
    if n_actions < 1 or h_steps < 1:
        raise ValidationError("need n_actions >= 1 and h_steps >= 1")
    if n_actions**h_steps <= limit:
        candidates = np.array(list(itertools.product(range(n_actions), repeat=h_steps)), dtype=np.int64)
        method = "exhaustive"
    else:
        rng = check_random_state(rng)
        candidates = rng.integers(0, n_actions, size=(budget, h_steps))
        # sort so ties still resolve lexicographically
        candidates = np.unique(candidates, axis=0)
        method = "shooting"
    costs = _evaluate(objective, candidates)
    best = int(np.argmin(costs))
    return Plan(candidates[best], float(costs[best]), {"method": method, "n_candidates": len(candidates)})


@dataclass(frozen=True)
class IcemConfig:
    num_iterations: int = 4
    population_size: int = 512
    elite_ratio: float = 0.01
    population_decay_factor: float = 1.0
    colored_noise_exponent: float = 2.0
    keep_elite_frac: float = 1.0
    alpha: float = 0.1
    horizon: int = 16

    def __post_init__(self):
        if self.num_iterations < 1 or self.horizon < 1:
            raise ValidationError("num_iterations and horizon must be >= 1")
        if self.population_size < self.n_elites or self.n_elites < 1:
            raise ValidationError("need population_size >= elites >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        if not 0.0 <= self.keep_elite_frac <= 1.0:
            raise ValidationError("keep_elite_frac must lie in [0, 1]")
        if self.population_decay_factor < 1.0:
            raise ValidationError("population_decay_factor must be >= 1")

    @property
    def n_elites(self):
        return max(1, int(self.elite_ratio * self.population_size))


def colored_noise(exponent, size, rng=None):
    """Gaussian noise with power spectrum ``1 / f**exponent`` along the last axis.

    Samples are normalized to unit variance; ``exponent=0`` is white noise.
    """
    rng = check_random_state(rng)
    size = tuple(size)
    n = size[-1]
    if exponent == 0 or n < 2:
        return rng.standard_normal(size)
    f = np.fft.rfftfreq(n)
    f[0] = 1.0 / n  # low-frequency cutoff at the sequence length
    scale = f ** (-exponent / 2.0)
    shape = size[:-1] + (f.size,)
    re = rng.standard_normal(shape) * scale
    im = rng.standard_normal(shape) * scale
    # DC and Nyquist bins are real; their variance is carried by the real part.
    weight = np.full(f.size, 4.0)
    weight[0] = 2.0
    im[..., 0] = 0.0
    re[..., 0] *= np.sqrt(2.0)
    if n % 2 == 0:
        weight[-1] = 2.0
        im[..., -1] = 0.0
        re[..., -1] *= np.sqrt(2.0)
    sigma = np.sqrt(np.sum(weight * scale**2)) / n
    return np.fft.irfft(re + 1j * im, n=n, axis=-1) / sigma


def icem_optimize(objective, action_low, action_high, cfg=None, rng=None, shift_init=None, horizon=None):
    """Improved cross-entropy method over a box of continuous actions.

    Each iteration samples a population around the current mean with colored
    noise along time, clips it to the box, keeps the best ``elite_ratio``
    fraction and refits mean and standard deviation (old values weighted by
    ``alpha``). Elites are carried into the next population and the
    population shrinks by ``population_decay_factor`` per iteration.

    ``shift_init`` (a previous plan) is shifted forward by one step to seed the
    mean; otherwise the mean starts at the box center. The initial standard
    deviation is a quarter of the box width. Returns the best sequence ever
    evaluated; ``info["best_history"]`` tracks the best-so-far cost.
    """
    cfg = cfg or IcemConfig()
    rng = check_random_state(rng)
    low = np.asarray(action_low, dtype=float)
    high = np.asarray(action_high, dtype=float)
    H = int(horizon or cfg.horizon)
    dim = low.size
    if shift_init is not None and len(shift_init) > 0:
        prev = np.asarray(shift_init, dtype=float).reshape(-1, dim)
        shifted = np.concatenate([prev[1:], prev[-1:]], axis=0)
        if len(shifted) < H:
            shifted = np.concatenate([shifted, np.repeat(shifted[-1:], H - len(shifted), axis=0)])
        mean = shifted[:H].copy()
    else:
        mean = np.broadcast_to((low + high) / 2.0, (H, dim)).copy()
    std = np.broadcast_to((high - low) / 4.0, (H, dim)).copy()

    n_elite = cfg.n_elites
    n_keep = int(math.ceil(cfg.keep_elite_frac * n_elite))
    elites = None
    best, best_cost = None, np.inf
    history = []
    evaluated = 0
    for it in range(cfg.num_iterations):
        pop = max(int(cfg.population_size * cfg.population_decay_factor ** (-it)), 2 * n_elite)
        pop = min(pop, cfg.population_size)
        noise = colored_noise(cfg.colored_noise_exponent, (pop, dim, H), rng).transpose(0, 2, 1)
        samples = np.clip(mean + std * noise, low, high)
        if elites is not None and n_keep > 0:
            samples = np.concatenate([samples, elites[:n_keep]], axis=0)
        costs = _finite_costs(objective(samples))
        evaluated += len(samples)
        order = np.argsort(costs, kind="stable")
        elites = samples[order[:n_elite]]
        if costs[order[0]] < best_cost or best is None:
            best, best_cost = samples[order[0]].copy(), float(costs[order[0]])
        history.append(best_cost)
        mean = cfg.alpha * mean + (1.0 - cfg.alpha) * elites.mean(axis=0)
        std = cfg.alpha * std + (1.0 - cfg.alpha) * elites.std(axis=0)
    return Plan(best, best_cost, {"method": "icem", "best_history": history, "n_candidates": evaluated})

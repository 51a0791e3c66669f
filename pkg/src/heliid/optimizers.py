"""Search strategies over the 40-dimensional derivative space.

Three methods behind one result type: invasive weed optimization (the primary
method), a real-coded genetic algorithm, and a local prediction-error
minimizer (Nelder-Mead surrogate for classical PEM).  All of them minimize a
scalar cost, are bounded by a :class:`SearchSpace`, and are deterministic for
a given ``rng_seed`` (PCG64 via ``numpy.random.default_rng``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize as _opt

from . import fitness as _fitness
from . import model as _model
from .signals import TimeSeriesLog


@dataclass(frozen=True)
class SearchSpace:
    """Box bounds plus a set of dimensions pinned to zero."""

    lower: np.ndarray
    upper: np.ndarray
    frozen: frozenset = frozenset()

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "frozen", frozenset(self.frozen))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("bounds must be equal-length 1-d vectors")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        for i in self.frozen:
            if lower[i] != 0.0 or upper[i] != 0.0:
                raise ValueError(f"frozen dimension {i} must have bounds (0, 0)")
        lower.flags.writeable = False
        upper.flags.writeable = False

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    def midpoint(self) -> np.ndarray:
        return (self.lower + self.upper) / 2.0

    def clip(self, x: np.ndarray) -> np.ndarray:
        out = np.clip(x, self.lower, self.upper)
        for i in self.frozen:
            out[i] = 0.0
        return out

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        return self.clip(rng.uniform(self.lower, self.upper))

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @classmethod
    def around_truth(
        cls,
        truth: "_model.ParameterSet" = _model.TRUTH_HOVER,
        scale: float = 3.0,
        min_half_width: float = 1.0,
        free_zeros: bool = False,
    ) -> "SearchSpace":
        """Symmetric bounds of +-max(scale*|value|, min_half_width) per parameter.

        Parameters the truth model reports as exactly 0 (forward-flight terms)
        are frozen at 0 unless ``free_zeros`` is set.
        """
        values = truth.to_array()
        half = np.maximum(scale * np.abs(values), min_half_width)
        frozen = set()
        if not free_zeros:
            for i, name in enumerate(_model.PARAM_NAMES):
                if name in _model.HOVER_ZERO_PARAMS:
                    frozen.add(i)
                    half[i] = 0.0
        return cls(lower=-half, upper=half, frozen=frozenset(frozen))


@dataclass(frozen=True)
class IwoConfig:
    iter_max: int = 200
    pop_initial: int = 10
    pop_max: int = 25
    seeds_min: int = 0
    seeds_max: int = 5
    sigma_initial: float = 0.1
    sigma_final: float = 0.001
    n: float = 3.0
    rng_seed: int = 0
    # Alternative survival rule: a culled parent is kept (displacing the worst
    # survivor) when one of its offspring lands in the top quartile.
    parent_rescue: bool = False

    def __post_init__(self):
        if self.iter_max < 0:
            raise ValueError("iter_max must be >= 0")
        if self.pop_initial < 1 or self.pop_initial > self.pop_max:
            raise ValueError("need 1 <= pop_initial <= pop_max")
        if self.seeds_min > self.seeds_max or self.seeds_min < 0:
            raise ValueError("need 0 <= seeds_min <= seeds_max")
        if not 0 < self.sigma_final <= self.sigma_initial:
            raise ValueError("need 0 < sigma_final <= sigma_initial")


@dataclass(frozen=True)
class GaConfig:
    generations: int = 200
    pop_size: int = 40
    tournament_k: int = 2
    crossover_rate: float = 0.9
    crossover_alpha: float = 0.5
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.05
    elitism: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("pop_size must be >= 2")
        if not 0 <= self.elitism < self.pop_size:
            raise ValueError("elitism must be in [0, pop_size)")


@dataclass(frozen=True)
class PemConfig:
    max_iter: int = 2000
    restarts: int = 1
    xatol: float = 1e-8
    fatol: float = 1e-10
    rng_seed: int = 0


@dataclass(frozen=True)
class OptimizerResult:
    best_params: np.ndarray
    best_cost: float
    cost_trace: np.ndarray
    evaluations: int
    rng_seed: int


@dataclass
class Plant:
    """A scored candidate; birth iteration and insertion order break ties."""

    x: np.ndarray
    cost: float
    birth: int
    order: int
    parent: int | None = None


def sigma_schedule(cfg: IwoConfig, iteration: int) -> float:
    """Dispersal standard deviation at the given iteration.

    Normalized nonlinear decay ((iter_max - iter) / iter_max)^n between
    sigma_initial and sigma_final; the published non-normalized denominator
    blows up for n > 1 and is deliberately not used.
    """
    if not 0 <= iteration <= cfg.iter_max:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.iter_max}]")
    if cfg.iter_max == 0:
        return cfg.sigma_final
    frac = (cfg.iter_max - iteration) / cfg.iter_max
    return frac**cfg.n * (cfg.sigma_initial - cfg.sigma_final) + cfg.sigma_final


def reproduce(fitnesses, cfg: IwoConfig) -> list[int]:
    """Seed count per plant, linear in fitness between seeds_min and seeds_max."""
    fitnesses = list(fitnesses)
    if not fitnesses:
        raise ValueError("fitness list must be non-empty")
    best = max(fitnesses)
    worst = min(fitnesses)
    if best == worst:
        return [cfg.seeds_min] * len(fitnesses)
    span = cfg.seeds_max - cfg.seeds_min
    return [
        cfg.seeds_min + round((f - worst) / (best - worst) * span) for f in fitnesses
    ]


def disperse(
    parent: np.ndarray,
    sigma_fraction: float,
    space: SearchSpace,
    rng: np.random.Generator,
) -> np.ndarray:
    """Scatter one seed around the parent with per-dimension N(0, sigma^2).

    The standard deviation in each dimension is ``sigma_fraction`` of that
    dimension's bound range; the child is clamped to the bounds and frozen
    dimensions stay 0.
    """
    child = parent + rng.normal(0.0, 1.0, space.dim) * (sigma_fraction * space.ranges)
    return space.clip(child)


def competitive_exclusion(
    population: list[Plant], pop_max: int, parent_rescue: bool = False
) -> list[Plant]:
    """Truncate the parent+offspring union to the ``pop_max`` fittest.

    Ties at the cut are broken in favor of the older plant, then by insertion
    order.  With ``parent_rescue``, a culled parent whose offspring reached the
    top quartile of the union survives at the expense of the worst survivor.
    """
    if len(population) <= pop_max:
        return list(population)
    ranked = sorted(population, key=lambda pl: (pl.cost, pl.birth, pl.order))
    survivors = ranked[:pop_max]
    if parent_rescue:
        quartile = ranked[: max(1, len(ranked) // 4)]
        strong_parents = {pl.parent for pl in quartile if pl.parent is not None}
        kept = {pl.order for pl in survivors}
        rescuable = [
            pl
            for pl in ranked[pop_max:]
            if pl.order in strong_parents and pl.order not in kept
        ]
        for plant in rescuable:
            survivors[-1] = plant
            survivors.sort(key=lambda pl: (pl.cost, pl.birth, pl.order))
    return survivors


def minimize_iwo(objective, space: SearchSpace, cfg: IwoConfig) -> OptimizerResult:
    """Invasive weed optimization of ``objective`` over ``space``.

    Deposit a random initial colony, let each plant seed in proportion to its
    fitness, scatter seeds with the annealed dispersal of
    :func:`sigma_schedule`, and cull the colony back to ``pop_max``.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    counter = 0
    population: list[Plant] = []
    for _ in range(cfg.pop_initial):
        x = space.sample_uniform(rng)
        population.append(Plant(x=x, cost=objective(x), birth=0, order=counter))
        counter += 1
    evaluations = cfg.pop_initial

    best = min(population, key=lambda pl: (pl.cost, pl.order))
    best_x, best_cost = best.x.copy(), best.cost
    trace = [best_cost]

    for it in range(cfg.iter_max):
        sigma = sigma_schedule(cfg, it)
        seed_counts = reproduce([-pl.cost for pl in population], cfg)
        offspring = []
        if sum(seed_counts) == 0:
            # an all-tie colony with seeds_min = 0 would stall forever; while
            # every plant sits on the divergence plateau, re-deposit fresh
            # random seeds instead of dispersing around useless parents
            for plant in population:
                x = space.sample_uniform(rng)
                offspring.append(
                    Plant(x=x, cost=objective(x), birth=it + 1, order=counter, parent=plant.order)
                )
                counter += 1
        else:
            for plant, count in zip(population, seed_counts):
                for _ in range(count):
                    x = disperse(plant.x, sigma, space, rng)
                    offspring.append(
                        Plant(x=x, cost=objective(x), birth=it + 1, order=counter, parent=plant.order)
                    )
                    counter += 1
        evaluations += len(offspring)
        population = competitive_exclusion(
            population + offspring, cfg.pop_max, cfg.parent_rescue
        )
        for plant in offspring:
            if plant.cost < best_cost:
                best_x, best_cost = plant.x.copy(), plant.cost
        trace.append(best_cost)

    return OptimizerResult(
        best_params=best_x,
        best_cost=best_cost,
        cost_trace=np.asarray(trace),
        evaluations=evaluations,
        rng_seed=cfg.rng_seed,
    )


def minimize_ga(objective, space: SearchSpace, cfg: GaConfig) -> OptimizerResult:
    """Real-coded GA: tournament selection, blend crossover, Gaussian mutation."""
    rng = np.random.default_rng(cfg.rng_seed)
    pop = [space.sample_uniform(rng) for _ in range(cfg.pop_size)]
    costs = [objective(x) for x in pop]
    evaluations = cfg.pop_size

    order = int(np.argmin(costs))
    best_x, best_cost = pop[order].copy(), costs[order]
    trace = [best_cost]

    def tournament():
        idx = rng.integers(0, cfg.pop_size, size=cfg.tournament_k)
        return pop[min(idx, key=lambda i: costs[i])]

    for _ in range(cfg.generations):
        elite_idx = np.argsort(costs)[: cfg.elitism]
        new_pop = [pop[i].copy() for i in elite_idx]
        while len(new_pop) < cfg.pop_size:
            p1 = tournament()
            p2 = tournament()
            if rng.random() < cfg.crossover_rate:
                lo = np.minimum(p1, p2)
                hi = np.maximum(p1, p2)
                spread = cfg.crossover_alpha * (hi - lo)
                child = rng.uniform(lo - spread, hi + spread)
            else:
                child = p1.copy()
            mutate = rng.random(space.dim) < cfg.mutation_rate
            if np.any(mutate):
                noise = rng.normal(0.0, 1.0, space.dim) * (cfg.mutation_sigma * space.ranges)
                child = child + np.where(mutate, noise, 0.0)
            new_pop.append(space.clip(child))
        pop = new_pop
        costs = [objective(x) for x in pop]
        evaluations += cfg.pop_size
        gen_best = int(np.argmin(costs))
        if costs[gen_best] < best_cost:
            best_x, best_cost = pop[gen_best].copy(), costs[gen_best]
        trace.append(best_cost)

    return OptimizerResult(
        best_params=best_x,
        best_cost=best_cost,
        cost_trace=np.asarray(trace),
        evaluations=evaluations,
        rng_seed=cfg.rng_seed,
    )


def minimize_pem(objective, space: SearchSpace, cfg: PemConfig) -> OptimizerResult:
    """Local derivative-free minimization (Nelder-Mead) from the space midpoint."""
    evaluations = 0
    best_cost = np.inf
    best_x = space.midpoint()
    trace = []

    def wrapped(x):
        nonlocal evaluations, best_cost, best_x
        evaluations += 1
        c = objective(space.clip(np.asarray(x, dtype=float)))
        if c < best_cost:
            best_cost = c
            best_x = space.clip(np.asarray(x, dtype=float))
        return c

    def on_iteration(_xk):
        trace.append(best_cost)

    x_start = space.midpoint()
    trace.append(wrapped(x_start))
    for _ in range(max(1, cfg.restarts)):
        res = _opt.minimize(
            wrapped,
            x_start,
            method="Nelder-Mead",
            bounds=_opt.Bounds(space.lower, space.upper),
            callback=on_iteration,
            options={
                "maxiter": cfg.max_iter,
                "xatol": cfg.xatol,
                "fatol": cfg.fatol,
                "adaptive": True,
            },
        )
        x_start = space.clip(np.asarray(res.x, dtype=float))

    return OptimizerResult(
        best_params=best_x,
        best_cost=best_cost,
        cost_trace=np.minimum.accumulate(np.asarray(trace)),
        evaluations=evaluations,
        rng_seed=cfg.rng_seed,
    )


def prediction_error_objective(
    data: TimeSeriesLog, config: _fitness.FitnessConfig = _fitness.FitnessConfig()
):
    """Mean-squared one-step prediction error over the masked channels.

    Each masked channel's error is normalized by its standard deviation so
    that rates, attitudes and velocities weigh comparably.  States absent from
    the log are treated as zero when forming the one-step predictor.
    """
    scored = _fitness.scored_channel_names(data, config)
    scored_idx = [_model.STATE_NAMES.index(s) for s in scored]
    n = data.n_samples
    X = np.zeros((n, _model.N_STATES))
    for i, name in enumerate(_model.STATE_NAMES):
        if name in data.channels:
            X[:, i] = data.channels[name]
    U = data.control_matrix()
    dt = data.dt
    norms = np.maximum(X[:, scored_idx].std(axis=0), 1e-9)

    def objective(x) -> float:
        params = _model.ParameterSet.from_array(x)
        mats = _model.build_matrices(params, config.flap_sign_symmetric)
        F, G = _model.rk4_step_maps(mats, dt)
        predicted = X[:-1] @ F.T + U[:-1] @ G.T
        err = (predicted[:, scored_idx] - X[1:, scored_idx]) / norms
        mse = float(np.mean(err**2))
        return mse if np.isfinite(mse) else 1e12

    return objective


def run_iwo(
    data: TimeSeriesLog,
    space: SearchSpace,
    cfg: IwoConfig,
    fitness_config: _fitness.FitnessConfig = _fitness.FitnessConfig(),
) -> OptimizerResult:
    return minimize_iwo(_fitness.make_objective(data, fitness_config), space, cfg)


def run_ga(
    data: TimeSeriesLog,
    space: SearchSpace,
    cfg: GaConfig,
    fitness_config: _fitness.FitnessConfig = _fitness.FitnessConfig(),
) -> OptimizerResult:
    return minimize_ga(_fitness.make_objective(data, fitness_config), space, cfg)


def run_pem(
    data: TimeSeriesLog,
    space: SearchSpace,
    cfg: PemConfig,
    fitness_config: _fitness.FitnessConfig = _fitness.FitnessConfig(),
) -> OptimizerResult:
    """PEM surrogate: minimize one-step prediction error, locally."""
    return minimize_pem(prediction_error_objective(data, fitness_config), space, cfg)

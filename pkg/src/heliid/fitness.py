"""Correlation-based scoring of candidate parameter sets against flight data.

A candidate is simulated over the recorded control inputs and each measured
state channel is compared to its simulated counterpart with the population
Pearson coefficient rho.  The cost is sum over scored states of (1 - rho)^2;
lower is better, 0 is a perfect shape match on every channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .signals import CONTROL_NAMES, STATE_NAMES, TimeSeriesLog

# Below this standard deviation a series is considered constant and its
# correlation undefined.
SIGMA_FLOOR = 1e-12

# Cost contribution of a single state can never exceed (1 - (-1))^2 = 4.
MAX_TERM = 4.0


@dataclass(frozen=True)
class FitnessConfig:
    """Scoring options.

    ``score_channels`` restricts scoring to the named states; by default every
    masked channel of the data log is scored (all 13 for synthetic logs).
    """

    flap_sign_symmetric: bool = False
    score_channels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class FitnessReport:
    cost: float
    per_state_rho: dict
    divergent: bool

    @property
    def fitness(self) -> float:
        """Fitness to maximize; one canonical sign convention: -cost."""
        return -self.cost


def pearson(a, b) -> float | None:
    """Population Pearson correlation of two equal-length sequences.

    Returns ``None`` (undefined) when either series is constant to within
    ``SIGMA_FLOOR``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"sequences must be 1-d and equal length, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise ValueError("need at least 2 observations")
    sa = a.std()
    sb = b.std()
    if sa < SIGMA_FLOOR or sb < SIGMA_FLOOR:
        return None
    rho = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return min(1.0, max(-1.0, rho))


def scored_channel_names(data: TimeSeriesLog, config: FitnessConfig) -> tuple[str, ...]:
    """Channels scored by :func:`evaluate`, in canonical state order."""
    if config.score_channels is not None:
        names = config.score_channels
        missing = set(names) - set(data.channels)
        if missing:
            raise ValueError(f"score channels absent from data: {sorted(missing)}")
    else:
        names = tuple(s for s in STATE_NAMES if s in data.mask)
    if not names:
        raise ValueError("no state channels to score")
    return tuple(s for s in STATE_NAMES if s in names)


def evaluate(
    params: model.ParameterSet,
    data: TimeSeriesLog,
    config: FitnessConfig = FitnessConfig(),
) -> FitnessReport:
    """Simulate ``params`` over the data's inputs and score the correlation cost.

    A divergent simulation (or one truncated short of the record) scores the
    penalty ceiling of 4 per scored state; an undefined correlation (flat
    series) counts as rho = 0, i.e. contributes 1.
    """
    missing = [c for c in CONTROL_NAMES if c not in data.channels]
    if missing:
        raise ValueError(f"data lacks control channels: {missing}")
    scored = scored_channel_names(data, config)

    mats = model.build_matrices(params, config.flap_sign_symmetric)
    x0 = model.initial_state_from_log(data)
    sim = model.simulate(mats, x0, data)

    if sim.divergent or sim.n_samples != data.n_samples:
        return FitnessReport(
            cost=MAX_TERM * len(scored),
            per_state_rho={s: None for s in scored},
            divergent=True,
        )

    rhos = {}
    cost = 0.0
    for name in scored:
        rho = pearson(data.channels[name], sim.channels[name])
        rhos[name] = rho
        effective = 0.0 if rho is None else rho
        cost += (1.0 - effective) ** 2
    return FitnessReport(cost=cost, per_state_rho=rhos, divergent=False)


def make_objective(data: TimeSeriesLog, config: FitnessConfig = FitnessConfig()):
    """A vector -> cost callable over the canonical 40-parameter layout."""

    def objective(x) -> float:
        return evaluate(model.ParameterSet.from_array(x), data, config).cost

    return objective

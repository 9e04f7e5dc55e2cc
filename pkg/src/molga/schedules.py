"""Discriminator-weight control: constant beta or the stagnation-triggered
adaptive schedule that toggles between a low and a high weight."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence


@dataclass
class BetaSchedule:
    """Step schedule for the discriminator weight.

    Constant mode always returns `constant`. Adaptive mode starts at `low`;
    after `window` consecutive generations in which the best-ever objective
    improved by no more than `epsilon`, it switches to `high`, and drops
    back to `low` on the first strict improvement after that.
    """

    mode: str = "constant"  # "constant" | "adaptive"
    constant: float = 0.0
    low: float = 0.0
    high: float = 1000.0
    window: int = 20
    epsilon: float = 1e-3
    # adaptive state
    current: float = field(default=0.0, init=False)
    best_at_improvement: float | None = field(default=None, init=False)
    since_improvement: int = field(default=0, init=False)

    def __post_init__(self):
        if self.mode not in ("constant", "adaptive"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self.current = self.constant if self.mode == "constant" else self.low

    @staticmethod
    def const(beta: float) -> "BetaSchedule":
        return BetaSchedule(mode="constant", constant=beta)

    @staticmethod
    def adaptive(low: float = 0.0, high: float = 1000.0, window: int = 20,
                 epsilon: float = 1e-3) -> "BetaSchedule":
        return BetaSchedule(mode="adaptive", low=low, high=high,
                            window=window, epsilon=epsilon)


def next_beta(schedule: BetaSchedule, gen: int, best_j_history: Sequence[float]) -> float:
    """Beta for the upcoming generation.

    `best_j_history[i]` is the best-ever objective after generation i; its
    length must equal `gen`. State transitions happen only here, once per
    generation boundary.
    """
    if len(best_j_history) != gen:
        raise ValueError(f"history length {len(best_j_history)} != generation index {gen}")
    if schedule.mode == "constant":
        return schedule.constant
    if not best_j_history:
        return schedule.current
    latest = best_j_history[-1]
    if schedule.best_at_improvement is None:
        schedule.best_at_improvement = latest
        schedule.since_improvement = 0
        return schedule.current
    if latest > schedule.best_at_improvement + schedule.epsilon:
        schedule.best_at_improvement = latest
        schedule.since_improvement = 0
        if schedule.current == schedule.high:
            schedule.current = schedule.low
    else:
        schedule.since_improvement += 1
        if schedule.current == schedule.low and schedule.since_improvement >= schedule.window:
            schedule.current = schedule.high
    return schedule.current

"""When to shrink and when to expand the block.

Three policies are provided: ``fix`` (periodic), ``slope`` (one-step
convergence slope) and ``slopek`` (slope averaged over a window), plus
``none`` which never changes the block size. The first shrink of every
policy is gated by a warm-up: it fires at the first iteration with
``j >= j_warm`` and ``r <= r_warm``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

__all__ = [
    "Decision",
    "StrategyConfig",
    "StrategyState",
    "slope",
    "slope_avg",
    "decide",
    "KINDS",
]

KINDS = ("none", "fix", "slope", "slopek")


class Decision(str, enum.Enum):
    HOLD = "hold"
    SHRINK = "shrink"
    EXPAND = "expand"


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "none"
    j_e: int = 12
    j_s: int = 2
    mu: float = 1.1
    j_p: int = 10
    j_warm: int = 5
    r_warm: float = 1e-4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {KINDS}")
        if not 0 <= self.j_s < self.j_e:
            raise ValueError("need 0 <= j_s < j_e")
        if not self.mu > 1:
            raise ValueError("mu must exceed 1")
        if self.j_p < 1:
            raise ValueError("j_p must be >= 1")


@dataclass
class StrategyState:
    n_es: int
    n_ex: int
    n_now: int | None = None
    j: int = 0
    j_l: int | None = None
    warm: bool = False
    log_r_history: list[float] = field(default_factory=list)
    c_max: float | None = None

    def __post_init__(self):
        if self.n_now is None:
            self.n_now = self.n_ex


def slope(history) -> float:
    """``log10 r(j-1) - log10 r(j)`` from a list of log10 residuals."""
    if len(history) < 2:
        raise ValueError("slope needs at least two residuals")
    return history[-2] - history[-1]


def slope_avg(history, j_p: int) -> float:
    """Average slope over the last ``j_p`` iterations."""
    if len(history) < j_p + 1:
        raise ValueError(f"slope_avg needs at least {j_p + 1} residuals")
    return (history[-1 - j_p] - history[-1]) / j_p


def _current_slope(state: StrategyState, cfg: StrategyConfig) -> float | None:
    h = state.log_r_history
    if cfg.kind == "slope":
        return slope(h) if len(h) >= 2 else None
    if cfg.kind == "slopek":
        return slope_avg(h, cfg.j_p) if len(h) >= cfg.j_p + 1 else None
    return None


def _shrink(state: StrategyState) -> Decision:
    state.n_now = state.n_es
    state.warm = True
    state.c_max = None
    return Decision.SHRINK


def _expand(state: StrategyState) -> Decision:
    state.n_now = state.n_ex
    state.j_l = 0
    return Decision.EXPAND


def decide(state: StrategyState, cfg: StrategyConfig, r_now: float) -> Decision:
    """Record ``r_now`` for iteration ``state.j`` and return the block-size action.

    The state is updated in place (residual history, slope maximum,
    iterations since the last expansion, current block size).
    """
    if not r_now > 0:
        # an exactly zero residual carries no slope information
        r_now = math.ulp(0.0) if r_now == 0 else r_now
    state.log_r_history.append(math.log10(r_now))
    if state.j_l is not None:
        state.j_l += 1

    c = _current_slope(state, cfg)
    if c is not None and state.warm:
        state.c_max = c if state.c_max is None else max(state.c_max, c)

    if cfg.kind == "none":
        return Decision.HOLD

    if not state.warm:
        if state.j >= cfg.j_warm and r_now <= cfg.r_warm:
            return _shrink(state)
        return Decision.HOLD

    j = state.j
    if cfg.kind == "fix":
        if state.n_now == state.n_es and j % cfg.j_e == 0:
            return _expand(state)
        if state.n_now == state.n_ex and (j - cfg.j_s) % cfg.j_e == 0:
            return _shrink(state)
        return Decision.HOLD

    # slope / slopek
    if state.n_now == state.n_es:
        if c is None:
            return Decision.HOLD
        # sign test first: a non-positive slope means the residual stalled or grew
        if c <= 0 or state.c_max / c > cfg.mu:
            return _expand(state)
        return Decision.HOLD
    if state.n_now == state.n_ex and state.j_l == cfg.j_s:
        return _shrink(state)
    return Decision.HOLD

"""Adaptive timestep selection with switching-time and terminal clamping.

The candidate step shrinks with the current solution norm,

    candidate = h_min  v  ( h_max / ||Y||^(1/k)  ^  h_max ),

and is then clamped so the next mesh point never passes the next switching
time of the Markov chain or the terminal time T; clamped steps land exactly
(bitwise) on those times.  Steps of length at most h_min dispatch to the
backstop map.  With h_max = rho * h_min, every norm-controlled step implies
||Y|| < rho^k, which the solver asserts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import InvalidParamsError, NonpositiveRemainingTimeError


class StepReason(enum.Enum):
    """Which clause of the step rule fixed the step length."""

    NORM_CONTROLLED = "norm_controlled"
    FLOORED_AT_HMIN = "floored_at_hmin"
    CLAMPED_TO_SWITCH = "clamped_to_switch"
    CLAMPED_TO_TERMINAL = "clamped_to_terminal"


@dataclass(frozen=True)
class StepParams:
    """Mesh parameters: maximum step h_max, ratio rho > 1, norm exponent k > 0.

    The minimum step is derived as h_min = h_max / rho.
    """

    h_max: float
    rho: float
    k: float

    def __post_init__(self):
        if not (0.0 < self.h_max <= 1.0):
            raise InvalidParamsError(f"require 0 < h_max <= 1, got {self.h_max}")
        if not self.rho > 1.0:
            raise InvalidParamsError(f"require rho > 1, got {self.rho}")
        if not self.k > 0.0:
            raise InvalidParamsError(f"require k > 0, got {self.k}")

    @property
    def h_min(self) -> float:
        return self.h_max / self.rho


@dataclass(frozen=True)
class StepDecision:
    h: float
    use_backstop: bool
    reason: StepReason


def next_step(y_norm: float, t_n: float, next_switch: float | None, T: float,
              p: StepParams) -> StepDecision:
    """Choose the step from t_n given the current solution norm.

    ``next_switch`` is the first switching time strictly after t_n, or None
    if the chain does not switch again before T.  A solution norm of zero is
    treated as candidate h_max (the formula's cap in the ||Y|| -> 0 limit).
    """
    remaining = T - t_n
    if remaining <= 0.0:
        raise NonpositiveRemainingTimeError(f"t_n={t_n} is at or beyond T={T}")
    if y_norm < 0.0 or math.isnan(y_norm):
        raise InvalidParamsError(f"y_norm must be nonnegative, got {y_norm}")
    if next_switch is not None and next_switch <= t_n:
        raise InvalidParamsError(
            f"next_switch={next_switch} must lie strictly after t_n={t_n}")

    h_min = p.h_min
    if y_norm == 0.0:
        raw = p.h_max
    else:
        raw = p.h_max / y_norm ** (1.0 / p.k)
        if raw > p.h_max:
            raw = p.h_max
    if raw < h_min:
        h, reason = h_min, StepReason.FLOORED_AT_HMIN
    else:
        h, reason = raw, StepReason.NORM_CONTROLLED
    if next_switch is not None:
        to_switch = next_switch - t_n
        if to_switch <= h:
            h, reason = to_switch, StepReason.CLAMPED_TO_SWITCH
    if remaining <= h:
        h, reason = remaining, StepReason.CLAMPED_TO_TERMINAL
    return StepDecision(h=h, use_backstop=h <= h_min, reason=reason)


def build_mesh_bound(t: float, p: StepParams, n_switches: int) -> tuple[int, int]:
    """(N_min, N_max) mesh-size bounds for horizon t with n_switches switches.

    N_min = floor(t / h_max);  N_max = ceil(t / h_min + n_switches).  N_max is
    a hard iteration cap for the solver.
    """
    if t < 0.0:
        raise InvalidParamsError(f"t must be nonnegative, got {t}")
    if n_switches < 0:
        raise InvalidParamsError(f"n_switches must be nonnegative, got {n_switches}")
    n_min = math.floor(t / p.h_max)
    n_max = math.ceil(t / p.h_min + n_switches)
    return n_min, n_max

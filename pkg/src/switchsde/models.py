"""Scalar regime-switching SDE models.

A model supplies per-state drift f(x, i), diffusion g(x, i) and the diffusion
x-derivative g'(x, i) (needed by Milstein-type schemes).  States are 1-based.

Two concrete families are provided:

* the telomere-shortening model
      dL = -(c_i + a_i L^2) dt + sqrt(a_i max(L,0)^3 / 3) dW,
  whose four canonical states pair two decay rates (c_1, c_2) with two break
  intensities (a_1, a_2);
* a linear test model  dX = mu_i X dt + sigma_i X dW  which, conditional on
  the chain, is piecewise geometric Brownian motion and therefore has an
  exact solution usable as a strong-error oracle.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable

from .ctmc import MarkovPath
from .errors import InvalidParamsError, StateIndexError, TimeOutOfRangeError
from .noise import BrownianPath

Coefficient = Callable[[float, int], float]

# Parameter estimates for the telomere model (base pairs / day and
# 1 / (bp^2 day)); paired in the order ((c1,a1), (c1,a2), (c2,a1), (c2,a2)).
TELOMERE_C = (4.5, 7.5)
TELOMERE_A = (0.22e-6, 0.41e-6)


@dataclass(frozen=True)
class RegimeModel:
    """Per-state coefficients of a scalar SDE with Markovian switching.

    All three callables are pure functions of (x, state); the instance is
    immutable and safe to share across threads.
    """

    num_states: int
    drift: Coefficient
    diffusion: Coefficient
    diffusion_derivative: Coefficient


@dataclass(frozen=True)
class TelomereParams:
    """Decay rates (c_1, c_2) and break intensities (a_1, a_2), all positive."""

    c_values: tuple[float, float] = TELOMERE_C
    a_values: tuple[float, float] = TELOMERE_A

    def __post_init__(self):
        if len(self.c_values) != 2 or len(self.a_values) != 2:
            raise InvalidParamsError("expected two c values and two a values")
        for v in (*self.c_values, *self.a_values):
            if not (math.isfinite(v) and v > 0):
                raise InvalidParamsError(f"telomere parameters must be positive, got {v}")

    @property
    def state_pairs(self) -> tuple[tuple[float, float], ...]:
        """State map 1..4 -> ((c1,a1), (c1,a2), (c2,a1), (c2,a2))."""
        c1, c2 = self.c_values
        a1, a2 = self.a_values
        return ((c1, a1), (c1, a2), (c2, a1), (c2, a2))


@dataclass(frozen=True)
class LinearModelParams:
    """Per-state drift and diffusion coefficients of the linear test model."""

    mu: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        if len(self.mu) == 0 or len(self.mu) != len(self.sigma):
            raise InvalidParamsError("mu and sigma must be equal-length, nonempty")
        for v in (*self.mu, *self.sigma):
            if not math.isfinite(v):
                raise InvalidParamsError(f"coefficients must be finite, got {v}")

    @property
    def num_states(self) -> int:
        return len(self.mu)


def _check_state(i: int, n: int) -> int:
    if not 1 <= i <= n:
        raise StateIndexError(f"state {i} outside 1..{n}")
    return i - 1


def telomere_regime_model(pairs) -> RegimeModel:
    """Telomere model over an explicit list of (c, a) state pairs.

    The diffusion sqrt(a x^3 / 3) and its derivative are extended by zero for
    x <= 0, so a trajectory crossing zero continues deterministically under
    the drift.  Requires c > 0 and a >= 0 per state.
    """
    cs = tuple(float(c) for c, _ in pairs)
    as_ = tuple(float(a) for _, a in pairs)
    n = len(cs)
    if n == 0:
        raise InvalidParamsError("at least one (c, a) pair required")
    for c, a in zip(cs, as_):
        if not (math.isfinite(c) and c > 0):
            raise InvalidParamsError(f"c must be positive, got {c}")
        if not (math.isfinite(a) and a >= 0):
            raise InvalidParamsError(f"a must be nonnegative, got {a}")

    def drift(x: float, i: int) -> float:
        k = _check_state(i, n)
        return -(cs[k] + as_[k] * x * x)

    def diffusion(x: float, i: int) -> float:
        k = _check_state(i, n)
        if x <= 0.0:
            return 0.0
        return math.sqrt(as_[k] * x * x * x / 3.0)

    def diffusion_derivative(x: float, i: int) -> float:
        k = _check_state(i, n)
        if x <= 0.0:
            return 0.0
        return 0.5 * math.sqrt(3.0 * as_[k] * x)

    return RegimeModel(num_states=n, drift=drift, diffusion=diffusion,
                       diffusion_derivative=diffusion_derivative)


def telomere_model(p: TelomereParams) -> RegimeModel:
    """Four-state telomere model over the canonical (c, a) state map."""
    return telomere_regime_model(p.state_pairs)


def linear_model(p: LinearModelParams) -> RegimeModel:
    """Linear test model: f = mu_i x, g = sigma_i x, g' = sigma_i."""
    mu = tuple(float(v) for v in p.mu)
    sigma = tuple(float(v) for v in p.sigma)
    n = len(mu)

    def drift(x: float, i: int) -> float:
        return mu[_check_state(i, n)] * x

    def diffusion(x: float, i: int) -> float:
        return sigma[_check_state(i, n)] * x

    def diffusion_derivative(x: float, i: int) -> float:
        return sigma[_check_state(i, n)]

    return RegimeModel(num_states=n, drift=drift, diffusion=diffusion,
                       diffusion_derivative=diffusion_derivative)


def exact_linear_solution(p: LinearModelParams, x0: float, chain: MarkovPath,
                          path: BrownianPath, t: float, t_start: float = 0.0) -> float:
    """Exact solution of the linear model at time t, driven by a shared path.

    Conditional on the chain, each inter-switch segment is geometric Brownian
    motion, so

        X(t) = x0 * exp( sum_seg (mu_i - sigma_i^2/2) dt_seg + sigma_i dW_seg )

    with dW_seg read from ``path`` (memoizing it for any solver coupled to the
    same path).  ``t_start`` restarts the product from a later time, with x0
    then interpreted as the value at ``t_start``.
    """
    if not 0.0 <= t_start <= t <= chain.horizon:
        raise TimeOutOfRangeError(
            f"need 0 <= t_start={t_start} <= t={t} <= horizon={chain.horizon}")
    taus = chain.switch_times
    idx = bisect_right(taus, t_start)
    state = chain.initial_state if idx == 0 else chain.states[idx - 1]
    acc = 0.0
    a = t_start
    while True:
        b = taus[idx] if idx < len(taus) and taus[idx] < t else t
        k = _check_state(state, p.num_states)
        mu, sigma = p.mu[k], p.sigma[k]
        acc += (mu - 0.5 * sigma * sigma) * (b - a) + sigma * path.increment(a, b)
        if b == t:
            break
        state = chain.states[idx]
        idx += 1
        a = b
    return x0 * math.exp(acc)


def check_diffusion_derivative(model: RegimeModel, xs, states=None,
                               rtol: float = 1e-6) -> None:
    """Verify g' against central finite differences at the given points.

    Uses step 1e-5 * max(1, |x|); raises :class:`InvalidParamsError` on the
    first point where the relative error exceeds ``rtol``.
    """
    if states is None:
        states = range(1, model.num_states + 1)
    for i in states:
        for x in xs:
            x = float(x)
            h = 1e-5 * max(1.0, abs(x))
            fd = (model.diffusion(x + h, i) - model.diffusion(x - h, i)) / (2.0 * h)
            an = model.diffusion_derivative(x, i)
            scale = max(abs(an), abs(fd), 1e-8)
            if abs(fd - an) / scale > rtol:
                raise InvalidParamsError(
                    f"diffusion_derivative mismatch at (x={x}, i={i}): "
                    f"analytic {an}, finite difference {fd}")

"""Monte Carlo experiment engine.

Three experiments are provided:

* :func:`strong_order_study` estimates the strong (mean-square) convergence
  order of the hybrid solver on the linear test model.  Per sample, one chain
  and one Brownian path are reused across every grid level, and the exact
  solution is evaluated first so all levels are coupled pathwise through the
  shared memoized path.
* :func:`run_ensemble` gathers terminal-value statistics and a density
  histogram over independent trajectories.
* :func:`mean_change_study` draws uniform initial values, runs several
  trajectories per initial, and reports per-initial and grand mean changes
  over the horizon.

Seeding: every trajectory gets independent chain / noise / auxiliary random
streams derived from the master seed and the trajectory index through
``numpy.random.SeedSequence`` spawn keys, so results do not depend on
execution order and are reproducible bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .ctmc import GeneratorMatrix, simulate_chain
from .errors import (
    AllTrajectoriesFailedError,
    DegenerateGridError,
    InvalidParamsError,
    NonfiniteResultError,
    RootNotFoundError,
    StepBudgetExceededError,
)
from .models import LinearModelParams, RegimeModel, exact_linear_solution, linear_model
from .noise import BrownianPath
from .schemes import solve_terminal
from .stepping import StepParams

logger = logging.getLogger(__name__)

BACKSTOP_WARN_FRACTION = 0.05

_TRAJECTORY_FAILURES = (NonfiniteResultError, RootNotFoundError, StepBudgetExceededError)

# Per-trajectory substream tags.
_CHAIN_STREAM = 0
_NOISE_STREAM = 1
_AUX_STREAM = 2
_INITIAL_STREAM = 3


def substream_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    """Independent generator for (trajectory index, substream)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, stream)))


@dataclass(frozen=True)
class ConvergenceReport:
    """Strong-error study result: RMS terminal errors per grid level and the
    least-squares slope of log(error) against log(h_max)."""

    h_max_grid: tuple[float, ...]
    rms_errors: tuple[float, ...]
    fitted_order: float
    sample_count: int
    scheme: str


@dataclass(frozen=True)
class EnsembleSummary:
    """Terminal-value statistics over the successful trajectories."""

    terminal_values: np.ndarray
    mean: float
    std_dev: float
    standard_error: float
    bin_edges: np.ndarray
    densities: np.ndarray
    backstop_fraction: float
    failed_count: int


@dataclass(frozen=True)
class MeanChangeReport:
    """Per-initial series (sorted by initial value) plus the grand mean change.

    ``summary`` aggregates the per-initial mean changes, matching the density
    histogram of mean changes; ``single_finals`` holds one representative
    trajectory's final value per initial (the first successful run).
    """

    initials: np.ndarray
    mean_finals: np.ndarray
    single_finals: np.ndarray
    mean_changes: np.ndarray
    grand_mean_change: float
    summary: EnsembleSummary
    failed_count: int


def _histogram(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Freedman-Diaconis density histogram; densities integrate to one."""
    if len(values) == 0:
        return np.array([0.0, 1.0]), np.array([0.0])
    edges = np.histogram_bin_edges(values, bins="fd")
    if len(edges) < 2 or edges[0] == edges[-1]:
        edges = np.array([values[0] - 0.5, values[0] + 0.5])
    densities, _ = np.histogram(values, bins=edges, density=True)
    return edges, densities


def _summarize(values: np.ndarray, backstop_fraction: float,
               failed_count: int) -> EnsembleSummary:
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    if len(values) > 1:
        std = float(np.std(values, ddof=1))
        se = std / math.sqrt(len(values))
    else:
        std = 0.0
        se = 0.0
    edges, densities = _histogram(values)
    return EnsembleSummary(terminal_values=values, mean=mean, std_dev=std,
                           standard_error=se, bin_edges=edges, densities=densities,
                           backstop_fraction=backstop_fraction, failed_count=failed_count)


def _draw_r0(rule, num_states: int, aux: np.random.Generator) -> int:
    if rule == "uniform":
        return 1 + int(aux.integers(num_states))
    r0 = int(rule)
    if not 1 <= r0 <= num_states:
        raise InvalidParamsError(f"r0={r0} outside 1..{num_states}")
    return r0


def strong_order_study(params: LinearModelParams, g: GeneratorMatrix, x0: float,
                       T: float, grid, rho: float, k: float, M: int, seed: int,
                       scheme: str = "milstein", r0: int = 1) -> ConvergenceReport:
    """Coupled strong-error study against the exact linear-model solution.

    Parameters
    ----------
    grid:
        Strictly decreasing h_max values, at least three levels.
    M:
        Sample count (>= 100); each sample reuses one chain and one Brownian
        path across all levels.
    scheme:
        Main map, 'milstein' or 'em'; the backstop stays drift-implicit
        Milstein either way.
    """
    grid = tuple(float(h) for h in grid)
    if len(grid) < 3:
        raise DegenerateGridError(f"need at least 3 grid levels, got {len(grid)}")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise DegenerateGridError("grid must be strictly decreasing")
    if M < 100:
        raise InvalidParamsError(f"need M >= 100 samples, got {M}")
    if g.num_states != params.num_states:
        raise InvalidParamsError(
            f"generator has {g.num_states} states, model {params.num_states}")

    model = linear_model(params)
    step_params = [StepParams(h_max=h, rho=rho, k=k) for h in grid]
    errors = np.empty((len(grid), M))
    for i in range(M):
        chain = simulate_chain(g, r0, T, substream_rng(seed, i, _CHAIN_STREAM))
        path = BrownianPath(substream_rng(seed, i, _NOISE_STREAM))
        exact = exact_linear_solution(params, x0, chain, path, T)
        for lvl in range(len(grid) - 1, -1, -1):  # finest level queries first
            y, _, _ = solve_terminal(model, chain, path, x0, T, step_params[lvl], scheme)
            errors[lvl, i] = y - exact
    rms = np.sqrt(np.mean(errors * errors, axis=1))
    slope = float(np.polyfit(np.log(grid), np.log(rms), 1)[0])
    if not math.isfinite(slope):
        raise InvalidParamsError("fitted order is not finite")
    return ConvergenceReport(h_max_grid=grid, rms_errors=tuple(float(e) for e in rms),
                             fitted_order=slope, sample_count=M, scheme=scheme)


def run_ensemble(model: RegimeModel, g: GeneratorMatrix, initial, r0, T: float,
                 p: StepParams, M: int, runs_per_initial: int = 1, seed: int = 0,
                 scheme: str = "milstein") -> EnsembleSummary:
    """Monte Carlo ensemble of M x runs_per_initial independent trajectories.

    Parameters
    ----------
    initial:
        Either a fixed initial value or a ``(lo, hi)`` pair for a uniform
        draw; with a pair, one value is drawn per outer index and shared by
        that index's ``runs_per_initial`` trajectories.
    r0:
        Fixed 1-based initial chain state, or ``'uniform'`` to draw one per
        trajectory.

    Trajectories that abort (non-finite value, failed backstop solve, or step
    budget) are excluded from the statistics and counted in ``failed_count``.
    """
    if M < 1 or runs_per_initial < 1:
        raise InvalidParamsError("M and runs_per_initial must be >= 1")
    if g.num_states != model.num_states:
        raise InvalidParamsError(
            f"generator has {g.num_states} states, model {model.num_states}")
    uniform_initial = isinstance(initial, (tuple, list))
    if uniform_initial:
        lo, hi = float(initial[0]), float(initial[1])
        if not lo < hi:
            raise InvalidParamsError(f"need lo < hi, got ({lo}, {hi})")

    total = M * runs_per_initial
    values = np.empty(total)
    ok = np.zeros(total, dtype=bool)
    failed = 0
    steps_total = 0
    backstop_total = 0
    for j in range(M):
        if uniform_initial:
            x0 = float(substream_rng(seed, j, _INITIAL_STREAM).uniform(lo, hi))
        else:
            x0 = float(initial)
        for r in range(runs_per_initial):
            idx = j * runs_per_initial + r
            aux = substream_rng(seed, idx, _AUX_STREAM)
            r0_i = _draw_r0(r0, g.num_states, aux)
            chain = simulate_chain(g, r0_i, T, substream_rng(seed, idx, _CHAIN_STREAM))
            path = BrownianPath(substream_rng(seed, idx, _NOISE_STREAM))
            try:
                y, n_steps, n_backstop = solve_terminal(model, chain, path, x0, T, p, scheme)
            except _TRAJECTORY_FAILURES as exc:
                failed += 1
                logger.warning("trajectory %d failed: %s", idx, exc)
                continue
            values[idx] = y
            ok[idx] = True
            steps_total += n_steps
            backstop_total += n_backstop
    if not ok.any():
        raise AllTrajectoriesFailedError(f"all {total} trajectories failed")
    fraction = backstop_total / steps_total if steps_total else 0.0
    if fraction >= BACKSTOP_WARN_FRACTION:
        logger.warning("backstop used on %.1f%% of steps (design intent: rare)",
                       100.0 * fraction)
    return _summarize(values[ok], fraction, failed)


def mean_change_study(model: RegimeModel, g: GeneratorMatrix, lo: float, hi: float,
                      t_start_day: float, t_end_day: float, n_initials: int,
                      runs_per_initial: int, seed: int,
                      p: StepParams | None = None, r0=1,
                      scheme: str = "milstein") -> MeanChangeReport:
    """Mean change in value over [t_start_day, t_end_day] for uniform initials.

    Each of ``n_initials`` initial values (uniform on [lo, hi], interpreted as
    the value at ``t_start_day``) is integrated ``runs_per_initial`` times over
    the horizon ``t_end_day - t_start_day``.  Reports the per-initial mean
    change (final minus initial), the grand mean over all trajectories, and
    line-plot series ordered by initial value.
    """
    if not 0 < lo < hi:
        raise InvalidParamsError(f"need 0 < lo < hi, got ({lo}, {hi})")
    if not t_end_day > t_start_day:
        raise InvalidParamsError(
            f"need t_end_day > t_start_day, got ({t_start_day}, {t_end_day})")
    if n_initials < 1 or runs_per_initial < 1:
        raise InvalidParamsError("n_initials and runs_per_initial must be >= 1")
    if g.num_states != model.num_states:
        raise InvalidParamsError(
            f"generator has {g.num_states} states, model {model.num_states}")
    if p is None:
        p = StepParams(h_max=0.03, rho=15.0, k=10.0)
    horizon = t_end_day - t_start_day

    initials = np.empty(n_initials)
    mean_finals = np.full(n_initials, np.nan)
    single_finals = np.full(n_initials, np.nan)
    all_changes: list[float] = []
    failed = 0
    steps_total = 0
    backstop_total = 0
    for j in range(n_initials):
        x0 = float(substream_rng(seed, j, _INITIAL_STREAM).uniform(lo, hi))
        initials[j] = x0
        finals: list[float] = []
        for r in range(runs_per_initial):
            idx = j * runs_per_initial + r
            aux = substream_rng(seed, idx, _AUX_STREAM)
            r0_i = _draw_r0(r0, g.num_states, aux)
            chain = simulate_chain(g, r0_i, horizon, substream_rng(seed, idx, _CHAIN_STREAM))
            path = BrownianPath(substream_rng(seed, idx, _NOISE_STREAM))
            try:
                y, n_steps, n_backstop = solve_terminal(model, chain, path, x0,
                                                        horizon, p, scheme)
            except _TRAJECTORY_FAILURES as exc:
                failed += 1
                logger.warning("trajectory %d failed: %s", idx, exc)
                continue
            finals.append(y)
            all_changes.append(y - x0)
            steps_total += n_steps
            backstop_total += n_backstop
        if finals:
            mean_finals[j] = float(np.mean(finals))
            single_finals[j] = finals[0]
    if not all_changes:
        raise AllTrajectoriesFailedError(
            f"all {n_initials * runs_per_initial} trajectories failed")

    valid = ~np.isnan(mean_finals)
    order = np.argsort(initials[valid], kind="stable")
    initials_sorted = initials[valid][order]
    mean_finals_sorted = mean_finals[valid][order]
    single_finals_sorted = single_finals[valid][order]
    mean_changes = mean_finals_sorted - initials_sorted
    grand = float(np.mean(all_changes))
    fraction = backstop_total / steps_total if steps_total else 0.0
    if fraction >= BACKSTOP_WARN_FRACTION:
        logger.warning("backstop used on %.1f%% of steps (design intent: rare)",
                       100.0 * fraction)
    summary = _summarize(mean_changes, fraction, failed)
    return MeanChangeReport(initials=initials_sorted, mean_finals=mean_finals_sorted,
                            single_finals=single_finals_sorted, mean_changes=mean_changes,
                            grand_mean_change=grand, summary=summary, failed_count=failed)

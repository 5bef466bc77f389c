"""Experiment harness: bound tables, solver comparisons and discount sweeps as CSV or markdown."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import random
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .beliefs import count_two_step_beliefs
from .bounds import BOUND_KINDS, BoundChain, BoundConfig, table_value
from .core import PomdpModel
from .envs import make_env
from .pomdp_file import load_pomdp
from .solver import SolverConfig, relative_gap, solve

logger = logging.getLogger(__name__)

DESK_BUDGETS = (5.0, 15.0, 60.0)
LONG_BUDGETS = (600.0, 1200.0, 3600.0)


@dataclass
class ExperimentSpec:
    models: Sequence[str] = ("guessing_game",)
    bounds: Sequence[str] = BOUND_KINDS
    gamma: Optional[float] = None
    epsilon: float = 1e-3
    max_iter: int = 250
    budgets: Sequence[float] = DESK_BUDGETS
    solver_epsilon: float = 1e-3
    gammas: Sequence[float] = ()
    output: str = "csv"
    seed: int = 0
    count_bao: bool = True
    include_timings: bool = True

    def __post_init__(self):
        if any(b <= 0 for b in self.budgets):
            raise ValueError("budgets must be positive")
        for g in list(self.gammas) + ([self.gamma] if self.gamma is not None else []):
            if not 0 < g < 1:
                raise ValueError(f"discount {g} must lie in (0, 1)")
        if self.output not in ("csv", "markdown", "md"):
            raise ValueError("output must be csv or markdown")
        unknown = [b for b in self.bounds if b not in BOUND_KINDS]
        if unknown:
            raise ValueError(f"unknown bounds {unknown}; choose from {BOUND_KINDS}")


@dataclass
class ResultRow:
    env: str
    gamma: float
    n_states: int = 0
    n_actions: int = 0
    n_observations: int = 0
    n_b_sao: Optional[int] = None
    n_b_bao: Optional[int] = None
    bound: str = ""
    value: Optional[float] = None
    converged: Optional[bool] = None
    iterations: Optional[int] = None
    budget: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    gap: Optional[float] = None
    seconds: Optional[float] = None
    error: str = ""


def resolve_model(source: str, gamma: Optional[float] = None) -> PomdpModel:
    """Builtin name or path to a ``.pomdp`` file, optionally with a new discount."""
    path = Path(source)
    if source.endswith(".pomdp") or path.exists():
        model = load_pomdp(path)
        if gamma is not None:
            model = dataclasses.replace(model, discount=gamma, _joint_cache={})
        return model
    return make_env(source, 0.95 if gamma is None else gamma)


def _base_row(model: PomdpModel, source: str, chain: Optional[BoundChain], spec: ExperimentSpec) -> ResultRow:
    row = ResultRow(source, model.discount, model.num_states, model.num_actions, model.num_observations)
    if chain is not None:
        row.n_b_sao = len(chain.point_set)
        if spec.count_bao:
            row.n_b_bao = count_two_step_beliefs(model, chain.point_set)
    return row


def _seed(spec: ExperimentSpec):
    random.seed(spec.seed)
    np.random.seed(spec.seed)


def run_bounds(spec: ExperimentSpec) -> list[ResultRow]:
    """One row per (model, bound) with the bound value at ``b0``."""
    _seed(spec)
    rows = []
    for source in spec.models:
        try:
            model = resolve_model(source, spec.gamma)
            chain = BoundChain(model, BoundConfig(spec.epsilon, spec.max_iter))
            base = _base_row(model, source, chain, spec)
        except Exception as exc:  # recorded, the sweep goes on
            logger.warning("model %s failed: %s", source, exc)
            rows.append(ResultRow(source, spec.gamma or float("nan"), error=f"{type(exc).__name__}: {exc}"))
            continue
        for kind in spec.bounds:
            row = dataclasses.replace(base, bound=kind)
            try:
                table = chain.get(kind)
                row.value = table_value(table, model.initial_belief)
                row.converged = table.converged
                row.iterations = table.iterations
                row.seconds = table.seconds
            except Exception as exc:
                logger.warning("bound %s on %s failed: %s", kind, source, exc)
                row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def _at_budget(report, budget: float):
    lo = up = None
    for t, l, u in report.trace:
        if t <= budget + 1e-12:
            lo, up = l, u
    return lo, up


def run_solver_comparison(spec: ExperimentSpec, traces: Optional[list] = None) -> list[ResultRow]:
    """One row per (model, init bound, budget) with the bounds reached within that budget.

    When ``traces`` is a list, ``(env, init, seconds, lower, upper)`` checkpoints are appended to it.
    """
    _seed(spec)
    rows = []
    horizon = max(spec.budgets)
    for source in spec.models:
        try:
            model = resolve_model(source, spec.gamma)
            base = _base_row(model, source, None, spec)
        except Exception as exc:
            rows.append(ResultRow(source, spec.gamma or float("nan"), error=f"{type(exc).__name__}: {exc}"))
            continue
        for kind in spec.bounds:
            try:
                report = solve(model, SolverConfig(spec.solver_epsilon, horizon, init_bound=kind,
                                                   bound_config=BoundConfig(spec.epsilon, spec.max_iter)))
            except Exception as exc:
                rows.append(dataclasses.replace(base, bound=kind, error=f"{type(exc).__name__}: {exc}"))
                continue
            if traces is not None:
                traces.extend((source, kind, t, lo, up) for t, lo, up in report.trace)
            for budget in spec.budgets:
                lo, up = _at_budget(report, budget)
                row = dataclasses.replace(base, bound=kind, budget=budget, lower=lo, upper=up,
                                          converged=bool(report.converged and report.seconds <= budget),
                                          iterations=report.iterations, seconds=report.seconds)
                if lo is not None:
                    row.gap = relative_gap(lo, up)
                rows.append(row)
    return rows


def run_discount_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    """Solver wall time per (model, discount, init bound); unconverged runs report the budget."""
    _seed(spec)
    rows = []
    horizon = max(spec.budgets)
    for source in spec.models:
        for gamma in spec.gammas:
            try:
                model = resolve_model(source, gamma)
                base = _base_row(model, source, None, spec)
            except Exception as exc:
                rows.append(ResultRow(source, gamma, error=f"{type(exc).__name__}: {exc}"))
                continue
            for kind in spec.bounds:
                row = dataclasses.replace(base, bound=kind, budget=horizon)
                try:
                    report = solve(model, SolverConfig(spec.solver_epsilon, horizon, init_bound=kind,
                                                       bound_config=BoundConfig(spec.epsilon, spec.max_iter)))
                    row.lower, row.upper, row.gap = report.lower_value, report.upper_value, report.relative_gap
                    row.converged, row.iterations, row.seconds = report.converged, report.iterations, report.seconds
                except Exception as exc:
                    row.error = f"{type(exc).__name__}: {exc}"
                rows.append(row)
    return rows


TIMING_FIELDS = ("seconds",)


def _columns(include_timings: bool) -> list[str]:
    return [f.name for f in fields(ResultRow) if include_timings or f.name not in TIMING_FIELDS]


def _cell(value, rounded: bool) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if rounded:
            return f"{value:.3g}"
        return repr(value)
    return str(value)


def to_csv(rows: Sequence[ResultRow], include_timings: bool = True) -> str:
    cols = _columns(include_timings)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell(getattr(row, c), rounded=False) for c in cols])
    return buf.getvalue()


def to_markdown(rows: Sequence[ResultRow], include_timings: bool = True) -> str:
    cols = _columns(include_timings)
    # drop columns that are empty in every row
    cols = [c for c in cols if any(getattr(r, c) not in (None, "") for r in rows)] or cols
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(_cell(getattr(row, c), rounded=True) for c in cols) + " |")
    return "\n".join(lines) + "\n"


def render(rows: Sequence[ResultRow], spec: ExperimentSpec) -> str:
    if spec.output == "csv":
        return to_csv(rows, spec.include_timings)
    return to_markdown(rows, spec.include_timings)

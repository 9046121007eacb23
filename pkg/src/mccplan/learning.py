"""Likelihood, penalized fitting, structure selection, and online updates.

The joint likelihood factorizes over child conditions, so fitting runs one
Newton solve per condition over the rows where that condition is at risk.
Edge coefficient groups carry an adaptive ridge penalty; baseline terms are
never penalized.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .conditions import ConditionSet, CovariateLayout
from .dataset import TrajectoryDataset, dataset_arrays
from .errors import DataError, StepSizeError, ValidationError
from .model import FctbnModel

log = logging.getLogger("mccplan.learning")

# Intercept assigned to a condition with exposure but no observed events.
ZERO_EVENT_LOG_RATE = -20.0

_ARMIJO_C = 1e-4
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class RegularizationSpec:
    """Adaptive group-ridge settings.

    ``lam`` is the global strength; per-edge weights are lam divided by the
    pilot-fit group norm (floored at ``norm_floor``). Passing explicit
    ``weights`` skips the pilot.
    """

    lam: float = 0.0
    prune_epsilon: float = 1e-3
    pilot_ridge: float = 1e-4
    norm_floor: float = 1e-6
    weights: dict[tuple[str, str], float] | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("lam must be non-negative", ["lam"])
        if self.prune_epsilon <= 0 or self.pilot_ridge <= 0 or self.norm_floor <= 0:
            raise ValidationError(
                "prune_epsilon, pilot_ridge, and norm_floor must be positive",
                ["prune_epsilon", "pilot_ridge", "norm_floor"],
            )
        if self.weights is not None:
            bad = [g for g, w in self.weights.items() if w < 0]
            if bad:
                raise ValidationError("edge penalty weights must be non-negative", bad)

    def weight_for(self, group: tuple[str, str]) -> float:
        if self.weights is not None:
            return self.weights.get(group, self.lam)
        return self.lam


@dataclass(frozen=True)
class OnlineUpdateConfig:
    learning_rate: float
    batch_size: int = 32
    max_epochs: int = 100
    param_tol: float = 1e-6

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be non-negative", ["learning_rate"])
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValidationError(
                "batch_size and max_epochs must be at least 1", ["batch_size", "max_epochs"]
            )
        if self.param_tol < 0:
            raise ValidationError("param_tol must be non-negative", ["param_tol"])


@dataclass
class ChildFitReport:
    iterations: int
    grad_norm: float
    converged: bool
    zero_events: bool = False


@dataclass
class FitReport:
    objective: float
    log_lik: float
    n_records: int
    children: dict[str, ChildFitReport]
    weights: dict[tuple[str, str], float]

    @property
    def converged(self) -> bool:
        return all(c.converged for c in self.children.values())

    @property
    def flagged_conditions(self) -> tuple[str, ...]:
        return tuple(c for c, r in self.children.items() if r.zero_events)


@dataclass
class UpdateReport:
    epochs: int
    objective: float
    param_change: float
    converged: bool


class ParameterPacker:
    """Flat-vector layout: per child, baseline block then one edge block per
    candidate parent in condition order."""

    def __init__(self, condition_set: ConditionSet, layout: CovariateLayout):
        self.condition_set = condition_set
        self.layout = layout
        self.n_base = 1 + layout.n_covariates
        self.k_edge = layout.n_edge_features
        codes = condition_set.codes
        self.child_size = self.n_base + self.k_edge * (len(codes) - 1)
        self.size = self.child_size * len(codes)

    def parents_of(self, child: str) -> tuple[str, ...]:
        return tuple(c for c in self.condition_set.codes if c != child)

    def child_slice(self, child: str) -> slice:
        i = self.condition_set.index(child)
        return slice(i * self.child_size, (i + 1) * self.child_size)

    def group_slice(self, parent: str, child: str) -> slice:
        base = self.child_slice(child).start + self.n_base
        pos = self.parents_of(child).index(parent)
        return slice(base + pos * self.k_edge, base + (pos + 1) * self.k_edge)

    def pack(self, model: FctbnModel) -> np.ndarray:
        theta = np.zeros(self.size)
        for child in self.condition_set.codes:
            sl = self.child_slice(child)
            theta[sl.start : sl.start + self.n_base] = model.baseline[child]
            for parent in self.parents_of(child):
                coef = model.edge_groups.get((parent, child))
                if coef is not None:
                    theta[self.group_slice(parent, child)] = coef
        return theta

    def unpack(self, theta: np.ndarray) -> FctbnModel:
        baseline = {}
        edges = {}
        for child in self.condition_set.codes:
            sl = self.child_slice(child)
            baseline[child] = theta[sl.start : sl.start + self.n_base].copy()
            for parent in self.parents_of(child):
                edges[(parent, child)] = theta[self.group_slice(parent, child)].copy()
        return FctbnModel(self.condition_set, self.layout, baseline, edges)


class _PoissonRegression:
    """Event indicators y against exposure t under rate exp(X theta)."""

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def neg_log_lik(self, theta: np.ndarray) -> float:
        eta = self.X @ theta
        with np.errstate(over="ignore"):
            return float(np.sum(self.t * np.exp(eta)) - self.y @ eta)

    def grad_neg_log_lik(self, theta: np.ndarray) -> np.ndarray:
        eta = self.X @ theta
        with np.errstate(over="ignore"):
            mu = self.t * np.exp(eta)
        return self.X.T @ (mu - self.y)

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        eta = self.X @ theta
        with np.errstate(over="ignore"):
            mu = self.t * np.exp(eta)
        return self.X.T @ (self.X * mu[:, None])


class _ColumnView(_PoissonRegression):
    """The same regression restricted to a subset of design columns."""

    def __init__(self, problem: "_ChildProblem", cols):
        self.X = problem.X[:, cols]
        self.t = problem.t
        self.y = problem.y


class _ChildProblem(_PoissonRegression):
    """Design matrix and responses for one condition's Poisson regression."""

    def __init__(self, child: str, dataset: TrajectoryDataset, packer: ParameterPacker,
                 masks, durations, zmat, outcomes):
        cs = dataset.condition_set
        bit = cs.bit(child)
        j = cs.index(child)
        rows = np.nonzero((masks & bit) == 0)[0]
        self.child = child
        self.record_rows = rows
        self.t = durations[rows]
        self.y = (outcomes[rows] == j).astype(float)
        inter = packer.layout.interaction_indices()
        cols = [np.ones((len(rows), 1)), zmat[rows]]
        for parent in packer.parents_of(child):
            ind = ((masks[rows] >> cs.index(parent)) & 1).astype(float)
            block = [ind[:, None]]
            for idx in inter:
                block.append((ind * zmat[rows, idx])[:, None])
            cols.append(np.hstack(block))
        self.X = np.hstack(cols) if len(rows) else np.zeros((0, packer.child_size))
        if self.t.sum() <= 0:
            raise DataError(f"condition {child} has zero at-risk exposure; cannot fit")


def _build_problems(dataset: TrajectoryDataset, packer: ParameterPacker) -> dict[str, _ChildProblem]:
    arrays = dataset_arrays(dataset)
    return {
        child: _ChildProblem(child, dataset, packer, *arrays)
        for child in dataset.condition_set.codes
    }


def _penalty_vector(packer: ParameterPacker, reg: RegularizationSpec, child: str) -> np.ndarray:
    """Per-coordinate quadratic penalty weights k_g * lambda_g for one child."""
    w = np.zeros(packer.child_size)
    offset = packer.child_slice(child).start
    for parent in packer.parents_of(child):
        sl = packer.group_slice(parent, child)
        w[sl.start - offset : sl.stop - offset] = packer.k_edge * reg.weight_for((parent, child))
    return w


def log_likelihood(model: FctbnModel, dataset: TrajectoryDataset, event_term: bool = True) -> float:
    """Sum over records and at-risk conditions of y*eta - t_d*exp(eta).

    ``event_term=False`` drops the y*eta part, leaving only the exposure
    contribution -t_d*exp(eta); useful for comparing against summaries that
    report the censored portion alone.
    """
    packer = ParameterPacker(model.condition_set, model.layout)
    theta = packer.pack(model)
    total = 0.0
    for child, prob in _build_problems(dataset, packer).items():
        th = theta[packer.child_slice(child)]
        eta = prob.X @ th
        total -= float(np.sum(prob.t * np.exp(eta)))
        if event_term:
            total += float(prob.y @ eta)
    return total


def penalized_objective(model: FctbnModel, dataset: TrajectoryDataset,
                        reg: RegularizationSpec | None = None) -> float:
    """Negative log-likelihood plus the group-ridge penalty on edge groups."""
    reg = reg or RegularizationSpec()
    value = -log_likelihood(model, dataset)
    k = model.layout.n_edge_features
    for group, coef in model.edge_groups.items():
        value += k * reg.weight_for(group) * float(coef @ coef)
    return value


def _newton_child(prob: _PoissonRegression, w: np.ndarray, theta0: np.ndarray,
                  max_iter: int, tol: float) -> tuple[np.ndarray, ChildFitReport]:
    theta = theta0.copy()

    def objective(th):
        return prob.neg_log_lik(th) + float(w @ (th * th))

    f = objective(theta)
    grad_norm = math.inf
    for it in range(max_iter):
        g = prob.grad_neg_log_lik(theta) + 2.0 * w * theta
        grad_norm = float(np.linalg.norm(g))
        if grad_norm < tol:
            return theta, ChildFitReport(it, grad_norm, True)
        H = prob.hessian(theta) + np.diag(2.0 * w)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + 1e-8 * np.eye(len(g)), g)
        alpha = 1.0
        slope = float(g @ step)
        for _ in range(_MAX_BACKTRACKS):
            cand = theta - alpha * step
            fc = objective(cand)
            if math.isfinite(fc) and fc <= f - _ARMIJO_C * alpha * slope:
                theta, f = cand, fc
                break
            alpha *= 0.5
        else:
            # No acceptable step along the Newton direction; report as-is.
            return theta, ChildFitReport(it, grad_norm, False)
        # Stiff penalties can pin the achievable gradient norm just above an
        # absolute tol; a vanishing Newton step means we are at the optimum
        # to within float precision.
        if alpha * float(np.linalg.norm(step)) <= 1e-14 * (1.0 + float(np.linalg.norm(theta))):
            return theta, ChildFitReport(it + 1, grad_norm, True)
    g = prob.grad_neg_log_lik(theta) + 2.0 * w * theta
    grad_norm = float(np.linalg.norm(g))
    return theta, ChildFitReport(max_iter, grad_norm, grad_norm < tol)


def _support_columns(packer: ParameterPacker, child: str,
                     support: set[tuple[str, str]] | None) -> list[int]:
    cols = list(range(packer.n_base))
    for k, parent in enumerate(packer.parents_of(child)):
        if support is None or (parent, child) in support:
            base = packer.n_base + k * packer.k_edge
            cols.extend(range(base, base + packer.k_edge))
    return cols


def _fit_core(dataset: TrajectoryDataset, packer: ParameterPacker, reg: RegularizationSpec,
              theta0: np.ndarray, max_iter: int, tol: float,
              support: set[tuple[str, str]] | None = None,
              problems: dict[str, _ChildProblem] | None = None,
              ) -> tuple[np.ndarray, FitReport]:
    """Per-child Newton solves; edge groups outside ``support`` (when given)
    are pinned at zero by dropping their design columns."""
    if problems is None:
        problems = _build_problems(dataset, packer)
    theta = np.zeros(packer.size)
    children: dict[str, ChildFitReport] = {}
    for child, prob in problems.items():
        sl = packer.child_slice(child)
        if prob.y.sum() == 0:
            theta[sl.start] = ZERO_EVENT_LOG_RATE
            children[child] = ChildFitReport(0, 0.0, True, zero_events=True)
            continue
        cols = _support_columns(packer, child, support)
        sub: _PoissonRegression = prob if support is None else _ColumnView(prob, cols)
        w = _penalty_vector(packer, reg, child)[cols]
        th, children[child] = _newton_child(sub, w, theta0[sl][cols], max_iter, tol)
        block = np.zeros(packer.child_size)
        block[cols] = th
        theta[sl] = block
    model = packer.unpack(theta)
    ll = log_likelihood(model, dataset)
    report = FitReport(
        objective=penalized_objective(model, dataset, reg),
        log_lik=ll,
        n_records=len(dataset),
        children=children,
        weights={g: reg.weight_for(g) for g in model.edge_groups},
    )
    return theta, report


def compute_adaptive_weights(dataset: TrajectoryDataset, reg: RegularizationSpec,
                             packer: ParameterPacker | None = None,
                             pilot_theta: np.ndarray | None = None,
                             ) -> tuple[dict[tuple[str, str], float], np.ndarray]:
    """Pilot-fit group norms turned into per-edge penalty weights.

    Returns the weights plus the pilot parameter vector (useful as a warm
    start for the final fit).
    """
    packer = packer or ParameterPacker(dataset.condition_set, dataset.layout)
    pilot_reg = RegularizationSpec(
        lam=reg.pilot_ridge,
        prune_epsilon=reg.prune_epsilon,
        pilot_ridge=reg.pilot_ridge,
        norm_floor=reg.norm_floor,
    )
    theta0 = pilot_theta if pilot_theta is not None else np.zeros(packer.size)
    theta, _ = _fit_core(dataset, packer, pilot_reg, theta0, 200, 1e-8)
    weights = {}
    for child in dataset.condition_set.codes:
        for parent in packer.parents_of(child):
            norm = float(np.linalg.norm(theta[packer.group_slice(parent, child)]))
            weights[(parent, child)] = reg.lam / max(norm, reg.norm_floor)
    return weights, theta


def fit_mle(dataset: TrajectoryDataset, reg: RegularizationSpec | None = None,
            init: FctbnModel | None = None, max_iter: int = 200, tol: float = 1e-8,
            ) -> tuple[FctbnModel, FitReport]:
    """Fit all conditional intensity regressions by Newton's method.

    With ``reg.lam > 0`` and no explicit weights, a lightly ridged pilot fit
    sets the adaptive per-edge penalties first.
    """
    if len(dataset) == 0:
        raise DataError("cannot fit an empty dataset")
    packer = ParameterPacker(dataset.condition_set, dataset.layout)
    reg = reg or RegularizationSpec()
    theta0 = packer.pack(init) if init is not None else np.zeros(packer.size)
    if reg.lam > 0 and reg.weights is None:
        weights, pilot_theta = compute_adaptive_weights(dataset, reg, packer)
        reg = replace(reg, weights=weights)
        if init is None:
            theta0 = pilot_theta
    theta, report = _fit_core(dataset, packer, reg, theta0, max_iter, tol)
    model = packer.unpack(theta)
    log.info(json.dumps({
        "event": "fit", "n_records": report.n_records,
        "objective": report.objective, "log_lik": report.log_lik,
        "converged": report.converged,
        "flagged": list(report.flagged_conditions),
        "iterations": {c: r.iterations for c, r in report.children.items()},
    }))
    return model, report


def prune_model(model: FctbnModel, epsilon: float) -> FctbnModel:
    """Zero out edge groups whose Euclidean norm falls below epsilon."""
    edges = {
        g: (coef if float(np.linalg.norm(coef)) >= epsilon else np.zeros_like(coef))
        for g, coef in model.edge_groups.items()
    }
    return FctbnModel(model.condition_set, model.layout, dict(model.baseline), edges)


def model_score(model: FctbnModel, dataset: TrajectoryDataset) -> float:
    """-2*log_lik + ln(n_records) * (number of active parameters).

    Baseline blocks always count; an edge group counts only when nonzero.
    """
    n_active = sum(len(b) for b in model.baseline.values())
    n_active += sum(len(c) for c in model.edge_groups.values() if float(np.linalg.norm(c)) > 0)
    return -2.0 * log_likelihood(model, dataset) + math.log(len(dataset)) * n_active


@dataclass
class PathEntry:
    lam: float
    model: FctbnModel
    edges: tuple[tuple[str, str], ...]
    score: float
    report: FitReport


@dataclass
class StructurePath:
    entries: list[PathEntry]
    best_index: int

    @property
    def best(self) -> PathEntry:
        return self.entries[self.best_index]


def structure_path(dataset: TrajectoryDataset, lambda_grid, reg: RegularizationSpec | None = None,
                   max_iter: int = 200, tol: float = 1e-8) -> StructurePath:
    """Warm-started penalized fits along an increasing lambda grid.

    Each grid point selects an edge set: groups whose penalized norm clears
    prune_epsilon, restricted to the previous grid point's survivors so the
    selected sets are nested and the edge count never increases in lambda.
    The surviving support is refit without penalty so the score reflects the
    structure rather than the shrinkage, and the refit is what the entry
    carries. The score minimizer is marked as best.
    """
    grid = [float(l) for l in lambda_grid]
    if not grid:
        raise ValidationError("lambda_grid must be non-empty", ["lambda_grid"])
    if any(l < 0 for l in grid):
        raise ValidationError("lambda_grid values must be non-negative", ["lambda_grid"])
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("lambda_grid must be strictly increasing", ["lambda_grid"])
    base = reg or RegularizationSpec()
    unpenalized = RegularizationSpec(prune_epsilon=base.prune_epsilon)
    packer = ParameterPacker(dataset.condition_set, dataset.layout)
    problems = _build_problems(dataset, packer)
    inv_norms, theta = compute_adaptive_weights(dataset, replace(base, lam=1.0), packer)
    active = {g for child in dataset.condition_set.codes
              for g in ((p, child) for p in packer.parents_of(child))}
    entries: list[PathEntry] = []
    for lam in grid:
        reg_l = replace(base, lam=lam, weights={g: lam * w for g, w in inv_norms.items()})
        theta, _ = _fit_core(dataset, packer, reg_l, theta, max_iter, tol,
                             support=active, problems=problems)
        pruned = prune_model(packer.unpack(theta), base.prune_epsilon)
        active = set(pruned.edges())
        refit_theta, report = _fit_core(dataset, packer, unpenalized, theta, max_iter, tol,
                                        support=active, problems=problems)
        model = packer.unpack(refit_theta)
        entries.append(PathEntry(
            lam=lam,
            model=model,
            edges=tuple(sorted(active)),
            score=model_score(model, dataset),
            report=report,
        ))
    best = min(range(len(entries)), key=lambda i: entries[i].score)
    return StructurePath(entries, best)


def online_update(model: FctbnModel, batch: TrajectoryDataset,
                  cfg: OnlineUpdateConfig, reg: RegularizationSpec | None = None,
                  ) -> tuple[FctbnModel, UpdateReport]:
    """Mini-batch gradient descent on the penalized objective.

    The penalty gradient is scaled by each mini-batch's share of the records
    so one epoch sums to the full-data objective gradient. Ten consecutive
    epochs of objective increase raise StepSizeError.
    """
    if len(batch) == 0:
        raise DataError("cannot update from an empty batch")
    reg = reg or RegularizationSpec()
    packer = ParameterPacker(model.condition_set, model.layout)
    if batch.condition_set.codes != model.condition_set.codes:
        raise ValidationError("batch condition set does not match model", ["condition_set"])
    if batch.layout.names != model.layout.names:
        raise ValidationError("batch covariate layout does not match model", ["layout"])
    theta = packer.pack(model)
    if cfg.learning_rate == 0:
        return model, UpdateReport(0, penalized_objective(model, batch, reg), 0.0, True)

    problems = _build_problems(batch, packer)
    pen = {c: _penalty_vector(packer, reg, c) for c in model.condition_set.codes}
    n = len(batch)
    # Row selections per child for each sequential mini-batch of records.
    batches = [range(s, min(s + cfg.batch_size, n)) for s in range(0, n, cfg.batch_size)]
    selections = {
        c: [np.isin(problems[c].record_rows, list(b)) for b in batches]
        for c in model.condition_set.codes
    }

    def full_objective(th):
        total = 0.0
        # overflow to inf is expected on a diverging path; caught below
        with np.errstate(over="ignore", invalid="ignore"):
            for c, prob in problems.items():
                sl = packer.child_slice(c)
                total += prob.neg_log_lik(th[sl]) + float(pen[c] @ (th[sl] * th[sl]))
        return total

    prev_obj = full_objective(theta)
    rises = 0
    epochs = 0
    change = 0.0
    converged = False
    for epoch in range(cfg.max_epochs):
        start = theta.copy()
        for bi, b in enumerate(batches):
            frac = len(b) / n
            for c, prob in problems.items():
                sel = selections[c][bi]
                if not sel.any():
                    continue
                sl = packer.child_slice(c)
                X, t, y = prob.X[sel], prob.t[sel], prob.y[sel]
                with np.errstate(over="ignore", invalid="ignore"):
                    eta = X @ theta[sl]
                    mu = t * np.exp(eta)
                    g = X.T @ (mu - y) + frac * 2.0 * pen[c] * theta[sl]
                    theta[sl] = theta[sl] - cfg.learning_rate * g
        epochs = epoch + 1
        obj = full_objective(theta)
        if not math.isfinite(obj):
            raise StepSizeError(
                f"objective diverged to {obj} at epoch {epochs}; reduce learning_rate"
            )
        rises = rises + 1 if obj > prev_obj else 0
        if rises >= 10:
            raise StepSizeError(
                f"objective increased for {rises} consecutive epochs; reduce learning_rate"
            )
        prev_obj = obj
        change = float(np.linalg.norm(theta - start))
        if change <= cfg.param_tol:
            converged = True
            break
    updated = packer.unpack(theta)
    report = UpdateReport(epochs, penalized_objective(updated, batch, reg), change, converged)
    log.info(json.dumps({
        "event": "online_update", "epochs": report.epochs,
        "objective": report.objective, "param_change": report.param_change,
        "converged": report.converged,
    }))
    return updated, report

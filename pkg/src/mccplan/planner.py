"""Behavior planning over a finite horizon of fixed-length stages.

A plan picks modifiable-behavior profiles z_1..z_L minimizing summed stage
risk plus a quadratic switching cost lam * ||z_l - z_{l-1}||^2 anchored at
the patient's current behaviors. The condition state stays frozen at the
reference during planning; progression enters only through stage risk.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .conditions import RiskFactorVector
from .errors import BoundsError, CapacityError, NumericOverflowError, ValidationError
from .model import ETA_LIMIT, FctbnModel, state_intensities

_RISK_ADJUSTED_CAP = 200_000


@dataclass(frozen=True)
class PlannerConfig:
    n_stages: int = 5
    stage_length: float = 1.0
    smoothness: float = 0.05
    mode: str = "binary"
    adherence_window: float = 1.0
    risk_adjusted: bool = False
    grad_tol: float = 1e-8
    max_iter: int = 50_000

    def __post_init__(self):
        bad = []
        if self.n_stages < 1:
            bad.append("n_stages")
        if self.stage_length <= 0:
            bad.append("stage_length")
        if self.smoothness < 0:
            bad.append("smoothness")
        if self.mode not in ("binary", "continuous"):
            bad.append("mode")
        if self.adherence_window <= 0:
            bad.append("adherence_window")
        if self.grad_tol <= 0:
            bad.append("grad_tol")
        if self.max_iter < 1:
            bad.append("max_iter")
        if bad:
            raise ValidationError("invalid planner configuration", bad)


@dataclass(frozen=True)
class BehaviorBounds:
    """Per-behavior box [lower, upper] within [0, 1]; lower == upper locks."""

    behaviors: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (len(self.behaviors),) or hi.shape != (len(self.behaviors),):
            raise ValidationError("bounds shape does not match behavior count", ["lower", "upper"])
        offending = [
            b for b, l, h in zip(self.behaviors, lo, hi)
            if l > h or l < 0 or h > 1
        ]
        if offending:
            raise BoundsError("behavior bounds must satisfy 0 <= lower <= upper <= 1", offending)
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def free(cls, behaviors) -> "BehaviorBounds":
        n = len(behaviors)
        return cls(tuple(behaviors), np.zeros(n), np.ones(n))

    @classmethod
    def from_dict(cls, behaviors, spec: dict) -> "BehaviorBounds":
        unknown = [b for b in spec if b not in behaviors]
        if unknown:
            raise BoundsError("bounds refer to unknown behaviors", unknown)
        lo = np.zeros(len(behaviors))
        hi = np.ones(len(behaviors))
        for i, b in enumerate(behaviors):
            if b in spec:
                lo[i], hi[i] = spec[b]
        return cls(tuple(behaviors), lo, hi)

    def lock(self, behavior: str, value: float) -> "BehaviorBounds":
        i = self.behaviors.index(behavior)
        lo = self.lower.copy()
        hi = self.upper.copy()
        lo[i] = hi[i] = value
        return BehaviorBounds(self.behaviors, lo, hi)


@dataclass(frozen=True)
class InterventionPlan:
    stages: np.ndarray
    objective: float
    stage_risks: tuple[float, ...]
    mode: str
    converged: bool = True

    def first_action(self) -> np.ndarray:
        return self.stages[0]


def stage_risk(model: FctbnModel, state: int, z, dt: float) -> float:
    """Expected number of new acquisitions over dt at frozen intensities.

    Equals -ln P(no new condition in dt) since exits compete exponentially.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive", ["dt"])
    if not isinstance(z, RiskFactorVector):
        values = np.asarray(z, dtype=float)
        n_mod = len(model.layout.modifiable)
        z = RiskFactorVector(model.layout, values[:n_mod], values[n_mod:])
    return sum(state_intensities(model, state, z).values()) * dt


def _risk_and_grad(model: FctbnModel, state: int, z_full: np.ndarray, dt: float,
                   n_mod: int) -> tuple[float, np.ndarray]:
    cs = model.condition_set
    inter = model.layout.interaction_indices()
    risk = 0.0
    grad = np.zeros(n_mod)
    for child in cs.unacquired_codes(state):
        b = model.baseline[child]
        eta = b[0] + float(b[1:] @ z_full)
        deta = b[1 : 1 + n_mod].copy()
        for parent in cs.acquired_codes(state):
            coef = model.edge_groups.get((parent, child))
            if coef is None:
                continue
            eta += coef[0]
            for k, idx in enumerate(inter):
                eta += coef[1 + k] * z_full[idx]
                if idx < n_mod:
                    deta[idx] += coef[1 + k]
        if abs(eta) > ETA_LIMIT:
            raise NumericOverflowError(
                f"linear predictor {eta:.3g} for {child} outside +/-{ETA_LIMIT:g}"
            )
        q = math.exp(eta) * dt
        risk += q
        grad += q * deta
    return risk, grad


def _transition_cost(lam: float, a, b) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return lam * float(d @ d)


def sequence_cost(model: FctbnModel, state: int, z: RiskFactorVector, stages,
                  config: PlannerConfig) -> tuple[float, tuple[float, ...]]:
    """Forward total cost of a fixed stage sequence; shared by the exact
    solver and by brute-force checks so results compare exactly."""
    prev = z.modifiable
    total = 0.0
    risks = []
    log_survival = 0.0
    for stage in stages:
        zs = z.with_modifiable(np.asarray(stage, dtype=float))
        r = stage_risk(model, state, zs, config.stage_length)
        weight = math.exp(log_survival) if config.risk_adjusted else 1.0
        total += weight * r + _transition_cost(config.smoothness, prev, stage)
        risks.append(r)
        if config.risk_adjusted:
            log_survival -= r
        prev = np.asarray(stage, dtype=float)
    return total, tuple(risks)


def _binary_profiles(bounds: BehaviorBounds) -> list[tuple[float, ...]]:
    per_behavior = []
    for b, lo, hi in zip(bounds.behaviors, bounds.lower, bounds.upper):
        if lo == hi:
            per_behavior.append((float(lo),))
            continue
        allowed = [v for v in (0.0, 1.0) if lo - 1e-12 <= v <= hi + 1e-12]
        if not allowed:
            raise BoundsError("no feasible binary level inside bounds", [b])
        per_behavior.append(tuple(allowed))
    return list(itertools.product(*per_behavior))


def _plan_binary(model, state, z, config, bounds) -> InterventionPlan:
    profiles = _binary_profiles(bounds)
    L = config.n_stages
    lam = config.smoothness
    cost = {
        p: stage_risk(model, state, z.with_modifiable(np.array(p)), config.stage_length)
        for p in profiles
    }
    if config.risk_adjusted:
        if len(profiles) ** L > _RISK_ADJUSTED_CAP:
            raise CapacityError(
                f"risk-adjusted planning enumerates {len(profiles)}^{L} sequences; "
                f"cap is {_RISK_ADJUSTED_CAP}"
            )
        best_seq = None
        best_total = math.inf
        for seq in itertools.product(profiles, repeat=L):
            total, _ = sequence_cost(model, state, z, seq, config)
            if total < best_total:
                best_total, best_seq = total, seq
        chosen = list(best_seq)
    else:
        # suffix[l][p] = min cost of stages l+1..L given z_l = p; the stage
        # cost table is stage-independent because the state stays frozen.
        suffix = [dict() for _ in range(L + 1)]
        suffix[L] = {p: 0.0 for p in profiles}
        for l in range(L - 1, 0, -1):
            suffix[l] = {
                p_prev: min(
                    cost[d] + _transition_cost(lam, p_prev, d) + suffix[l + 1][d]
                    for d in profiles
                )
                for p_prev in profiles
            }
        chosen = []
        prev_arr = tuple(float(v) for v in z.modifiable)
        for l in range(1, L + 1):
            best_d = None
            best_v = math.inf
            for d in profiles:
                v = cost[d] + _transition_cost(lam, prev_arr, d) + suffix[l][d]
                if v < best_v:
                    best_v, best_d = v, d
            chosen.append(best_d)
            prev_arr = best_d
    objective, risks = sequence_cost(model, state, z, chosen, config)
    return InterventionPlan(
        stages=np.array(chosen, dtype=float),
        objective=objective,
        stage_risks=risks,
        mode="binary",
    )


def _plan_continuous(model, state, z, config, bounds) -> InterventionPlan:
    if config.risk_adjusted:
        raise ValidationError(
            "risk_adjusted planning is only available in binary mode", ["risk_adjusted", "mode"]
        )
    L = config.n_stages
    n_mod = len(bounds.behaviors)
    lam = config.smoothness
    lo = np.tile(bounds.lower, (L, 1))
    hi = np.tile(bounds.upper, (L, 1))
    z0 = z.modifiable
    fixed = z.fixed

    def unpack_full(row: np.ndarray) -> np.ndarray:
        return np.concatenate([row, fixed])

    def objective_and_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
        total = 0.0
        g = np.zeros_like(x)
        prev = z0
        for l in range(L):
            r, gr = _risk_and_grad(model, state, unpack_full(x[l]), config.stage_length, n_mod)
            d = x[l] - prev
            total += r + lam * float(d @ d)
            g[l] += gr + 2.0 * lam * d
            if l > 0:
                g[l - 1] -= 2.0 * lam * d
            prev = x[l]
        return total, g

    x = np.clip(np.tile(z0, (L, 1)), lo, hi)
    f, g = objective_and_grad(x)
    alpha = 1.0
    converged = False
    for _ in range(config.max_iter):
        residual = x - np.clip(x - g, lo, hi)
        if float(np.abs(residual).max()) < config.grad_tol:
            converged = True
            break
        while True:
            cand = np.clip(x - alpha * g, lo, hi)
            fc, gc = objective_and_grad(cand)
            step = x - cand
            if fc <= f - 1e-4 / max(alpha, 1e-300) * float((step * step).sum()) or alpha < 1e-14:
                break
            alpha *= 0.5
        x, f, g = cand, fc, gc
        alpha = min(alpha * 2.0, 1e6)
    objective, risks = sequence_cost(model, state, z, [x[l] for l in range(L)], config)
    return InterventionPlan(
        stages=x, objective=objective, stage_risks=risks, mode="continuous", converged=converged
    )


def plan(model: FctbnModel, state: int, z: RiskFactorVector,
         config: PlannerConfig | None = None,
         bounds: BehaviorBounds | None = None) -> InterventionPlan:
    """Choose behavior profiles for each stage.

    Binary mode solves exactly by dynamic programming over profiles, breaking
    ties toward the lexicographically smallest sequence. Continuous mode runs
    projected gradient descent on the box-constrained relaxation.
    """
    config = config or PlannerConfig()
    behaviors = z.layout.modifiable
    bounds = bounds or BehaviorBounds.free(behaviors)
    if bounds.behaviors != tuple(behaviors):
        raise ValidationError("bounds behaviors do not match covariate layout", ["behaviors"])
    if not 0 <= state <= model.condition_set.full_mask:
        raise ValidationError("state bitmask out of range", ["state"])
    if config.mode == "binary":
        return _plan_binary(model, state, z, config, bounds)
    return _plan_continuous(model, state, z, config, bounds)


@dataclass(frozen=True)
class ScheduleSegment:
    t_start: float
    t_end: float
    z: RiskFactorVector
    intervened: bool

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class RecedingHorizonResult:
    epochs: tuple[float, ...]
    plans: tuple[InterventionPlan, ...]
    segments: tuple[ScheduleSegment, ...]
    baseline_segments: tuple[ScheduleSegment, ...]

    def change_points(self) -> tuple[float, ...]:
        """Interior times where the applied covariates change level."""
        pts = []
        for prev, seg in zip(self.segments, self.segments[1:]):
            if not np.array_equal(prev.z.values, seg.z.values):
                pts.append(seg.t_start)
        return tuple(pts)

    def piecewise_schedule(self) -> list[tuple[float, RiskFactorVector]]:
        return [(seg.duration, seg.z) for seg in self.segments]


def receding_horizon_run(model: FctbnModel, state: int, z: RiskFactorVector,
                         epochs, horizon: float,
                         config: PlannerConfig | None = None,
                         bounds: BehaviorBounds | None = None) -> RecedingHorizonResult:
    """Re-plan at each decision epoch; apply the first stage's action for the
    adherence window, then revert to the pre-plan behaviors.

    The returned segments cover [0, horizon] and feed the forward solver
    directly. The reference state is held fixed across epochs.
    """
    config = config or PlannerConfig()
    times = [float(t) for t in epochs]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("epochs must be strictly increasing", ["epochs"])
    if times and (times[0] < 0 or times[-1] >= horizon):
        raise ValidationError("epochs must lie within [0, horizon)", ["epochs", "horizon"])
    plans = tuple(plan(model, state, z, config, bounds) for _ in times)
    segments: list[ScheduleSegment] = []
    cursor = 0.0
    for i, (t, pl) in enumerate(zip(times, plans)):
        if t > cursor:
            segments.append(ScheduleSegment(cursor, t, z, False))
        end = min(t + config.adherence_window, horizon)
        if i + 1 < len(times):
            end = min(end, times[i + 1])
        zi = z.with_modifiable(pl.first_action())
        segments.append(ScheduleSegment(t, end, zi, True))
        cursor = end
    if cursor < horizon:
        segments.append(ScheduleSegment(cursor, horizon, z, False))
    baseline = (ScheduleSegment(0.0, horizon, z, False),)
    return RecedingHorizonResult(tuple(times), plans, tuple(segments), baseline)


@dataclass(frozen=True)
class SensitivityEntry:
    behavior: str
    risk_at_low: float
    risk_at_high: float
    delta: float


def sensitivity_report(model: FctbnModel, state: int, z: RiskFactorVector,
                       dt: float, bounds: BehaviorBounds | None = None,
                       ) -> tuple[SensitivityEntry, ...]:
    """One-at-a-time stage-risk change from moving each behavior across its
    bounds, largest magnitude first."""
    behaviors = z.layout.modifiable
    bounds = bounds or BehaviorBounds.free(behaviors)
    entries = []
    for i, b in enumerate(behaviors):
        zm = z.modifiable.copy()
        zm[i] = bounds.lower[i]
        r_lo = stage_risk(model, state, z.with_modifiable(zm), dt)
        zm[i] = bounds.upper[i]
        r_hi = stage_risk(model, state, z.with_modifiable(zm), dt)
        entries.append(SensitivityEntry(b, r_lo, r_hi, r_hi - r_lo))
    return tuple(sorted(entries, key=lambda e: abs(e.delta), reverse=True))

"""Log-linear conditional intensity model over the condition network.

Each condition's acquisition rate is exp of a linear predictor in the
patient covariates, plus one coefficient group per incoming edge that
switches on when the parent condition is already acquired. Coefficient
groups with all-zero weights are equivalent to absent edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import ConditionSet, CovariateLayout, RiskFactorVector
from .errors import CapacityError, CovariateLayoutError, NumericOverflowError, ValidationError

# Linear predictors beyond this magnitude signal a pathological fit and are
# rejected rather than clamped.
ETA_LIMIT = 50.0

# Largest joint state space we are willing to materialize (2**12 states).
MAX_CONDITIONS = 12


@dataclass(frozen=True)
class FctbnModel:
    """Condition network with per-(child, parent) coefficient groups.

    ``baseline`` maps each condition to its (intercept + covariates) weight
    vector of length ``1 + layout.n_covariates``. ``edge_groups`` maps
    (parent, child) pairs to weight vectors of length
    ``layout.n_edge_features``; missing pairs mean no edge. Immutable after
    construction; all evaluation is pure.
    """

    condition_set: ConditionSet
    layout: CovariateLayout
    baseline: dict[str, np.ndarray]
    edge_groups: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        codes = set(self.condition_set.codes)
        if set(self.baseline) != codes:
            missing = sorted(codes - set(self.baseline))
            raise ValidationError(f"missing baseline group for conditions: {missing}")
        n_base = 1 + self.layout.n_covariates
        base = {}
        for code, coef in self.baseline.items():
            arr = np.asarray(coef, dtype=float)
            if arr.shape != (n_base,):
                raise CovariateLayoutError(
                    f"baseline group for {code} has {arr.shape[0]} coefficients, expected {n_base}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"baseline group for {code} has non-finite coefficients")
            arr = arr.copy()
            arr.setflags(write=False)
            base[code] = arr
        object.__setattr__(self, "baseline", base)

        n_edge = self.layout.n_edge_features
        groups = {}
        for (parent, child), coef in self.edge_groups.items():
            if parent not in codes or child not in codes:
                raise ValidationError(f"edge ({parent} -> {child}) references unknown condition")
            if parent == child:
                raise ValidationError(f"self-edge on {child} is not allowed")
            arr = np.asarray(coef, dtype=float)
            if arr.shape != (n_edge,):
                raise CovariateLayoutError(
                    f"edge group ({parent} -> {child}) has {arr.shape[0]} coefficients, "
                    f"expected {n_edge}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"edge group ({parent} -> {child}) has non-finite coefficients")
            arr = arr.copy()
            arr.setflags(write=False)
            groups[(parent, child)] = arr
        object.__setattr__(self, "edge_groups", groups)

    @property
    def n_conditions(self) -> int:
        return len(self.condition_set)

    def edges(self, threshold: float = 0.0) -> list[tuple[str, str]]:
        """(parent, child) pairs whose group norm exceeds ``threshold``."""
        return [
            (p, c)
            for (p, c), g in sorted(self.edge_groups.items())
            if float(np.linalg.norm(g)) > threshold
        ]

    def edge_feature_vector(self, z: RiskFactorVector) -> np.ndarray:
        """Features multiplying an edge group: parent indicator and interactions."""
        idx = self.layout.interaction_indices()
        return np.concatenate([[1.0], z.values[idx]])

    def _check_z(self, z: RiskFactorVector):
        if z.layout.names != self.layout.names:
            raise CovariateLayoutError(
                "risk-factor vector layout does not match the model's covariate dictionary"
            )

    def linear_terms(self, z: RiskFactorVector) -> tuple[np.ndarray, np.ndarray]:
        """Per-condition baseline predictors and the parent-effect matrix.

        Returns ``(base, W)`` with ``base[j]`` the covariate-only predictor of
        condition j and ``W[p, j]`` the additive contribution of acquired
        parent p to child j's predictor (0 where no edge group exists).
        """
        self._check_z(z)
        x = np.concatenate([[1.0], z.values])
        codes = self.condition_set.codes
        base = np.array([self.baseline[c] @ x for c in codes])
        efeat = self.edge_feature_vector(z)
        n = len(codes)
        W = np.zeros((n, n))
        for (p, c), g in self.edge_groups.items():
            W[codes.index(p), codes.index(c)] = g @ efeat
        return base, W


def acquisition_intensity(
    model: FctbnModel, child: str, state: int, z: RiskFactorVector
) -> float:
    """Rate (per year) at which ``child`` is acquired from the given state.

    The predictor is the baseline group dotted with (1, covariates) plus the
    group contribution of every acquired parent with an edge into ``child``.
    """
    model._check_z(z)
    cs = model.condition_set
    if cs.is_acquired(state, child):
        raise ValidationError(f"condition {child} already acquired in state")
    eta = float(model.baseline[child] @ np.concatenate([[1.0], z.values]))
    efeat = model.edge_feature_vector(z)
    for parent in cs.acquired_codes(state):
        group = model.edge_groups.get((parent, child))
        if group is not None:
            eta += float(group @ efeat)
    if not math.isfinite(eta) or abs(eta) > ETA_LIMIT:
        raise NumericOverflowError(
            f"linear predictor {eta:.3g} for {child} outside +/-{ETA_LIMIT:g}"
        )
    return math.exp(eta)


def state_intensities(model: FctbnModel, state: int, z: RiskFactorVector) -> dict[str, float]:
    """Acquisition rates of all not-yet-acquired conditions in ``state``."""
    return {
        c: acquisition_intensity(model, c, state, z)
        for c in model.condition_set.unacquired_codes(state)
    }


def sojourn_pdf(rate: float, t: float) -> float:
    """Exponential sojourn density at t for the given total exit rate."""
    if rate <= 0:
        raise ValidationError("rate must be positive")
    if t < 0:
        raise ValidationError("time must be nonnegative")
    return rate * math.exp(-rate * t)


def sojourn_cdf(rate: float, t: float) -> float:
    """Probability the sojourn has ended by t: 1 - exp(-rate * t)."""
    if rate <= 0:
        raise ValidationError("rate must be positive")
    if t < 0:
        raise ValidationError("time must be nonnegative")
    return -math.expm1(-rate * t)


def state_rate_table(model: FctbnModel, z: RiskFactorVector) -> np.ndarray:
    """Acquisition rates for every (joint state, condition) pair.

    Entry [s, j] is the rate of acquiring condition j from state s, or 0 if
    j is already acquired in s. Shape (2^n, n); bit order follows the
    model's condition set.
    """
    n = model.n_conditions
    if n > MAX_CONDITIONS:
        raise CapacityError(f"{n} conditions exceed the {MAX_CONDITIONS}-condition joint-state cap")
    base, W = model.linear_terms(z)
    states = np.arange(1 << n)
    bits = (states[:, None] >> np.arange(n)[None, :]) & 1  # (2^n, n)
    eta = base[None, :] + bits.astype(float) @ W
    free = bits == 0
    if np.any(np.abs(eta[free]) > ETA_LIMIT) or not np.all(np.isfinite(eta[free])):
        raise NumericOverflowError(f"linear predictor outside +/-{ETA_LIMIT:g} in joint rate table")
    return np.where(free, np.exp(np.clip(eta, -ETA_LIMIT, ETA_LIMIT)), 0.0)


def joint_generator(model: FctbnModel, z: RiskFactorVector) -> np.ndarray:
    """Generator matrix of the joint acquisition process over all 2^n states.

    Row s has rate entries only toward states s | bit(j) for unacquired j
    (the progression model is monotone) and a diagonal balancing the row to
    zero. State bit order follows the model's condition set.
    """
    rates = state_rate_table(model, z)
    n_states, n = rates.shape
    states = np.arange(n_states)
    Q = np.zeros((n_states, n_states))
    for j in range(n):
        src = states[~(states >> j & 1).astype(bool)]
        Q[src, src | (1 << j)] = rates[src, j]
    Q[states, states] = -rates.sum(axis=1)
    return Q

"""Synthetic cohorts from known ground-truth models.

Presets cover the 5-condition roster with 8 covariates. Coefficients are
chosen so per-year hazards stay in [0.01, 0.5], the scale of chronic-disease
incidence; they are invented values, not estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditions import (
    DEFAULT_CONDITIONS,
    FIXED_FACTORS,
    MODIFIABLE_BEHAVIORS,
    ConditionSet,
    CovariateLayout,
    RiskFactorVector,
)
from .dataset import TransitionRecord, TrajectoryDataset
from .errors import ValidationError
from .model import FctbnModel
from .sampling import sample_trajectory

PRESET_NAMES = ("independent5", "chain5", "dense5", "cluster5")

_COV_ORDER = MODIFIABLE_BEHAVIORS + FIXED_FACTORS

# Default sampling law: Bernoulli p for scalars, categorical weights for lists.
DEFAULT_COVARIATE_LAW: dict[str, object] = {
    "diet": 0.4,
    "exercise": 0.35,
    "tobacco": 0.25,
    "alcohol": 0.3,
    "age_group": [1 / 6] * 6,
    "gender": 0.5,
    "education": 0.55,
    "marital": 0.6,
}


def _default_layout() -> CovariateLayout:
    return CovariateLayout(MODIFIABLE_BEHAVIORS, FIXED_FACTORS)


def _baseline(intercept: float, coef: dict[str, float]) -> np.ndarray:
    row = [intercept] + [coef.get(name, 0.0) for name in _COV_ORDER]
    return np.array(row)

# Protective behaviors (diet, exercise) carry negative signs; age_group is
# ordinal 0..5 with a single slope.
_CLUSTER_BASELINES = {
    "DI": _baseline(-3.2, {"diet": -0.5, "exercise": -0.4, "tobacco": 0.2, "alcohol": 0.1,
                           "age_group": 0.15, "gender": 0.1, "education": -0.05, "marital": -0.05}),
    "OB": _baseline(-2.3, {"diet": -0.7, "exercise": -0.6, "tobacco": 0.0, "alcohol": 0.1,
                           "age_group": 0.05, "gender": -0.1, "education": -0.05, "marital": 0.05}),
    "HP": _baseline(-2.5, {"diet": -0.3, "exercise": -0.4, "tobacco": 0.4, "alcohol": 0.3,
                           "age_group": 0.2, "gender": 0.1, "education": -0.05, "marital": -0.05}),
    "HL": _baseline(-2.4, {"diet": -0.4, "exercise": -0.3, "tobacco": 0.3, "alcohol": 0.2,
                           "age_group": 0.1, "gender": 0.05, "education": -0.05, "marital": 0.0}),
    "CI": _baseline(-4.0, {"diet": -0.2, "exercise": -0.3, "tobacco": 0.2, "alcohol": 0.1,
                           "age_group": 0.35, "gender": -0.05, "education": -0.25, "marital": -0.1}),
}

_CLUSTER_EDGES = {
    ("OB", "DI"): 0.9,
    ("HL", "DI"): 0.6,
    ("OB", "HP"): 0.7,
    ("OB", "HL"): 0.7,
    ("HP", "CI"): 0.5,
    ("DI", "CI"): 0.6,
}


def preset_model(name: str) -> FctbnModel:
    """Ground-truth models used by recovery tests and demos.

    independent5: no edges. chain5: one path DI->OB->HP->HL->CI. dense5:
    every ordered pair with a weak edge. cluster5: six strong edges through
    obesity and hyperlipidemia with protective diet/exercise effects.
    """
    cs = ConditionSet(DEFAULT_CONDITIONS)
    layout = _default_layout()
    if name == "independent5":
        flat = {"diet": -0.3, "exercise": -0.3, "tobacco": 0.2, "alcohol": 0.1, "age_group": 0.1}
        baseline = {c: _baseline(-2.6, flat) for c in cs.codes}
        return FctbnModel(cs, layout, baseline, {})
    if name == "chain5":
        flat = {"diet": -0.3, "exercise": -0.2, "tobacco": 0.2, "age_group": 0.1}
        baseline = {c: _baseline(-2.8, flat) for c in cs.codes}
        path = ("DI", "OB", "HP", "HL", "CI")
        edges = {(a, b): np.array([0.8]) for a, b in zip(path, path[1:])}
        return FctbnModel(cs, layout, baseline, edges)
    if name == "dense5":
        flat = {"diet": -0.2, "exercise": -0.2, "tobacco": 0.15, "age_group": 0.1}
        baseline = {c: _baseline(-3.0, flat) for c in cs.codes}
        edges = {
            (p, c): np.array([0.15]) for p in cs.codes for c in cs.codes if p != c
        }
        return FctbnModel(cs, layout, baseline, edges)
    if name == "cluster5":
        baseline = {c: v.copy() for c, v in _CLUSTER_BASELINES.items()}
        edges = {pair: np.array([w]) for pair, w in _CLUSTER_EDGES.items()}
        return FctbnModel(cs, layout, baseline, edges)
    raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}",
                          ["name"])


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int
    seed: int = 0
    n_visits: int = 3
    visit_spacing: float = 5.0
    covariate_law: dict = field(default_factory=lambda: dict(DEFAULT_COVARIATE_LAW))

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValidationError("n_patients must be at least 1", ["n_patients"])
        if self.n_visits < 1 or self.visit_spacing <= 0:
            raise ValidationError(
                "n_visits must be at least 1 and visit_spacing positive",
                ["n_visits", "visit_spacing"],
            )
        for name, law in self.covariate_law.items():
            if isinstance(law, (int, float)):
                if not 0 <= law <= 1:
                    raise ValidationError(f"Bernoulli p for {name} outside [0, 1]", [name])
            else:
                w = np.asarray(law, dtype=float)
                if w.ndim != 1 or len(w) == 0 or (w < 0).any() or w.sum() <= 0:
                    raise ValidationError(f"invalid categorical weights for {name}", [name])

    @property
    def horizon(self) -> float:
        return self.n_visits * self.visit_spacing


def _sample_covariates(layout: CovariateLayout, law: dict, rng: np.random.Generator,
                       ) -> RiskFactorVector:
    values = {}
    for name in layout.names:
        rule = law.get(name, 0.5)
        if isinstance(rule, (int, float)):
            values[name] = float(rng.random() < rule)
        else:
            w = np.asarray(rule, dtype=float)
            values[name] = float(rng.choice(len(w), p=w / w.sum()))
    return RiskFactorVector.from_dict(layout, values)


def generate(model: FctbnModel, spec: CohortSpec) -> TrajectoryDataset:
    """Simulate each patient's exact-time path, then cut records at visit
    boundaries and event times so each record holds at most one acquisition.

    Per-patient RNG streams derive from (seed, patient index), so output is
    reproducible record for record under a fixed spec.
    """
    layout = model.layout
    horizon = spec.horizon
    visits = [spec.visit_spacing * k for k in range(1, spec.n_visits + 1)]
    records: list[TransitionRecord] = []
    for i in range(spec.n_patients):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(spec.seed, i)))
        z = _sample_covariates(layout, spec.covariate_law, rng)
        path = sample_trajectory(model, 0, z, horizon, rng)
        pid = f"p{i:05d}"
        events = [(t, s) for t, s in path if t <= horizon]
        cuts = sorted(set(visits) | {t for t, _ in events})
        state = 0
        t_prev = 0.0
        event_at = {t: s for t, s in events}
        for t in cuts:
            if t <= t_prev + 1e-12:
                continue
            outcome = None
            new_state = state
            if t in event_at:
                new_state = event_at[t]
                gained = new_state & ~state
                outcome = model.condition_set.acquired_codes(gained)[0]
            records.append(TransitionRecord(pid, t_prev, t, state, z, outcome))
            state = new_state
            t_prev = t
            if state == model.condition_set.full_mask:
                break
    return TrajectoryDataset(model.condition_set, layout, tuple(records))

"""Condition state space and patient risk-factor vectors.

Joint acquisition states are bitmasks over an ordered condition roster:
bit j set means condition j has been diagnosed. The progression model is
monotone, so bits are only ever added along a trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CovariateLayoutError, ValidationError

# Default roster: diabetes, obesity, hypertension, hyperlipidemia,
# mild cognitive impairment.
DEFAULT_CONDITIONS = ("DI", "OB", "HP", "HL", "CI")

MODIFIABLE_BEHAVIORS = ("diet", "exercise", "tobacco", "alcohol")
FIXED_FACTORS = ("age_group", "gender", "education", "marital")


@dataclass(frozen=True)
class ConditionSet:
    """Ordered roster of condition identifiers; fixes all bitmask indexing."""

    codes: tuple[str, ...] = DEFAULT_CONDITIONS

    def __post_init__(self):
        object.__setattr__(self, "codes", tuple(self.codes))
        if not self.codes:
            raise ValidationError("condition set must not be empty")
        if any(not c for c in self.codes):
            raise ValidationError("condition identifiers must be non-empty")
        if len(set(self.codes)) != len(self.codes):
            raise ValidationError("condition identifiers must be unique")

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.codes)) - 1

    def index(self, code: str) -> int:
        try:
            return self.codes.index(code)
        except ValueError:
            raise ValidationError(f"unknown condition {code!r}") from None

    def bit(self, code: str) -> int:
        return 1 << self.index(code)

    def state_of(self, acquired: object) -> int:
        """Bitmask for an iterable of condition codes (or pass through an int)."""
        if isinstance(acquired, (int, np.integer)):
            state = int(acquired)
            if not 0 <= state <= self.full_mask:
                raise ValidationError(f"state {state} out of range for {len(self)} conditions")
            return state
        state = 0
        for code in acquired:
            state |= self.bit(code)
        return state

    def acquired_codes(self, state: int) -> tuple[str, ...]:
        return tuple(c for j, c in enumerate(self.codes) if state >> j & 1)

    def unacquired_codes(self, state: int) -> tuple[str, ...]:
        return tuple(c for j, c in enumerate(self.codes) if not state >> j & 1)

    def is_acquired(self, state: int, code: str) -> bool:
        return bool(state >> self.index(code) & 1)


@dataclass(frozen=True)
class CovariateLayout:
    """Named layout of patient covariates.

    ``modifiable`` are behaviors constrained to [0, 1] (binary by default);
    ``fixed`` are numerically-coded socio-demographics. ``edge_interactions``
    names covariates that additionally interact with parent-condition
    indicators (off by default, giving one main-effect coefficient per edge).
    """

    modifiable: tuple[str, ...] = MODIFIABLE_BEHAVIORS
    fixed: tuple[str, ...] = FIXED_FACTORS
    edge_interactions: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modifiable", tuple(self.modifiable))
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "edge_interactions", tuple(self.edge_interactions))
        names = self.names
        if len(set(names)) != len(names):
            raise ValidationError("covariate names must be unique")
        unknown = [n for n in self.edge_interactions if n not in names]
        if unknown:
            raise ValidationError(f"edge interaction covariates not in layout: {unknown}")

    @property
    def names(self) -> tuple[str, ...]:
        return self.modifiable + self.fixed

    @property
    def n_covariates(self) -> int:
        return len(self.modifiable) + len(self.fixed)

    @property
    def n_edge_features(self) -> int:
        # parent indicator plus its interactions with selected covariates
        return 1 + len(self.edge_interactions)

    def interaction_indices(self) -> np.ndarray:
        return np.array([self.names.index(n) for n in self.edge_interactions], dtype=int)


@dataclass(frozen=True)
class RiskFactorVector:
    """Behavioral and socio-demographic covariates aligned to a layout."""

    layout: CovariateLayout
    modifiable: np.ndarray
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        # copy so freezing below never flips a caller-owned buffer read-only
        mod = np.array(self.modifiable, dtype=float)
        fix = np.array(self.fixed, dtype=float)
        object.__setattr__(self, "modifiable", mod)
        object.__setattr__(self, "fixed", fix)
        if mod.shape != (len(self.layout.modifiable),) or fix.shape != (len(self.layout.fixed),):
            raise CovariateLayoutError(
                f"covariate dimensions ({mod.shape[0]} modifiable, {fix.shape[0]} fixed) "
                f"do not match layout ({len(self.layout.modifiable)}, {len(self.layout.fixed)})"
            )
        if not np.all(np.isfinite(mod)) or not np.all(np.isfinite(fix)):
            raise ValidationError("covariates must be finite")
        if mod.size and (mod.min() < 0.0 or mod.max() > 1.0):
            raise ValidationError("modifiable covariates must lie in [0, 1]")
        mod.setflags(write=False)
        fix.setflags(write=False)

    @classmethod
    def from_dict(cls, layout: CovariateLayout, values: dict[str, float]) -> "RiskFactorVector":
        missing = [n for n in layout.names if n not in values]
        if missing:
            raise CovariateLayoutError(f"missing covariates: {missing}")
        extra = [n for n in values if n not in layout.names]
        if extra:
            raise CovariateLayoutError(f"unknown covariates: {extra}")
        return cls(
            layout,
            np.array([values[n] for n in layout.modifiable], dtype=float),
            np.array([values[n] for n in layout.fixed], dtype=float),
        )

    @property
    def values(self) -> np.ndarray:
        """Concatenated (modifiable, fixed) vector in layout order."""
        return np.concatenate([self.modifiable, self.fixed])

    def to_dict(self) -> dict[str, float]:
        return dict(zip(self.layout.names, self.values.tolist()))

    def with_modifiable(self, modifiable: np.ndarray) -> "RiskFactorVector":
        return RiskFactorVector(self.layout, np.asarray(modifiable, dtype=float), self.fixed)

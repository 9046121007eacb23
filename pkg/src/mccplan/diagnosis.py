"""Condition coding from raw clinical measurements.

Each condition is an OR over its criteria. Three-valued logic: any firing
criterion proves the condition present; a condition is absent only when
every criterion is evaluable and none fires; otherwise it is unknown.
Missing inputs therefore never silently code negative.
"""

from __future__ import annotations

from dataclasses import dataclass

from .conditions import ConditionSet, DEFAULT_CONDITIONS
from .errors import ValidationError

# Inclusive physiological ranges for plausibility checks, not clinical norms.
_RANGES = {
    "fasting_glucose": (20.0, 1000.0),
    "hba1c": (2.0, 20.0),
    "bmi": (8.0, 100.0),
    "systolic_bp": (50.0, 300.0),
    "diastolic_bp": (20.0, 200.0),
    "total_cholesterol": (50.0, 600.0),
    "triglycerides": (10.0, 3000.0),
    "hdlc": (5.0, 150.0),
    "ldlc": (10.0, 500.0),
    "mmse": (0, 30),
}


@dataclass(frozen=True)
class MeasurementPanel:
    """One visit's measurements; ``None`` marks a value as not taken."""

    fasting_glucose: float | None = None
    hba1c: float | None = None
    bmi: float | None = None
    systolic_bp: float | None = None
    diastolic_bp: float | None = None
    total_cholesterol: float | None = None
    triglycerides: float | None = None
    hdlc: float | None = None
    ldlc: float | None = None
    mmse: int | None = None
    sex: str | None = None
    diabetes_medication: bool | None = None
    antihypertensive_medication: bool | None = None
    lipid_medication: bool | None = None

    def __post_init__(self):
        bad = []
        for name, (lo, hi) in _RANGES.items():
            v = getattr(self, name)
            if v is not None and not lo <= v <= hi:
                bad.append(name)
        if self.mmse is not None and self.mmse != int(self.mmse):
            bad.append("mmse")
        if self.sex is not None and self.sex not in ("male", "female"):
            bad.append("sex")
        if bad:
            raise ValidationError("measurements outside physiological range", bad)


def _any_criterion(criteria: list[bool | None]) -> bool | None:
    """Three-valued OR: True beats unknown; False requires all-known False."""
    if any(c is True for c in criteria):
        return True
    if any(c is None for c in criteria):
        return None
    return False


def _cmp(value, op, threshold) -> bool | None:
    if value is None:
        return None
    if op == ">=":
        return value >= threshold
    if op == ">":
        return value > threshold
    return value < threshold


@dataclass(frozen=True)
class DiagnosisResult:
    """Per-condition presence flags; ``None`` means undetermined."""

    flags: dict[str, bool | None]

    @property
    def unknown_conditions(self) -> tuple[str, ...]:
        return tuple(c for c, v in self.flags.items() if v is None)

    def to_state(self, condition_set: ConditionSet | None = None) -> int:
        """Bitmask of present conditions; refuses undetermined ones."""
        cs = condition_set or ConditionSet(DEFAULT_CONDITIONS)
        unknown = self.unknown_conditions
        if unknown:
            raise ValidationError(
                "cannot build a definite state with undetermined conditions", list(unknown)
            )
        return cs.state_of([c for c, v in self.flags.items() if v])


def diagnose(panel: MeasurementPanel) -> DiagnosisResult:
    """Apply the per-condition criteria to one measurement panel.

    DI: glucose >= 126 or HbA1c >= 6.5 or diabetes medication.
    OB: BMI >= 30. HP: systolic >= 130 or diastolic >= 80 or medication.
    HL: total cholesterol > 200 or triglycerides >= 150 or low HDL-C
    (sex-specific: < 40 male, < 50 female) or LDL-C >= 130 or medication.
    CI: MMSE < 23. Boundary directions are deliberate and tested.
    """
    if panel.hdlc is None:
        low_hdl: bool | None = None
    elif panel.sex is None:
        # Below both thresholds or above both, sex cannot change the call.
        low_hdl = True if panel.hdlc < 40 else (False if panel.hdlc >= 50 else None)
    else:
        low_hdl = panel.hdlc < (40 if panel.sex == "male" else 50)
    flags = {
        "DI": _any_criterion([
            _cmp(panel.fasting_glucose, ">=", 126),
            _cmp(panel.hba1c, ">=", 6.5),
            panel.diabetes_medication,
        ]),
        "OB": _any_criterion([_cmp(panel.bmi, ">=", 30)]),
        "HP": _any_criterion([
            _cmp(panel.systolic_bp, ">=", 130),
            _cmp(panel.diastolic_bp, ">=", 80),
            panel.antihypertensive_medication,
        ]),
        "HL": _any_criterion([
            _cmp(panel.total_cholesterol, ">", 200),
            _cmp(panel.triglycerides, ">=", 150),
            low_hdl,
            _cmp(panel.ldlc, ">=", 130),
            panel.lipid_medication,
        ]),
        "CI": _any_criterion([_cmp(panel.mmse, "<", 23)]),
    }
    return DiagnosisResult(flags)

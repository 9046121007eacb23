"""Interval-censored trajectory observations and their aggregates.

A record covers one at-risk interval for one patient: the joint state at
interval start, the covariates in force, the interval length in years, and
either the single condition acquired at the interval's end or censoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import defaultdict

import numpy as np

from .conditions import ConditionSet, CovariateLayout, RiskFactorVector
from .errors import DataError

_TIME_SLACK = 1e-9


@dataclass(frozen=True)
class TransitionRecord:
    patient_id: str
    t_start: float
    t_end: float
    parent_config: int
    z: RiskFactorVector
    outcome: str | None = None

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise DataError(
                f"record for patient {self.patient_id}: interval [{self.t_start}, {self.t_end}] "
                "has non-positive duration"
            )

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class TrajectoryDataset:
    condition_set: ConditionSet
    layout: CovariateLayout
    records: tuple[TransitionRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        self.validate()

    def __len__(self) -> int:
        return len(self.records)

    def validate(self):
        per_patient: dict[str, TransitionRecord] = {}
        for i, rec in enumerate(self.records):
            if rec.z.layout.names != self.layout.names:
                raise DataError(f"record {i}: covariate layout mismatch")
            if not 0 <= rec.parent_config <= self.condition_set.full_mask:
                raise DataError(f"record {i}: state bitmask out of range")
            if rec.outcome is not None:
                if self.condition_set.is_acquired(rec.parent_config, rec.outcome):
                    raise DataError(
                        f"record {i}: outcome {rec.outcome} already acquired at interval start"
                    )
            prev = per_patient.get(rec.patient_id)
            if prev is not None:
                if rec.t_start < prev.t_start - _TIME_SLACK:
                    raise DataError(f"record {i}: patient {rec.patient_id} records out of order")
                if prev.parent_config & ~rec.parent_config:
                    raise DataError(
                        f"record {i}: patient {rec.patient_id} loses an acquired condition"
                    )
                if prev.outcome is not None and not rec.parent_config & self.condition_set.bit(prev.outcome):
                    raise DataError(
                        f"record {i}: patient {rec.patient_id} does not carry forward "
                        f"the acquired {prev.outcome}"
                    )
            per_patient[rec.patient_id] = rec

    def subset(self, indices) -> "TrajectoryDataset":
        return TrajectoryDataset(
            self.condition_set, self.layout, tuple(self.records[i] for i in indices)
        )


@dataclass
class SufficientStats:
    """Exposure and event counts per (child, parent state, covariate stratum)."""

    strata: dict[tuple[str, int, tuple[float, ...]], list]

    def exposure(self, child: str, parent_config: int | None = None) -> float:
        return sum(
            v[0]
            for (c, u, _), v in self.strata.items()
            if c == child and (parent_config is None or u == parent_config)
        )

    def events(self, child: str, parent_config: int | None = None) -> int:
        return sum(
            v[1]
            for (c, u, _), v in self.strata.items()
            if c == child and (parent_config is None or u == parent_config)
        )

    def totals(self) -> dict[tuple[str, int], tuple[float, int]]:
        agg: dict[tuple[str, int], list] = defaultdict(lambda: [0.0, 0])
        for (c, u, _), (T, M) in self.strata.items():
            agg[(c, u)][0] += T
            agg[(c, u)][1] += M
        return {k: (v[0], v[1]) for k, v in agg.items()}


def sufficient_stats(dataset: TrajectoryDataset) -> SufficientStats:
    """Aggregate at-risk exposure T and transition counts M from a dataset.

    Each interval contributes its full duration as exposure for every
    condition not yet acquired at interval start; the acquired condition
    (if any) also contributes one event.
    """
    strata: dict[tuple[str, int, tuple[float, ...]], list] = defaultdict(lambda: [0.0, 0])
    for rec in dataset.records:
        zkey = tuple(rec.z.values.tolist())
        for child in dataset.condition_set.unacquired_codes(rec.parent_config):
            entry = strata[(child, rec.parent_config, zkey)]
            entry[0] += rec.duration
            if rec.outcome == child:
                entry[1] += 1
    return SufficientStats(dict(strata))


def dataset_arrays(dataset: TrajectoryDataset):
    """Columnar view used by the fitting routines.

    Returns (parent_masks, durations, covariate matrix, outcome indices)
    with outcome index -1 for censored intervals.
    """
    cs = dataset.condition_set
    masks = np.array([r.parent_config for r in dataset.records], dtype=np.int64)
    durations = np.array([r.duration for r in dataset.records])
    zmat = (
        np.array([r.z.values for r in dataset.records])
        if dataset.records
        else np.zeros((0, dataset.layout.n_covariates))
    )
    outcomes = np.array(
        [-1 if r.outcome is None else cs.index(r.outcome) for r in dataset.records],
        dtype=np.int64,
    )
    return masks, durations, zmat, outcomes

"""Compact hand-checkable models shared across test modules."""

import numpy as np

from mccplan.conditions import ConditionSet, CovariateLayout, RiskFactorVector
from mccplan.model import FctbnModel


def rate_only_model(rates, edges=None):
    """Model with no covariates: each condition's rate is a constant."""
    cs = ConditionSet(tuple(rates))
    layout = CovariateLayout((), ())
    baseline = {c: np.array([np.log(r)]) for c, r in rates.items()}
    groups = {pair: np.array([w]) for pair, w in (edges or {}).items()}
    return FctbnModel(cs, layout, baseline, groups)


def empty_z(model):
    return RiskFactorVector(model.layout, np.zeros(0), np.zeros(0))


def behavior_model(rates, mod_coefs, edges=None, behaviors=("exercise",)):
    """No fixed covariates; ``mod_coefs[code]`` aligns with ``behaviors``."""
    cs = ConditionSet(tuple(rates))
    layout = CovariateLayout(tuple(behaviors), ())
    baseline = {
        c: np.concatenate([[np.log(r)], np.asarray(mod_coefs.get(c, np.zeros(len(behaviors))))])
        for c, r in rates.items()
    }
    groups = {pair: np.array([w]) for pair, w in (edges or {}).items()}
    return FctbnModel(cs, layout, baseline, groups)


def z_of(model, *modifiable, fixed=()):
    return RiskFactorVector(
        model.layout, np.array(modifiable, dtype=float), np.array(fixed, dtype=float)
    )

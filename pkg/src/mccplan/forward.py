"""Forward probability trajectories of the joint acquisition process.

Integrates p' = p Q piecewise over a schedule of behavior vectors, using
uniformization of the constant generator on each grid step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import RiskFactorVector
from .errors import ValidationError
from .model import FctbnModel, joint_generator

# Poisson tail mass discarded per uniformization step.
DEFAULT_TAIL_MASS = 1e-10

# Keep the uniformization rate * step product small enough that the leading
# Poisson weight exp(-lam*h) stays well inside double range.
_MAX_RATE_STEP = 200.0


@dataclass(frozen=True)
class TrajectoryResult:
    """Probability trajectory on a time grid.

    ``joint[i]`` is the distribution over joint states at ``times[i]``;
    ``marginals[i, j]`` is P(condition j acquired by ``times[i]``).
    """

    condition_codes: tuple[str, ...]
    times: np.ndarray
    joint: np.ndarray
    marginals: np.ndarray

    def index_at(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol:
            raise ValidationError(f"time {t} not on the trajectory grid")
        return i

    def marginals_at(self, t: float) -> np.ndarray:
        return self.marginals[self.index_at(t)]

    def marginal_series(self, code: str) -> np.ndarray:
        return self.marginals[:, self.condition_codes.index(code)]


def _uniformized_step(p: np.ndarray, Q: np.ndarray, h: float, tail_mass: float) -> np.ndarray:
    """Advance p by exp(Q h) via the uniformized jump chain."""
    lam = float(np.max(-np.diag(Q)))
    if lam <= 0.0:
        return p
    if lam * h > _MAX_RATE_STEP:
        n_sub = int(np.ceil(lam * h / _MAX_RATE_STEP))
        for _ in range(n_sub):
            p = _uniformized_step(p, Q, h / n_sub, tail_mass)
        return p
    P = np.eye(Q.shape[0]) + Q / lam
    weight = np.exp(-lam * h)
    total = weight
    v = p
    acc = weight * v
    k = 0
    while 1.0 - total > tail_mass:
        k += 1
        v = v @ P
        weight *= lam * h / k
        total += weight
        acc += weight * v
    return acc / acc.sum()


def forward_trajectory(
    model: FctbnModel,
    start: int,
    schedule: list[tuple[float, RiskFactorVector]],
    grid_step: float = 0.1,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> TrajectoryResult:
    """Joint and per-condition acquisition probabilities along a schedule.

    ``schedule`` is a piecewise-constant sequence of (duration, covariates);
    each segment is integrated with its own generator on an equal-step grid
    no coarser than ``grid_step``. Marginals are non-decreasing because the
    process is monotone.
    """
    if not schedule:
        raise ValidationError("schedule must contain at least one segment",
                              fields=["schedule"])
    if grid_step <= 0:
        raise ValidationError("grid step must be positive", fields=["grid_step"])
    n = model.n_conditions
    start = model.condition_set.state_of(start)
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1

    p = np.zeros(1 << n)
    p[start] = 1.0
    times = [0.0]
    joint = [p.copy()]
    t = 0.0
    for duration, z in schedule:
        if duration <= 0:
            raise ValidationError("schedule durations must be positive",
                                  fields=["schedule"])
        Q = joint_generator(model, z)
        n_steps = max(1, int(np.ceil(duration / grid_step - 1e-12)))
        h = duration / n_steps
        for k in range(1, n_steps + 1):
            p = _uniformized_step(p, Q, h, tail_mass)
            times.append(t + k * h)
            joint.append(p.copy())
        t += duration

    joint_arr = np.array(joint)
    marginals = joint_arr @ bits.astype(float)
    return TrajectoryResult(
        condition_codes=model.condition_set.codes,
        times=np.array(times),
        joint=joint_arr,
        marginals=marginals,
    )

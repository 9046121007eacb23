import math

import numpy as np
import pytest

from helpers import empty_z, rate_only_model
from mccplan.conditions import RiskFactorVector
from mccplan.errors import ValidationError
from mccplan.forward import forward_trajectory
from mccplan.sampling import empirical_marginals
from mccplan.synth import preset_model


def unhealthy_z(model):
    return RiskFactorVector.from_dict(model.layout, {
        "diet": 0.0, "exercise": 0.0, "tobacco": 1.0, "alcohol": 1.0,
        "age_group": 4.0, "gender": 1.0, "education": 0.0, "marital": 0.0,
    })


def test_single_condition_matches_closed_form():
    q = 0.37
    m = rate_only_model({"DI": q})
    traj = forward_trajectory(m, 0, [(8.0, empty_z(m))], grid_step=0.1)
    expected = 1.0 - np.exp(-q * traj.times)
    np.testing.assert_allclose(traj.marginals[:, 0], expected, atol=1e-8)


def test_all_acquired_start_stays_flat():
    m = rate_only_model({"DI": 0.3, "OB": 0.2})
    traj = forward_trajectory(m, 0b11, [(5.0, empty_z(m))])
    assert (traj.marginals == 1.0).all()
    assert (traj.joint[:, 0b11] == 1.0).all()


def test_schedule_validation():
    m = rate_only_model({"DI": 0.3})
    z = empty_z(m)
    with pytest.raises(ValidationError):
        forward_trajectory(m, 0, [])
    with pytest.raises(ValidationError):
        forward_trajectory(m, 0, [(0.0, z)])
    with pytest.raises(ValidationError):
        forward_trajectory(m, 0, [(1.0, z)], grid_step=0.0)


def test_joint_distribution_normalized():
    m = preset_model("cluster5")
    traj = forward_trajectory(m, 0, [(10.0, unhealthy_z(m))], grid_step=0.25)
    np.testing.assert_allclose(traj.joint.sum(axis=1), 1.0, atol=1e-9)
    assert (traj.joint >= -1e-12).all()


def test_marginals_monotone_under_monotone_progression():
    m = preset_model("cluster5")
    traj = forward_trajectory(m, 0b00010, [(12.0, unhealthy_z(m))], grid_step=0.5)
    diffs = np.diff(traj.marginals, axis=0)
    assert (diffs >= -1e-12).all()


def test_grid_lands_on_requested_times():
    m = rate_only_model({"DI": 0.2})
    traj = forward_trajectory(m, 0, [(5.0, empty_z(m))], grid_step=0.1)
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(5.0, abs=1e-9)
    for t in (1.0, 2.0, 5.0):
        assert traj.marginals_at(t)[0] == pytest.approx(1.0 - math.exp(-0.2 * t), abs=1e-8)
    with pytest.raises(ValidationError):
        traj.index_at(0.05)


def test_piecewise_schedule_prefix_identical_to_single_segment():
    m = preset_model("cluster5")
    z1 = unhealthy_z(m)
    z2 = RiskFactorVector.from_dict(m.layout, {**z1.to_dict(), "diet": 1.0, "exercise": 1.0})
    combined = forward_trajectory(m, 0, [(2.0, z1), (3.0, z2)], grid_step=0.5)
    prefix = forward_trajectory(m, 0, [(2.0, z1)], grid_step=0.5)
    k = len(prefix.times)
    np.testing.assert_array_equal(combined.times[:k], prefix.times)
    np.testing.assert_array_equal(combined.joint[:k], prefix.joint)
    # the second segment's covariates change the slope afterwards
    assert combined.marginal_series("DI")[-1] < forward_trajectory(
        m, 0, [(5.0, z1)], grid_step=0.5
    ).marginal_series("DI")[-1]


def test_marginal_series_lookup():
    m = rate_only_model({"DI": 0.3, "OB": 0.2})
    traj = forward_trajectory(m, 0, [(3.0, empty_z(m))])
    np.testing.assert_array_equal(traj.marginal_series("OB"), traj.marginals[:, 1])


def test_coupled_pair_agrees_with_sampler():
    # edge OB -> DI triples the DI rate once OB is present
    m = rate_only_model({"DI": 0.1, "OB": 0.25}, {("OB", "DI"): math.log(3.0)})
    z = empty_z(m)
    times = np.array([1.0, 2.0, 5.0])
    traj = forward_trajectory(m, 0, [(5.0, z)], grid_step=0.1)
    mc = empirical_marginals(m, 0, z, times, n_samples=20_000, seed=11)
    exact = np.vstack([traj.marginals_at(t) for t in times])
    # 3 Monte-Carlo standard errors, floored for near-degenerate marginals
    se = np.sqrt(np.maximum(mc * (1 - mc), 1e-4) / 20_000)
    assert (np.abs(exact - mc) <= 3.0 * se + 1e-12).all()


def test_tail_mass_controls_accuracy():
    m = rate_only_model({"DI": 2.5})
    loose = forward_trajectory(m, 0, [(2.0, empty_z(m))], grid_step=0.5, tail_mass=1e-3)
    tight = forward_trajectory(m, 0, [(2.0, empty_z(m))], grid_step=0.5, tail_mass=1e-12)
    exact = 1.0 - np.exp(-2.5 * tight.times)
    assert np.abs(tight.marginals[:, 0] - exact).max() <= np.abs(
        loose.marginals[:, 0] - exact
    ).max() + 1e-15

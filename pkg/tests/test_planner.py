import itertools
import math

import numpy as np
import pytest

from mccplan.conditions import ConditionSet, CovariateLayout
from mccplan.errors import BoundsError, CapacityError, ValidationError
from mccplan.forward import forward_trajectory
from mccplan.model import FctbnModel
from mccplan.planner import (
    BehaviorBounds,
    PlannerConfig,
    _binary_profiles,
    _risk_and_grad,
    plan,
    receding_horizon_run,
    sensitivity_report,
    sequence_cost,
    stage_risk,
)

from helpers import behavior_model, empty_z, rate_only_model, z_of


def exercise_model(q0=0.3, q1=0.1):
    """One condition, one behavior; rate q0 at z=0 and q1 at z=1."""
    return behavior_model({"DI": q0}, {"DI": [math.log(q1 / q0)]})


class TestPlannerConfig:
    def test_defaults(self):
        cfg = PlannerConfig()
        assert cfg.n_stages == 5
        assert cfg.mode == "binary"

    def test_invalid_fields_listed(self):
        with pytest.raises(ValidationError) as exc:
            PlannerConfig(n_stages=0, stage_length=-1.0, mode="exhaustive")
        assert set(exc.value.fields) == {"n_stages", "stage_length", "mode"}

    def test_negative_smoothness_rejected(self):
        with pytest.raises(ValidationError, match="planner"):
            PlannerConfig(smoothness=-0.1)


class TestBehaviorBounds:
    def test_free(self):
        b = BehaviorBounds.free(("diet", "exercise"))
        np.testing.assert_array_equal(b.lower, [0.0, 0.0])
        np.testing.assert_array_equal(b.upper, [1.0, 1.0])

    def test_from_dict_partial(self):
        b = BehaviorBounds.from_dict(("diet", "exercise"), {"diet": (0.5, 1.0)})
        np.testing.assert_array_equal(b.lower, [0.5, 0.0])
        np.testing.assert_array_equal(b.upper, [1.0, 1.0])

    def test_from_dict_unknown_behavior(self):
        with pytest.raises(BoundsError) as exc:
            BehaviorBounds.from_dict(("diet",), {"smoking": (0, 1)})
        assert exc.value.offending == ["smoking"]

    def test_inverted_bounds_rejected(self):
        with pytest.raises(BoundsError) as exc:
            BehaviorBounds(("diet",), np.array([0.8]), np.array([0.2]))
        assert exc.value.offending == ["diet"]

    def test_out_of_unit_interval_rejected(self):
        with pytest.raises(BoundsError):
            BehaviorBounds(("diet",), np.array([-0.1]), np.array([1.0]))
        with pytest.raises(BoundsError):
            BehaviorBounds(("diet",), np.array([0.0]), np.array([1.5]))

    def test_lock(self):
        b = BehaviorBounds.free(("diet", "exercise")).lock("exercise", 0.37)
        assert b.lower[1] == b.upper[1] == 0.37
        assert b.lower[0] == 0.0 and b.upper[0] == 1.0


class TestStageRisk:
    def test_single_condition(self):
        model = rate_only_model({"DI": 0.3})
        assert stage_risk(model, 0, empty_z(model), 1.0) == pytest.approx(0.3, abs=1e-12)

    def test_two_conditions_sum(self):
        model = rate_only_model({"DI": 0.3, "OB": 0.1})
        assert stage_risk(model, 0, empty_z(model), 1.0) == pytest.approx(0.4, abs=1e-12)

    def test_scales_with_dt(self):
        model = rate_only_model({"DI": 0.3})
        assert stage_risk(model, 0, empty_z(model), 2.5) == pytest.approx(0.75, abs=1e-12)

    def test_acquired_conditions_drop_out(self):
        model = rate_only_model({"DI": 0.3, "OB": 0.1})
        state = model.condition_set.state_of(["DI"])
        assert stage_risk(model, state, empty_z(model), 1.0) == pytest.approx(0.1, abs=1e-12)

    def test_matches_no_event_probability(self):
        # exp(-risk) equals the forward solver's stay-put probability
        model = rate_only_model({"DI": 0.3, "OB": 0.1})
        z = empty_z(model)
        risk = stage_risk(model, 0, z, 1.0)
        traj = forward_trajectory(model, 0, [(1.0, z)], grid_step=0.05)
        assert traj.joint[-1, 0] == pytest.approx(math.exp(-risk), abs=1e-8)

    def test_accepts_raw_covariate_array(self):
        model = exercise_model()
        via_vector = stage_risk(model, 0, z_of(model, 1.0), 1.0)
        via_array = stage_risk(model, 0, np.array([1.0]), 1.0)
        assert via_array == via_vector

    def test_non_positive_dt_rejected(self):
        model = rate_only_model({"DI": 0.3})
        with pytest.raises(ValidationError, match="dt"):
            stage_risk(model, 0, empty_z(model), 0.0)


class TestRiskGradient:
    def test_matches_central_differences_with_interactions(self):
        cs = ConditionSet(("DI", "OB"))
        layout = CovariateLayout(("diet", "exercise"), ("age_group",),
                                 edge_interactions=("exercise",))
        model = FctbnModel(
            cs, layout,
            {"DI": np.array([-1.1, -0.4, -0.6, 0.2]),
             "OB": np.array([-0.9, -0.5, -0.3, 0.1])},
            {("OB", "DI"): np.array([0.8, 0.3]), ("DI", "OB"): np.array([0.4, -0.2])},
        )
        state = cs.state_of(["OB"])
        z_full = np.array([0.6, 0.4, 2.0])
        _, grad = _risk_and_grad(model, state, z_full, 1.0, 2)
        h = 1e-6
        for i in range(2):
            e = np.zeros(3)
            e[i] = h
            up, _ = _risk_and_grad(model, state, z_full + e, 1.0, 2)
            dn, _ = _risk_and_grad(model, state, z_full - e, 1.0, 2)
            assert grad[i] == pytest.approx((up - dn) / (2 * h), rel=1e-6)


class TestBinaryPlanning:
    def test_worked_two_stage_example(self):
        # q(0)=0.3, q(1)=0.1, lam=0.05, z0=0; the four sequence costs are
        # (0,0)=0.60  (0,1)=0.45  (1,0)=0.50  (1,1)=0.25
        model = exercise_model()
        z = z_of(model, 0.0)
        cfg = PlannerConfig(n_stages=2, stage_length=1.0, smoothness=0.05)
        expected = {(0.0, 0.0): 0.60, (0.0, 1.0): 0.45, (1.0, 0.0): 0.50, (1.0, 1.0): 0.25}
        for seq, want in expected.items():
            total, _ = sequence_cost(model, 0, z, [np.array([v]) for v in seq], cfg)
            assert total == pytest.approx(want, abs=1e-12)
        result = plan(model, 0, z, cfg)
        np.testing.assert_array_equal(result.stages, [[1.0], [1.0]])
        assert result.objective == pytest.approx(0.25, abs=1e-12)
        assert result.stage_risks == pytest.approx((0.1, 0.1), abs=1e-12)
        np.testing.assert_array_equal(result.first_action(), [1.0])

    def test_huge_switching_cost_freezes_behavior(self):
        model = exercise_model()
        z = z_of(model, 0.0)
        cfg = PlannerConfig(n_stages=3, smoothness=1e9)
        result = plan(model, 0, z, cfg)
        np.testing.assert_array_equal(result.stages, np.zeros((3, 1)))
        assert result.objective == pytest.approx(3 * 0.3, abs=1e-9)

    def test_zero_switching_cost_single_stage_is_greedy(self):
        model = exercise_model()
        z = z_of(model, 0.0)
        cfg = PlannerConfig(n_stages=1, smoothness=0.0)
        result = plan(model, 0, z, cfg)
        np.testing.assert_array_equal(result.stages, [[1.0]])
        assert result.objective == pytest.approx(0.1, abs=1e-12)

    def test_exact_ties_pick_lexicographically_smallest(self):
        # behavior has no effect, so every sequence costs the same
        model = behavior_model({"DI": 0.2}, {"DI": [0.0]})
        z = z_of(model, 1.0)
        cfg = PlannerConfig(n_stages=3, smoothness=0.0)
        result = plan(model, 0, z, cfg)
        np.testing.assert_array_equal(result.stages, np.zeros((3, 1)))

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            model = behavior_model(
                {"DI": float(np.exp(rng.normal(-1.5, 0.5)))},
                {"DI": rng.normal(0.0, 0.8, size=2)},
                behaviors=("diet", "exercise"),
            )
            z = z_of(model, *rng.integers(0, 2, size=2).astype(float))
            cfg = PlannerConfig(
                n_stages=int(rng.integers(1, 4)),
                smoothness=float(rng.choice([0.0, 0.03, 0.1])),
            )
            bounds = BehaviorBounds.free(model.layout.modifiable)
            result = plan(model, 0, z, cfg, bounds)

            profiles = _binary_profiles(bounds)
            best_seq, best_total = None, math.inf
            for seq in itertools.product(profiles, repeat=cfg.n_stages):
                total, _ = sequence_cost(model, 0, z, seq, cfg)
                if total < best_total:
                    best_total, best_seq = total, seq
            assert result.objective == best_total
            np.testing.assert_array_equal(result.stages, np.array(best_seq))

    def test_locked_behavior_held_at_value(self):
        model = behavior_model({"DI": 0.3}, {"DI": [-0.8, -0.5]},
                               behaviors=("diet", "exercise"))
        z = z_of(model, 0.0, 0.0)
        bounds = BehaviorBounds.free(model.layout.modifiable).lock("exercise", 0.37)
        result = plan(model, 0, z, PlannerConfig(n_stages=2, smoothness=0.0), bounds)
        assert set(result.stages[:, 1]) == {0.37}
        # the unlocked protective behavior still switches on
        np.testing.assert_array_equal(result.stages[:, 0], [1.0, 1.0])

    def test_upper_bound_excludes_level_one(self):
        model = exercise_model()
        z = z_of(model, 0.0)
        bounds = BehaviorBounds(("exercise",), np.array([0.0]), np.array([0.4]))
        result = plan(model, 0, z, PlannerConfig(n_stages=2, smoothness=0.0), bounds)
        np.testing.assert_array_equal(result.stages, np.zeros((2, 1)))

    def test_infeasible_binary_window_rejected(self):
        model = exercise_model()
        z = z_of(model, 0.0)
        bounds = BehaviorBounds(("exercise",), np.array([0.2]), np.array([0.8]))
        with pytest.raises(BoundsError) as exc:
            plan(model, 0, z, PlannerConfig(n_stages=1), bounds)
        assert exc.value.offending == ["exercise"]

    def test_mismatched_bounds_rejected(self):
        model = exercise_model()
        z = z_of(model, 0.0)
        with pytest.raises(ValidationError, match="behaviors"):
            plan(model, 0, z, None, BehaviorBounds.free(("diet",)))

    def test_state_out_of_range_rejected(self):
        model = exercise_model()
        with pytest.raises(ValidationError, match="state"):
            plan(model, 5, z_of(model, 0.0))


class TestRiskAdjustedPlanning:
    def test_single_stage_agrees_with_plain(self):
        model = exercise_model()
        z = z_of(model, 0.0)
        plain = plan(model, 0, z, PlannerConfig(n_stages=1, smoothness=0.02))
        adjusted = plan(model, 0, z,
                        PlannerConfig(n_stages=1, smoothness=0.02, risk_adjusted=True))
        np.testing.assert_array_equal(plain.stages, adjusted.stages)
        assert plain.objective == adjusted.objective

    def test_matches_weighted_enumeration(self):
        model = exercise_model(q0=0.8, q1=0.2)
        z = z_of(model, 0.0)
        cfg = PlannerConfig(n_stages=3, smoothness=0.05, risk_adjusted=True)
        result = plan(model, 0, z, cfg)
        profiles = _binary_profiles(BehaviorBounds.free(model.layout.modifiable))
        best_seq, best_total = None, math.inf
        for seq in itertools.product(profiles, repeat=3):
            total, _ = sequence_cost(model, 0, z, seq, cfg)
            if total < best_total:
                best_total, best_seq = total, seq
        assert result.objective == best_total
        np.testing.assert_array_equal(result.stages, np.array(best_seq))

    def test_survival_weights_discount_later_stages(self):
        # with certain early progression, later stage risks barely count
        model = exercise_model(q0=3.0, q1=2.5)
        z = z_of(model, 0.0)
        cfg = PlannerConfig(n_stages=2, smoothness=0.0, risk_adjusted=True)
        seq = [np.array([0.0]), np.array([0.0])]
        total, risks = sequence_cost(model, 0, z, seq, cfg)
        assert total == pytest.approx(3.0 + math.exp(-3.0) * 3.0, abs=1e-12)
        assert risks == pytest.approx((3.0, 3.0), abs=1e-12)

    def test_enumeration_capacity_guard(self):
        model = behavior_model(
            {"DI": 0.2}, {"DI": [-0.1, -0.2, 0.1, 0.2]},
            behaviors=("diet", "exercise", "tobacco", "alcohol"),
        )
        z = z_of(model, 0.0, 0.0, 0.0, 0.0)
        cfg = PlannerConfig(n_stages=5, risk_adjusted=True)
        with pytest.raises(CapacityError, match="16\\^5"):
            plan(model, 0, z, cfg)

    def test_continuous_mode_rejects_risk_adjustment(self):
        model = exercise_model()
        z = z_of(model, 0.0)
        cfg = PlannerConfig(mode="continuous", risk_adjusted=True)
        with pytest.raises(ValidationError) as exc:
            plan(model, 0, z, cfg)
        assert "risk_adjusted" in exc.value.fields


class TestContinuousPlanning:
    def test_interior_optimum(self):
        # minimize 0.3 e^{-x} + 0.15 x^2 over one stage from z0=0; the
        # stationary point solves x = e^{-x}
        model = behavior_model({"DI": 0.3}, {"DI": [-1.0]})
        z = z_of(model, 0.0)
        cfg = PlannerConfig(n_stages=1, smoothness=0.15, mode="continuous")
        result = plan(model, 0, z, cfg)
        assert result.converged
        assert result.mode == "continuous"
        assert result.stages[0, 0] == pytest.approx(0.5671432904097838, abs=1e-6)

    def test_box_constraints_bind(self):
        model = behavior_model({"DI": 0.3}, {"DI": [1.5]})  # harmful behavior
        z = z_of(model, 1.0)
        bounds = BehaviorBounds(("exercise",), np.array([0.25]), np.array([1.0]))
        cfg = PlannerConfig(n_stages=2, smoothness=0.0, mode="continuous")
        result = plan(model, 0, z, cfg, bounds)
        assert result.converged
        np.testing.assert_allclose(result.stages, 0.25, atol=1e-8)

    def test_stages_respect_bounds(self):
        rng = np.random.default_rng(3)
        model = behavior_model({"DI": 0.4, "OB": 0.2},
                               {"DI": [-0.9, 0.4], "OB": [0.3, -0.6]},
                               behaviors=("diet", "exercise"))
        for _ in range(5):
            lo = rng.uniform(0.0, 0.4, size=2)
            hi = rng.uniform(0.6, 1.0, size=2)
            bounds = BehaviorBounds(("diet", "exercise"), lo, hi)
            z = z_of(model, 0.5, 0.5)
            cfg = PlannerConfig(n_stages=3, smoothness=0.02, mode="continuous")
            result = plan(model, 0, z, cfg, bounds)
            assert (result.stages >= lo - 1e-12).all()
            assert (result.stages <= hi + 1e-12).all()

    def test_objective_reported_via_shared_cost(self):
        model = behavior_model({"DI": 0.3}, {"DI": [-1.0]})
        z = z_of(model, 0.0)
        cfg = PlannerConfig(n_stages=2, smoothness=0.1, mode="continuous")
        result = plan(model, 0, z, cfg)
        total, risks = sequence_cost(model, 0, z, list(result.stages), cfg)
        assert result.objective == total
        assert result.stage_risks == risks


class TestRecedingHorizon:
    def protective_setup(self):
        model = behavior_model({"DI": 0.3}, {"DI": [-1.2]})
        return model, z_of(model, 0.0)

    def test_no_epochs_is_pure_baseline(self):
        model, z = self.protective_setup()
        result = receding_horizon_run(model, 0, z, [], horizon=10.0)
        assert result.plans == ()
        assert len(result.segments) == 1
        seg = result.segments[0]
        assert (seg.t_start, seg.t_end, seg.intervened) == (0.0, 10.0, False)
        assert result.segments == result.baseline_segments
        assert result.change_points() == ()

    def test_single_epoch_segmentation(self):
        model, z = self.protective_setup()
        cfg = PlannerConfig(n_stages=2, smoothness=0.01, adherence_window=1.0)
        result = receding_horizon_run(model, 0, z, [2.0], horizon=5.0, config=cfg)
        spans = [(s.t_start, s.t_end, s.intervened) for s in result.segments]
        assert spans == [(0.0, 2.0, False), (2.0, 3.0, True), (3.0, 5.0, False)]
        np.testing.assert_array_equal(result.segments[1].z.modifiable,
                                      result.plans[0].first_action())
        assert result.change_points() == (2.0, 3.0)

    def test_epoch_at_zero_starts_intervened(self):
        model, z = self.protective_setup()
        cfg = PlannerConfig(n_stages=1, adherence_window=2.0)
        result = receding_horizon_run(model, 0, z, [0.0], horizon=6.0, config=cfg)
        spans = [(s.t_start, s.t_end, s.intervened) for s in result.segments]
        assert spans == [(0.0, 2.0, True), (2.0, 6.0, False)]

    def test_adherence_truncated_by_next_epoch(self):
        model, z = self.protective_setup()
        cfg = PlannerConfig(n_stages=1, adherence_window=1.0)
        result = receding_horizon_run(model, 0, z, [1.0, 1.5], horizon=5.0, config=cfg)
        spans = [(s.t_start, s.t_end, s.intervened) for s in result.segments]
        assert spans == [(0.0, 1.0, False), (1.0, 1.5, True), (1.5, 2.5, True),
                         (2.5, 5.0, False)]

    def test_plans_identical_across_epochs(self):
        # the reference state is frozen, so every epoch solves the same problem
        model, z = self.protective_setup()
        cfg = PlannerConfig(n_stages=2, smoothness=0.01)
        result = receding_horizon_run(model, 0, z, [1.0, 4.0], horizon=8.0, config=cfg)
        np.testing.assert_array_equal(result.plans[0].stages, result.plans[1].stages)
        assert result.plans[0].objective == result.plans[1].objective

    def test_piecewise_schedule_covers_horizon(self):
        model, z = self.protective_setup()
        cfg = PlannerConfig(n_stages=1, adherence_window=1.5)
        result = receding_horizon_run(model, 0, z, [2.0, 4.0], horizon=9.0, config=cfg)
        schedule = result.piecewise_schedule()
        assert sum(d for d, _ in schedule) == pytest.approx(9.0, abs=1e-12)

    def test_epoch_validation(self):
        model, z = self.protective_setup()
        with pytest.raises(ValidationError, match="increasing"):
            receding_horizon_run(model, 0, z, [2.0, 2.0], horizon=5.0)
        with pytest.raises(ValidationError, match="horizon"):
            receding_horizon_run(model, 0, z, [5.0], horizon=5.0)
        with pytest.raises(ValidationError, match="horizon"):
            receding_horizon_run(model, 0, z, [-1.0, 2.0], horizon=5.0)

    def test_two_epochs_make_two_marginal_kinks(self):
        # window-4 interventions at t=4 and t=8 merge into one low-rate span
        # [4, 12], so the acquisition curve changes slope exactly twice
        model, z = self.protective_setup()
        cfg = PlannerConfig(n_stages=2, smoothness=0.01, adherence_window=4.0)
        result = receding_horizon_run(model, 0, z, [4.0, 8.0], horizon=15.0, config=cfg)
        assert result.change_points() == (4.0, 12.0)

        traj = forward_trajectory(model, 0, result.piecewise_schedule(), grid_step=0.1)
        m = traj.marginal_series("DI")
        d2 = np.abs(m[2:] - 2 * m[1:-1] + m[:-2])
        order = np.argsort(d2)[::-1]
        kink_times = sorted(traj.times[order[:2] + 1])
        assert kink_times == pytest.approx([4.0, 12.0], abs=1e-9)
        assert d2[order[1]] > 2.0 * d2[order[2]]


class TestSensitivityReport:
    def test_closed_form_delta(self):
        # moving one behavior 0 -> 1 changes risk by e^{b0} (e^{b} - 1)
        model = behavior_model({"DI": 0.3}, {"DI": [0.7]})
        z = z_of(model, 0.0)
        (entry,) = sensitivity_report(model, 0, z, 1.0)
        b0 = math.log(0.3)
        assert entry.behavior == "exercise"
        assert entry.delta == pytest.approx(math.exp(b0) * (math.exp(0.7) - 1.0), abs=1e-10)
        assert entry.risk_at_low == pytest.approx(0.3, abs=1e-12)

    def test_sorted_by_magnitude(self):
        model = behavior_model({"DI": 0.3}, {"DI": [-1.5, 0.2]},
                               behaviors=("diet", "exercise"))
        z = z_of(model, 0.0, 0.0)
        entries = sensitivity_report(model, 0, z, 1.0)
        assert [e.behavior for e in entries] == ["diet", "exercise"]
        assert abs(entries[0].delta) >= abs(entries[1].delta)
        assert entries[0].delta < 0 < entries[1].delta

    def test_respects_bounds(self):
        model = behavior_model({"DI": 0.3}, {"DI": [1.0]})
        z = z_of(model, 0.0)
        bounds = BehaviorBounds(("exercise",), np.array([0.2]), np.array([0.6]))
        (entry,) = sensitivity_report(model, 0, z, 1.0, bounds)
        assert entry.risk_at_low == pytest.approx(0.3 * math.exp(0.2), abs=1e-12)
        assert entry.risk_at_high == pytest.approx(0.3 * math.exp(0.6), abs=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import empty_z, rate_only_model, z_of
from mccplan.conditions import ConditionSet, CovariateLayout, RiskFactorVector
from mccplan.errors import (
    CapacityError,
    CovariateLayoutError,
    NumericOverflowError,
    ValidationError,
)
from mccplan.model import (
    FctbnModel,
    acquisition_intensity,
    joint_generator,
    sojourn_cdf,
    sojourn_pdf,
    state_intensities,
    state_rate_table,
)
from mccplan.synth import preset_model


def two_covariate_model(baseline_di):
    cs = ConditionSet(("DI",))
    layout = CovariateLayout(("diet", "exercise"), ())
    return FctbnModel(cs, layout, {"DI": np.asarray(baseline_di, dtype=float)})


class TestModelConstruction:
    def test_missing_baseline_rejected(self):
        cs = ConditionSet(("DI", "OB"))
        layout = CovariateLayout((), ())
        with pytest.raises(ValidationError, match="OB"):
            FctbnModel(cs, layout, {"DI": np.zeros(1)})

    def test_baseline_length_checked(self):
        cs = ConditionSet(("DI",))
        layout = CovariateLayout(("diet",), ())
        with pytest.raises(CovariateLayoutError):
            FctbnModel(cs, layout, {"DI": np.zeros(3)})

    def test_edge_group_validation(self):
        cs = ConditionSet(("DI", "OB"))
        layout = CovariateLayout((), ())
        baseline = {"DI": np.zeros(1), "OB": np.zeros(1)}
        with pytest.raises(ValidationError):
            FctbnModel(cs, layout, baseline, {("DI", "DI"): np.zeros(1)})
        with pytest.raises(ValidationError):
            FctbnModel(cs, layout, baseline, {("XX", "DI"): np.zeros(1)})
        with pytest.raises(CovariateLayoutError):
            FctbnModel(cs, layout, baseline, {("OB", "DI"): np.zeros(2)})

    def test_edges_threshold(self):
        m = rate_only_model({"DI": 1.0, "OB": 1.0}, {("OB", "DI"): 0.5})
        assert m.edges() == [("OB", "DI")]
        assert m.edges(threshold=0.6) == []
        zeroed = rate_only_model({"DI": 1.0, "OB": 1.0}, {("OB", "DI"): 0.0})
        assert zeroed.edges() == []

    def test_coefficients_are_frozen_copies(self):
        src = np.array([0.0])
        m = rate_only_model({"DI": 1.0})
        assert m.baseline["DI"].flags.writeable is False
        FctbnModel(m.condition_set, m.layout, {"DI": src})
        src[0] = 99.0  # must not alias into the model


class TestAcquisitionIntensity:
    def test_all_zero_coefficients_give_unit_rate(self):
        m = two_covariate_model([0.0, 0.0, 0.0])
        assert acquisition_intensity(m, "DI", 0, z_of(m, 0.0, 0.0)) == 1.0

    def test_intercept_only(self):
        m = rate_only_model({"DI": 0.5})
        assert acquisition_intensity(m, "DI", 0, empty_z(m)) == pytest.approx(0.5, abs=1e-15)

    def test_covariate_evaluation(self):
        m = two_covariate_model([0.2, -0.4, 0.6])
        z = z_of(m, 1.0, 0.5)
        assert acquisition_intensity(m, "DI", 0, z) == pytest.approx(math.exp(0.1), abs=1e-12)

    def test_acquired_parent_adds_group(self):
        m = rate_only_model({"DI": 0.5, "OB": 0.2}, {("OB", "DI"): 0.9})
        z = empty_z(m)
        state = m.condition_set.state_of(["OB"])
        assert acquisition_intensity(m, "DI", state, z) == pytest.approx(
            0.5 * math.exp(0.9), rel=1e-12
        )
        # no edge group means the parent contributes nothing
        assert acquisition_intensity(m, "OB", m.condition_set.state_of(["DI"]), z) == (
            pytest.approx(0.2, rel=1e-12)
        )

    def test_parent_sum_order_invariant(self):
        rates = {"DI": 0.3, "OB": 0.2, "HP": 0.1}
        forward = rate_only_model(rates, {("OB", "DI"): 0.4, ("HP", "DI"): -0.2})
        backward = rate_only_model(rates, {("HP", "DI"): -0.2, ("OB", "DI"): 0.4})
        state = forward.condition_set.state_of(["OB", "HP"])
        assert acquisition_intensity(forward, "DI", state, empty_z(forward)) == (
            acquisition_intensity(backward, "DI", state, empty_z(backward))
        )

    def test_already_acquired_child_rejected(self):
        m = rate_only_model({"DI": 0.5})
        with pytest.raises(ValidationError):
            acquisition_intensity(m, "DI", 1, empty_z(m))

    def test_layout_mismatch_rejected(self):
        m = two_covariate_model([0.0, 0.0, 0.0])
        other = CovariateLayout(("tobacco",), ())
        z = RiskFactorVector(other, [0.0], [])
        with pytest.raises(CovariateLayoutError):
            acquisition_intensity(m, "DI", 0, z)

    @pytest.mark.parametrize("intercept", [51.0, -51.0])
    def test_extreme_predictor_is_an_error_not_a_clamp(self, intercept):
        cs = ConditionSet(("DI",))
        m = FctbnModel(cs, CovariateLayout((), ()), {"DI": np.array([intercept])})
        with pytest.raises(NumericOverflowError):
            acquisition_intensity(m, "DI", 0, empty_z(m))


class TestSojourn:
    def test_cdf_examples(self):
        assert sojourn_cdf(0.7, 0.0) == 0.0
        assert sojourn_cdf(0.5, 2.0) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-15)
        assert sojourn_cdf(1.0, 1e6) == pytest.approx(1.0, abs=1e-12)

    def test_pdf_matches_closed_form(self):
        assert sojourn_pdf(0.5, 2.0) == pytest.approx(0.5 * math.exp(-1.0), abs=1e-15)

    def test_domain_errors(self):
        with pytest.raises(ValidationError):
            sojourn_cdf(0.5, -1.0)
        with pytest.raises(ValidationError):
            sojourn_cdf(0.0, 1.0)
        with pytest.raises(ValidationError):
            sojourn_pdf(-2.0, 1.0)


class TestJointGenerator:
    def test_single_condition(self):
        m = rate_only_model({"DI": 0.7})
        Q = joint_generator(m, empty_z(m))
        np.testing.assert_allclose(Q, [[-0.7, 0.7], [0.0, 0.0]], atol=1e-15)

    def test_two_independent_conditions(self):
        m = rate_only_model({"DI": 0.3, "OB": 0.1})
        Q = joint_generator(m, empty_z(m))
        expected = np.array([
            [-0.4, 0.3, 0.1, 0.0],
            [0.0, -0.1, 0.0, 0.1],
            [0.0, 0.0, -0.3, 0.3],
            [0.0, 0.0, 0.0, 0.0],
        ])
        np.testing.assert_allclose(Q, expected, atol=1e-15)

    def test_generator_properties_on_preset(self):
        m = preset_model("cluster5")
        z = RiskFactorVector.from_dict(m.layout, {
            "diet": 1.0, "exercise": 0.0, "tobacco": 1.0, "alcohol": 0.0,
            "age_group": 3.0, "gender": 1.0, "education": 0.0, "marital": 1.0,
        })
        Q = joint_generator(m, z)
        np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-12)
        off = Q - np.diag(np.diag(Q))
        assert (off >= 0).all()
        # only transitions that add exactly one bit are populated
        n_states = Q.shape[0]
        for s in range(n_states):
            for d in range(n_states):
                if s != d and Q[s, d] != 0:
                    gained = d & ~s
                    assert d > s and gained and gained & (gained - 1) == 0 and (s & ~d) == 0

    def test_diagonal_is_negative_total_exit_rate(self):
        m = rate_only_model({"DI": 0.3, "OB": 0.1, "HP": 0.2})
        z = empty_z(m)
        Q = joint_generator(m, z)
        for s in range(8):
            assert -Q[s, s] == pytest.approx(
                sum(state_intensities(m, s, z).values()), abs=1e-15
            )

    def test_capacity_guard(self):
        codes = tuple(f"C{i}" for i in range(13))
        cs = ConditionSet(codes)
        m = FctbnModel(cs, CovariateLayout((), ()), {c: np.array([-1.0]) for c in codes})
        with pytest.raises(CapacityError):
            state_rate_table(m, empty_z(m))


class TestStateRateTable:
    def test_matches_scalar_evaluation(self):
        m = preset_model("cluster5")
        z = RiskFactorVector.from_dict(m.layout, {
            "diet": 0.0, "exercise": 1.0, "tobacco": 0.0, "alcohol": 1.0,
            "age_group": 2.0, "gender": 0.0, "education": 1.0, "marital": 0.0,
        })
        table = state_rate_table(m, z)
        cs = m.condition_set
        for state in (0, 0b00101, 0b11010, 0b11111):
            for j, code in enumerate(cs.codes):
                if cs.is_acquired(state, code):
                    assert table[state, j] == 0.0
                else:
                    assert table[state, j] == pytest.approx(
                        acquisition_intensity(m, code, state, z), rel=1e-12
                    )

    @given(st.integers(min_value=0, max_value=7))
    def test_rates_positive_where_free(self, state):
        m = rate_only_model({"DI": 0.3, "OB": 0.1, "HP": 0.2})
        table = state_rate_table(m, empty_z(m))
        for j in range(3):
            if state >> j & 1:
                assert table[state, j] == 0.0
            else:
                assert table[state, j] > 0.0

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbm.errors import ConfigError
from cbm.schedule import (
    KINDS,
    ScheduleSpec,
    build_schedule,
    export_schedule,
    parse_schedule_csv,
)


def closed_form(kind, r_n, epochs, period, k):
    """Independent oracle for the schedule formulas."""
    if kind == "constant":
        return r_n
    if kind == "linear":
        return r_n * k / epochs
    if kind == "log":
        return r_n * math.log2(1.0 + k / epochs)
    if kind == "exp":
        return r_n * math.exp(k - epochs)
    phase = (k - 1) % period + 1
    return r_n * phase / period


class TestBuildSchedule:
    @pytest.mark.parametrize("kind", KINDS)
    def test_matches_closed_form_everywhere(self, kind):
        spec = ScheduleSpec(kind, 0.5, 200, 20 if kind == "linear_repeat" else None)
        sv = build_schedule(spec)
        for k in range(1, 201):
            expected = closed_form(kind, 0.5, 200, 20, k)
            assert abs(sv.ratio_at(k) - expected) <= 1e-12

    def test_constant_is_rn_everywhere(self):
        sv = build_schedule(ScheduleSpec("constant", 0.4, 7))
        assert np.all(sv.r == 0.4)

    @pytest.mark.parametrize("kind", ["linear", "log", "exp"])
    def test_final_epoch_hits_rn_exactly(self, kind):
        sv = build_schedule(ScheduleSpec(kind, 0.37, 123))
        assert sv.ratio_at(123) == 0.37

    def test_linear_midpoint(self):
        sv = build_schedule(ScheduleSpec("linear", 0.5, 200))
        assert sv.ratio_at(100) == pytest.approx(0.25, abs=1e-15)

    def test_linear_repeat_ramp_values(self):
        sv = build_schedule(ScheduleSpec("linear_repeat", 0.4, 20, 5))
        assert sv.ratio_at(5) == pytest.approx(0.4, abs=1e-15)
        assert sv.ratio_at(6) == pytest.approx(0.08, abs=1e-15)

    def test_linear_repeat_periodicity(self):
        sv = build_schedule(ScheduleSpec("linear_repeat", 0.5, 200, 20))
        for k in range(1, 181):
            assert sv.ratio_at(k + 20) == sv.ratio_at(k)

    def test_linear_repeat_truncates_final_partial_period(self):
        sv = build_schedule(ScheduleSpec("linear_repeat", 0.5, 12, 5))
        assert sv.ratio_at(11) == pytest.approx(0.1, abs=1e-15)
        assert sv.ratio_at(12) == pytest.approx(0.2, abs=1e-15)

    @pytest.mark.parametrize("kind", ["constant", "linear", "log", "exp"])
    def test_non_repeat_kinds_non_decreasing(self, kind):
        sv = build_schedule(ScheduleSpec(kind, 0.5, 200))
        assert np.all(np.diff(sv.r) >= 0)

    def test_pointwise_ordering_exp_linear_log(self):
        exp = build_schedule(ScheduleSpec("exp", 0.5, 200)).r
        lin = build_schedule(ScheduleSpec("linear", 0.5, 200)).r
        log = build_schedule(ScheduleSpec("log", 0.5, 200)).r
        assert np.all(exp <= lin)
        assert np.all(lin <= log)

    def test_determinism(self):
        a = build_schedule(ScheduleSpec("log", 0.31, 77))
        b = build_schedule(ScheduleSpec("log", 0.31, 77))
        assert np.array_equal(a.r, b.r)

    @settings(max_examples=60, deadline=None)
    @given(
        kind=st.sampled_from(KINDS),
        r_n=st.floats(0.01, 0.99),
        epochs=st.integers(1, 300),
        period_frac=st.floats(0.0, 1.0),
    )
    def test_bounds_property(self, kind, r_n, epochs, period_frac):
        period = max(1, round(period_frac * epochs)) if kind == "linear_repeat" else None
        sv = build_schedule(ScheduleSpec(kind, r_n, epochs, period))
        assert np.all(sv.r >= 0.0)
        assert np.all(sv.r <= r_n + 1e-15)
        if kind != "linear_repeat":
            assert sv.ratio_at(epochs) == pytest.approx(r_n, abs=1e-12)


class TestRatioAt:
    def test_exp_first_epoch_is_vanishing(self):
        sv = build_schedule(ScheduleSpec("exp", 0.5, 200))
        assert sv.ratio_at(1) < 1e-80

    def test_out_of_range_rejected(self):
        sv = build_schedule(ScheduleSpec("linear", 0.5, 10))
        with pytest.raises(IndexError):
            sv.ratio_at(0)
        with pytest.raises(IndexError):
            sv.ratio_at(11)


class TestSpecValidation:
    @pytest.mark.parametrize("r_n", [0.0, 1.0, -0.1, 1.5])
    def test_rn_bounds_enforced(self, r_n):
        with pytest.raises(ConfigError, match="0 < r_n < 1"):
            ScheduleSpec("linear", r_n, 10)

    def test_epochs_bound_enforced(self):
        with pytest.raises(ConfigError, match="epochs"):
            ScheduleSpec("linear", 0.5, 0)

    @pytest.mark.parametrize("period", [0, 21])
    def test_period_bounds_enforced(self, period):
        with pytest.raises(ConfigError, match="period"):
            ScheduleSpec("linear_repeat", 0.5, 20, period)

    def test_period_required_for_linear_repeat(self):
        with pytest.raises(ConfigError, match="period"):
            ScheduleSpec("linear_repeat", 0.5, 20)

    def test_period_rejected_elsewhere(self):
        with pytest.raises(ConfigError, match="period"):
            ScheduleSpec("linear", 0.5, 20, 5)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError, match="kind"):
            ScheduleSpec("cosine", 0.5, 20)


class TestExport:
    def test_linear_rows(self):
        text = export_schedule(build_schedule(ScheduleSpec("linear", 0.3, 3)))
        assert text == "epoch,ratio\n1,0.1\n2,0.2\n3,0.3\n"

    def test_constant_rows(self):
        text = export_schedule(build_schedule(ScheduleSpec("constant", 0.6, 2)))
        assert text == "epoch,ratio\n1,0.6\n2,0.6\n"

    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip(self, kind):
        sv = build_schedule(ScheduleSpec(kind, 0.5, 200, 20 if kind == "linear_repeat" else None))
        parsed = parse_schedule_csv(export_schedule(sv))
        assert parsed.shape == (200,)
        assert np.allclose(parsed, sv.r, atol=1e-11, rtol=0)

    def test_parse_rejects_bad_header(self):
        with pytest.raises(ValueError, match="header"):
            parse_schedule_csv("k,r\n1,0.5\n")

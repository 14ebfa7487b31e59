"""Grid model: consumption handling and the frequency balance law."""

import math

import pytest
from hypothesis import given, strategies as st

from bessim.grid import (
    CONSUMPTION_FLOOR_MW,
    ConsumptionSeries,
    Grid,
    compute_frequency,
    consumption_at,
    generate_synthetic_consumption,
    load_consumption_csv,
)
from bessim.rng import RngStream


def write_csv(tmp_path, rows, header="minute,consumption_mw"):
    path = tmp_path / "consumption.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return str(path)


class TestCsvLoading:
    def test_scaling_matches_national_to_city_ratio(self, tmp_path):
        path = write_csv(tmp_path, ["0,10500", "1,10500"])
        series = load_consumption_csv(path, scale=0.02)
        assert series.values_mw == (210.0, 210.0)

    def test_scale_one_is_identity(self, tmp_path):
        path = write_csv(tmp_path, ["0,100", "1,105.5"])
        series = load_consumption_csv(path, scale=1.0)
        assert series.values_mw == (100.0, 105.5)

    def test_window_retains_82_intervals(self, tmp_path):
        rows = [f"{m},{10000 + m}" for m in range(181)]
        path = write_csv(tmp_path, rows)
        series = load_consumption_csv(path, scale=0.02, window=(38, 120))
        assert series.minutes == 82
        assert series.values_mw[0] == (10000 + 38) * 0.02

    def test_non_monotone_minutes_rejected(self, tmp_path):
        path = write_csv(tmp_path, ["0,100", "2,100", "1,100"])
        with pytest.raises(ValueError, match="strictly increasing"):
            load_consumption_csv(path)

    def test_negative_consumption_rejected(self, tmp_path):
        path = write_csv(tmp_path, ["0,100", "1,-5"])
        with pytest.raises(ValueError, match="negative"):
            load_consumption_csv(path)

    def test_empty_window_rejected(self, tmp_path):
        path = write_csv(tmp_path, ["0,100", "1,100", "2,100"])
        with pytest.raises(ValueError, match="window"):
            load_consumption_csv(path, window=(10, 20))

    def test_bad_header_rejected(self, tmp_path):
        path = write_csv(tmp_path, ["0,100", "1,100"], header="time,mw")
        with pytest.raises(ValueError, match="header"):
            load_consumption_csv(path)


class TestSyntheticSeries:
    def test_flat_series(self):
        series = generate_synthetic_consumption(210.0, 0.0, 0.0, 10)
        assert series.values_mw == tuple([210.0] * 10)

    def test_drift_arithmetic(self):
        series = generate_synthetic_consumption(210.0, -0.1, 0.0, 60)
        assert series.values_mw[-1] == pytest.approx(210.0 - 0.1 * 59)

    def test_noise_is_reproducible(self):
        a = generate_synthetic_consumption(210.0, 0.0, 2.0, 60, RngStream(7, "series"))
        b = generate_synthetic_consumption(210.0, 0.0, 2.0, 60, RngStream(7, "series"))
        assert a.values_mw == b.values_mw
        assert a.values_mw != tuple([210.0] * 60)

    def test_reversal_makes_vee(self):
        series = generate_synthetic_consumption(210.0, -1.0, 0.0, 7, reverse_after_minute=3)
        values = series.values_mw
        assert values[3] == min(values)
        assert values[0] > values[3] < values[-1]

    def test_nonpositive_parameters_rejected(self):
        with pytest.raises(ValueError):
            generate_synthetic_consumption(1.0, -1.0, 0.0, 10)
        with pytest.raises(ValueError):
            generate_synthetic_consumption(210.0, 0.0, 0.0, 1)


class TestInterpolation:
    def test_midpoint(self):
        series = ConsumptionSeries(values_mw=(200.0, 206.0))
        assert consumption_at(series, 30.0) == pytest.approx(203.0)

    def test_exact_sample(self):
        series = ConsumptionSeries(values_mw=(200.0, 206.0, 210.0))
        assert consumption_at(series, 60.0) == 206.0

    def test_out_of_window_rejected(self):
        series = ConsumptionSeries(values_mw=(200.0, 206.0))
        with pytest.raises(ValueError):
            consumption_at(series, 61.0)
        with pytest.raises(ValueError):
            consumption_at(series, -1.0)


class TestFrequency:
    def test_balance_gives_nominal(self):
        assert compute_frequency(210.0, 210.0) == 50.0

    def test_two_permille_overproduction(self):
        # ratio 1.002 maps to a 0.1 Hz rise
        assert compute_frequency(210.0 * 1.002, 210.0) == pytest.approx(50.1)

    def test_half_consumption_doubles_are_halved(self):
        assert compute_frequency(105.0, 210.0) == 25.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            compute_frequency(float("nan"), 210.0)

    @given(
        production=st.floats(1.0, 1000.0),
        c1=st.floats(1.0, 1000.0),
        c2=st.floats(1.0, 1000.0),
    )
    def test_monotone_in_consumption(self, production, c1, c2):
        if c1 == c2:
            return
        lo, hi = sorted((c1, c2))
        assert compute_frequency(production, lo) > compute_frequency(production, hi)


class TestGridStep:
    def test_balanced_start_is_50(self):
        series = generate_synthetic_consumption(210.0, 0.0, 0.0, 5)
        grid = Grid(series, noise_mw=0.0)
        state = grid.step(0.0, 0.0, 0.0)
        assert state.frequency_hz == 50.0

    def test_one_percent_load_attack(self):
        series = generate_synthetic_consumption(210.0, 0.0, 0.0, 5)
        grid = Grid(series, noise_mw=0.0)
        state = grid.step(0.0, 2.1, 0.0)
        assert state.frequency_hz == pytest.approx(50.0 / 1.01)

    def test_full_discharge_oracle(self):
        # independent arithmetic: (210 + 2) / 210 * 50
        series = generate_synthetic_consumption(210.0, 0.0, 0.0, 5)
        grid = Grid(series, noise_mw=0.0)
        state = grid.step(0.0, 0.0, 2.0)
        assert state.frequency_hz == pytest.approx(212.0 / 210.0 * 50.0, abs=1e-12)

    def test_floor_clamp_logged(self):
        series = generate_synthetic_consumption(210.0, 0.0, 0.0, 5)
        grid = Grid(series, noise_mw=0.0)
        state = grid.step(0.0, -209.5, 0.0)
        assert state.consumption_mw == CONSUMPTION_FLOOR_MW
        assert grid.state.floor_clamps == 1

    def test_frequency_consistent_with_balance_fields(self):
        series = generate_synthetic_consumption(210.0, 0.5, 0.0, 5)
        grid = Grid(series, noise_mw=0.0)
        for tick in range(100):
            state = grid.step(tick / 50.0, 0.3, -0.7)
            production = state.production_base_mw + state.battery_power_mw
            assert state.frequency_hz == production / state.consumption_mw * 50.0

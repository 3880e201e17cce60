"""Time series container and log-spaced grids."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalheat.series import TimeSeries, log_grid, write_json_sidecar


class TestTimeSeries:
    def test_rejects_non_increasing_times(self):
        with pytest.raises(ValueError):
            TimeSeries(t=np.array([1.0, 1.0, 2.0]), v=np.zeros(3))

    def test_csv_roundtrip_is_exact(self, tmp_path):
        t = np.geomspace(1e-7, 1.0, 40)
        v = np.sin(t) * 1e-3 + 1 / 3
        series = TimeSeries(t=t, v=v)
        path = tmp_path / "series.csv"
        series.to_csv(path)
        back = TimeSeries.from_csv(path)
        # %.17g formatting round-trips doubles bit-for-bit
        assert np.array_equal(back.t, t)
        assert np.array_equal(back.v, v)

    @given(st.floats(1e-8, 1e-2), st.integers(2, 40), st.integers(4, 48))
    @settings(max_examples=40, deadline=None)
    def test_log_grid_spacing(self, t_min, decades_x2, per_decade):
        t_max = t_min * 10 ** (decades_x2 / 2)
        grid = log_grid(t_min, t_max, per_decade)
        assert grid[0] == pytest.approx(t_min, rel=1e-12)
        assert grid[-1] == pytest.approx(t_max, rel=1e-12)
        ratios = np.diff(np.log10(grid))
        assert np.allclose(ratios, ratios[0], rtol=1e-6)
        assert ratios[0] <= 1 / per_decade * (1 + 1e-9)

    def test_sidecar_round_trip(self, tmp_path):
        path = tmp_path / "meta.json"
        write_json_sidecar(path, {"a": 1, "b": [1.5, "x"]})
        assert json.loads(path.read_text()) == {"a": 1, "b": [1.5, "x"]}

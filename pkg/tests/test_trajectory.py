import numpy as np
import pytest

from lagcomp.errors import CsvParseError, MalformedInput
from lagcomp.trajectory import (
    ANGULAR,
    CARTESIAN,
    ChannelSpec,
    Trajectory,
    derivative,
    from_phase,
    load_csv,
    save_csv,
    to_phase,
)


def make_traj(times, values, kinds=None):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != len(times):
        values = values.T
    n = values.shape[1]
    kinds = kinds or [CARTESIAN] * n
    channels = tuple(ChannelSpec(f"ch{i}", kinds[i]) for i in range(n))
    rate = (len(times) - 1) / (times[-1] - times[0]) if len(times) > 1 else 1.0
    return Trajectory(channels, np.asarray(times, dtype=float), values, rate)


class TestInvariants:
    def test_timestamps_must_increase(self):
        with pytest.raises(MalformedInput):
            make_traj([0.0, 0.5, 0.5], [1.0, 2.0, 3.0])

    def test_value_rows_must_match_channels(self):
        channels = (ChannelSpec("a"), ChannelSpec("b"))
        with pytest.raises(MalformedInput):
            Trajectory(channels, np.array([0.0, 1.0]), np.zeros((2, 3)), 10.0)

    def test_rate_must_be_positive(self):
        channels = (ChannelSpec("a"),)
        with pytest.raises(MalformedInput):
            Trajectory(channels, np.array([0.0, 1.0]), np.zeros((2, 1)), 0.0)

    def test_bad_channel_kind(self):
        with pytest.raises(MalformedInput):
            ChannelSpec("a", kind="quaternions")


class TestToPhase:
    def test_constant_preserved(self):
        traj = make_traj(np.linspace(0.0, 3.0, 31), np.full(31, 4.2))
        phased = to_phase(traj, 11)
        assert phased.duration == pytest.approx(3.0)
        assert np.allclose(phased.values, 4.2)
        assert phased.phases[0] == 0.0 and phased.phases[-1] == 1.0

    def test_ramp_exact(self):
        t = np.linspace(0.0, 1.0, 21)
        phased = to_phase(make_traj(t, t.copy()), 5)
        assert np.allclose(phased.values[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_sine_against_analytic(self):
        t = np.arange(0, 2.0 + 1e-12, 0.01)
        traj = make_traj(t, np.sin(2 * np.pi * t))
        phased = to_phase(traj, 50)
        analytic = np.sin(2 * np.pi * (phased.phases * 2.0))
        assert np.max(np.abs(phased.values[:, 0] - analytic)) < 1e-3

    def test_too_few_samples(self):
        traj = make_traj([0.0, 1.0], [1.0, 2.0])
        with pytest.raises(MalformedInput):
            to_phase(make_traj([0.0], [1.0]), 5)
        to_phase(traj, 5)  # two samples are enough

    def test_round_trip_to_original_times(self):
        t = np.linspace(0.0, 2.0, 201)
        traj = make_traj(t, np.sin(3 * t) + 0.2 * t)
        phased = to_phase(traj, 400)
        back = from_phase(phased, traj.times, traj.rate)
        assert np.max(np.abs(back.values - traj.values)) < 1e-4


class TestDerivative:
    def test_constant_is_zero(self):
        traj = make_traj(np.linspace(0, 1, 11), np.full(11, 7.0))
        assert np.allclose(derivative(traj).values, 0.0)

    def test_ramp_slope(self):
        t = np.linspace(0, 5, 101)
        traj = make_traj(t, 2.0 * t)
        assert np.max(np.abs(derivative(traj).values - 2.0)) < 1e-9

    def test_quadratic_matches_analytic(self):
        h = 0.01
        t = np.arange(0, 1 + 1e-12, h)
        traj = make_traj(t, t**2)
        d = derivative(traj)
        assert np.max(np.abs(d.values[:, 0] - 2.0 * t)) < h**2

    def test_too_few_samples(self):
        with pytest.raises(MalformedInput):
            derivative(make_traj([0.0], [1.0]))

    def test_phase_derivative_commutes_with_scaling(self):
        # d/dphase of the phased signal divided by T equals the phased
        # derivative, up to finite-difference error on smooth signals
        t = np.linspace(0.0, 2.0, 401)
        traj = make_traj(t, np.sin(2 * t))
        phased_then_diff = to_phase(derivative(traj), 101)
        phased = to_phase(traj, 401)
        grid = phased.phases
        dval = np.gradient(phased.values[:, 0], grid, edge_order=2) / phased.duration
        expected = np.interp(np.linspace(0, 1, 101), grid, dval)
        assert np.max(np.abs(phased_then_diff.values[:, 0] - expected)) < 5e-3


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        t = np.sort(rng.uniform(0, 10, 50))
        traj = make_traj(t, rng.normal(size=(50, 3)).T[0])
        path = tmp_path / "traj.csv"
        save_csv(traj, path)
        back = load_csv(path)
        assert np.array_equal(back.times, traj.times)
        assert np.array_equal(back.values, traj.values)
        assert back.channel_names() == traj.channel_names()

    def test_missing_column_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,a,b\n0.0,1.0,2.0\n0.1,1.0\n")
        with pytest.raises(CsvParseError) as err:
            load_csv(path)
        assert err.value.line == 3

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,a\n0.0,1.0\n")
        with pytest.raises(CsvParseError):
            load_csv(path)

    def test_crlf_equals_lf(self, tmp_path):
        body = "t,a\n0.0,1.5\n0.1,2.5\n0.2,3.5\n"
        lf = tmp_path / "lf.csv"
        crlf = tmp_path / "crlf.csv"
        lf.write_text(body)
        crlf.write_bytes(body.replace("\n", "\r\n").encode())
        a, b = load_csv(lf), load_csv(crlf)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.values, b.values)

    def test_kinds_applied(self, tmp_path):
        traj = make_traj([0.0, 0.1], [[1.0], [2.0]])
        path = tmp_path / "t.csv"
        save_csv(traj, path)
        back = load_csv(path, kinds={"ch0": ANGULAR})
        assert back.channels[0].kind == ANGULAR

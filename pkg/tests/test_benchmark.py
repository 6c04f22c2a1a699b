import math

import pytest

from benchmark import LengthBenchRow, run_length_sweep, run_window_sweep, scaling_ratio
from core.datagen import SimSpec
from core.learner import TrainConfig


def _spec(n_times=2000):
    return SimSpec(n_channels=1, n_times=n_times, n_atoms=2, atom_length=16, sparsity=0.01,
                   noise_sigma=0.01, n_signals=1, seed=0)


def _cfg():
    return TrainConfig(n_atoms=2, atom_length=16, n_windows=4, window_width=160, n_fista=10, seed=0)


def test_scaling_ratio():
    rows = [LengthBenchRow(1000, 5, 2.0, 0.4, 0.0, 0.0), LengthBenchRow(100, 5, 0.5, 0.1, 0.0, 0.0)]
    assert scaling_ratio(rows) == 4.0
    assert math.isnan(scaling_ratio([]))


def test_length_sweep_rows():
    rows = run_length_sweep([400, 1200], _spec(), _cfg(), n_iter=3)
    assert [r.n_times for r in rows] == [400, 1200]
    assert all(r.n_iter == 3 and r.seconds > 0 for r in rows)
    assert all(-1.0 <= r.recovery <= 1.0 for r in rows)


def test_window_sweep_skips_too_wide_windows():
    rows = run_window_sweep([10, 20, 200], _spec(), _cfg(), n_iter=3)
    assert [r.window_width for r in rows] == [160, 320]
    assert [r.n_windows for r in rows] == [4, 2]
    assert all(r.eval_loss > 0 for r in rows)


@pytest.mark.slow
def test_training_time_grows_sublinearly_with_length():
    spec = SimSpec(n_channels=2, n_times=10_000, n_atoms=2, atom_length=64, sparsity=0.004,
                   noise_sigma=0.1, n_signals=1, seed=0)
    cfg = TrainConfig(n_atoms=2, atom_length=64, n_windows=16, window_width=640, seed=0)
    rows = run_length_sweep([10_000, 1_000_000], spec, cfg, n_iter=20)
    assert scaling_ratio(rows) <= 40.0


@pytest.mark.slow
def test_short_windows_reach_long_window_loss():
    spec = SimSpec(n_times=20_000, n_signals=2, seed=0)
    rows = run_window_sweep([10, 100], spec, TrainConfig(seed=0), n_iter=200)
    short, long = rows
    assert short.eval_loss == pytest.approx(long.eval_loss, rel=0.05)

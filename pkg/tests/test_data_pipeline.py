"""
Tests de lectura, escalado y matrices de rezagos
"""

import numpy as np
import pytest

from cgt.errors import DimensionError, IngestionError
from cgt.models.series import SeriesFrame, valid_timestamps
from cgt.services.data_pipeline import (
    apply_minmax,
    build_lag_matrix,
    fit_minmax,
    inverse_minmax,
    iterate_target_batches,
    lag_tensor,
    load_scaler,
    load_series,
    save_scaler,
    save_series,
    split_frame,
    training_medians,
)


def test_load_series_with_header(tmp_path):
    """Lee un CSV con encabezado"""
    path = tmp_path / "data.csv"
    path.write_text("a,b\n1,2\n3,4.5\n")
    frame = load_series(str(path))
    assert frame.T == 2 and frame.D == 2
    assert frame.channel_names == ["a", "b"]
    assert frame.values[1, 1] == 4.5


def test_load_series_reports_bad_cell(tmp_path):
    """Un valor no numérico indica fila y columna"""
    path = tmp_path / "data.csv"
    path.write_text("a,b\n1,2\n3,nan\n")
    with pytest.raises(IngestionError) as excinfo:
        load_series(str(path))
    assert "fila 3" in str(excinfo.value)
    assert "columna 1" in str(excinfo.value)


def test_load_series_missing_file(tmp_path):
    with pytest.raises(IngestionError):
        load_series(str(tmp_path / "missing.csv"))


def test_save_and_load_series_keep_values(tmp_path):
    frame = SeriesFrame(np.random.default_rng(0).normal(size=(10, 3)))
    path = str(tmp_path / "series.csv")
    save_series(path, frame)
    assert np.array_equal(load_series(path).values, frame.values)


def test_minmax_maps_training_to_unit_interval():
    """Entrenamiento queda en [0, 1]; un canal constante queda en 0"""
    values = np.column_stack([np.linspace(-3, 5, 50), np.full(50, 2.0)])
    train = SeriesFrame(values)
    scaler = fit_minmax(train)
    scaled = apply_minmax(train, scaler).values
    assert scaled[:, 0].min() == pytest.approx(0.0)
    assert scaled[:, 0].max() == pytest.approx(1.0, abs=1e-8)
    assert np.all(scaled[:, 1] == 0.0)
    assert np.allclose(inverse_minmax(apply_minmax(train, scaler), scaler).values, values)


def test_minmax_does_not_clip_test_values():
    train = SeriesFrame(np.array([[0.0], [1.0]]))
    scaler = fit_minmax(train)
    scaled = apply_minmax(SeriesFrame(np.array([[2.0], [-1.0]])), scaler).values
    assert scaled[0, 0] > 1.0 and scaled[1, 0] < 0.0


def test_scaler_file_is_exact(tmp_path):
    scaler = fit_minmax(SeriesFrame(np.random.default_rng(1).normal(size=(20, 4))))
    path = str(tmp_path / "scaler.txt")
    save_scaler(path, scaler)
    loaded = load_scaler(path)
    assert np.array_equal(loaded.mins, scaler.mins)
    assert np.array_equal(loaded.maxs, scaler.maxs)
    assert loaded.epsilon == scaler.epsilon


def test_scaler_dimension_mismatch():
    scaler = fit_minmax(SeriesFrame(np.zeros((5, 2))))
    with pytest.raises(DimensionError):
        apply_minmax(SeriesFrame(np.zeros((5, 3))), scaler)


def test_lag_matrix_layout():
    """X[r, j*tau + lag-1] = x[t - W - lag + r, j]"""
    rng = np.random.default_rng(2)
    frame = SeriesFrame(rng.normal(size=(40, 3)))
    W, tau = 5, 3
    t = 20
    X = build_lag_matrix(frame, t, W, tau).X
    assert X.shape == (W, 3 * tau)
    for r in range(W):
        for j in range(3):
            for lag in range(1, tau + 1):
                assert X[r, j * tau + lag - 1] == frame.values[t - W - lag + r, j]


def test_lag_matrix_single_channel_example():
    """D=1, W=2, tau_max=1, serie [a, b, c, d], t=3 -> columna [a, b]"""
    frame = SeriesFrame(np.array([10.0, 20.0, 30.0, 40.0]))
    matrix = build_lag_matrix(frame, 3, W=2, tau_max=1)
    assert matrix.X.shape == (2, 1)
    assert matrix.column(0, 1).tolist() == [10.0, 20.0]


def test_lag_matrix_never_sees_the_target():
    frame = SeriesFrame(np.arange(30, dtype=float).reshape(-1, 1))
    matrix = build_lag_matrix(frame, 12, W=4, tau_max=2)
    assert matrix.X.max() < 12.0


def test_lag_matrix_rejects_early_t():
    frame = SeriesFrame(np.zeros((20, 2)))
    with pytest.raises(DimensionError):
        build_lag_matrix(frame, 6, W=5, tau_max=2)


def test_lag_tensor_matches_single_matrices():
    frame = SeriesFrame(np.random.default_rng(3).normal(size=(30, 2)))
    timestamps = valid_timestamps(frame.T, 4, 2)
    X = lag_tensor(frame.values, timestamps, 4, 2)
    for b, t in enumerate(timestamps):
        assert np.array_equal(X[b], build_lag_matrix(frame, t, 4, 2).X)


def test_batches_cover_each_timestamp_once(small_frame):
    batches = list(iterate_target_batches(small_frame, 1, 4, 2, batch_size=7, shuffle_seed=9))
    seen = np.concatenate([b.timestamps for b in batches])
    assert sorted(seen.tolist()) == list(range(6, small_frame.T))
    assert all(b.target_index == 1 for b in batches)
    assert np.array_equal(batches[0].targets, small_frame.values[batches[0].timestamps, 1])


def test_batches_are_reproducible(small_frame):
    first = [b.timestamps for b in iterate_target_batches(small_frame, 0, 4, 2, 8, shuffle_seed=4)]
    second = [b.timestamps for b in iterate_target_batches(small_frame, 0, 4, 2, 8, shuffle_seed=4)]
    assert all(np.array_equal(a, b) for a, b in zip(first, second))
    assert len(iterate_target_batches(small_frame, 0, 4, 2, 8)) == -(-(small_frame.T - 6) // 8)


def test_batches_reject_short_series():
    with pytest.raises(DimensionError):
        iterate_target_batches(SeriesFrame(np.zeros((6, 2))), 0, 4, 2, 8)


def test_split_keeps_final_fraction_for_validation():
    frame = SeriesFrame(np.arange(100, dtype=float).reshape(-1, 1))
    train, val = split_frame(frame, 0.3)
    assert train.T == 70 and val.T == 30
    assert val.values[0, 0] == 70.0


def test_training_medians_are_raw():
    frame = SeriesFrame(np.array([[1.0, 10.0], [3.0, 30.0], [2.0, 20.0]]))
    assert np.array_equal(training_medians(frame), [2.0, 20.0])

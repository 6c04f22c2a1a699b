import numpy as np
import pytest

from conftest import sparse_codes, unit_atoms
from core.errors import DimensionError, RangeError
from core.tensor import (
    WindowSpec, convolve, correlate, correlate_dictionary, extract_window, operator_norm_sq,
)


def _reference_convolve(d, z):
    n_atoms, n_channels, atom_length = d.shape
    out = np.zeros((n_channels, z.shape[-1] + atom_length - 1))
    for k in range(n_atoms):
        for p in range(n_channels):
            out[p] += np.convolve(z[k], d[k, p])
    return out


def test_convolve_matches_reference(rng):
    d = unit_atoms(rng, 3, 2, 7)
    z = rng.standard_normal((3, 40))
    np.testing.assert_allclose(convolve(d, z), _reference_convolve(d, z), atol=1e-12)


@pytest.mark.parametrize("method", ["direct", "fft"])
def test_convolve_methods_agree(rng, method):
    d = unit_atoms(rng, 2, 3, 9)
    z = rng.standard_normal((4, 2, 120))
    expected = np.stack([_reference_convolve(d, zi) for zi in z])
    np.testing.assert_allclose(convolve(d, z, method=method), expected, atol=1e-10)


def test_auto_switches_to_fft_on_large_problems(rng):
    d = unit_atoms(rng, 2, 1, 64)
    z = sparse_codes(rng, 2, 2000)
    np.testing.assert_allclose(convolve(d, z), convolve(d, z, method="direct"), atol=1e-10)


def test_adjoint_identities(rng):
    d = unit_atoms(rng, 2, 2, 6)
    z = rng.standard_normal((3, 2, 50))
    r = rng.standard_normal((3, 2, 55))
    lhs = np.sum(convolve(d, z) * r)
    np.testing.assert_allclose(np.sum(z * correlate_dictionary(r, d)), lhs, rtol=1e-10)
    np.testing.assert_allclose(np.sum(d * correlate(r, z)), lhs, rtol=1e-10)


@pytest.mark.parametrize("method", ["direct", "fft"])
def test_correlate_methods_agree(rng, method):
    z = rng.standard_normal((2, 3, 80))
    r = rng.standard_normal((2, 2, 87))
    np.testing.assert_allclose(correlate(r, z, method=method), correlate(r, z, method="direct"), atol=1e-10)
    d = unit_atoms(rng, 3, 2, 8)
    np.testing.assert_allclose(
        correlate_dictionary(r, d, method=method), correlate_dictionary(r, d, method="direct"), atol=1e-10
    )


def test_shape_mismatch_raises(rng):
    d = unit_atoms(rng, 2, 2, 5)
    with pytest.raises(DimensionError):
        convolve(d, np.zeros((3, 10)))
    with pytest.raises(DimensionError):
        correlate_dictionary(np.zeros((3, 20)), d)
    with pytest.raises(DimensionError):
        convolve(np.zeros((2, 5)), np.zeros((2, 10)))


def test_extract_window_is_a_copy():
    x = np.arange(20, dtype=float).reshape(2, 10)
    w = extract_window(x, WindowSpec(3, 4))
    np.testing.assert_array_equal(w, x[:, 3:7])
    w[:] = -1
    assert x[0, 3] == 3.0


@pytest.mark.parametrize("window", [WindowSpec(-1, 3), WindowSpec(8, 4), WindowSpec(0, 0)])
def test_extract_window_out_of_range(window):
    with pytest.raises(RangeError):
        extract_window(np.zeros((1, 10)), window)


def test_operator_norm_of_identity_atom():
    d = np.ones((1, 1, 1))
    assert operator_norm_sq(d, 50) == pytest.approx(1.0, abs=1e-6)


def test_operator_norm_bounds_power_spectrum(rng):
    d = unit_atoms(rng, 1, 1, 8)
    spectrum = np.abs(np.fft.rfft(d[0, 0], n=16)) ** 2
    assert operator_norm_sq(d, 64) >= spectrum.max() - 1e-12


def test_operator_norm_is_upper_bound(rng):
    d = unit_atoms(rng, 3, 2, 6)
    norm_sq = operator_norm_sq(d, 40)
    for _ in range(20):
        z = rng.standard_normal((3, 35))
        assert np.sum(convolve(d, z) ** 2) <= norm_sq * np.sum(z ** 2) * (1 + 1e-9)


def test_operator_norm_rejects_short_signal(rng):
    with pytest.raises(RangeError):
        operator_norm_sq(unit_atoms(rng, 1, 1, 8), 4)

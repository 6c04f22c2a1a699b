import numpy as np
import pytest
from scipy import stats

from core.datagen import GroundTruth, RareSpec, SimSpec, make_activations, synthesize
from core.errors import ConfigError
from core.tensor import convolve


def _spec(**changes):
    params = dict(n_channels=2, n_times=1500, n_atoms=2, atom_length=20, sparsity=0.01,
                  noise_sigma=0.0, n_signals=3, seed=4)
    params.update(changes)
    return SimSpec(**params)


@pytest.mark.parametrize("changes", [
    {"n_signals": 0},
    {"sparsity": 0.0},
    {"n_times": 10},
    {"noise_sigma": -0.1},
])
def test_spec_validation(changes):
    with pytest.raises(ConfigError):
        _spec(**changes)


def test_rare_spec_validation():
    with pytest.raises(ConfigError):
        RareSpec(rare_density=0.0)
    with pytest.raises(ConfigError):
        RareSpec(rare_correlation=1.5)


def test_dictionary_is_unit_norm():
    _, truth = synthesize(_spec())
    assert truth.dictionary.shape == (2, 2, 20)
    np.testing.assert_allclose(np.sqrt(np.sum(truth.dictionary ** 2, axis=(1, 2))), 1.0)


def test_noiseless_signal_is_exact_model():
    corpus, truth = synthesize(_spec())
    for x, z in zip(corpus, truth.activations):
        assert x.shape == (2, 1500)
        np.testing.assert_array_equal(x, convolve(truth.dictionary, z))


def test_synthesis_is_deterministic():
    first, truth_a = synthesize(_spec(noise_sigma=0.1))
    second, truth_b = synthesize(_spec(noise_sigma=0.1))
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(truth_a.dictionary, truth_b.dictionary)


def test_synthesis_independent_of_jobs():
    serial, _ = synthesize(_spec(noise_sigma=0.1), n_jobs=1)
    parallel, _ = synthesize(_spec(noise_sigma=0.1), n_jobs=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a, b)


def test_activations_respect_min_separation():
    spec = _spec(sparsity=0.2)
    z = make_activations(spec, np.random.default_rng(0))
    for row in z:
        assert np.all(np.diff(np.flatnonzero(row)) >= spec.atom_length)


def test_constant_amplitude():
    z = make_activations(_spec(constant_amplitude=True), np.random.default_rng(0))
    assert set(np.unique(z)) <= {0.0, 1.0}


def test_rare_masks_cover_rare_atoms():
    spec = _spec(n_times=4000, sparsity=0.02, rare=RareSpec(rare_density=0.3))
    _, truth = synthesize(spec)
    assert truth.rare_dictionary.shape == (1, 2, 20)
    assert len(truth.rare_masks) == spec.n_signals
    for z_rare, mask, artifacts in zip(truth.rare_activations, truth.rare_masks, truth.artifact_masks):
        assert not artifacts.any()
        for t in np.flatnonzero(z_rare[0]):
            assert mask[t:t + spec.atom_length].all()
        assert mask.sum() <= np.count_nonzero(z_rare) * spec.atom_length


def test_rare_correlation_is_set():
    _, truth = synthesize(_spec(rare=RareSpec(rare_correlation=0.3)))
    c = np.sum(truth.dictionary[0] * truth.rare_dictionary[0])
    assert c == pytest.approx(0.3, abs=1e-12)


def test_artifacts_are_flagged():
    spec = _spec(rare=RareSpec(rare_atom_count=0, artifact_density=0.005))
    corpus, truth = synthesize(spec)
    assert truth.rare_dictionary is None
    assert not any(m.any() for m in truth.rare_masks)
    assert any(m.any() for m in truth.artifact_masks)
    for x, z, mask in zip(corpus, truth.activations, truth.artifact_masks):
        clean = convolve(truth.dictionary, z)
        np.testing.assert_array_equal(x[:, ~mask], clean[:, ~mask])


def test_outlier_masks_union():
    truth = GroundTruth(
        dictionary=np.zeros((1, 1, 2)), activations=[],
        rare_masks=[np.array([True, False, False])], artifact_masks=[np.array([False, False, True])],
    )
    np.testing.assert_array_equal(truth.outlier_masks()[0], [True, False, True])


def test_noise_is_gaussian_with_requested_sigma():
    spec = SimSpec(n_signals=1, seed=3)
    corpus, truth = synthesize(spec)
    residual = corpus[0] - convolve(truth.dictionary, truth.activations[0])
    assert np.std(residual) == pytest.approx(0.1, abs=0.005)
    assert stats.kstest(np.ravel(residual) / spec.noise_sigma, "norm").pvalue > 1e-3


def test_activation_count_is_binomial():
    spec = SimSpec(n_signals=1, seed=5)
    _, truth = synthesize(spec)
    expected = spec.sparsity * spec.valid_length
    for row in truth.activations[0]:
        assert abs(np.count_nonzero(row) - expected) <= 3 * np.sqrt(expected)


def test_min_separation_keeps_dense_count():
    spec = _spec(n_times=20_000, sparsity=0.02, n_signals=1)
    z = make_activations(spec, np.random.default_rng(0))
    expected = spec.sparsity * spec.valid_length
    for row in z:
        positions = np.flatnonzero(row)
        assert np.all(np.diff(positions) >= spec.atom_length)
        assert abs(positions.size - expected) <= 3 * np.sqrt(expected)


def test_rare_activations_follow_relative_density():
    spec = SimSpec(n_signals=4, seed=6, rare=RareSpec(rare_density=0.1))
    _, truth = synthesize(spec)
    expected = 0.1 * spec.sparsity * spec.valid_length * spec.n_signals
    count = sum(np.count_nonzero(z) for z in truth.rare_activations)
    assert abs(count - expected) <= 3 * np.sqrt(expected)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stochastic
from oamsim.channel import CountsMatrix, TransitionMatrix, backward_from_counts, forward_from_counts
from oamsim.errors import ValidationError
from oamsim.stats import NoiseModel, confidence_band, resample, synth_counts
from oamsim.thermo import gibbs


def tm(m):
    return TransitionMatrix(m, np.zeros(m.shape[0]))


def test_synth_identity_flat():
    c = synth_counts(tm(np.eye(21)), None, 2100)
    # perfect anti-correlation: every heralded pair lands at l_B = -l_A
    assert np.array_equal(c.counts, np.fliplr(np.eye(21, dtype=int)) * 100)


def test_synth_uniform():
    c = synth_counts(tm(np.full((5, 5), 0.2)), None, 10**4)
    assert np.all(c.counts == 400)


def test_synth_round_trip(rng):
    t = tm(random_stochastic(rng, 7))
    back = forward_from_counts(synth_counts(t, None, 10**8))
    assert np.max(np.abs(back.matrix - t.matrix)) < 1e-3


def test_synth_gibbs_weights():
    g = gibbs(1.0, 2)
    c = synth_counts(tm(np.eye(5)), g, 10**6)
    assert np.allclose(np.diag(np.fliplr(c.counts)) / 1e6, g.p[::-1], atol=1e-6)


def test_synth_rejects_bad_weights():
    with pytest.raises(ValidationError):
        synth_counts(tm(np.eye(3)), np.array([1.0, -1.0, 1.0]))
    with pytest.raises(ValidationError):
        synth_counts(tm(np.eye(3)), None, 0)


def test_noise_model_bounds():
    with pytest.raises(ValidationError):
        NoiseModel(pump_sigma=0.5)
    with pytest.raises(ValidationError):
        NoiseModel(pump_sigma=-0.1)
    assert NoiseModel(poisson=False, pump_sigma=0).is_silent


def test_silent_resample_identical():
    c = CountsMatrix(np.arange(9).reshape(3, 3))
    r = resample(c, NoiseModel(poisson=False, pump_sigma=0), 5)
    assert np.array_equal(r.counts, c.counts)


def test_resample_mean_and_variance():
    c = CountsMatrix(np.full((3, 3), 400))
    s = 0.05
    model = NoiseModel(poisson=True, pump_sigma=s, seed=3)
    draws = np.array([resample(c, model, k).counts[1, 1] for k in range(10**4)], dtype=float)
    var = 400 + s**2 * 400**2
    assert abs(draws.mean() - 400) <= 3 * np.sqrt(var / 1e4)
    assert draws.var() == pytest.approx(var, rel=0.2)


def test_pump_only_rescales_uniformly():
    c = CountsMatrix(np.full((3, 3), 10**6))
    r = resample(c, NoiseModel(poisson=False, pump_sigma=0.2, seed=1), 0)
    assert len(np.unique(r.counts)) == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), trial=st.integers(0, 10**6))
def test_resample_is_pure_in_seed_and_trial(seed, trial):
    c = CountsMatrix(np.full((3, 3), 50))
    model = NoiseModel(seed=seed)
    a = resample(c, model, trial)
    resample(c, model, trial + 1)
    b = resample(c, model, trial)
    assert np.array_equal(a.counts, b.counts)
    assert np.all(a.counts >= 0)


def test_zero_noise_band_degenerate(rng):
    counts = synth_counts(tm(random_stochastic(rng, 5)), None, 10**5)
    band = confidence_band(counts, forward_from_counts, [0.5, 3.0], NoiseModel(False, 0.0), trials=100)
    for q in band.lower:
        assert np.array_equal(band.lower[q], band.upper[q])
        assert np.allclose(band.lower[q], band.point[q], rtol=0, atol=0)


def test_identity_band_straddles_one():
    counts = synth_counts(tm(np.eye(5)), None, 10**4)
    betas = [0.5, 1.0, 3.0, 6.0]
    band = confidence_band(counts, forward_from_counts, betas, NoiseModel(seed=2), trials=200)
    assert np.all(band.contains("jarzynski", 1.0))


def test_band_width_scaling():
    rng = np.random.default_rng(4)
    t = tm(random_stochastic(rng, 5))
    widths = []
    for total in (10**4, 10**6):
        band = confidence_band(synth_counts(t, None, total), forward_from_counts, [3.0], NoiseModel(seed=9), 400)
        widths.append(band.width("jarzynski")[0])
    assert widths[1] / widths[0] == pytest.approx(0.1, abs=0.03)


def test_band_arguments():
    counts = synth_counts(tm(np.eye(3)), None, 900)
    with pytest.raises(ValidationError):
        confidence_band(counts, trials=99)
    with pytest.raises(ValidationError):
        confidence_band(counts, trials=100, level=1.0)


def test_band_backward_pipeline(rng):
    counts = synth_counts(tm(random_stochastic(rng, 5)), None, 10**5)
    band = confidence_band(counts, backward_from_counts, [1.0], NoiseModel(seed=1), trials=100)
    assert np.all(band.lower["jarzynski"] <= band.point["jarzynski"])
    assert np.all(band.point["jarzynski"] <= band.upper["jarzynski"])
    assert np.all(np.abs(band.upper["deviation_generalized"]) <= 1e-10)

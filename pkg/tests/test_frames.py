import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from bellboost.builders import build_boosting_circuit, build_surgery_circuit
from bellboost.circuit import NoiseModel, circuit_channels, run_tableau
from bellboost.frames import (
    ShotBatch,
    ShotSampler,
    build_symptom_table,
    dem_from_symptoms,
    extract_error_model,
    forced_fault_flips,
    sample_dem,
    sample_frames,
    sample_shots,
    xor_probability,
)

NOISY = NoiseModel(2e-3, 2e-2)


@pytest.fixture(scope="module")
def boost33():
    return build_boosting_circuit(3, 3, NOISY)


@pytest.fixture(scope="module")
def surgery3():
    return build_surgery_circuit(3, NOISY)


def tableau_flips(c, faults, seed):
    run = run_tableau(c, np.random.default_rng(seed), faults=faults)
    det = np.array([np.bitwise_xor.reduce(run.records[list(d.records)]) for d in c.detectors], bool)
    obs = np.array([np.bitwise_xor.reduce(run.records[list(o.records)]) for o in c.observables], bool)
    return det, obs


@pytest.mark.parametrize("which", ["boost33", "surgery3"])
def test_frames_agree_with_tableau_on_forced_faults(which, request):
    c = request.getfixturevalue(which)
    chans = circuit_channels(c)
    rng = np.random.default_rng(7)
    for trial in range(15):
        picks = rng.choice(len(chans), size=int(rng.integers(1, 4)), replace=False)
        faults = {int(i): chans[i].components[rng.integers(len(chans[i].components))] for i in picks}
        fd, fo = forced_fault_flips(c, faults)
        td, to = tableau_flips(c, faults, seed=trial)
        assert np.array_equal(fd, td)
        assert np.array_equal(fo, to)


def test_forced_fault_validation(boost33):
    with pytest.raises(ValueError):
        forced_fault_flips(boost33, {0: "XXX"})


def test_dem_mechanisms_are_single_fault_symptoms(boost33):
    dem = extract_error_model(boost33)
    chans = circuit_channels(boost33)
    for i in range(0, len(dem), max(1, len(dem) // 40)):
        _, dets, obs = dem.mechanism(i)
        ch, comp = dem.provenance[i]
        fd, fo = forced_fault_flips(boost33, {ch: comp})
        assert sorted(np.flatnonzero(fd).tolist()) == dets
        assert [n for n, f in zip(boost33.observable_names(), fo) if f] == obs
        assert comp in chans[ch].components


def test_xor_probability():
    assert xor_probability(0.1, 0.2) == pytest.approx(0.1 * 0.8 + 0.2 * 0.9)
    assert xor_probability(0.5, 0.3) == pytest.approx(0.5)


def exact_marginals(dem):
    """P(detector flips) = (1 - prod(1 - 2 p_i)) / 2 over mechanisms touching it."""
    prod = np.ones(dem.n_detectors)
    obs = np.ones(len(dem.observables))
    for p, dets, names in dem.mechanisms():
        for d in dets:
            prod[d] *= 1 - 2 * p
        for j, name in enumerate(dem.observables):
            if name in names:
                obs[j] *= 1 - 2 * p
    return (1 - prod) / 2, (1 - obs) / 2


def test_sampler_marginals_match_exact(surgery3):
    dem = extract_error_model(surgery3)
    pd, po = exact_marginals(dem)
    shots = sample_shots(surgery3, 60_000, seed=3)
    rate_d = shots.dense_detectors().mean(0)
    rate_o = shots.dense_observables().mean(0)
    tol_d = 5 * np.sqrt(pd * (1 - pd) / shots.shots) + 1e-4
    tol_o = 5 * np.sqrt(po * (1 - po) / shots.shots) + 1e-4
    assert np.all(np.abs(rate_d - pd) <= tol_d)
    assert np.all(np.abs(rate_o - po) <= tol_o)


def weight_histogram(batch, bins=8):
    w = batch.dense_detectors().sum(1)
    return np.bincount(np.minimum(w, bins - 1), minlength=bins)


def test_frame_monte_carlo_matches_dem_sampling(boost33):
    dem = extract_error_model(boost33)
    a = sample_frames(boost33, 20_000, seed=1)
    b = sample_dem(dem, 20_000, seed=2)
    c = sample_shots(boost33, 20_000, seed=3)
    for other in (b, c):
        table = np.vstack([weight_histogram(a), weight_histogram(other)])
        table = table[:, table.sum(0) > 0]
        assert chi2_contingency(table)[1] > 1e-3
    obs = [np.bincount(x.dense_observables() @ [1, 2], minlength=4) for x in (a, b, c)]
    assert chi2_contingency(np.vstack(obs))[1] > 1e-3


def test_block_sampling_is_reproducible(boost33):
    a = sample_shots(boost33, 9_000, seed=42)
    b = sample_shots(boost33, 9_000, seed=42)
    assert a.to_bytes() == b.to_bytes()
    sampler = ShotSampler(build_symptom_table(boost33))
    parts = dict(sampler.iter_batches(9_000, 42, blocks=range(2, -1, -1)))
    merged = ShotBatch.concatenate([parts[i] for i in range(3)])
    assert merged.to_bytes() == a.to_bytes()
    assert sample_shots(boost33, 9_000, seed=43).to_bytes() != a.to_bytes()


def test_zero_and_negative_shot_counts(boost33):
    assert sample_shots(boost33, 0, seed=1).shots == 0
    with pytest.raises(ValueError):
        sample_shots(boost33, -1, seed=1)


@settings(max_examples=40)
@given(st.integers(0, 30), st.integers(1, 70), st.integers(0, 9), st.integers(0, 2**63 - 1))
def test_shot_batch_binary_round_trip(shots, n_det, n_obs, seed):
    rng = np.random.default_rng(seed % 1000)
    dets = rng.random((shots, n_det)) < 0.3
    obs = rng.random((shots, n_obs)) < 0.5
    batch = ShotBatch.from_dense(dets, obs, seed)
    back = ShotBatch.from_bytes(batch.to_bytes())
    assert np.array_equal(back.dense_detectors(), dets)
    assert np.array_equal(back.dense_observables(), obs)
    assert back.seed == seed


def test_shot_batch_rejects_bad_input():
    batch = ShotBatch.from_dense(np.ones((2, 3), bool), np.zeros((2, 1), bool))
    data = batch.to_bytes()
    with pytest.raises(ValueError):
        ShotBatch.from_bytes(b"NOTSHOTS" + data[8:])
    with pytest.raises(ValueError):
        ShotBatch.from_bytes(data[:-1])
    assert batch.to_csv().splitlines() == ["shot,D0,D1,D2,L0", "0,1,1,1,0", "1,1,1,1,0"]


def test_identical_symptoms_merge(boost33):
    table = build_symptom_table(boost33)
    dem = dem_from_symptoms(table, boost33)
    keys = {(tuple(d), tuple(o)) for _, d, o in dem.mechanisms()}
    assert len(keys) == len(dem)
    assert np.all(dem.probs > 0) and np.all(dem.probs < 0.5)

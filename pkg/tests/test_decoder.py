import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bellboost.builders import build_boosting_circuit, build_surgery_circuit
from bellboost.circuit import NoiseModel
from bellboost.decoder import (
    BOUNDARY,
    GapRecord,
    blossom_weight,
    build_matching_graphs,
    complementary_gap,
    decode_batch,
    decode_mwpm,
    defects_csr,
    edge_weight,
    postselect,
    sweep_thresholds,
    thresholds_for_discard,
)
from bellboost.frames import DetectorErrorModel, extract_error_model


def make_dem(n_det, mechs, basis="Z"):
    """mechs: list of (p, detector list, logical flag)."""
    indptr = np.cumsum([0] + [len(d) for _, d, _ in mechs])
    dets = np.array([x for _, d, _ in mechs for x in d], np.int32)
    return DetectorErrorModel(
        n_det, ["L"], np.array([p for p, _, _ in mechs]), indptr, dets,
        np.array([f for _, _, f in mechs], np.uint64), [basis] * n_det, [()] * n_det, [basis],
        [(i, "X") for i in range(len(mechs))],
    )


@st.composite
def small_graphs(draw):
    n = draw(st.integers(1, 6))
    gauge = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)] + [(a, BOUNDARY) for a in range(n)]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=min(len(pairs), 11), unique=True))
    mechs = []
    for a, b in chosen:
        p = draw(st.floats(0.001, 0.3))
        if b == BOUNDARY:
            mechs.append((p, [a], draw(st.integers(0, 1))))
        else:
            mechs.append((p, [a, b], gauge[a] ^ gauge[b]))
    defects = draw(st.lists(st.integers(0, n - 1), unique=True, max_size=n))
    return n, mechs, sorted(defects)


def brute_force_classes(n, mechs, defects):
    """Lightest error set reproducing the syndrome, separately per logical class."""
    target = np.zeros(n, bool)
    target[defects] = True
    best = [math.inf, math.inf]
    for k in range(len(mechs) + 1):
        for subset in itertools.combinations(range(len(mechs)), k):
            synd = np.zeros(n, bool)
            cls = 0
            w = 0.0
            for i in subset:
                p, dets, f = mechs[i]
                synd[dets] ^= True
                cls ^= f
                w += edge_weight(p)
            if np.array_equal(synd, target):
                best[cls] = min(best[cls], w)
    return best


@settings(max_examples=150)
@given(small_graphs())
def test_gap_matches_brute_force_enumeration(case):
    n, mechs, defects = case
    g = build_matching_graphs(make_dem(n, mechs))["Z"]
    w0, w1 = brute_force_classes(n, mechs, defects)
    pred, chosen, other, gap = complementary_gap(g, defects)
    local = np.array(sorted(g.local_index()[d] for d in defects), np.int64)
    fb = decode_batch(g, np.array([0, len(local)]), local, max_cluster=0)
    assert fb.prediction[0] == pred
    assert np.isclose(fb.weight[0], chosen, equal_nan=False) or fb.weight[0] == chosen
    assert np.isclose(fb.gap[0], gap, atol=1e-7) or fb.gap[0] == gap
    assert math.isclose(chosen, min(w0, w1), rel_tol=1e-9, abs_tol=1e-9) or chosen == min(w0, w1)
    if math.isinf(max(w0, w1)):
        assert math.isinf(other) and math.isinf(gap)
    else:
        assert math.isclose(other, max(w0, w1), rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(gap, abs(w1 - w0), rel_tol=1e-7, abs_tol=1e-7)
    if not math.isclose(w0, w1, rel_tol=1e-9, abs_tol=1e-9):
        assert pred == int(w1 < w0)
    else:
        assert pred == 0  # ties resolve to the trivial class


def test_edge_weight():
    assert edge_weight(0.01) == pytest.approx(4.605, abs=1e-3)
    with pytest.raises(ValueError):
        edge_weight(0.0)


def test_repetition_chain():
    # 0 - 1 - 2 with boundaries on both ends, left boundary flips the logical
    mechs = [(0.1, [0], 1), (0.1, [0, 1], 0), (0.1, [1, 2], 0), (0.1, [2], 0)]
    g = build_matching_graphs(make_dem(3, mechs))["Z"]
    w = edge_weight(0.1)
    assert decode_mwpm(g, [0]) == (1, pytest.approx(w))
    assert decode_mwpm(g, [2]) == (0, pytest.approx(w))
    pred, chosen, other, gap = complementary_gap(g, [1])
    assert gap == pytest.approx(0.0) and pred == 0
    assert complementary_gap(g, [])[3] == pytest.approx(4 * w)


def test_conflicting_flags_keep_likelier_edge():
    mechs = [(0.2, [0], 1), (0.05, [0], 0)]
    with pytest.warns(UserWarning):
        g = build_matching_graphs(make_dem(1, mechs))["Z"]
    assert g.flag_conflicts == 1 and g.flag.tolist() == [1]


def test_undetectable_logical_probability_is_recorded():
    mechs = [(0.1, [0], 0), (0.01, [], 1)]
    g = build_matching_graphs(make_dem(1, mechs))["Z"]
    assert g.undetectable_prob == pytest.approx(0.01)


@pytest.fixture(scope="module")
def real_graphs():
    out = {}
    for key, c in {"boost": build_boosting_circuit(3, 5, NoiseModel(1e-3, 1e-2)),
                   "surgery": build_surgery_circuit(3, NoiseModel(1e-3, 0.1))}.items():
        out[key] = build_matching_graphs(extract_error_model(c))
    return out


@pytest.mark.parametrize("which", ["boost", "surgery"])
def test_dynamic_program_and_blossom_routes_agree(real_graphs, which):
    rng = np.random.default_rng(11)
    for g in real_graphs[which].values():
        rows = [np.sort(rng.choice(g.n_nodes, size=int(rng.integers(0, 16)), replace=False)) for _ in range(300)]
        indptr = np.cumsum([0] + [len(r) for r in rows])
        idx = np.concatenate(rows).astype(np.int64)
        dp = decode_batch(g, indptr, idx)
        bl = decode_batch(g, indptr, idx, max_cluster=0)
        assert np.array_equal(dp.prediction, bl.prediction)
        assert np.allclose(dp.weight, bl.weight, rtol=1e-9)
        assert np.allclose(dp.gap, bl.gap, rtol=1e-7, atol=1e-7)


def test_networkx_blossom_cross_check(real_graphs):
    g = real_graphs["boost"]["X"]
    m = g.metric()
    rng = np.random.default_rng(5)
    for _ in range(40):
        defs = np.sort(rng.choice(g.n_nodes, size=int(rng.integers(1, 9)), replace=False))
        res = decode_batch(g, np.array([0, len(defs)]), defs.astype(np.int64))
        even = blossom_weight(m.dist, m.b0, defs)
        odd = blossom_weight(m.dist, m.b0, list(defs) + [m.b1])
        assert min(res.weight[0], res.weight_other[0]) == pytest.approx(min(even, odd), rel=1e-9)
        assert max(res.weight[0], res.weight_other[0]) == pytest.approx(max(even, odd), rel=1e-9)


def test_defects_csr():
    dense = np.array([[1, 0, 1, 1], [0, 0, 0, 0], [0, 1, 0, 1]], bool)
    indptr, idx = defects_csr(dense, np.array([0, 2, 3]))
    assert indptr.tolist() == [0, 3, 3, 4]
    assert idx.tolist() == [0, 1, 2, 2]


def test_postselection_example():
    st_ = postselect(np.array([1.0, 2.0, 3.0]), np.array([1, 0, 0], bool), 1.5)
    assert (st_.total, st_.discarded, st_.valid, st_.wrong) == (3, 1, 2, 0)
    assert st_.q0 == pytest.approx(2 / 3) and st_.p_l == 0.0


def test_threshold_zero_keeps_everything():
    gaps = np.array([0.0, 0.0, 1.0])
    st_ = postselect(gaps, np.array([1, 0, 0], bool), 0.0)
    assert st_.q0 == 1.0 and st_.p_l == pytest.approx(1 / 3)
    assert postselect(gaps, np.zeros(3, bool), 1e-12).discarded == 2
    all_out = postselect(gaps, np.zeros(3, bool), 5.0)
    assert all_out.accepted == 0 and math.isnan(all_out.p_l)


def test_thresholds_for_discard_with_atoms():
    gaps = np.array([1.0] * 2 + [5.0] * 6 + [9.0] * 2)
    th = thresholds_for_discard(gaps, [0.0, 0.2, 0.5, 0.8])
    assert th == [0.0, 5.0, 5.0, 9.0]
    stats = sweep_thresholds(gaps, np.zeros(10, bool), th)
    assert [s.discarded for s in stats] == [0, 2, 2, 8]


@given(st.lists(st.floats(0, 50), min_size=1, max_size=200), st.floats(0.01, 0.99))
def test_discard_threshold_is_closest_achievable(gaps, f):
    gaps = np.round(np.array(gaps), 3)
    (th,) = thresholds_for_discard(gaps, [f])
    achieved = postselect(gaps, np.zeros(len(gaps), bool), th).discarded / len(gaps)
    options = {np.mean(gaps < v) for v in np.unique(gaps)}
    assert all(abs(achieved - f) <= abs(o - f) + 1e-12 for o in options)


@given(st.lists(st.tuples(st.floats(0, 30), st.booleans()), min_size=1, max_size=100),
       st.floats(0, 30), st.floats(0, 30))
def test_acceptance_is_monotone_in_threshold(rows, t1, t2):
    gaps = np.array([r[0] for r in rows])
    wrong = np.array([r[1] for r in rows])
    lo, hi = sorted((t1, t2))
    a, b = postselect(gaps, wrong, lo), postselect(gaps, wrong, hi)
    assert b.accepted <= a.accepted and b.wrong <= a.wrong


def test_gap_record_csv_and_combined_gap():
    rec = GapRecord(np.array([1.5, np.inf]), np.array([2.0, 0.25]), np.array([0, 1], np.uint8),
                    np.array([1, 0], np.uint8), np.array([0, 0], np.uint8), np.array([1, 0], np.uint8))
    assert rec.gap.tolist() == [1.5, 0.25]
    assert rec.wrong.tolist() == [False, True]
    lines = GapRecord.concatenate([rec, rec]).to_csv().splitlines()
    assert lines[0] == "shot,gap_x,gap_z,gap,pred_xx,pred_zz,true_xx,true_zz"
    assert lines[2] == "1,inf,0.25,0.25,1,0,0,0"
    assert len(lines) == 5

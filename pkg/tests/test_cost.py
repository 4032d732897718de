import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bellboost.cost import (
    CSV_COLUMNS,
    REFERENCE_SURGERY,
    DistillationModel,
    ProtocolModels,
    boosting_error,
    compare_protocols,
    cost_rows_csv,
    fit_boosting_scaling,
    fit_surgery_scaling,
    llv_boosting,
    llv_surgery,
    pipelined_volume,
    reference_boosting_table,
    surgery_error,
)


def test_volume_fixtures_exact():
    assert llv_boosting(3, 19, 1, 1).v_total == 13780.0
    assert llv_surgery(3, 10).v_total == 58.5
    assert llv_surgery(3, 1).v_total == 202.5
    assert pipelined_volume(6, 4, 1, 3) == 918.0
    assert pipelined_volume(10, 8, 1, 19) == 34 * (2 * 19**3 - 19)


def test_volume_limits():
    assert llv_boosting(5, 7, 1e300, 1).v_total == 7 * (2 * 49 - 1)
    assert llv_boosting(5, 7, 3, 0.5).v_total == pytest.approx(2 * llv_boosting(5, 7, 3, 1).v_total)
    assert llv_boosting(5, 7, 3, 0.5).inverse_yield == 50
    assert llv_surgery(5, 9).v_buffer == 0.0
    assert llv_surgery(5, 9).inverse_yield == 45
    assert pipelined_volume(4, 4, 0, 3) == 0.0


def test_volume_errors():
    with pytest.raises(ValueError):
        llv_boosting(3, 5, 1, 0)
    with pytest.raises(ValueError):
        llv_boosting(3, 5, 0, 1)
    with pytest.raises(ValueError):
        llv_surgery(3, -1)
    with pytest.raises(ValueError):
        pipelined_volume(6, 4, 3, 3)


@given(st.integers(1, 10).map(lambda x: 2 * x + 1), st.integers(1, 10).map(lambda x: 2 * x + 1),
       st.floats(1e-3, 1e3), st.floats(0.01, 1.0))
def test_volume_additivity(d_bell, d_s, R, q0):
    for rep in (llv_boosting(d_bell, d_s, R, q0), llv_surgery(d_s, R)):
        assert rep.v_total == rep.v_buffer + rep.v_factory
        assert rep.v_total > 0


def synthetic_boost(alpha, gamma, p_th):
    return [(d, pb, float(boosting_error(d, pb, alpha, gamma, p_th)))
            for d in (3, 5, 7) for pb in (0.02, 0.04, 0.06)]


def test_boosting_fit_recovers_synthetic():
    fit = fit_boosting_scaling(synthetic_boost(0.5, 0.8, 0.12))
    assert fit.alpha == pytest.approx(0.5, rel=1e-2)
    assert fit.gamma == pytest.approx(0.8, rel=1e-2)
    assert fit.p_th == pytest.approx(0.12, rel=1e-2)
    assert fit.residual < 1e-8


def test_boosting_fit_alpha_is_separable():
    a = fit_boosting_scaling(synthetic_boost(0.5, 0.8, 0.12))
    b = fit_boosting_scaling(synthetic_boost(1.0, 0.8, 0.12))
    assert b.alpha / a.alpha == pytest.approx(2.0, rel=1e-9)
    assert (b.gamma, b.p_th) == pytest.approx((a.gamma, a.p_th), rel=1e-9)


def test_boosting_fit_window_and_degenerate_data():
    pts = synthetic_boost(0.5, 0.8, 0.12) + [(3, 0.2, 0.9)]  # outside the fit window
    assert fit_boosting_scaling(pts).gamma == pytest.approx(0.8, rel=1e-6)
    with pytest.raises(ValueError):
        fit_boosting_scaling([(3, pb, 0.01) for pb in (0.02, 0.03, 0.04)])


@settings(max_examples=30)
@given(st.floats(0.05, 2.0), st.floats(0.3, 1.5), st.floats(0.09, 0.3))
def test_boosting_fit_recovery_property(alpha, gamma, p_th):
    fit = fit_boosting_scaling(synthetic_boost(alpha, gamma, p_th))
    assert fit.gamma == pytest.approx(gamma, rel=1e-6)
    assert fit.p_th == pytest.approx(p_th, rel=1e-6)


def test_surgery_fit_recovers_reference_values():
    s = REFERENCE_SURGERY
    pts = [(d, p, pb, float(s.predict(d, p, pb)))
           for d in (3, 5, 7, 9) for p in (1e-3, 3e-3) for pb in (0.05, 0.08, 0.11)]
    fit = fit_surgery_scaling(pts)
    assert fit.kappa == pytest.approx(5.44e-2, rel=0.05)
    assert fit.eta == pytest.approx(0.534, rel=0.05)
    assert fit.alpha_c == pytest.approx(315.0, rel=0.05)


def test_surgery_model_at_bell_threshold():
    # with no local noise only the pure-Bell term survives, and it is 1 at threshold
    for d in (3, 5, 7):
        got = surgery_error(d, 0.0, 0.153, 5.44e-2, 0.534, 315.0)
        assert got == pytest.approx(5.44e-2 * (d + 1) ** 0.534)


@given(st.sampled_from([3, 5, 7, 9]), st.floats(1e-4, 8e-3), st.floats(1e-3, 0.15), st.floats(1e-3, 0.15))
def test_surgery_model_monotone_in_bell_error(d, p, a, b):
    lo, hi = sorted((a, b))
    assert REFERENCE_SURGERY.predict(d, p, lo) <= REFERENCE_SURGERY.predict(d, p, hi)


def test_surgery_fit_rejects_bad_points():
    with pytest.raises(ValueError):
        fit_surgery_scaling([(4, 1e-3, 0.05, 1e-3)] * 3)
    with pytest.raises(ValueError):
        fit_surgery_scaling([(3, 1e-3, 0.2, 1e-3)] * 3)
    with pytest.raises(ValueError):
        fit_surgery_scaling([(3, 1e-3, 0.05, 1e-3)])


def models():
    return ProtocolModels(reference_boosting_table(), DistillationModel())


def test_compare_high_rate_prefers_plain_boosting():
    rows = compare_protocols(1e-12, 0.01, [1e6], models())
    by = {r.protocol: r for r in rows}
    assert by["boosting"].v_total < by["boosting+distillation"].v_total
    assert by["boosting"].p_l <= 1e-12


def test_compare_loose_target_picks_smallest_code():
    rows = compare_protocols(0.5, 0.01, [1.0], models())
    boost = next(r for r in rows if r.protocol == "boosting")
    assert boost.d_bell == 3 and boost.q0 == 1.0


@given(st.floats(1e-14, 1e-3), st.floats(1.0, 1e3), st.floats(1e-2, 1e2))
@settings(max_examples=25)
def test_looser_target_never_costs_more(target, factor, R):
    loose = min(target * factor, 0.5)
    tight = {r.protocol: r.v_total for r in compare_protocols(target, 0.01, [R], models())}
    easy = {r.protocol: r.v_total for r in compare_protocols(loose, 0.01, [R], models())}
    for name, v in tight.items():
        assert name in easy and easy[name] <= v * (1 + 1e-12)


def test_compare_errors_and_csv():
    with pytest.raises(ValueError):
        compare_protocols(0.0, 0.01, [1.0], models())
    with pytest.raises(ValueError):
        compare_protocols(1e-6, 0.01, [0.0], models())
    rows = compare_protocols(1e-9, 0.01, [0.1, 10.0], models())
    lines = cost_rows_csv(rows).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == len(rows) + 1
    assert all(math.isclose(r.v_total, r.v_buffer + r.v_factory) for r in rows)


def test_reference_table_exponents_rise_with_discard():
    table = reference_boosting_table()
    assert [f.gamma for f in table] == sorted(f.gamma for f in table)
    assert table[0].gamma == 0.4 and table[-1].gamma == 1.2
    assert all(f.alpha == 0.1 and f.p_th == 0.1 for f in table)

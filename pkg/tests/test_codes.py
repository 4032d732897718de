import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from bellboost import gf2
from bellboost.codes import (
    CssCodeSpec,
    SurfaceCodeLayout,
    build_parity_code,
    build_rotated_surface_code,
    build_steane_code,
    standard_form,
    verify_code,
)


def null_space(m: np.ndarray) -> np.ndarray:
    m = gf2.as_gf2(m)
    n = m.shape[1]
    red, piv = gf2.rref(m)
    free = [c for c in range(n) if c not in piv]
    basis = []
    for f in free:
        v = np.zeros(n, np.uint8)
        v[f] = 1
        for row, p in enumerate(piv):
            v[p] = red[row, f]
        basis.append(v)
    return np.array(basis, np.uint8).reshape(-1, n)


@st.composite
def css_codes(draw, max_n=9):
    n = draw(st.integers(3, max_n))
    rx = draw(st.integers(0, n - 2))
    hx = np.array(draw(st.lists(st.lists(st.integers(0, 1), min_size=n, max_size=n), min_size=rx, max_size=rx)),
                  np.uint8).reshape(-1, n)
    hx = gf2.rref(hx)[0][: gf2.rank(hx)] if rx else hx
    ker = null_space(hx) if len(hx) else np.eye(n, dtype=np.uint8)
    room = n - len(hx) - 1
    rz = draw(st.integers(0, max(min(room, len(ker)), 0)))
    coeffs = np.array(draw(st.lists(st.lists(st.integers(0, 1), min_size=len(ker), max_size=len(ker)),
                                    min_size=rz, max_size=rz)), np.uint8).reshape(-1, len(ker))
    hz = (coeffs.astype(int) @ ker.astype(int)) % 2 if rz else np.zeros((0, n), np.uint8)
    hz = gf2.rref(hz)[0][: gf2.rank(hz)] if rz else hz
    assume(n - len(hx) - len(hz) >= 1)
    return hx.astype(np.uint8), hz.astype(np.uint8)


def symplectic(hx, hz):
    n = hx.shape[1] if hx.size else hz.shape[1]
    top = np.hstack([hx, np.zeros_like(hx)])
    bot = np.hstack([np.zeros_like(hz), hz])
    return np.vstack([top, bot]).reshape(-1, 2 * n)


def sym_inner(a, b):
    n = a.shape[1] // 2
    return (a[:, :n].astype(int) @ b[:, n:].T.astype(int) + a[:, n:].astype(int) @ b[:, :n].T.astype(int)) % 2


@pytest.mark.parametrize("d", [3, 5])
def test_surface_code_parameters(d):
    code = build_rotated_surface_code(d)
    rep = verify_code(code, exhaustive_distance_limit=d)
    assert rep.ok and rep.k == 1 and rep.distance == d
    assert code.n == d * d
    assert len(code.h_x) + len(code.h_z) == d * d - 1
    lay = SurfaceCodeLayout.square(d)
    assert lay.boundary_types() == {"top": "X", "bottom": "X", "left": "Z", "right": "Z"}
    weights = sorted({len(p.support) for p in lay.plaquettes})
    assert weights == [2, 4]


def test_larger_surface_code_commutes():
    rep = verify_code(build_rotated_surface_code(7), exhaustive_distance_limit=2)
    assert rep.ok and rep.k == 1 and rep.distance is None


def test_surface_layout_rejects_even_dimensions():
    with pytest.raises(ValueError):
        SurfaceCodeLayout.rectangle(3, 4)
    with pytest.raises(ValueError):
        build_rotated_surface_code(4)


def test_rectangular_patch_commutes():
    code = SurfaceCodeLayout.rectangle(3, 7).to_code()
    assert verify_code(code, exhaustive_distance_limit=3).ok


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_parity_code(m):
    code = build_parity_code(m)
    rep = verify_code(code)
    assert rep.ok and rep.k == 2 * m - 2 and rep.distance == 2
    sf = standard_form(code.h_x, code.h_z)
    assert sf.r == 1 and sf.k == 2 * m - 2


def test_parity_6_4_2_logical_supports():
    sf = standard_form(np.ones((1, 6), np.uint8), np.ones((1, 6), np.uint8))
    lx, _ = sf.logical_supports()
    for i in range(4):
        assert set(np.flatnonzero(lx[i])) == {1, 2 + i}


def test_steane_standard_form():
    code = build_steane_code()
    assert verify_code(code).distance == 3
    sf = standard_form(code.h_x, code.h_z)
    assert (sf.r, sf.k) == (3, 1)


def test_non_commuting_checks_rejected():
    with pytest.raises(ValueError):
        standard_form(np.array([[1, 0, 0]]), np.array([[1, 1, 0]]))
    bad = CssCodeSpec(3, 1, None, [[1, 0, 0]], [[1, 1, 0]], [[1, 1, 1]], [[1, 1, 1]])
    assert verify_code(bad).commutation_violations


def test_dependent_rows_rejected():
    with pytest.raises(ValueError):
        standard_form(np.array([[1, 1, 0, 0], [1, 1, 0, 0]]), np.zeros((0, 4), np.uint8))


@given(css_codes())
def test_standard_form_properties(code):
    hx, hz = code
    n = hx.shape[1]
    sf = standard_form(hx, hz)
    perm = sf.column_permutation
    assert sorted(perm) == list(range(n))
    assert sf.r == len(hx) and sf.k == n - len(hx) - len(hz)
    # same stabilizer group after undoing the permutation
    orig = symplectic(hx, hz)
    permuted = np.hstack([orig[:, :n][:, perm], orig[:, n:][:, perm]])
    assert gf2.same_row_space(permuted, sf.h_s)
    r = sf.r
    assert np.array_equal(sf.h_s[:r, :r], np.eye(r, dtype=np.uint8))
    # logical operators commute with the checks and pair up canonically
    lx, lz = sf.x_logical_matrix, sf.z_logical_matrix
    assert not sym_inner(lx, sf.h_s).any() and not sym_inner(lz, sf.h_s).any()
    assert np.array_equal(sym_inner(lx, lz), np.eye(sf.k, dtype=int))
    assert not sym_inner(lx, lx).any() and not sym_inner(lz, lz).any()
    assert gf2.rank(np.vstack([sf.h_s, lx, lz])) == len(sf.h_s) + 2 * sf.k


@given(css_codes())
def test_standard_form_idempotent(code):
    hx, hz = code
    n = hx.shape[1]
    sf = standard_form(hx, hz)
    r = sf.r
    again = standard_form(sf.h_s[:r, :n], sf.h_s[r:, n:])
    assert again.column_permutation == list(range(n))
    assert np.array_equal(again.h_s, sf.h_s)


@given(css_codes())
def test_json_round_trip(code):
    hx, hz = code
    sf = standard_form(hx, hz)
    lx, lz = sf.logical_supports()
    spec = CssCodeSpec(hx.shape[1], sf.k, None, hx, hz, lx, lz, name="random")
    back = CssCodeSpec.from_json(spec.to_json())
    for f in ("h_x", "h_z", "logical_x", "logical_z"):
        assert np.array_equal(getattr(back, f), getattr(spec, f))
    assert (back.n, back.k, back.d, back.name) == (spec.n, spec.k, spec.d, spec.name)
    assert verify_code(back, exhaustive_distance_limit=3).ok


def test_json_rejects_bad_rows():
    text = build_steane_code().to_json().replace("0001111", "00011x1")
    with pytest.raises(ValueError):
        CssCodeSpec.from_json(text)

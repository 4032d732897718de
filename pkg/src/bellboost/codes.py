"""CSS code descriptions, rotated surface code layouts and the standard form."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import gf2
from .pauli import PauliString


def _bits_to_str(row) -> str:
    return "".join("1" if b else "0" for b in row)


def _str_to_bits(s: str) -> list[int]:
    if set(s) - {"0", "1"}:
        raise ValueError(f"row {s!r} is not a bit string")
    return [int(c) for c in s]


@dataclass
class CssCodeSpec:
    """A CSS code given by its X and Z check matrices and logical operators.

    ``logical_x[i]`` is the X-support of logical X_i and ``logical_z[i]`` the
    Z-support of logical Z_i.
    """

    n: int
    k: int
    d: int | None
    h_x: np.ndarray
    h_z: np.ndarray
    logical_x: np.ndarray
    logical_z: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.h_x = gf2.as_gf2(self.h_x).reshape(-1, self.n)
        self.h_z = gf2.as_gf2(self.h_z).reshape(-1, self.n)
        self.logical_x = gf2.as_gf2(self.logical_x).reshape(-1, self.n)
        self.logical_z = gf2.as_gf2(self.logical_z).reshape(-1, self.n)

    def stabilizers(self) -> list[PauliString]:
        out = [PauliString(row, np.zeros(self.n, bool)) for row in self.h_x]
        out += [PauliString(np.zeros(self.n, bool), row) for row in self.h_z]
        return out

    def logical_ops(self) -> tuple[list[PauliString], list[PauliString]]:
        zeros = np.zeros(self.n, bool)
        xs = [PauliString(row, zeros) for row in self.logical_x]
        zs = [PauliString(zeros, row) for row in self.logical_z]
        return xs, zs

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "n": self.n,
                "k": self.k,
                "d": self.d,
                "h_x": [_bits_to_str(r) for r in self.h_x],
                "h_z": [_bits_to_str(r) for r in self.h_z],
                "logical_x": [_bits_to_str(r) for r in self.logical_x],
                "logical_z": [_bits_to_str(r) for r in self.logical_z],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "CssCodeSpec":
        doc = json.loads(text)
        n = int(doc["n"])

        def mat(key):
            rows = [_str_to_bits(s) for s in doc.get(key, [])]
            for r in rows:
                if len(r) != n:
                    raise ValueError(f"{key} row has length {len(r)}, expected {n}")
            return np.array(rows, dtype=np.uint8).reshape(-1, n)

        return cls(
            n=n,
            k=int(doc["k"]),
            d=doc.get("d"),
            h_x=mat("h_x"),
            h_z=mat("h_z"),
            logical_x=mat("logical_x"),
            logical_z=mat("logical_z"),
            name=doc.get("name", ""),
        )

    def __eq__(self, other):
        if not isinstance(other, CssCodeSpec):
            return NotImplemented
        return (
            (self.n, self.k, self.d, self.name) == (other.n, other.k, other.d, other.name)
            and np.array_equal(self.h_x, other.h_x)
            and np.array_equal(self.h_z, other.h_z)
            and np.array_equal(self.logical_x, other.logical_x)
            and np.array_equal(self.logical_z, other.logical_z)
        )


# ---------------------------------------------------------------------------
# rotated surface code geometry


@dataclass(frozen=True)
class Plaquette:
    """One stabilizer of a rotated surface code patch.

    ``(row, col)`` indexes the plaquette corner grid; it covers data qubits
    ``(row-1, col-1), (row-1, col), (row, col-1), (row, col)`` when present.
    ``corners`` lists the data index at NW, NE, SW, SE (or -1 if absent).
    """

    basis: str
    row: int
    col: int
    corners: tuple[int, int, int, int]

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q in self.corners if q >= 0)

    @property
    def position(self) -> tuple[float, float]:
        return (self.row - 0.5, self.col - 0.5)


@dataclass
class SurfaceCodeLayout:
    """Rotated surface code on a ``rows x cols`` data grid (both odd).

    Plaquette ``(r, c)`` is X-type when ``r + c`` is even.  Weight-two
    plaquettes on the top and bottom edges are X-type, on the left and right
    edges Z-type.  Logical X runs down the left column and logical Z along
    the top row.
    """

    rows: int
    cols: int
    plaquettes: list[Plaquette] = field(default_factory=list)

    @classmethod
    def rectangle(cls, rows: int, cols: int) -> "SurfaceCodeLayout":
        if rows < 1 or cols < 1 or rows % 2 == 0 or cols % 2 == 0:
            raise ValueError(f"patch dimensions must be odd and positive, got {rows}x{cols}")
        plaqs = []
        for r in range(rows + 1):
            for c in range(cols + 1):
                basis = "X" if (r + c) % 2 == 0 else "Z"
                on_tb = r in (0, rows)
                on_lr = c in (0, cols)
                if on_tb and on_lr:
                    continue
                if on_tb and basis != "X":
                    continue
                if on_lr and basis != "Z":
                    continue
                corners = []
                for dr, dc in ((-1, -1), (-1, 0), (0, -1), (0, 0)):
                    rr, cc = r + dr, c + dc
                    ok = 0 <= rr < rows and 0 <= cc < cols
                    corners.append(rr * cols + cc if ok else -1)
                if sum(q >= 0 for q in corners) < 2:
                    continue
                plaqs.append(Plaquette(basis, r, c, tuple(corners)))
        return cls(rows, cols, plaqs)

    @classmethod
    def square(cls, d: int) -> "SurfaceCodeLayout":
        return cls.rectangle(d, d)

    @property
    def d(self) -> int:
        return min(self.rows, self.cols)

    @property
    def n_data(self) -> int:
        return self.rows * self.cols

    def data_index(self, r: int, c: int) -> int:
        return r * self.cols + c

    def data_coords(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def x_plaquettes(self) -> list[Plaquette]:
        return [p for p in self.plaquettes if p.basis == "X"]

    def z_plaquettes(self) -> list[Plaquette]:
        return [p for p in self.plaquettes if p.basis == "Z"]

    def logical_x_support(self) -> list[int]:
        return [self.data_index(r, 0) for r in range(self.rows)]

    def logical_z_support(self) -> list[int]:
        return [self.data_index(0, c) for c in range(self.cols)]

    def boundary_types(self) -> dict[str, str]:
        """Which stabilizer type terminates on each edge."""
        return {"top": "X", "bottom": "X", "left": "Z", "right": "Z"}

    def to_code(self) -> CssCodeSpec:
        n = self.n_data

        def rows_of(ps):
            m = np.zeros((len(ps), n), np.uint8)
            for i, p in enumerate(ps):
                m[i, list(p.support)] = 1
            return m

        lx = np.zeros((1, n), np.uint8)
        lx[0, self.logical_x_support()] = 1
        lz = np.zeros((1, n), np.uint8)
        lz[0, self.logical_z_support()] = 1
        return CssCodeSpec(
            n=n,
            k=1,
            d=self.d,
            h_x=rows_of(self.x_plaquettes()),
            h_z=rows_of(self.z_plaquettes()),
            logical_x=lx,
            logical_z=lz,
            name=f"rotated_surface_{self.rows}x{self.cols}",
        )


def build_rotated_surface_code(d: int) -> CssCodeSpec:
    """[[d^2, 1, d]] rotated surface code for odd ``d >= 3``."""
    if d < 3 or d % 2 == 0:
        raise ValueError(f"surface code distance must be odd and >= 3, got {d}")
    return SurfaceCodeLayout.square(d).to_code()


def build_parity_code(m: int) -> CssCodeSpec:
    """[[2m, 2m-2, 2]] code with all-ones X and Z checks."""
    if m < 2:
        raise ValueError(f"parity code needs m >= 2, got {m}")
    n = 2 * m
    ones = np.ones((1, n), np.uint8)
    sf = standard_form(ones, ones)
    lx, lz = sf.logical_supports()
    return CssCodeSpec(n=n, k=n - 2, d=2, h_x=ones, h_z=ones, logical_x=lx, logical_z=lz,
                       name=f"parity_{n}_{n - 2}_2")


def build_steane_code() -> CssCodeSpec:
    h = np.array(
        [[0, 0, 0, 1, 1, 1, 1], [0, 1, 1, 0, 0, 1, 1], [1, 0, 1, 0, 1, 0, 1]], np.uint8
    )
    ones = np.ones((1, 7), np.uint8)
    return CssCodeSpec(n=7, k=1, d=3, h_x=h, h_z=h, logical_x=ones, logical_z=ones, name="steane")


# ---------------------------------------------------------------------------
# standard form


@dataclass
class StandardFormResult:
    """Check matrix brought to the form

        [ I1  A1  A2 | B   C1  C2 ]
        [ 0   0   0  | D   I2  E  ]

    after the qubit permutation ``column_permutation`` (position -> original
    qubit).  ``h_s`` is the (n-k) x 2n symplectic matrix in permuted order.
    """

    n: int
    k: int
    r: int
    h_s: np.ndarray
    column_permutation: list[int]
    blocks: dict[str, np.ndarray]
    x_logical_matrix: np.ndarray  # k x 2n, permuted order
    z_logical_matrix: np.ndarray  # k x 2n, permuted order

    def logical_supports(self) -> tuple[np.ndarray, np.ndarray]:
        """X-support of logical X and Z-support of logical Z in original qubit order."""
        n = self.n
        lx = np.zeros((self.k, n), np.uint8)
        lz = np.zeros((self.k, n), np.uint8)
        perm = np.array(self.column_permutation)
        lx[:, perm] = self.x_logical_matrix[:, :n]
        lz[:, perm] = self.z_logical_matrix[:, n:]
        return lx, lz


def standard_form(h_x, h_z) -> StandardFormResult:
    """Bring a CSS check matrix to standard form by row operations and qubit swaps.

    Pivots are chosen at the leftmost available column so the result is
    unique and applying the routine to its own output changes nothing.
    """
    hx = gf2.as_gf2(h_x).copy()
    hz = gf2.as_gf2(h_z).copy()
    if hx.shape[1] != hz.shape[1]:
        raise ValueError("h_x and h_z must have the same number of columns")
    n = hx.shape[1]
    if np.any((hx.astype(np.int64) @ hz.T.astype(np.int64)) % 2):
        raise ValueError("X and Z checks do not commute; not a valid CSS code")
    if gf2.rank(hx) != hx.shape[0] or gf2.rank(hz) != hz.shape[0]:
        raise ValueError("check rows are linearly dependent")
    perm = list(range(n))

    def swap_cols(a: int, b: int) -> None:
        if a == b:
            return
        hx[:, [a, b]] = hx[:, [b, a]]
        hz[:, [a, b]] = hz[:, [b, a]]
        perm[a], perm[b] = perm[b], perm[a]

    def eliminate(mat: np.ndarray, n_rows: int, col_start: int) -> int:
        # leftmost pivoting from column col_start onward, one pivot per row
        for i in range(n_rows):
            sub = mat[i:, col_start + i:]
            nz = np.flatnonzero(sub.any(axis=0))
            if nz.size == 0:
                return i
            c = col_start + i + nz[0]
            row = i + np.flatnonzero(mat[i:, c])[0]
            if row != i:
                mat[[i, row]] = mat[[row, i]]
            swap_cols(col_start + i, c)
            piv = col_start + i
            mask = mat[:, piv].astype(bool)
            mask[i] = False
            mat[mask] ^= mat[i]
        return n_rows

    r = eliminate(hx, hx.shape[0], 0)
    m = eliminate(hz, hz.shape[0], r)
    k = n - r - m
    nz_ = np.zeros_like
    top = np.hstack([hx, nz_(hx)])
    bottom = np.hstack([nz_(hz), hz])
    h_s = np.vstack([top, bottom]).astype(np.uint8)

    blocks = {
        "I1": hx[:, :r],
        "A1": hx[:, r:r + m],
        "A2": hx[:, r + m:],
        "B": np.zeros((r, r), np.uint8),
        "C1": np.zeros((r, m), np.uint8),
        "C2": np.zeros((r, k), np.uint8),
        "D": hz[:, :r],
        "I2": hz[:, r:r + m],
        "E": hz[:, r + m:],
    }
    e_t = blocks["E"].T
    v = (e_t.astype(np.int64) @ blocks["C1"].T.astype(np.int64) + blocks["C2"].T) % 2
    x_log = np.zeros((k, 2 * n), np.uint8)
    x_log[:, r:r + m] = e_t
    x_log[:, r + m:n] = np.eye(k, dtype=np.uint8)
    x_log[:, n:n + r] = v
    z_log = np.zeros((k, 2 * n), np.uint8)
    z_log[:, n:n + r] = blocks["A2"].T
    z_log[:, n + r + m:] = np.eye(k, dtype=np.uint8)
    return StandardFormResult(n, k, r, h_s, perm, blocks, x_log, z_log)


# ---------------------------------------------------------------------------
# verification


@dataclass
class CodeReport:
    commutation_violations: list[tuple[str, int, int]]
    logical_violations: list[str]
    k: int
    distance: int | None

    @property
    def ok(self) -> bool:
        return not self.commutation_violations and not self.logical_violations


def _min_logical_weight(checks: np.ndarray, stabs: np.ndarray, n: int, limit: int) -> int | None:
    """Smallest weight vector in ker(checks) outside rowspace(stabs), up to ``limit``."""
    checks = checks.astype(np.int64)
    for w in range(1, limit + 1):
        combos = np.array(list(itertools.combinations(range(n), w)), dtype=np.int64)
        if combos.size == 0:
            break
        vecs = np.zeros((len(combos), n), np.uint8)
        np.put_along_axis(vecs, combos, 1, axis=1)
        if checks.shape[0]:
            ok = ~np.any((vecs.astype(np.int64) @ checks.T) % 2, axis=1)
        else:
            ok = np.ones(len(vecs), bool)
        for v in vecs[ok]:
            if not gf2.in_row_space(stabs, v):
                return w
    return None


def verify_code(spec: CssCodeSpec, exhaustive_distance_limit: int = 6) -> CodeReport:
    """Check commutation relations and, for small weights, the code distance."""
    n = spec.n
    viol = []
    comm = (spec.h_x.astype(np.int64) @ spec.h_z.T.astype(np.int64)) % 2
    for i, j in zip(*np.nonzero(comm)):
        viol.append(("XZ", int(i), int(j)))
    logical_viol = []
    k = n - gf2.rank(spec.h_x) - gf2.rank(spec.h_z)
    if k != spec.k:
        logical_viol.append(f"declared k={spec.k} but checks give k={k}")
    lx, lz = spec.logical_x.astype(np.int64), spec.logical_z.astype(np.int64)
    if lx.shape[0] and np.any((lx @ spec.h_z.T) % 2):
        logical_viol.append("logical X anticommutes with a Z check")
    if lz.shape[0] and np.any((lz @ spec.h_x.T) % 2):
        logical_viol.append("logical Z anticommutes with an X check")
    if lx.shape[0] == lz.shape[0] and lx.shape[0]:
        pairing = (lx @ lz.T) % 2
        if not np.array_equal(pairing, np.eye(lx.shape[0], dtype=np.int64)):
            logical_viol.append("logical X/Z pairing is not the identity")
    elif lx.shape[0] != lz.shape[0]:
        logical_viol.append("different numbers of logical X and Z operators")
    distance = None
    if not viol and k > 0:
        lim = min(exhaustive_distance_limit, n)
        dx = _min_logical_weight(spec.h_z, spec.h_x, n, lim)
        dz = _min_logical_weight(spec.h_x, spec.h_z, n, lim)
        found = [d for d in (dx, dz) if d is not None]
        distance = min(found) if found else None
    return CodeReport(viol, logical_viol, k, distance)

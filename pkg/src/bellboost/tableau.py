"""Stabilizer tableau simulation with word-packed rows.

Rows ``0..n-1`` are destabilizers and rows ``n..2n-1`` stabilizers.  Each
row stores packed ``x`` and ``z`` bits and an exponent ``e`` (mod 4) in the
``i**e X^x Z^z`` convention, so Y factors need no special casing.

Optionally every row also carries a *sign form*: a bit vector over the
random measurement outcomes drawn so far.  The concrete sign of a row is
always exact; the form records which random outcomes it depends on.  A
measurement whose form is empty is deterministic for every branch, which is
how detector determinism is certified without enumerating branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import PauliString, pack_bits, parity_rows, unpack_bits

_ONE = np.uint64(1)


@dataclass
class MeasureResult:
    outcome: int  # 0 for eigenvalue +1, 1 for -1
    deterministic: bool
    form: np.ndarray | None = None  # packed symbol dependence, None if untracked

    @property
    def eigenvalue(self) -> int:
        return 1 - 2 * self.outcome


class StabilizerTableau:
    """Tableau of an n-qubit stabilizer state, initialised to |0...0>.

    Args:
        n: number of qubits.
        rng: generator used for random measurement outcomes.
        symbols: capacity for symbolic sign tracking (0 disables it).
    """

    def __init__(self, n: int, rng: np.random.Generator | None = None, symbols: int = 0):
        self.n = n
        self.words = max(1, (n + 63) // 64)
        eye = np.eye(n, dtype=bool)
        zero = np.zeros((n, n), dtype=bool)
        self.x = pack_bits(np.vstack([eye, zero]))
        self.z = pack_bits(np.vstack([zero, eye]))
        self.e = np.zeros(2 * n, dtype=np.int64)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.symbols = symbols
        self.n_symbols = 0
        if symbols:
            self.forms = np.zeros((2 * n, (symbols + 63) // 64), dtype=np.uint64)
        else:
            self.forms = None

    def copy(self) -> "StabilizerTableau":
        other = object.__new__(StabilizerTableau)
        other.__dict__.update(self.__dict__)
        other.x = self.x.copy()
        other.z = self.z.copy()
        other.e = self.e.copy()
        if self.forms is not None:
            other.forms = self.forms.copy()
        return other

    # -- bit access -------------------------------------------------------
    def _col(self, arr: np.ndarray, q: int) -> np.ndarray:
        return (arr[:, q >> 6] >> np.uint64(q & 63)) & _ONE

    def _set_col(self, arr: np.ndarray, q: int, bits: np.ndarray) -> None:
        w, b = q >> 6, np.uint64(q & 63)
        arr[:, w] = (arr[:, w] & ~(_ONE << b)) | (bits.astype(np.uint64) << b)

    def _check(self, *qubits: int) -> None:
        for q in qubits:
            if not 0 <= q < self.n:
                raise IndexError(f"qubit {q} out of range for {self.n} qubits")

    # -- Clifford gates ---------------------------------------------------
    def h(self, q: int) -> None:
        self._check(q)
        xa, za = self._col(self.x, q), self._col(self.z, q)
        self.e = (self.e + 2 * (xa & za).astype(np.int64)) % 4
        self._set_col(self.x, q, za)
        self._set_col(self.z, q, xa)

    def s(self, q: int) -> None:
        # S X S^dag = Y = i X Z, S Z S^dag = Z
        self._check(q)
        xa, za = self._col(self.x, q), self._col(self.z, q)
        self.e = (self.e + xa.astype(np.int64)) % 4
        self._set_col(self.z, q, za ^ xa)

    def cx(self, c: int, t: int) -> None:
        self._check(c, t)
        if c == t:
            raise ValueError("CNOT control equals target")
        xc, zt = self._col(self.x, c), self._col(self.z, t)
        self._set_col(self.x, t, self._col(self.x, t) ^ xc)
        self._set_col(self.z, c, self._col(self.z, c) ^ zt)

    def cz(self, a: int, b: int) -> None:
        self._check(a, b)
        if a == b:
            raise ValueError("CZ on a single qubit")
        xa, xb = self._col(self.x, a), self._col(self.x, b)
        self.e = (self.e + 2 * (xa & xb).astype(np.int64)) % 4
        self._set_col(self.z, a, self._col(self.z, a) ^ xb)
        self._set_col(self.z, b, self._col(self.z, b) ^ xa)

    def apply_gate(self, name: str, targets) -> None:
        name = name.upper()
        if name == "H":
            for q in targets:
                self.h(q)
        elif name == "S":
            for q in targets:
                self.s(q)
        elif name in ("CX", "CNOT", "CZ"):
            if len(targets) % 2:
                raise ValueError(f"{name} needs an even number of targets")
            fn = self.cz if name == "CZ" else self.cx
            for a, b in zip(targets[::2], targets[1::2]):
                fn(a, b)
        else:
            raise ValueError(f"unsupported Clifford gate {name!r}")

    # -- Paulis -----------------------------------------------------------
    def _anticommuting(self, px: np.ndarray, pz: np.ndarray) -> np.ndarray:
        return parity_rows((self.x & pz) ^ (self.z & px))

    def apply_pauli(self, p: PauliString, condition: "MeasureResult | None" = None) -> None:
        """Apply ``p`` to the state, optionally controlled by a measurement result.

        A controlled application is exact for the concrete outcome and, when
        symbols are tracked, XORs the outcome's form into every flipped row.
        """
        px, pz = pack_bits(p.x), pack_bits(p.z)
        anti = self._anticommuting(px, pz)
        fire = 1 if condition is None else condition.outcome
        self.e = (self.e + 2 * fire * anti.astype(np.int64)) % 4
        if self.forms is not None and condition is not None and condition.form is not None:
            rows = np.flatnonzero(anti)
            self.forms[rows] ^= condition.form

    # -- measurement ------------------------------------------------------
    def _new_symbol(self) -> np.ndarray | None:
        if self.forms is None:
            return None
        if self.n_symbols >= self.symbols:
            raise RuntimeError("symbol capacity exhausted")
        form = np.zeros(self.forms.shape[1], dtype=np.uint64)
        form[self.n_symbols >> 6] = _ONE << np.uint64(self.n_symbols & 63)
        self.n_symbols += 1
        return form

    def measure(self, p: PauliString, forced: int | None = None) -> MeasureResult:
        """Projectively measure the Hermitian Pauli ``p``."""
        if p.n != self.n:
            raise ValueError(f"Pauli acts on {p.n} qubits, tableau has {self.n}")
        if not p.is_hermitian():
            raise ValueError(f"measured operator {p} is not Hermitian")
        n = self.n
        px, pz = pack_bits(p.x), pack_bits(p.z)
        ep = p.xz_exponent()
        anti = self._anticommuting(px, pz)
        stab_anti = np.flatnonzero(anti[n:])
        if stab_anti.size == 0:
            # deterministic: P is +-(product of stabilizers flagged by destabilizers)
            rows = n + np.flatnonzero(anti[:n])
            xs, zs = self.x[rows], self.z[rows]
            zpref = np.bitwise_xor.accumulate(zs, axis=0)
            cross = 0
            if rows.size > 1:
                cross = int(parity_rows(zpref[:-1] & xs[1:]).sum())
            e_prod = (int(self.e[rows].sum()) + 2 * cross) % 4
            diff = (e_prod - ep) % 4
            if diff % 2:
                raise RuntimeError("inconsistent phase in deterministic measurement")
            outcome = diff // 2
            if forced is not None and forced != outcome:
                raise ValueError("forced outcome contradicts a deterministic measurement")
            form = None
            if self.forms is not None:
                form = np.bitwise_xor.reduce(self.forms[rows], axis=0) if rows.size else np.zeros(
                    self.forms.shape[1], dtype=np.uint64
                )
            return MeasureResult(outcome, True, form)

        pivot = n + int(stab_anti[0])
        others = np.flatnonzero(anti)
        others = others[others != pivot]
        if others.size:
            cross = parity_rows(self.z[others] & self.x[pivot]).astype(np.int64)
            self.e[others] = (self.e[others] + self.e[pivot] + 2 * cross) % 4
            self.x[others] ^= self.x[pivot]
            self.z[others] ^= self.z[pivot]
            if self.forms is not None:
                self.forms[others] ^= self.forms[pivot]
        d = pivot - n
        self.x[d] = self.x[pivot]
        self.z[d] = self.z[pivot]
        self.e[d] = self.e[pivot]
        outcome = int(self.rng.integers(2)) if forced is None else int(forced)
        self.x[pivot] = px
        self.z[pivot] = pz
        self.e[pivot] = (ep + 2 * outcome) % 4
        form = self._new_symbol()
        if self.forms is not None:
            self.forms[d] = self.forms[pivot]
            self.forms[pivot] = form
        return MeasureResult(outcome, False, form)

    def measure_z(self, q: int) -> MeasureResult:
        return self.measure(PauliString.from_support(self.n, "Z", [q]))

    def measure_x(self, q: int) -> MeasureResult:
        return self.measure(PauliString.from_support(self.n, "X", [q]))

    def reset_z(self, q: int) -> None:
        r = self.measure_z(q)
        self.apply_pauli(PauliString.from_support(self.n, "X", [q]), condition=r)

    def reset_x(self, q: int) -> None:
        r = self.measure_x(q)
        self.apply_pauli(PauliString.from_support(self.n, "Z", [q]), condition=r)

    # -- inspection -------------------------------------------------------
    def _row(self, i: int) -> PauliString:
        x = unpack_bits(self.x[i], self.n)
        z = unpack_bits(self.z[i], self.n)
        return PauliString.from_xz_exponent(x, z, int(self.e[i]))

    def stabilizers(self) -> list[PauliString]:
        return [self._row(self.n + i) for i in range(self.n)]

    def destabilizers(self) -> list[PauliString]:
        return [self._row(i) for i in range(self.n)]

    def state_vector(self) -> np.ndarray:
        """Dense state vector (qubit 0 most significant); for small n only."""
        if self.n > 12:
            raise ValueError("state_vector is only meant for small tableaux")
        dim = 2**self.n
        proj = np.eye(dim, dtype=complex)
        for s in self.stabilizers():
            proj = proj @ (np.eye(dim) + s.to_matrix()) / 2
        col = int(np.argmax(np.linalg.norm(proj, axis=0)))
        vec = proj[:, col]
        return vec / np.linalg.norm(vec)


def apply_clifford(t: StabilizerTableau, gate: str, *targets: int) -> StabilizerTableau:
    """Apply one of H, S, CNOT, CZ in place and return the tableau."""
    t.apply_gate(gate, list(targets))
    return t


def measure_stabilizer(
    t: StabilizerTableau, p: PauliString, rng: np.random.Generator | None = None
) -> tuple[int, bool]:
    """Measure ``p``; returns (eigenvalue in {+1, -1}, deterministic flag)."""
    if rng is not None:
        t.rng = rng
    r = t.measure(p)
    return r.eigenvalue, r.deterministic

"""Pauli strings with exact phase tracking.

A Pauli string on ``n`` qubits is stored as two boolean vectors ``x`` and
``z`` plus an exponent ``k`` so that the operator equals
``i**k * P_0 (x) P_1 (x) ...`` with ``P_q`` in {I, X, Y, Z} chosen from
``(x[q], z[q])``.  Internally products are computed in the ``X^x Z^z``
convention, where the exponent picks up ``popcount(x & z)`` from each ``Y``.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

_LETTERS = {(False, False): "I", (True, False): "X", (True, True): "Y", (False, True): "Z"}
_FROM_LETTER = {"I": (0, 0), "_": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_SIGNS = {"+": 0, "+i": 1, "-": 2, "-i": 3, "i": 1}


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean array along its last axis into little-endian uint64 words."""
    bits = np.asarray(bits, dtype=bool)
    n = bits.shape[-1]
    n_words = max(1, (n + 63) // 64)
    padded = np.zeros(bits.shape[:-1] + (n_words * 64,), dtype=bool)
    padded[..., :n] = bits
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64).copy()


def unpack_bits(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    as_bytes = words.view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, bitorder="little")[..., :n].astype(bool)


def parity_rows(words: np.ndarray) -> np.ndarray:
    """Parity of the number of set bits in each row of a uint64 matrix."""
    return (np.bitwise_count(words).sum(axis=-1) & 1).astype(np.uint8)


class PauliString:
    """An n-qubit Pauli operator with a phase in {+1, +i, -1, -i}.

    Instances are immutable; arithmetic returns new objects.
    """

    __slots__ = ("_x", "_z", "_k")

    def __init__(self, x: Iterable[bool], z: Iterable[bool], phase_exp: int = 0):
        x = np.array(x, dtype=bool).reshape(-1)
        z = np.array(z, dtype=bool).reshape(-1)
        if x.shape != z.shape:
            raise ValueError(f"x and z lengths differ: {x.size} vs {z.size}")
        x.setflags(write=False)
        z.setflags(write=False)
        self._x = x
        self._z = z
        self._k = int(phase_exp) % 4

    @classmethod
    def from_str(cls, text: str) -> "PauliString":
        """Parse strings such as ``"+XZ_Y"``, ``"-iZZ"`` or ``"IXI"``."""
        text = text.strip()
        sign = 0
        for prefix in ("+i", "-i", "+", "-", "i"):
            if text.startswith(prefix):
                sign = _SIGNS[prefix]
                text = text[len(prefix):]
                break
        try:
            pairs = [_FROM_LETTER[c] for c in text.upper()]
        except KeyError as exc:
            raise ValueError(f"bad Pauli letter {exc.args[0]!r} in {text!r}") from None
        x = [p[0] for p in pairs]
        z = [p[1] for p in pairs]
        return cls(x, z, sign)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(np.zeros(n, bool), np.zeros(n, bool), 0)

    @classmethod
    def from_support(cls, n: int, letter: str, qubits: Iterable[int]) -> "PauliString":
        """Same letter on every qubit in ``qubits``, identity elsewhere."""
        xb, zb = _FROM_LETTER[letter.upper()]
        x = np.zeros(n, bool)
        z = np.zeros(n, bool)
        idx = np.fromiter(qubits, dtype=np.int64)
        x[idx] = bool(xb)
        z[idx] = bool(zb)
        return cls(x, z, 0)

    @property
    def n(self) -> int:
        return self._x.size

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def z(self) -> np.ndarray:
        return self._z

    @property
    def phase_exp(self) -> int:
        """Exponent k of the prefactor i**k."""
        return self._k

    @property
    def phase(self) -> complex:
        return (1, 1j, -1, -1j)[self._k]

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self._x | self._z))

    def support(self) -> list[int]:
        return np.flatnonzero(self._x | self._z).tolist()

    def is_hermitian(self) -> bool:
        return self._k % 2 == 0

    def xz_exponent(self) -> int:
        """Exponent e such that the operator equals i**e X^x Z^z."""
        return (self._k + int(np.count_nonzero(self._x & self._z))) % 4

    @classmethod
    def from_xz_exponent(cls, x, z, e: int) -> "PauliString":
        x = np.asarray(x, bool)
        z = np.asarray(z, bool)
        return cls(x, z, (e - int(np.count_nonzero(x & z))) % 4)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_product(self, other)

    def __neg__(self) -> "PauliString":
        return PauliString(self._x, self._z, self._k + 2)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PauliString):
            return NotImplemented
        return (
            self._k == other._k
            and np.array_equal(self._x, other._x)
            and np.array_equal(self._z, other._z)
        )

    def __hash__(self) -> int:
        return hash((self._k, self._x.tobytes(), self._z.tobytes()))

    def __str__(self) -> str:
        sign = ("+", "+i", "-", "-i")[self._k]
        return sign + "".join(_LETTERS[(bool(a), bool(b))] for a, b in zip(self._x, self._z))

    def __repr__(self) -> str:
        return f"PauliString({str(self)!r})"

    def commutes(self, other: "PauliString") -> bool:
        return commutes_with(self, other)

    def to_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix, qubit 0 is the most significant factor."""
        single = {
            "I": np.eye(2, dtype=complex),
            "X": np.array([[0, 1], [1, 0]], dtype=complex),
            "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
            "Z": np.array([[1, 0], [0, -1]], dtype=complex),
        }
        mat = np.array([[self.phase]], dtype=complex)
        for a, b in zip(self._x, self._z):
            mat = np.kron(mat, single[_LETTERS[(bool(a), bool(b))]])
        return mat


def pauli_product(a: PauliString, b: PauliString) -> PauliString:
    """Operator product ``a @ b`` with exact phase."""
    if a.n != b.n:
        raise ValueError(f"qubit counts differ: {a.n} vs {b.n}")
    e = a.xz_exponent() + b.xz_exponent() + 2 * int(np.count_nonzero(a.z & b.x))
    return PauliString.from_xz_exponent(a.x ^ b.x, a.z ^ b.z, e)


def commutes_with(a: PauliString, b: PauliString) -> bool:
    if a.n != b.n:
        raise ValueError(f"qubit counts differ: {a.n} vs {b.n}")
    return int(np.count_nonzero(a.x & b.z) + np.count_nonzero(a.z & b.x)) % 2 == 0

"""Bell pair distillation with CSS codes.

Both nodes run the same unencoding circuit on their halves of ``n`` noisy
Bell pairs, measure the first ``r`` qubits in X and the next ``n - r - k``
in Z, and keep the ``k`` remaining pairs when the two nodes' outcomes
agree.  The circuit comes straight from the standard form of the code.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .circuit import Circuit, CircuitBuilder
from .codes import StandardFormResult, build_parity_code, standard_form


@dataclass
class DistillationCircuit:
    """Two-stage CNOT circuit in standard-form positions.

    ``qubit_order[pos]`` is the original code qubit at position ``pos``.
    """

    n: int
    k: int
    r: int
    stage1: list[tuple[int, int]]
    stage2: list[tuple[int, int]]
    qubit_order: list[int]

    @property
    def x_measured(self) -> list[int]:
        return list(range(self.r))

    @property
    def z_measured(self) -> list[int]:
        return list(range(self.r, self.n - self.k))

    @property
    def outputs(self) -> list[int]:
        return list(range(self.n - self.k, self.n))

    @property
    def gates(self) -> list[tuple[int, int]]:
        return self.stage1 + self.stage2

    def conjugate(self, x: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Push a Pauli (bit vectors in position order) through the circuit."""
        x = np.array(x, dtype=bool)
        z = np.array(z, dtype=bool)
        for c, t in self.gates:
            x[t] ^= x[c]
            z[c] ^= z[t]
        return x, z


def synthesize_distillation(sf: StandardFormResult) -> DistillationCircuit:
    """Unencoding circuit read off the standard form.

    Stage one: for each of the first ``r`` rows, CNOTs from qubit ``i`` to
    every other qubit in the row's X part.  Stage two: for each output ``i``
    and each 1 in row ``i`` of ``E^T``, a CNOT from output ``n - k + i`` onto
    qubit ``r + j``.
    """
    n, k, r = sf.n, sf.k, sf.r
    if np.any(sf.blocks["B"]) or np.any(sf.blocks["C1"]) or np.any(sf.blocks["C2"]):
        raise ValueError("only CSS standard forms are supported")
    stage1 = []
    for i in range(r):
        row = sf.h_s[i, :n]
        stage1 += [(i, j) for j in np.flatnonzero(row) if j != i]
    e_t = sf.blocks["E"].T
    stage2 = []
    for i in range(k):
        stage2 += [(n - k + i, r + j) for j in np.flatnonzero(e_t[i])]
    return DistillationCircuit(n, k, r, [tuple(map(int, g)) for g in stage1],
                               [tuple(map(int, g)) for g in stage2], list(sf.column_permutation))


# ---------------------------------------------------------------------------
# pipelined one-way schedule


@dataclass
class PipelineStep:
    direction: str
    moves: list[int]  # patches that shift by one position this step
    gates: list[tuple[int, int]]
    active: set[int] = field(default_factory=set)


@dataclass
class PipelineSchedule:
    n: int
    k: int
    r: int
    steps: list[PipelineStep]

    @property
    def gates(self) -> list[tuple[int, int]]:
        return [g for s in self.steps for g in s.gates]

    def layer_counts(self) -> dict[int, int]:
        counts = {q: 0 for q in range(self.n)}
        for s in self.steps:
            for q in s.active:
                counts[q] += 1
        return counts

    def class_bounds(self) -> dict[str, int]:
        """Largest layer count allowed per patch class by the volume accounting."""
        return {"outputs": self.n - self.k, "x_measured": self.n - self.r, "z_measured": self.n - 1}


def schedule_pipeline(circ: DistillationCircuit) -> PipelineSchedule:
    """Lay out the circuit as patches sliding past each other in one direction.

    Stage one: the ``r`` X-measured patches slide, one after another, past a
    column of the other ``n - r`` patches, doing a transversal CNOT where the
    circuit has one.  Stage two: the Z-measured patches slide the same way
    past the ``k`` outputs.
    """
    n, k, r = circ.n, circ.k, circ.r
    m = n - r - k
    steps: list[PipelineStep] = []
    st1 = list(range(r, n))
    gates1 = set(circ.stage1)
    if r and st1:
        for t in range(r + len(st1) - 1):
            step = PipelineStep("down", [], [])
            for i in range(r):
                pos = t - i
                if 0 <= pos < len(st1):
                    step.moves.append(i)
                    step.active.update((i, st1[pos]))
                    if (i, st1[pos]) in gates1:
                        step.gates.append((i, st1[pos]))
            steps.append(step)
    outputs = list(range(n - k, n))
    gates2 = set(circ.stage2)
    if m and k:
        for t in range(m + k - 1):
            step = PipelineStep("down", [], [])
            for j in range(m):
                pos = t - j
                check = r + j
                if pos >= k:
                    continue
                step.active.add(check)  # waiting or moving
                if pos < 0:
                    continue
                step.moves.append(check)
                step.active.add(outputs[pos])
                if (outputs[pos], check) in gates2:
                    step.gates.append((outputs[pos], check))
            steps.append(step)
    return PipelineSchedule(n, k, r, steps)


def _commute(g1: tuple[int, int], g2: tuple[int, int]) -> bool:
    return not (g1[1] == g2[0] or g1[0] == g2[1])


def same_gate_dependencies(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> bool:
    """True when two CNOT lists are equal as multisets and every pair of
    non-commuting gates appears in the same relative order."""
    if sorted(a) != sorted(b) or len(set(a)) != len(a):
        return False
    pos_b = {g: i for i, g in enumerate(b)}
    for i, g1 in enumerate(a):
        for g2 in a[i + 1:]:
            if not _commute(g1, g2) and pos_b[g1] > pos_b[g2]:
                return False
    return True


# ---------------------------------------------------------------------------
# leading-order analysis


@dataclass
class ParityDistillationResult:
    m: int
    n: int
    k: int
    exact_order: int
    success_poly: Polynomial
    pair_error_poly: Polynomial  # sum over accepted patterns of (wrong outputs / k) * prob
    block_error_poly: Polynomial  # accepted patterns with any wrong output
    undetected_weight1_logical: int
    undetected_weight2_logical: int

    @property
    def leading_coefficient(self) -> float:
        """Coefficient of p_in^2 in the per-pair output error."""
        c = self.pair_error_poly.coef
        return float(c[2]) if len(c) > 2 else 0.0

    def success_probability(self, p_in: float) -> float:
        return float(self.success_poly(p_in))

    def p_out(self, p_in: float) -> float:
        return float(self.pair_error_poly(p_in) / self.success_poly(p_in))


def _patterns(n: int, max_weight: int):
    for w in range(max_weight + 1):
        for qs in itertools.combinations(range(n), w):
            for letters in itertools.product("XYZ", repeat=w):
                yield w, qs, letters


def analyze_parity_distillation(m: int, p_in: float | None = None, max_weight: int = 3) -> ParityDistillationResult:
    """Exact enumeration of Pauli errors on one arm of the input pairs.

    Every pattern of weight up to ``max_weight`` is pushed through the
    unencoding circuit.  It is accepted when no measured qubit is flipped
    and counts as a logical error on each output it reaches.  Polynomials
    in ``p_in`` are exact through order ``max_weight``.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    code = build_parity_code(m)
    circ = synthesize_distillation(standard_form(code.h_x, code.h_z))
    n, k = circ.n, circ.k
    xm, zm, outs = circ.x_measured, circ.z_measured, circ.outputs
    succ = Polynomial([0.0])
    pair = Polynomial([0.0])
    block = Polynomial([0.0])
    u1 = u2 = 0
    prob_cache = {}
    for w, qs, letters in _patterns(n, max_weight):
        x = np.zeros(n, bool)
        z = np.zeros(n, bool)
        for q, l in zip(qs, letters):
            x[q] = l in "XY"
            z[q] = l in "YZ"
        xo, zo = circ.conjugate(x, z)
        if np.any(zo[xm]) or np.any(xo[zm]):
            continue
        if w not in prob_cache:
            prob_cache[w] = Polynomial([0.0, 1.0 / 3.0]) ** w * Polynomial([1.0, -1.0]) ** (n - w)
        pw = prob_cache[w]
        succ = succ + pw
        wrong = int(np.count_nonzero(xo[outs] | zo[outs]))
        if wrong:
            pair = pair + pw * (wrong / k)
            block = block + pw
            if w == 1:
                u1 += 1
            elif w == 2:
                u2 += 1
    return ParityDistillationResult(m, n, k, max_weight, succ, pair, block, u1, u2)


def fit_power_law(ms, cs) -> tuple[float, float]:
    """Least-squares fit of ``c = a * m**e`` in log space; returns (a, e)."""
    ms = np.asarray(ms, float)
    cs = np.asarray(cs, float)
    e, log_a = np.polyfit(np.log(ms), np.log(cs), 1)
    return float(math.exp(log_a)), float(e)


def parity_distillation_circuit(m: int, p_in: float) -> Circuit:
    """Both nodes' distillation circuits on ``2m`` noisy Bell pairs.

    Detectors compare the two nodes' outcome on each measured qubit;
    observables ``XX_i`` and ``ZZ_i`` read each output pair noiselessly.
    """
    code = build_parity_code(m)
    circ = synthesize_distillation(standard_form(code.h_x, code.h_z))
    n = circ.n
    b = CircuitBuilder(2 * n)
    A = list(range(n))
    B = list(range(n, 2 * n))
    b.append("RX", A)
    b.append("R", B)
    b.append("CX", [q for pair in zip(A, B) for q in pair])
    b.append("DEPOLARIZE1", B, p_in)
    for side in (A, B):
        for c, t in circ.gates:
            b.append("CX", [side[c], side[t]])
    rx = {side: b.append("MX", [s[q] for q in circ.x_measured]) for side, s in (("A", A), ("B", B))}
    rz = {side: b.append("M", [s[q] for q in circ.z_measured]) for side, s in (("A", A), ("B", B))}
    for i in range(len(circ.x_measured)):
        b.detector([rx["A"][i], rx["B"][i]], "X", (i,))
    for i in range(len(circ.z_measured)):
        b.detector([rz["A"][i], rz["B"][i]], "Z", (circ.r + i,))
    for i, q in enumerate(circ.outputs):
        rxx, rzz = b.mpp([[("X", A[q]), ("X", B[q])], [("Z", A[q]), ("Z", B[q])]])
        b.observable(f"XX{i}", [rxx], "")
        b.observable(f"ZZ{i}", [rzz], "")
    return b.build()


# ---------------------------------------------------------------------------
# concatenated sequences


@dataclass
class DistillationStage:
    """One stage of a concatenated distillation sequence.

    ``kind`` is ``"repetition"`` (volume = ``cnots`` transversal CNOTs) or
    ``"pipelined"`` (volume from the one-way pipeline of an [[n, k]] code
    with X-rank ``r``).  ``success`` and ``p_out`` are supplied externally.
    """

    n: int
    k: int
    success: float
    p_out: float
    kind: str = "repetition"
    cnots: int = 1
    r: int = 1


@dataclass
class ConcatResult:
    inverse_yield: float
    p_out: float
    v_buffer: float
    v_factory: float

    @property
    def v_total(self) -> float:
        return self.v_buffer + self.v_factory


def transversal_cnot_volume(d_s: int) -> float:
    """Two patches of 2 d^2 - 1 qubits for d rounds."""
    return 2.0 * d_s * (2 * d_s**2 - 1)


def evaluate_concat_sequence(stages: list[DistillationStage], d_s: int, R: float) -> ConcatResult:
    """Yield, output error and volume per final output pair of a stage sequence."""
    from .cost import pipelined_volume

    if not stages:
        raise ValueError("empty stage sequence")
    for s in stages:
        if not 0 < s.success <= 1 or s.k < 1 or s.n < s.k:
            raise ValueError(f"invalid stage {s}")
    inv = 1.0
    for s in stages:
        inv *= s.n / (s.success * s.k)
    instances = 1.0 / (stages[-1].success * stages[-1].k)
    v_factory = 0.0
    for i in range(len(stages) - 1, -1, -1):
        s = stages[i]
        if s.kind == "repetition":
            vol = s.cnots * transversal_cnot_volume(d_s)
        elif s.kind == "pipelined":
            vol = pipelined_volume(s.n, s.k, s.r, d_s)
        else:
            raise ValueError(f"unknown stage kind {s.kind!r}")
        v_factory += instances * vol
        if i:
            prev = stages[i - 1]
            instances = instances * s.n / (prev.success * prev.k)
    v_buffer = inv**2 / R
    return ConcatResult(inv, stages[-1].p_out, v_buffer, v_factory)

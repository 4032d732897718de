"""Noisy syndrome-extraction circuits for the two Bell pair protocols.

Both builders produce a :class:`Circuit` whose detectors are deterministic
without noise and whose two observables ``XX`` and ``ZZ`` are the logical
Bell pair stabilizers, read out by a final noiseless round.

Data qubits of a patch sit at ``(row, col)``; stabilizer ancillas sit at the
plaquette positions of :class:`SurfaceCodeLayout`.  X checks use the CNOT
order NW, NE, SW, SE and Z checks NW, SW, NE, SE so that hook errors run
perpendicular to the logical operator of the same type.

Classically controlled Pauli corrections (from teleported CNOTs) are not
emitted as gates.  Instead each correction is propagated through the rest of
the circuit once and the triggering measurement is folded into every
detector and observable it would have flipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, CircuitBuilder, NoiseModel
from .codes import Plaquette, SurfaceCodeLayout
from .frames import _set_column_bits, propagate
from .pauli import unpack_bits

X_ORDER = (0, 1, 2, 3)  # NW NE SW SE
Z_ORDER = (0, 2, 1, 3)  # NW SW NE SE


class NoisyBuilder(CircuitBuilder):
    """Circuit builder that inserts the local and Bell-pair noise channels."""

    def __init__(self, noise: NoiseModel):
        super().__init__(0)
        self.noise = noise
        self.active: set[int] = set()
        self.touched: set[int] = set()
        self.feedforward: list[tuple[int, int, str, int]] = []

    def qubits(self, count: int, active: bool = True) -> list[int]:
        qs = self.add_qubits(count)
        if active:
            self.active.update(qs)
        return qs

    def _touch(self, qs) -> None:
        self.touched.update(qs)

    def reset(self, qs, basis: str, noisy: bool = True) -> None:
        qs = list(qs)
        self.append("R" if basis == "Z" else "RX", qs)
        if noisy:
            self.append("X_ERROR" if basis == "Z" else "Z_ERROR", qs, self.noise.p)
        self._touch(qs)

    def measure(self, qs, basis: str, noisy: bool = True) -> list[int]:
        qs = list(qs)
        if noisy:
            self.append("X_ERROR" if basis == "Z" else "Z_ERROR", qs, self.noise.p)
        self._touch(qs)
        return self.append("M" if basis == "Z" else "MX", qs)

    def cx(self, pairs, noisy: bool = True) -> None:
        flat = [q for pair in pairs for q in pair]
        self.append("CX", flat)
        if noisy:
            self.append("DEPOLARIZE2", flat, self.noise.p)
        self._touch(flat)

    def bell_pairs(self, a_side, b_side, noisy_side) -> None:
        """Noiseless preparation of |00>+|11> pairs, then depolarizing on one arm."""
        a_side, b_side = list(a_side), list(b_side)
        self.append("RX", a_side)
        self.append("R", b_side)
        self.append("CX", [q for pair in zip(a_side, b_side) for q in pair])
        self.append("DEPOLARIZE1", list(noisy_side), self.noise.p_bell)
        self._touch(a_side + b_side)

    def controlled_pauli(self, record: int, letter: str, qubit: int) -> None:
        self.feedforward.append((len(self.instructions), record, letter, qubit))

    def end_layer(self) -> None:
        if self.noise.idling_enabled and self.noise.idle_p > 0:
            idle = sorted(self.active - self.touched)
            self.append("DEPOLARIZE1", idle, self.noise.idle_p)
        self.touched = set()
        self.tick()

    def build(self) -> Circuit:
        return fold_feedforward(super().build(), self.feedforward)


def fold_feedforward(c: Circuit, feedforward) -> Circuit:
    """Replace classically controlled Paulis by record folding in detectors."""
    if not feedforward:
        return c
    n_ff = len(feedforward)
    by_pos: dict[int, list[tuple[int, str, int]]] = {}
    for j, (pos, _rec, letter, q) in enumerate(feedforward):
        by_pos.setdefault(pos, []).append((j, letter, q))

    def pre(i, fx, fz):
        for j, letter, q in by_pos.get(i, ()):
            arr = fx if letter == "X" else fz
            _set_column_bits(arr, np.array([q]), np.array([j], dtype=np.uint64))

    rec = propagate(c, n_ff, pre_hook=pre)
    flipped = unpack_bits(rec, n_ff)  # records x feedforward
    # a measured record equals its corrected value XOR the triggering records
    expand: dict[int, int] = {}
    sources = [fb[1] for fb in feedforward]
    for r in range(c.n_measurements):
        js = np.flatnonzero(flipped[r])
        if js.size == 0:
            continue
        mask = 1 << r
        for j in js:
            m = sources[j]
            mask ^= expand.get(m, 1 << m)
        expand[r] = mask

    def fold(records):
        mask = 0
        for r in records:
            mask ^= expand.get(r, 1 << r)
        out = []
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return tuple(out)

    dets = tuple(type(d)(fold(d.records), d.basis, d.coords) for d in c.detectors)
    obs = tuple(type(o)(o.name, fold(o.records), o.basis) for o in c.observables)
    return Circuit(c.n_qubits, c.instructions, dets, obs)


# ---------------------------------------------------------------------------
# shared syndrome extraction


@dataclass
class Patch:
    """A surface code patch mapped onto circuit qubits."""

    layout: SurfaceCodeLayout
    data: list[int]
    ancilla: list[int]

    def q(self, r: int, c: int) -> int:
        return self.data[self.layout.data_index(r, c)]


def _cnot_schedule(plaq: Plaquette, step: int) -> int:
    order = X_ORDER if plaq.basis == "X" else Z_ORDER
    return plaq.corners[order[step]]


def se_round(b: NoisyBuilder, patches: list[Patch], noisy: bool = True) -> list[list[int]]:
    """One round of syndrome extraction on local patches; returns records per plaquette."""
    zs, xs = [], []
    for patch in patches:
        for p, a in zip(patch.layout.plaquettes, patch.ancilla):
            (zs if p.basis == "Z" else xs).append(a)
    b.reset(zs, "Z", noisy)
    b.reset(xs, "X", noisy)
    b.end_layer()
    for step in range(4):
        pairs = []
        for patch in patches:
            for p, a in zip(patch.layout.plaquettes, patch.ancilla):
                d = _cnot_schedule(p, step)
                if d < 0:
                    continue
                dq = patch.data[d]
                pairs.append((a, dq) if p.basis == "X" else (dq, a))
        b.cx(pairs, noisy)
        b.end_layer()
    out = []
    for patch in patches:
        zq = [a for p, a in zip(patch.layout.plaquettes, patch.ancilla) if p.basis == "Z"]
        xq = [a for p, a in zip(patch.layout.plaquettes, patch.ancilla) if p.basis == "X"]
        rz = b.measure(zq, "Z", noisy)
        rx = b.measure(xq, "X", noisy)
        iz, ix = iter(rz), iter(rx)
        out.append([next(iz) if p.basis == "Z" else next(ix) for p in patch.layout.plaquettes])
    b.end_layer()
    return out


# ---------------------------------------------------------------------------
# entanglement boosting


def boosting_regions(d_bell: int, d_s: int) -> dict[tuple[int, int], str]:
    """Initial state per data coordinate: ``bell``, ``plus`` or ``zero``."""
    reg = {}
    for r in range(d_s):
        for c in range(d_s):
            if r < d_bell and c < d_bell:
                reg[(r, c)] = "bell"
            elif r >= c:
                reg[(r, c)] = "plus"
            else:
                reg[(r, c)] = "zero"
    return reg


def build_boosting_circuit(d_bell: int, d_s: int, noise: NoiseModel) -> Circuit:
    """Grow a distance-``d_bell`` logical Bell pair into two distance-``d_s`` patches.

    Node A's arm of every physical Bell pair is noiseless, node B's arm is
    depolarized with ``noise.p_bell``.  Each node then runs ``d_s`` noisy
    rounds followed by one noiseless round and a noiseless readout of
    ``XX`` (left columns) and ``ZZ`` (top rows).
    """
    if d_bell < 1 or d_s < 3 or d_s % 2 == 0 or d_bell % 2 == 0:
        raise ValueError(f"need odd d_bell >= 1 and odd d_s >= 3, got {d_bell}, {d_s}")
    if d_bell > d_s:
        raise ValueError(f"d_bell={d_bell} exceeds d_s={d_s}")
    layout = SurfaceCodeLayout.square(d_s)
    b = NoisyBuilder(noise)
    patches = []
    for _ in range(2):
        data = b.qubits(layout.n_data)
        anc = b.qubits(len(layout.plaquettes))
        patches.append(Patch(layout, data, anc))
    A, B = patches
    reg = boosting_regions(d_bell, d_s)
    bell = [rc for rc, v in reg.items() if v == "bell"]
    b.bell_pairs([A.q(*rc) for rc in bell], [B.q(*rc) for rc in bell], [B.q(*rc) for rc in bell])
    for patch in patches:
        b.reset([patch.q(*rc) for rc, v in reg.items() if v == "zero"], "Z")
        b.reset([patch.q(*rc) for rc, v in reg.items() if v == "plus"], "X")
    b.end_layer()

    rounds = [se_round(b, patches) for _ in range(d_s)]
    rounds.append(se_round(b, patches, noisy=False))

    def coords_of(p):
        return (p.row, p.col)

    for i, p in enumerate(layout.plaquettes):
        ok = "plus" if p.basis == "X" else "zero"
        kinds = {reg[divmod(q, d_s)] for q in p.support}
        if kinds <= {ok}:
            for node in range(2):
                b.detector([rounds[0][node][i]], p.basis, coords_of(p) + (0, node))
        elif kinds <= {ok, "bell"}:
            b.detector([rounds[0][0][i], rounds[0][1][i]], p.basis, coords_of(p) + (0, 2))
    for t in range(1, len(rounds)):
        for node in range(2):
            for i, p in enumerate(layout.plaquettes):
                b.detector([rounds[t][node][i], rounds[t - 1][node][i]], p.basis,
                           coords_of(p) + (t, node))

    xx = [("X", patch.q(r, 0)) for patch in patches for r in range(d_s)]
    zz = [("Z", patch.q(0, c)) for patch in patches for c in range(d_s)]
    rx, rz = b.mpp([xx, zz])
    b.observable("XX", [rx], "X")
    b.observable("ZZ", [rz], "Z")
    return b.build()


# ---------------------------------------------------------------------------
# lattice surgery with teleported CNOTs


def surgery_bell_pair_count(d_s: int) -> int:
    return d_s * (2 * d_s - 1)


def build_surgery_circuit(d_s: int, noise: NoiseModel) -> Circuit:
    """Lattice surgery between two distance-``d_s`` patches on separate nodes.

    The merged patch has ``d_s`` rows and ``2 d_s + 1`` columns; node A holds
    columns ``0..d_s`` and node B the rest.  Checks straddling the cut keep
    their ancilla alternately in A and B and reach the remote data through
    CNOTs teleported with one fresh Bell pair each, ``2 d_s - 1`` pairs per
    round.  After ``d_s`` merged rounds the middle column is measured in Z
    and each node runs one noiseless round on its own patch.
    """
    if d_s < 3 or d_s % 2 == 0:
        raise ValueError(f"need odd d_s >= 3, got {d_s}")
    d = d_s
    width = 2 * d + 1
    merged = SurfaceCodeLayout.rectangle(d, width)
    b = NoisyBuilder(noise)
    data = b.qubits(merged.n_data)
    anc = b.qubits(len(merged.plaquettes))
    mpatch = Patch(merged, data, anc)

    def node_of_data(col: int) -> int:
        return 0 if col <= d else 1

    anc_node = []
    for p in merged.plaquettes:
        if p.col <= d:
            anc_node.append(0)
        elif p.col >= d + 2:
            anc_node.append(1)
        else:
            anc_node.append(p.row % 2)
    qubit_node = {}
    for i, q in enumerate(data):
        qubit_node[q] = node_of_data(i % width)
    for p_i, a in enumerate(anc):
        qubit_node[a] = anc_node[p_i]

    # one reusable Bell pair per remote (plaquette, corner)
    remote: dict[tuple[int, int], tuple[int, int]] = {}
    for p_i, p in enumerate(merged.plaquettes):
        for corner, dq in enumerate(p.corners):
            if dq >= 0 and node_of_data(dq % width) != anc_node[p_i]:
                qa, qb = b.qubits(2, active=False)
                remote[(p_i, corner)] = (qa, qb)  # qa near the control, qb near the target

    def merged_round() -> list[int]:
        zs = [a for p, a in zip(merged.plaquettes, anc) if p.basis == "Z"]
        xs = [a for p, a in zip(merged.plaquettes, anc) if p.basis == "X"]
        b.reset(zs, "Z")
        b.reset(xs, "X")
        pairs = list(remote.values())
        if pairs:
            # arm placed in node B receives the Bell noise
            noisy = []
            for (p_i, corner), (qa, qb) in remote.items():
                p = merged.plaquettes[p_i]
                ctrl_is_anc = p.basis == "X"
                ctrl_node = anc_node[p_i] if ctrl_is_anc else 1 - anc_node[p_i]
                noisy.append(qa if ctrl_node == 1 else qb)
            b.bell_pairs([qa for qa, _ in pairs], [qb for _, qb in pairs], noisy)
        b.end_layer()
        for step in range(4):
            local, tele = [], []
            for p_i, (p, a) in enumerate(zip(merged.plaquettes, anc)):
                order = X_ORDER if p.basis == "X" else Z_ORDER
                corner = order[step]
                dq = p.corners[corner]
                if dq < 0:
                    continue
                ctrl, targ = (a, data[dq]) if p.basis == "X" else (data[dq], a)
                if (p_i, corner) in remote:
                    tele.append((ctrl, targ, *remote[(p_i, corner)]))
                else:
                    local.append((ctrl, targ))
            b.cx(local + [(ctrl, qa) for ctrl, _t, qa, _b in tele])
            if tele:
                m1 = b.measure([qa for _c, _t, qa, _b in tele], "Z")
                for rec, (_c, _t, _qa, qb) in zip(m1, tele):
                    b.controlled_pauli(rec, "X", qb)
                b.cx([(qb, targ) for _c, targ, _qa, qb in tele])
                m2 = b.measure([qb for _c, _t, _qa, qb in tele], "X")
                for rec, (ctrl, _t, _qa, _qb) in zip(m2, tele):
                    b.controlled_pauli(rec, "Z", ctrl)
            b.end_layer()
        zq = [a for p, a in zip(merged.plaquettes, anc) if p.basis == "Z"]
        xq = [a for p, a in zip(merged.plaquettes, anc) if p.basis == "X"]
        rz, rx = b.measure(zq, "Z"), b.measure(xq, "X")
        b.end_layer()
        iz, ix = iter(rz), iter(rx)
        return [next(iz) if p.basis == "Z" else next(ix) for p in merged.plaquettes]

    b.reset(data, "Z")
    b.end_layer()
    rounds = [merged_round() for _ in range(d)]
    mid = b.measure([mpatch.q(r, d) for r in range(d)], "Z")
    b.end_layer()

    # split patches reuse the merged ancilla sitting at the same plaquette position
    plaq_index = {(p.row, p.col): i for i, p in enumerate(merged.plaquettes)}
    split = SurfaceCodeLayout.square(d)
    patches, split_map = [], []
    for col0 in (0, d + 1):
        pdata = [mpatch.q(r, c + col0) for r in range(d) for c in range(d)]
        idx = [plaq_index[(p.row, p.col + col0)] for p in split.plaquettes]
        patches.append(Patch(split, pdata, [anc[i] for i in idx]))
        split_map.append(idx)
    final = se_round(b, patches, noisy=False)

    for i, p in enumerate(merged.plaquettes):
        if p.basis == "Z":
            b.detector([rounds[0][i]], "Z", (p.row, p.col, 0))
    for t in range(1, d):
        for i, p in enumerate(merged.plaquettes):
            b.detector([rounds[t][i], rounds[t - 1][i]], p.basis, (p.row, p.col, t))
    for node, (patch, idx) in enumerate(zip(patches, split_map)):
        col0 = 0 if node == 0 else d + 1
        for j, p in enumerate(split.plaquettes):
            mp = merged.plaquettes[idx[j]]
            own = {patch.data[q] for q in p.support}
            extra = {data[q] for q in mp.support} - own
            recs = [final[node][j], rounds[-1][idx[j]]]
            for q in extra:
                r, c = divmod(data.index(q), width)
                if c != d or p.basis != "Z":
                    raise AssertionError("unexpected support change at the split")
                recs.append(mid[r])
            b.detector(recs, p.basis, (mp.row, mp.col, d))

    zz = [("Z", mpatch.q(0, c)) for c in range(width) if c != d]
    xx = [("X", mpatch.q(r, 0)) for r in range(d)] + [("X", mpatch.q(r, width - 1)) for r in range(d)]
    rx, rz = b.mpp([xx, zz])
    x_first = [rounds[0][i] for i, p in enumerate(merged.plaquettes) if p.basis == "X"]
    b.observable("XX", [rx] + x_first, "X")
    b.observable("ZZ", [rz, mid[0]], "Z")
    circuit = b.build()
    return circuit

"""Pauli-frame propagation, detector error models and shot sampling.

Frames are stored column-packed: ``fx[q]`` is a row of uint64 words whose
bit ``j`` says whether column ``j`` (a shot, or an injected fault) carries an
X on qubit ``q``.  Every gate is then a handful of word-wide XORs.

Sampling is done at the level of noise channels: each channel fires
independently per shot with its total probability, and a firing channel
picks exactly one of its Pauli components.  Each component's detector and
observable flips are precomputed once by propagating it alone, so a shot's
outcome is the XOR of the symptoms of the components that fired.  This is
exact for Clifford circuits because frame propagation is linear.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .circuit import (
    GATES_1Q,
    GATES_2Q,
    MEASURES,
    NOISE,
    NOISE_2Q,
    RESETS,
    Circuit,
    circuit_channels,
    validate_detectors,
)

BLOCK_SHOTS = 4096
_ONE = np.uint64(1)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent counter-keyed stream for one block of shots."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


# ---------------------------------------------------------------------------
# frame propagation engine


def _set_column_bits(arr: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> None:
    """XOR bit ``cols[i]`` into ``arr[rows[i]]``."""
    if len(rows) == 0:
        return
    words = (cols >> 6).astype(np.int64)
    bits = _ONE << (cols & 63).astype(np.uint64)
    np.bitwise_xor.at(arr, (rows, words), bits)


def _distinct(*groups) -> bool:
    allq = np.concatenate(groups)
    return np.unique(allq).size == allq.size


NoiseHook = Callable[[int, int, tuple, np.ndarray, np.ndarray], None]


def propagate(
    c: Circuit,
    n_cols: int,
    noise_hook: NoiseHook | None = None,
    pre_hook: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Push Pauli frames through ``c``; returns packed record flips (records x words).

    ``noise_hook(channel_index, instruction_index, qubits, fx, fz)`` is called
    once per noise channel and may XOR faults into the frames.  ``pre_hook``
    is called before every instruction with its index.
    """
    words = max(1, (n_cols + 63) // 64)
    fx = np.zeros((c.n_qubits, words), dtype=np.uint64)
    fz = np.zeros((c.n_qubits, words), dtype=np.uint64)
    rec = np.zeros((c.n_measurements, words), dtype=np.uint64)
    r = 0
    chan = 0
    for i, ins in enumerate(c.instructions):
        if pre_hook is not None:
            pre_hook(i, fx, fz)
        name = ins.name
        t = np.asarray(ins.targets, dtype=np.int64)
        if name == "TICK":
            continue
        if name == "H":
            if _distinct(t):
                fx[t], fz[t] = fz[t], fx[t].copy()
            else:
                for q in t:
                    fx[q], fz[q] = fz[q].copy(), fx[q].copy()
        elif name == "S":
            for q in t if not _distinct(t) else [t]:
                fz[q] ^= fx[q]
        elif name in GATES_2Q:
            a, b = t[::2], t[1::2]
            pairs = [(a, b)] if _distinct(a, b) else [(np.array([x]), np.array([y])) for x, y in zip(a, b)]
            for ca, cb in pairs:
                if name == "CX":
                    fx[cb] ^= fx[ca]
                    fz[ca] ^= fz[cb]
                else:
                    xa, xb = fx[ca].copy(), fx[cb].copy()
                    fz[ca] ^= xb
                    fz[cb] ^= xa
        elif name in RESETS:
            fx[t] = 0
            fz[t] = 0
        elif name in MEASURES:
            src = fx if name == "M" else fz
            rec[r:r + len(t)] = src[t]
            r += len(t)
        elif name == "MPP":
            for prod in ins.products:
                acc = np.zeros(words, dtype=np.uint64)
                for letter, q in prod:
                    if letter in ("X", "Y"):
                        acc ^= fz[q]
                    if letter in ("Z", "Y"):
                        acc ^= fx[q]
                rec[r] = acc
                r += 1
        elif name in NOISE:
            width = 2 if name in NOISE_2Q else 1
            for j in range(0, len(t), width):
                if noise_hook is not None:
                    noise_hook(chan, i, tuple(int(q) for q in t[j:j + width]), fx, fz)
                chan += 1
        else:
            raise ValueError(f"cannot propagate frames through {name}")
    return rec


def records_to_parities(c: Circuit, rec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Detector and observable flip rows (packed over columns) from record flips."""
    words = rec.shape[1]

    def xor_rows(recs):
        if not recs:
            return np.zeros(words, dtype=np.uint64)
        return np.bitwise_xor.reduce(rec[list(recs)], axis=0)

    det = np.array([xor_rows(d.records) for d in c.detectors], dtype=np.uint64).reshape(-1, words)
    obs = np.array([xor_rows(o.records) for o in c.observables], dtype=np.uint64).reshape(-1, words)
    return det, obs


def _columns_to_rows(packed: np.ndarray, n_cols: int) -> np.ndarray:
    """(items x words) packed over columns -> (columns x items) bool."""
    bits = np.unpackbits(packed.view(np.uint8), axis=1, bitorder="little")[:, :n_cols]
    return np.ascontiguousarray(bits.T.astype(bool))


# ---------------------------------------------------------------------------
# per-component symptoms


_PAULI_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


@dataclass
class SymptomTable:
    """Detector/observable flips of every noise-channel component.

    ``comp_dets`` is CSR over components; ``comp_obs`` holds an observable
    bitmask per component.  Channels own contiguous component ranges.
    """

    n_detectors: int
    n_observables: int
    chan_offset: np.ndarray
    chan_count: np.ndarray
    comp_prob: np.ndarray
    comp_indptr: np.ndarray
    comp_dets: np.ndarray
    comp_obs: np.ndarray
    channels: list

    def component_symptom(self, comp: int) -> tuple[list[int], int]:
        a, b = self.comp_indptr[comp], self.comp_indptr[comp + 1]
        return self.comp_dets[a:b].tolist(), int(self.comp_obs[comp])


def build_symptom_table(c: Circuit, check: bool = True) -> SymptomTable:
    """Propagate every channel component alone and record what it flips."""
    if check:
        rep = validate_detectors(c)
        if not rep.ok:
            raise ValueError(
                f"nondeterministic detectors {rep.bad_detectors[:10]} / observables {rep.bad_observables}"
            )
    if len(c.observables) > 64:
        raise ValueError("at most 64 observables are supported")
    channels = circuit_channels(c)
    counts = np.array([len(ch.components) for ch in channels], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    n_comp = int(counts.sum())
    probs = np.array([p for ch in channels for p in ch.probs], dtype=np.float64)

    def hook(ci, _i, qubits, fx, fz):
        ch = channels[ci]
        base = offsets[ci]
        rows_x, cols_x, rows_z, cols_z = [], [], [], []
        for j, comp in enumerate(ch.components):
            for letter, q in zip(comp, qubits):
                px, pz = _PAULI_XZ[letter]
                if px:
                    rows_x.append(q)
                    cols_x.append(base + j)
                if pz:
                    rows_z.append(q)
                    cols_z.append(base + j)
        _set_column_bits(fx, np.array(rows_x, np.int64), np.array(cols_x, np.uint64))
        _set_column_bits(fz, np.array(rows_z, np.int64), np.array(cols_z, np.uint64))

    rec = propagate(c, max(n_comp, 1), noise_hook=hook)
    det, obs = records_to_parities(c, rec)
    indptr = np.zeros(n_comp + 1, dtype=np.int64)
    chunks = []
    comp_obs = np.zeros(n_comp, dtype=np.uint64)
    step = 64 * 256
    for start in range(0, max(n_comp, 1), step):
        w0, w1 = start // 64, (start + step) // 64
        ncols = min(step, n_comp - start)
        if ncols <= 0:
            break
        dbits = _columns_to_rows(np.ascontiguousarray(det[:, w0:w1]), ncols) if det.size else np.zeros((ncols, 0), bool)
        rows, cols = np.nonzero(dbits)
        indptr[start + 1:start + ncols + 1] = np.bincount(rows, minlength=ncols)
        chunks.append(cols.astype(np.int32))
        if obs.size:
            obits = _columns_to_rows(np.ascontiguousarray(obs[:, w0:w1]), ncols)
            weights = (_ONE << np.arange(obits.shape[1], dtype=np.uint64))
            comp_obs[start:start + ncols] = np.bitwise_or.reduce(
                np.where(obits, weights, np.uint64(0)), axis=1
            ) if obits.shape[1] else 0
    indptr = np.cumsum(indptr)
    dets = np.concatenate(chunks) if chunks else np.zeros(0, np.int32)
    return SymptomTable(
        c.n_detectors, len(c.observables), offsets, counts, probs, indptr, dets, comp_obs, channels
    )


# ---------------------------------------------------------------------------
# detector error model


@dataclass
class DetectorErrorModel:
    """Independent error mechanisms with their detector and observable flips."""

    n_detectors: int
    observables: list[str]
    probs: np.ndarray
    indptr: np.ndarray
    dets: np.ndarray
    obs_mask: np.ndarray
    detector_basis: list[str] = field(default_factory=list)
    detector_coords: list[tuple] = field(default_factory=list)
    observable_basis: list[str] = field(default_factory=list)
    provenance: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.probs)

    def mechanism(self, i: int) -> tuple[float, list[int], list[str]]:
        dets = self.dets[self.indptr[i]:self.indptr[i + 1]].tolist()
        obs = [name for b, name in enumerate(self.observables) if (int(self.obs_mask[i]) >> b) & 1]
        return float(self.probs[i]), dets, obs

    def mechanisms(self) -> Iterator[tuple[float, list[int], list[str]]]:
        for i in range(len(self)):
            yield self.mechanism(i)


def xor_probability(p1, p2):
    return p1 * (1 - p2) + p2 * (1 - p1)


def dem_from_symptoms(table: SymptomTable, c: Circuit) -> DetectorErrorModel:
    """Group components with identical symptoms and combine their probabilities."""
    n_comp = len(table.comp_prob)
    keys: dict[tuple, int] = {}
    probs: list[float] = []
    sets: list[tuple] = []
    masks: list[int] = []
    prov: list[tuple[int, str]] = []
    comp_chan = np.repeat(np.arange(len(table.channels)), table.chan_count)
    for comp in range(n_comp):
        p = float(table.comp_prob[comp])
        if p <= 0:
            continue
        dets = tuple(table.comp_dets[table.comp_indptr[comp]:table.comp_indptr[comp + 1]].tolist())
        mask = int(table.comp_obs[comp])
        if not dets and not mask:
            continue
        key = (dets, mask)
        idx = keys.get(key)
        if idx is None:
            keys[key] = len(probs)
            probs.append(p)
            sets.append(dets)
            masks.append(mask)
            ch = int(comp_chan[comp])
            prov.append((ch, table.channels[ch].components[comp - int(table.chan_offset[ch])]))
        else:
            probs[idx] = xor_probability(probs[idx], p)
    indptr = np.zeros(len(sets) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(s) for s in sets])
    flat = np.array([d for s in sets for d in s], dtype=np.int32)
    return DetectorErrorModel(
        c.n_detectors,
        [o.name for o in c.observables],
        np.array(probs),
        indptr,
        flat,
        np.array(masks, dtype=np.uint64),
        [d.basis for d in c.detectors],
        [d.coords for d in c.detectors],
        [o.basis for o in c.observables],
        prov,
    )


def extract_error_model(c: Circuit, check: bool = True) -> DetectorErrorModel:
    """Detector error model of ``c`` (requires deterministic detectors)."""
    return dem_from_symptoms(build_symptom_table(c, check=check), c)


# ---------------------------------------------------------------------------
# shot batches


_MAGIC = b"BBSHOT01"


@dataclass
class ShotBatch:
    """Detector and observable flips for a batch of shots (bit-packed rows)."""

    shots: int
    n_detectors: int
    n_observables: int
    det_bits: np.ndarray  # (shots, ceil(n_det/8)) uint8, little bit order
    obs_bits: np.ndarray  # (shots, ceil(n_obs/8)) uint8
    seed: int = 0

    @classmethod
    def from_dense(cls, dets: np.ndarray, obs: np.ndarray, seed: int = 0) -> "ShotBatch":
        dets = np.asarray(dets, dtype=bool)
        obs = np.asarray(obs, dtype=bool)
        return cls(
            dets.shape[0],
            dets.shape[1],
            obs.shape[1],
            np.packbits(dets, axis=1, bitorder="little"),
            np.packbits(obs, axis=1, bitorder="little"),
            seed,
        )

    def dense_detectors(self) -> np.ndarray:
        return np.unpackbits(self.det_bits, axis=1, bitorder="little", count=self.n_detectors).astype(bool)

    def dense_observables(self) -> np.ndarray:
        return np.unpackbits(self.obs_bits, axis=1, bitorder="little", count=self.n_observables).astype(bool)

    def to_bytes(self) -> bytes:
        head = _MAGIC + struct.pack("<QQQQ", self.shots, self.n_detectors, self.n_observables, self.seed)
        return head + self.det_bits.tobytes() + self.obs_bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ShotBatch":
        if data[:8] != _MAGIC:
            raise ValueError("not a shot batch file")
        shots, nd, no, seed = struct.unpack("<QQQQ", data[8:40])
        bd, bo = (nd + 7) // 8, (no + 7) // 8
        body = np.frombuffer(data, dtype=np.uint8, offset=40)
        if body.size != shots * (bd + bo):
            raise ValueError("truncated shot batch")
        det = body[: shots * bd].reshape(shots, bd).copy()
        obs = body[shots * bd:].reshape(shots, bo).copy()
        return cls(int(shots), int(nd), int(no), det, obs, int(seed))

    def to_csv(self) -> str:
        d = self.dense_detectors().astype(np.uint8)
        o = self.dense_observables().astype(np.uint8)
        head = ["shot"] + [f"D{i}" for i in range(self.n_detectors)] + [f"L{i}" for i in range(self.n_observables)]
        lines = [",".join(head)]
        for s in range(self.shots):
            lines.append(",".join([str(s)] + [str(v) for v in d[s]] + [str(v) for v in o[s]]))
        return "\n".join(lines) + "\n"

    @staticmethod
    def concatenate(batches: list["ShotBatch"]) -> "ShotBatch":
        first = batches[0]
        return ShotBatch(
            sum(b.shots for b in batches),
            first.n_detectors,
            first.n_observables,
            np.concatenate([b.det_bits for b in batches]),
            np.concatenate([b.obs_bits for b in batches]),
            first.seed,
        )


# ---------------------------------------------------------------------------
# sampling


def _bernoulli_positions(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Sorted indices in [0, n) where independent Bernoulli(p) trials succeed."""
    if p <= 0 or n <= 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    out = []
    pos = -1
    expected = n * p
    while True:
        chunk = int(expected + 6 * np.sqrt(expected) + 16)
        gaps = rng.geometric(p, size=chunk)
        steps = pos + np.cumsum(gaps)
        keep = steps[steps < n]
        out.append(keep)
        if keep.size < steps.size:
            break
        pos = int(steps[-1])
    return np.concatenate(out).astype(np.int64)


@dataclass
class _ChannelGroup:
    channels: np.ndarray
    total: float
    rel: np.ndarray


class ShotSampler:
    """Channel-level sampler over a precomputed :class:`SymptomTable`."""

    def __init__(self, table: SymptomTable):
        self.table = table
        groups: dict[tuple, list[int]] = {}
        for i, ch in enumerate(table.channels):
            key = (ch.total, ch.probs)
            groups.setdefault(key, []).append(i)
        self.groups = []
        for (total, probs), chans in sorted(groups.items(), key=lambda kv: kv[1][0]):
            if total <= 0:
                continue
            rel = np.array(probs) / total
            self.groups.append(_ChannelGroup(np.array(chans, dtype=np.int64), float(total), rel))

    def sample_block(self, shots: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Dense (shots x detectors) and (shots x observables) flip arrays."""
        t = self.table
        shot_parts, comp_parts = [], []
        for g in self.groups:
            pos = _bernoulli_positions(rng, len(g.channels) * shots, g.total)
            if pos.size == 0:
                continue
            ch = g.channels[pos // shots]
            shot = pos % shots
            if np.allclose(g.rel, g.rel[0]):
                j = rng.integers(len(g.rel), size=pos.size)
            else:
                j = rng.choice(len(g.rel), size=pos.size, p=g.rel)
            shot_parts.append(shot)
            comp_parts.append(t.chan_offset[ch] + j)
        dets = np.zeros((shots, t.n_detectors), dtype=np.uint8)
        obs_mask = np.zeros(shots, dtype=np.uint64)
        if shot_parts:
            shot = np.concatenate(shot_parts)
            comp = np.concatenate(comp_parts)
            start = t.comp_indptr[comp]
            length = t.comp_indptr[comp + 1] - start
            rep_shot = np.repeat(shot, length)
            offs = np.arange(length.sum()) - np.repeat(np.cumsum(length) - length, length)
            det_idx = t.comp_dets[np.repeat(start, length) + offs]
            np.bitwise_xor.at(dets, (rep_shot, det_idx), 1)
            np.bitwise_xor.at(obs_mask, shot, t.comp_obs[comp])
        obs = ((obs_mask[:, None] >> np.arange(t.n_observables, dtype=np.uint64)) & _ONE).astype(bool)
        return dets.astype(bool), obs

    def iter_batches(self, shots: int, seed: int, block_shots: int = BLOCK_SHOTS,
                     blocks: range | None = None) -> Iterator[tuple[int, ShotBatch]]:
        n_blocks = (shots + block_shots - 1) // block_shots
        for b in blocks if blocks is not None else range(n_blocks):
            size = min(block_shots, shots - b * block_shots)
            d, o = self.sample_block(size, block_rng(seed, b))
            yield b, ShotBatch.from_dense(d, o, seed)


def sample_shots(c: Circuit, shots: int, seed: int, table: SymptomTable | None = None) -> ShotBatch:
    """Sample detector/observable flips; independent of how blocks are distributed."""
    if shots < 0:
        raise ValueError("shot count must be non-negative")
    table = table if table is not None else build_symptom_table(c)
    sampler = ShotSampler(table)
    if shots == 0:
        return ShotBatch.from_dense(np.zeros((0, c.n_detectors)), np.zeros((0, len(c.observables))), seed)
    return ShotBatch.concatenate([b for _, b in sampler.iter_batches(shots, seed)])


def sample_frames(c: Circuit, shots: int, seed: int) -> ShotBatch:
    """Direct Monte Carlo: random faults pushed through the circuit as frames.

    Slower than :func:`sample_shots` but shares no precomputed symptoms, so
    it serves as an independent cross-check.
    """
    rng = np.random.default_rng([int(seed), 0x5A5A])
    channels = circuit_channels(c)

    def hook(ci, _i, qubits, fx, fz):
        ch = channels[ci]
        pos = _bernoulli_positions(rng, shots, ch.total)
        if pos.size == 0:
            return
        j = rng.choice(len(ch.components), size=pos.size, p=np.array(ch.probs) / ch.total)
        for k, comp in enumerate(ch.components):
            cols = pos[j == k].astype(np.uint64)
            if cols.size == 0:
                continue
            for letter, q in zip(comp, qubits):
                px, pz = _PAULI_XZ[letter]
                rows = np.full(cols.size, q, dtype=np.int64)
                if px:
                    _set_column_bits(fx, rows, cols)
                if pz:
                    _set_column_bits(fz, rows, cols)

    rec = propagate(c, shots, noise_hook=hook)
    det, obs = records_to_parities(c, rec)
    dbits = _columns_to_rows(det, shots) if det.size else np.zeros((shots, 0), bool)
    obits = _columns_to_rows(obs, shots) if obs.size else np.zeros((shots, 0), bool)
    return ShotBatch.from_dense(dbits, obits, seed)


def sample_dem(dem: DetectorErrorModel, shots: int, seed: int) -> ShotBatch:
    """Sample mechanisms of a detector error model independently."""
    rng = np.random.default_rng([int(seed), 0xDE11])
    dets = np.zeros((shots, dem.n_detectors), dtype=np.uint8)
    obs_mask = np.zeros(shots, dtype=np.uint64)
    for i in range(len(dem)):
        hit = _bernoulli_positions(rng, shots, float(dem.probs[i]))
        if hit.size == 0:
            continue
        for d in dem.dets[dem.indptr[i]:dem.indptr[i + 1]]:
            dets[hit, d] ^= 1
        obs_mask[hit] ^= dem.obs_mask[i]
    obs = ((obs_mask[:, None] >> np.arange(len(dem.observables), dtype=np.uint64)) & _ONE).astype(bool)
    return ShotBatch.from_dense(dets.astype(bool), obs, seed)


def forced_fault_flips(c: Circuit, faults: dict[int, str]) -> tuple[np.ndarray, np.ndarray]:
    """Detector and observable flips of a fixed set of faults via frame propagation."""
    channels = circuit_channels(c)

    def hook(ci, _i, qubits, fx, fz):
        comp = faults.get(ci)
        if comp is None:
            return
        for letter, q in zip(comp, qubits):
            px, pz = _PAULI_XZ[letter]
            if px:
                fx[q, 0] ^= _ONE
            if pz:
                fz[q, 0] ^= _ONE

    for ci, comp in faults.items():
        if ci >= len(channels) or len(comp) != len(channels[ci].qubits):
            raise ValueError(f"fault {comp!r} does not fit channel {ci}")
    rec = propagate(c, 1, noise_hook=hook)
    det, obs = records_to_parities(c, rec)
    d = (det[:, 0] & _ONE).astype(bool) if det.size else np.zeros(0, bool)
    o = (obs[:, 0] & _ONE).astype(bool) if obs.size else np.zeros(0, bool)
    return d, o

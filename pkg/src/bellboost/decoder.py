"""Minimum-weight matching with the complementary gap, and postselection.

For each check basis the error model is turned into a graph: nodes are the
detectors of that basis plus one virtual boundary node, and each edge is a
mechanism with weight ``-log p`` and a flag saying whether it flips the
logical observable decoded in that basis.

The complementary gap needs the lightest correction in *each* logical
class.  Flags are first gauged away: we look for node labels ``s`` with
``flag(u, v) = s(u) ^ s(v)`` on every internal edge (always possible when no
undetectable logical cycle exists).  The boundary then splits into ``B0``
(boundary edges whose flag equals ``s(v)``) and ``B1`` (the rest).  Any
correction for defect set ``T`` then has class ``XOR_{v in T} s(v)`` plus
the parity of its endpoints on ``B1``, so the two class weights are

    f(T)         min join of T with B0 free and B1 even
    f(T + {B1})  the same with B1 forced odd.

Both come from one shortest-path metric.  Defects split into clusters that
cannot profitably pair with each other (``D[i, j] >= b0[i] + b0[j]``), each
cluster is solved exactly by a subset dynamic program, and the B1 variant
is assembled from the per-cluster tables.  Shots with a cluster too big for
the table go to a sparse blossom solver.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .frames import DetectorErrorModel, xor_probability

BOUNDARY = -1
MAX_CLUSTER = 10
_MIN_WEIGHT = 1e-9


class DecompositionError(ValueError):
    """A mechanism could not be split into edges of the matching graph."""


def edge_weight(p: float) -> float:
    if not 0 < p <= 1:
        raise ValueError(f"edge probability must be in (0, 1], got {p}")
    return max(-math.log(p), _MIN_WEIGHT)


@dataclass
class DecodingGraph:
    """Matching graph of one check basis."""

    basis: str
    observable: str | None
    det_ids: np.ndarray
    u: np.ndarray
    v: np.ndarray  # BOUNDARY for boundary edges
    prob: np.ndarray
    flag: np.ndarray
    flag_conflicts: int = 0
    undetectable_prob: float = 0.0
    _metric: "GraphMetric | None" = field(default=None, repr=False)
    _matcher: object = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.det_ids)

    @property
    def weight(self) -> np.ndarray:
        return np.maximum(-np.log(self.prob), _MIN_WEIGHT)

    def local_index(self) -> dict[int, int]:
        return {int(d): i for i, d in enumerate(self.det_ids)}

    def metric(self) -> "GraphMetric":
        if self._metric is None:
            self._metric = GraphMetric.from_graph(self)
        return self._metric


def _gauge(n: int, u, v, flag) -> np.ndarray:
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for a, b, f in zip(u, v, flag):
        if b == BOUNDARY:
            continue
        adj[a].append((b, f))
        adj[b].append((a, f))
    s = np.full(n, -1, dtype=np.int64)
    for root in range(n):
        if s[root] >= 0:
            continue
        s[root] = 0
        queue = deque([root])
        while queue:
            a = queue.popleft()
            for b, f in adj[a]:
                want = s[a] ^ f
                if s[b] < 0:
                    s[b] = want
                    queue.append(b)
                elif s[b] != want:
                    raise ValueError(
                        "observable flags are not a consistent cut of the matching graph "
                        f"(cycle through nodes {a} and {b} flips the logical)"
                    )
    return s.astype(np.uint8)


@dataclass
class GraphMetric:
    """All-pairs shortest paths on detectors plus the split boundary.

    Node ``n`` is ``B1`` and node ``n + 1`` is ``B0``.
    """

    n: int
    dist: np.ndarray
    gauge: np.ndarray

    @property
    def b1(self) -> int:
        return self.n

    @property
    def b0(self) -> int:
        return self.n + 1

    @classmethod
    def from_graph(cls, g: DecodingGraph) -> "GraphMetric":
        n = g.n_nodes
        s = _gauge(n, g.u, g.v, g.flag)
        w = g.weight
        u = g.u.astype(np.int64)
        v = g.v.astype(np.int64).copy()
        bnd = v == BOUNDARY
        side = np.zeros(len(u), dtype=np.int64)
        side[bnd] = g.flag[bnd] ^ s[u[bnd]]
        v[bnd] = np.where(side[bnd] == 1, n, n + 1)
        # keep the lightest of parallel edges
        key = np.minimum(u, v) * (n + 2) + np.maximum(u, v)
        order = np.lexsort((w, key))
        first = np.ones(len(order), bool)
        first[1:] = key[order][1:] != key[order][:-1]
        sel = order[first]
        mat = coo_matrix((w[sel], (u[sel], v[sel])), shape=(n + 2, n + 2)).tocsr()
        dist = dijkstra(mat, directed=False)
        return cls(n, np.ascontiguousarray(dist), s)


def build_matching_graphs(dem: DetectorErrorModel) -> dict[str, DecodingGraph]:
    """Split the error model into one matching graph per check basis.

    Mechanisms touching at most two detectors of a basis become edges.
    Larger same-basis footprints are decomposed into existing edges when
    possible; otherwise :class:`DecompositionError` names the source fault.
    """
    basis_of = np.array(dem.detector_basis) if dem.detector_basis else np.array([""] * dem.n_detectors)
    bases = sorted(set(basis_of.tolist()) - {""})
    obs_bit: dict[str, int | None] = {}
    obs_name: dict[str, str | None] = {}
    for b in bases:
        hits = [i for i, ob in enumerate(dem.observable_basis) if ob == b]
        if len(hits) > 1:
            raise ValueError(f"more than one observable decoded in basis {b}")
        obs_bit[b] = hits[0] if hits else None
        obs_name[b] = dem.observables[hits[0]] if hits else None
    graphs = {}
    for b in bases:
        det_ids = np.flatnonzero(basis_of == b)
        local = {int(d): i for i, d in enumerate(det_ids)}
        bit = obs_bit[b]
        edges: dict[tuple[int, int], dict[int, float]] = {}
        hyper = []
        undetectable = 0.0
        for m in range(len(dem)):
            dets = [local[d] for d in dem.dets[dem.indptr[m]:dem.indptr[m + 1]].tolist() if d in local]
            f = 0 if bit is None else (int(dem.obs_mask[m]) >> bit) & 1
            p = float(dem.probs[m])
            if not dets:
                if f:
                    undetectable = xor_probability(undetectable, p)
                continue
            if len(dets) <= 2:
                key = (dets[0], dets[1]) if len(dets) == 2 else (dets[0], BOUNDARY)
                if key[1] != BOUNDARY and key[0] > key[1]:
                    key = (key[1], key[0])
                slot = edges.setdefault(key, {})
                slot[f] = xor_probability(slot.get(f, 0.0), p)
            else:
                hyper.append((m, sorted(dets), f, p))
        conflicts = 0
        chosen: dict[tuple[int, int], list] = {}
        for key, slot in edges.items():
            if len(slot) > 1:
                conflicts += 1
            f = max(slot, key=lambda k: slot[k])
            chosen[key] = [f, slot[f]]
        for m, dets, f, p in hyper:
            parts = _decompose(dets, f, chosen)
            if parts is None:
                ch, comp = dem.provenance[m] if dem.provenance else (-1, "?")
                raise DecompositionError(
                    f"mechanism {m} ({comp} on channel {ch}) hits {len(dets)} {b}-detectors "
                    "and cannot be split into graph edges"
                )
            for key in parts:
                chosen[key][1] = xor_probability(chosen[key][1], p)
        if conflicts:
            warnings.warn(f"{conflicts} {b}-edges carry both logical flags; kept the likelier one")
        keys = sorted(chosen)
        u = np.array([k[0] for k in keys], dtype=np.int64)
        v = np.array([k[1] for k in keys], dtype=np.int64)
        flag = np.array([chosen[k][0] for k in keys], dtype=np.uint8)
        prob = np.array([chosen[k][1] for k in keys], dtype=np.float64)
        graphs[b] = DecodingGraph(b, obs_name[b], det_ids, u, v, prob, flag, conflicts, undetectable)
    return graphs


def _decompose(dets: list[int], flag: int, edges) -> list[tuple[int, int]] | None:
    """Partition ``dets`` into existing edges whose flags XOR to ``flag``."""

    def rec(rest: tuple[int, ...], parity: int):
        if not rest:
            return [] if parity == flag else None
        i, tail = rest[0], rest[1:]
        opts = []
        if (i, BOUNDARY) in edges:
            opts.append(((i, BOUNDARY), tail))
        for j in tail:
            if (i, j) in edges:
                opts.append(((i, j), tuple(x for x in tail if x != j)))
        for key, nxt in opts:
            got = rec(nxt, parity ^ edges[key][0])
            if got is not None:
                return [key] + got
        return None

    return rec(tuple(dets), 0)


# ---------------------------------------------------------------------------
# exact matching kernel


@njit(cache=True)
def _solve_shot(dist, b1, b0, defs, max_cluster, table):
    k = defs.shape[0]
    parent = np.arange(k)
    for i in range(k):
        di = defs[i]
        for j in range(i + 1, k):
            dj = defs[j]
            if dist[di, dj] < dist[di, b0] + dist[dj, b0]:
                ri = i
                while parent[ri] != ri:
                    ri = parent[ri]
                rj = j
                while parent[rj] != rj:
                    rj = parent[rj]
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    root = np.empty(k, np.int64)
    for i in range(k):
        r = i
        while parent[r] != r:
            r = parent[r]
        root[i] = r
    # clusters whose even class is unreachable can only be closed by B1
    f_total = 0.0
    delta = dist[b1, b0]
    n_open = 0
    open_cost = np.inf
    members = np.empty(k, np.int64)
    for r in range(k):
        m = 0
        for i in range(k):
            if root[i] == r:
                members[m] = defs[i]
                m += 1
        if m == 0:
            continue
        if m > max_cluster:
            return np.inf, np.inf, True
        full = (1 << m) - 1
        table[0] = 0.0
        for mask in range(1, full + 1):
            i = 0
            while not (mask >> i) & 1:
                i += 1
            rest = mask ^ (1 << i)
            ci = members[i]
            best = dist[ci, b0] + table[rest]
            rr = rest
            while rr:
                j = 0
                while not (rr >> j) & 1:
                    j += 1
                rr ^= 1 << j
                val = dist[ci, members[j]] + table[rest ^ (1 << j)]
                if val < best:
                    best = val
            table[mask] = best
        fc = table[full]
        close = np.inf
        for i in range(m):
            cand = dist[b1, members[i]] + table[full ^ (1 << i)]
            if cand < close:
                close = cand
        if fc == np.inf:
            n_open += 1
            open_cost = close
        else:
            f_total += fc
            if close - fc < delta:
                delta = close - fc
    if n_open == 0:
        return f_total, f_total + delta, False
    if n_open == 1:
        return np.inf, f_total + open_cost, False
    return np.inf, np.inf, False


@njit(cache=True)
def _solve_batch(dist, gauge, b1, b0, indptr, idx, max_cluster, w_even, w_odd, sigma, fallback):
    table = np.empty(1 << max_cluster, np.float64)
    for s in range(indptr.shape[0] - 1):
        defs = idx[indptr[s]:indptr[s + 1]]
        sg = 0
        for i in range(defs.shape[0]):
            sg ^= gauge[defs[i]]
        sigma[s] = sg
        a, b, fb = _solve_shot(dist, b1, b0, defs, max_cluster, table)
        w_even[s] = a
        w_odd[s] = b
        fallback[s] = fb


def _sparse_matcher(g: DecodingGraph):
    """pymatching graph with B1 as an ordinary node and B0 as its boundary."""
    import pymatching

    m = g.metric()
    n = g.n_nodes
    match = pymatching.Matching()
    for a, b, f, wt in zip(g.u, g.v, g.flag, g.weight):
        if b == BOUNDARY:
            if f ^ m.gauge[a]:
                match.add_edge(int(a), n, weight=float(wt), merge_strategy="smallest-weight")
            else:
                match.add_boundary_edge(int(a), weight=float(wt), merge_strategy="smallest-weight")
        else:
            match.add_edge(int(a), int(b), weight=float(wt), merge_strategy="smallest-weight")
    return match


def _blossom_class_weights(g: DecodingGraph, defs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Sparse blossom on the detector graph for shots the table cannot handle.

    pymatching discretizes edge weights internally, so only the pairing is
    taken from it; weights are re-summed from the float distance matrix.
    """
    if g._matcher is None:
        g._matcher = _sparse_matcher(g)
    match = g._matcher
    m = g.metric()
    n = g.n_nodes
    has_b1 = match.num_detectors > n
    w_even = np.empty(len(defs))
    w_odd = np.full(len(defs), np.inf)
    synd = np.zeros(match.num_detectors, dtype=np.uint8)

    def weight(active):
        if len(active) and active.max() >= len(synd):  # defect on a node without edges
            return np.inf
        synd[:] = 0
        synd[active] = 1
        try:
            pairs = match.decode_to_matched_dets_array(synd)
        except ValueError:  # this class cannot be reached
            return np.inf
        a = pairs[:, 0]
        b = np.where(pairs[:, 1] < 0, m.b0, pairs[:, 1])
        return float(m.dist[a, b].sum())

    for row, d in enumerate(defs):
        d = np.asarray(d, np.int64)
        w_even[row] = weight(d)
        if has_b1:
            w_odd[row] = weight(np.append(d, n))
    return w_even, w_odd


@dataclass
class GapResult:
    prediction: np.ndarray  # predicted logical flip per shot
    weight: np.ndarray  # weight of the chosen correction
    weight_other: np.ndarray  # lightest correction in the other class
    gap: np.ndarray


GAP_DECIMALS = 9


def _finish(w_even, w_odd, sigma) -> GapResult:
    w_class0 = np.where(sigma == 0, w_even, w_odd)
    w_class1 = np.where(sigma == 0, w_odd, w_even)
    # equal-weight classes reached by different summation orders must tie
    with np.errstate(invalid="ignore"):
        diff = np.round(w_class1 - w_class0, GAP_DECIMALS)
    diff = np.where(np.isnan(diff), np.inf, diff)
    pred = (diff < 0).astype(np.uint8)
    chosen = np.minimum(w_class0, w_class1)
    other = np.maximum(w_class0, w_class1)
    gap = np.abs(diff)
    return GapResult(pred, chosen, other, gap)


def decode_batch(g: DecodingGraph, indptr: np.ndarray, idx: np.ndarray,
                 max_cluster: int = MAX_CLUSTER) -> GapResult:
    """Decode many shots given as CSR lists of local defect indices."""
    m = g.metric()
    shots = len(indptr) - 1
    w_even = np.empty(shots)
    w_odd = np.empty(shots)
    sigma = np.empty(shots, np.uint8)
    fb = np.zeros(shots, np.bool_)
    _solve_batch(m.dist, m.gauge, m.b1, m.b0, np.asarray(indptr, np.int64), np.asarray(idx, np.int64),
                 max_cluster, w_even, w_odd, sigma, fb)
    if fb.any():
        rows = np.flatnonzero(fb)
        defs = [idx[indptr[r]:indptr[r + 1]] for r in rows]
        a, b = _blossom_class_weights(g, defs)
        w_even[rows], w_odd[rows] = a, b
    return _finish(w_even, w_odd, sigma)


def complementary_gap(g: DecodingGraph, defects) -> tuple[int, float, float, float]:
    """Return (predicted flip, chosen weight, other-class weight, gap) for one shot."""
    local = g.local_index()
    loc = np.array(sorted(local[int(d)] for d in defects), dtype=np.int64)
    res = decode_batch(g, np.array([0, len(loc)]), loc)
    return int(res.prediction[0]), float(res.weight[0]), float(res.weight_other[0]), float(res.gap[0])


def decode_mwpm(g: DecodingGraph, defects) -> tuple[int, float]:
    """Minimum-weight correction for the given detector ids: (observable flip, weight)."""
    pred, w, _, _ = complementary_gap(g, defects)
    return pred, w


def blossom_weight(dist: np.ndarray, b0: int, nodes) -> float:
    """Minimum-weight perfect matching on the complete graph of ``nodes`` with
    one private boundary copy each (exact, via networkx's blossom)."""
    import networkx as nx

    nodes = list(nodes)
    k = len(nodes)
    if k == 0:
        return 0.0
    G = nx.Graph()
    for i in range(k):
        G.add_edge(("d", i), ("b", i), weight=float(dist[nodes[i], b0]))
        for j in range(i + 1, k):
            G.add_edge(("d", i), ("d", j), weight=float(dist[nodes[i], nodes[j]]))
            G.add_edge(("b", i), ("b", j), weight=0.0)
    matching = nx.min_weight_matching(G)
    return float(sum(G[a][b]["weight"] for a, b in matching))


# ---------------------------------------------------------------------------
# shots -> defects


def defects_csr(dense_dets: np.ndarray, det_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """CSR of local defect indices for the detector subset ``det_ids``."""
    sub = dense_dets[:, det_ids]
    rows, cols = np.nonzero(sub)
    indptr = np.zeros(sub.shape[0] + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(rows, minlength=sub.shape[0]))
    return indptr, cols.astype(np.int64)


# ---------------------------------------------------------------------------
# postselection


@dataclass
class GapRecord:
    """Per-shot decoding outcome for the two Bell pair observables."""

    gap_x: np.ndarray
    gap_z: np.ndarray
    pred_xx: np.ndarray
    pred_zz: np.ndarray
    true_xx: np.ndarray
    true_zz: np.ndarray

    @property
    def shots(self) -> int:
        return len(self.gap_x)

    @property
    def gap(self) -> np.ndarray:
        return np.minimum(self.gap_x, self.gap_z)

    @property
    def wrong(self) -> np.ndarray:
        return (self.pred_xx != self.true_xx) | (self.pred_zz != self.true_zz)

    @staticmethod
    def concatenate(records: list["GapRecord"]) -> "GapRecord":
        return GapRecord(*(np.concatenate([getattr(r, f) for r in records]) for f in
                           ("gap_x", "gap_z", "pred_xx", "pred_zz", "true_xx", "true_zz")))

    def to_csv(self, offset: int = 0) -> str:
        lines = ["shot,gap_x,gap_z,gap,pred_xx,pred_zz,true_xx,true_zz"]
        g = self.gap
        for i in range(self.shots):
            lines.append(
                f"{i + offset},{fmt_float(self.gap_x[i])},{fmt_float(self.gap_z[i])},{fmt_float(g[i])},"
                f"{int(self.pred_xx[i])},{int(self.pred_zz[i])},{int(self.true_xx[i])},{int(self.true_zz[i])}"
            )
        return "\n".join(lines) + "\n"


def fmt_float(v: float) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


@dataclass
class PostselectionStats:
    threshold: float
    total: int
    discarded: int
    valid: int
    wrong: int

    @property
    def accepted(self) -> int:
        return self.valid + self.wrong

    @property
    def q0(self) -> float:
        return self.accepted / self.total if self.total else 0.0

    @property
    def q0_se(self) -> float:
        q = self.q0
        return math.sqrt(q * (1 - q) / self.total) if self.total else 0.0

    @property
    def p_l(self) -> float:
        return self.wrong / self.accepted if self.accepted else float("nan")

    @property
    def p_l_se(self) -> float:
        if not self.accepted:
            return float("nan")
        p = self.p_l
        return math.sqrt(p * (1 - p) / self.accepted)


def postselect(gaps: np.ndarray, wrong: np.ndarray, threshold: float) -> PostselectionStats:
    """Keep shots whose gap is at least ``threshold``.

    A threshold of zero keeps everything; a zero gap is below any positive
    threshold.
    """
    gaps = np.asarray(gaps, float)
    wrong = np.asarray(wrong, bool)
    keep = gaps >= threshold if threshold > 0 else np.ones(len(gaps), bool)
    n_wrong = int(np.count_nonzero(wrong & keep))
    n_keep = int(np.count_nonzero(keep))
    return PostselectionStats(float(threshold), len(gaps), len(gaps) - n_keep, n_keep - n_wrong, n_wrong)


def sweep_thresholds(gaps, wrong, thresholds) -> list[PostselectionStats]:
    return [postselect(gaps, wrong, t) for t in thresholds]


def thresholds_for_discard(gaps: np.ndarray, discard_fractions) -> list[float]:
    """Thresholds whose achieved discard fraction is closest to each target.

    Gaps have atoms (every defect-free shot shares one gap), so an exact
    fraction is often unreachable.  Ties go to the smaller discard; a
    target of 0 keeps everything.
    """
    gaps = np.sort(np.asarray(gaps, float))
    values = np.unique(gaps)
    discarded = np.searchsorted(gaps, values, side="left") / max(len(gaps), 1)
    out = []
    for f in discard_fractions:
        if f <= 0 or len(gaps) == 0:
            out.append(0.0)
            continue
        j = int(np.argmin(np.abs(discarded - f)))
        out.append(float(values[j]) if discarded[j] > 0 else 0.0)
    return out

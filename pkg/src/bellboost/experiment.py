"""Sample-and-decode runs with results independent of the worker count.

Shots are cut into fixed-size blocks; block ``b`` always draws from the
stream keyed by ``(seed, b)`` and results are reassembled in block order,
so any number of worker processes produces identical records.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, parse, serialize
from .decoder import GapRecord, build_matching_graphs, decode_batch, defects_csr
from .frames import BLOCK_SHOTS, ShotSampler, build_symptom_table, dem_from_symptoms

DECODER_CALL_LIMIT = 1e9


class SafetyLimitError(RuntimeError):
    pass


@dataclass
class DecoderContext:
    circuit: Circuit
    sampler: ShotSampler
    graphs: dict
    obs_index: dict[str, int]

    @classmethod
    def build(cls, circuit: Circuit, check: bool = True) -> "DecoderContext":
        table = build_symptom_table(circuit, check=check)
        dem = dem_from_symptoms(table, circuit)
        graphs = build_matching_graphs(dem)
        for g in graphs.values():
            g.metric()
        names = {o.name: i for i, o in enumerate(circuit.observables)}
        for key in ("XX", "ZZ"):
            if key not in names:
                raise ValueError(f"circuit has no {key} observable")
        return cls(circuit, ShotSampler(table), graphs, names)

    def run_block(self, block: int, shots: int, seed: int) -> GapRecord:
        from .frames import block_rng

        d, o = self.sampler.sample_block(shots, block_rng(seed, block))
        res = {}
        for basis in ("X", "Z"):
            g = self.graphs.get(basis)
            if g is None:
                res[basis] = None
                continue
            indptr, idx = defects_csr(d, g.det_ids)
            res[basis] = decode_batch(g, indptr, idx)

        def pick(basis, field):
            r = res[basis]
            if r is None:
                return np.zeros(shots) if field == "gap" else np.zeros(shots, np.uint8)
            return getattr(r, "gap" if field == "gap" else "prediction")

        return GapRecord(
            pick("X", "gap").astype(float),
            pick("Z", "gap").astype(float),
            pick("X", "pred").astype(np.uint8),
            pick("Z", "pred").astype(np.uint8),
            o[:, self.obs_index["XX"]].astype(np.uint8),
            o[:, self.obs_index["ZZ"]].astype(np.uint8),
        )


_WORKER_CTX: DecoderContext | None = None


def _init_worker(text: str) -> None:
    global _WORKER_CTX
    _WORKER_CTX = DecoderContext.build(parse(text), check=False)


def _worker_block(args):
    block, size, seed = args
    return block, _WORKER_CTX.run_block(block, size, seed)


def decoder_calls(shots: int, n_graphs: int = 2) -> int:
    """Matching problems solved: two logical classes per basis per shot."""
    return shots * n_graphs * 2


def run_experiment(circuit: Circuit, shots: int, seed: int, workers: int = 1,
                   allow_large: bool = False, context: DecoderContext | None = None,
                   block_shots: int = BLOCK_SHOTS) -> GapRecord:
    if shots <= 0:
        raise ValueError("shot count must be positive")
    if decoder_calls(shots) > DECODER_CALL_LIMIT and not allow_large:
        raise SafetyLimitError(
            f"{decoder_calls(shots):.3g} decoder calls exceed {DECODER_CALL_LIMIT:.0e}; "
            "pass the acknowledgement flag to run anyway"
        )
    n_blocks = math.ceil(shots / block_shots)
    jobs = [(b, min(block_shots, shots - b * block_shots), seed) for b in range(n_blocks)]
    if workers <= 1 or n_blocks == 1:
        ctx = context if context is not None else DecoderContext.build(circuit)
        parts = [ctx.run_block(b, size, s) for b, size, s in jobs]
    else:
        text = serialize(circuit)
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(text,)) as ex:
            done = dict(ex.map(_worker_block, jobs))
        parts = [done[b] for b in range(n_blocks)]
    return GapRecord.concatenate(parts)

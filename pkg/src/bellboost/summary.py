"""Pooling of sweep rows across seeds and threshold-crossing estimates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .decoder import PostselectionStats, fmt_float

SWEEP_COLUMNS = [
    "protocol", "d_bell", "d_s", "p", "p_bell", "seed", "shots", "discard_target", "threshold",
    "q0", "q0_se", "p_l", "p_l_se", "discarded", "valid", "wrong",
]
SUMMARY_COLUMNS = [
    "protocol", "d_bell", "d_s", "p", "p_bell", "discard_target", "threshold", "seeds", "shots",
    "q0", "q0_se", "inverse_q0", "p_l", "p_l_se", "discarded", "valid", "wrong",
]
NO_DATA = "# no data"


def sweep_row(protocol: str, d_bell, d_s: int, p: float, p_bell: float, seed: int,
              discard_target, st: PostselectionStats) -> list[str]:
    return [
        protocol, "" if d_bell is None else str(d_bell), str(d_s), fmt_float(p), fmt_float(p_bell),
        str(seed), str(st.total), "" if discard_target is None else fmt_float(discard_target),
        fmt_float(st.threshold), fmt_float(st.q0), fmt_float(st.q0_se), fmt_float(st.p_l),
        fmt_float(st.p_l_se), str(st.discarded), str(st.valid), str(st.wrong),
    ]


def write_rows(columns: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    if not rows:
        buf.write(NO_DATA + "\n")
    return buf.getvalue()


def read_rows(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


@dataclass
class PooledPoint:
    protocol: str
    d_bell: int | None
    d_s: int
    p: float
    p_bell: float
    discard_target: float | None
    threshold: float | None  # None when seeds used different thresholds
    seeds: int
    stats: PostselectionStats

    def row(self) -> list[str]:
        st = self.stats
        inv = 1 / st.q0 if st.q0 > 0 else math.inf
        return [
            self.protocol, "" if self.d_bell is None else str(self.d_bell), str(self.d_s), fmt_float(self.p),
            fmt_float(self.p_bell), "" if self.discard_target is None else fmt_float(self.discard_target),
            "" if self.threshold is None else fmt_float(self.threshold), str(self.seeds), str(st.total),
            fmt_float(st.q0), fmt_float(st.q0_se), fmt_float(inv), fmt_float(st.p_l), fmt_float(st.p_l_se),
            str(st.discarded), str(st.valid), str(st.wrong),
        ]


def pool_rows(rows: list[dict[str, str]]) -> list[PooledPoint]:
    """Sum shot counts over seeds for each (protocol, distances, noise, selector).

    Rows selected by a discard target pool by target even when the
    per-seed thresholds differ; explicit thresholds pool by value.  The
    standard errors of the pooled point are binomial on the summed counts.
    """
    groups: dict[tuple, list[dict[str, str]]] = {}
    for r in rows:
        missing = [c for c in SWEEP_COLUMNS if c not in r]
        if missing:
            raise ValueError(f"sweep row lacks columns {missing}")
        sel = ("discard", float(r["discard_target"])) if r["discard_target"] else ("threshold", float(r["threshold"]))
        key = (r["protocol"], int(r["d_bell"]) if r["d_bell"] else -1, int(r["d_s"]), float(r["p"]),
               float(r["p_bell"]), sel)
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups):
        rs = groups[key]
        proto, d_bell, d_s, p, p_bell, (kind, val) = key
        thresholds = {float(r["threshold"]) for r in rs}
        total = sum(int(r["shots"]) for r in rs)
        disc = sum(int(r["discarded"]) for r in rs)
        valid = sum(int(r["valid"]) for r in rs)
        wrong = sum(int(r["wrong"]) for r in rs)
        thr = thresholds.pop() if len(thresholds) == 1 else None
        st = PostselectionStats(thr if thr is not None else float("nan"), total, disc, valid, wrong)
        out.append(PooledPoint(proto, None if d_bell < 0 else d_bell, d_s, p, p_bell,
                               val if kind == "discard" else None, thr, len({r["seed"] for r in rs}), st))
    return out


def estimate_crossing(x, y_small, y_large) -> float | None:
    """First crossing of two error curves, interpolated linearly in log p_L.

    Below threshold the larger code wins (``y_large < y_small``); the
    crossing is where that order flips.  Returns None without a sign change.
    """
    x = np.asarray(x, float)
    a = np.asarray(y_small, float)
    b = np.asarray(y_large, float)
    ok = (a > 0) & (b > 0)
    x, a, b = x[ok], a[ok], b[ok]
    order = np.argsort(x)
    x, a, b = x[order], a[order], b[order]
    diff = np.log(b) - np.log(a)
    for i in range(len(x) - 1):
        if diff[i] < 0 <= diff[i + 1]:
            t = -diff[i] / (diff[i + 1] - diff[i])
            return float(x[i] + t * (x[i + 1] - x[i]))
    return None


CROSSING_COLUMNS = ["protocol", "p", "d_small", "d_large", "p_bell_crossing"]


def surgery_crossings(points: list[PooledPoint]) -> list[list[str]]:
    """Crossings between consecutive distances of the no-discard surgery curves."""
    curves: dict[float, dict[int, dict[float, float]]] = {}
    for pt in points:
        if pt.protocol != "surgery" or pt.stats.discarded:
            continue
        curves.setdefault(pt.p, {}).setdefault(pt.d_s, {})[pt.p_bell] = pt.stats.p_l
    rows = []
    for p in sorted(curves):
        ds = sorted(curves[p])
        for d1, d2 in zip(ds, ds[1:]):
            xs = sorted(set(curves[p][d1]) & set(curves[p][d2]))
            cross = estimate_crossing(xs, [curves[p][d1][x] for x in xs], [curves[p][d2][x] for x in xs])
            rows.append(["surgery", fmt_float(p), str(d1), str(d2),
                         "no data" if cross is None else fmt_float(cross)])
    return rows

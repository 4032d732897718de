"""Command-line entry point.

Every subcommand accepts ``--config file.json`` whose keys mirror the long
flag names (dashes become underscores); flags given on the command line
override the file.  Outputs land in ``--out``, else ``$BELLBOOST_OUTPUT_DIR``,
else ``./bellboost-out``, next to a ``manifest.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

from . import cost, summary
from .builders import build_boosting_circuit, build_surgery_circuit
from .circuit import NoiseModel, serialize
from .codes import CssCodeSpec, standard_form, verify_code
from .decoder import fmt_float, postselect, thresholds_for_discard
from .distill import (
    DistillationStage,
    analyze_parity_distillation,
    fit_power_law,
    schedule_pipeline,
    synthesize_distillation,
)
from .experiment import DecoderContext, SafetyLimitError, decoder_calls, DECODER_CALL_LIMIT, run_experiment

log = logging.getLogger("bellboost")

DEFAULTS: dict[str, dict] = {
    "boost": {
        "d_bell": [3, 5], "d_s": 11, "p": 1e-3, "p_bell": [0.01], "shots": 10000, "seeds": [1],
        "thresholds": [], "discard": [0.0, 0.1, 0.25, 0.5, 0.7], "workers": 1, "records": False,
        "idle": False, "idle_p": None, "allow_large": False,
    },
    "surgery": {
        "d_s": [3, 5, 7], "p": 1e-3, "p_bell": [0.1, 0.15, 0.2], "shots": 10000, "seeds": [1],
        "thresholds": [0.0], "discard": [], "workers": 1, "records": False,
        "idle": False, "idle_p": None, "allow_large": False,
    },
    "distill": {"m": [2, 3, 4, 5], "p_in": 0.01, "max_weight": 3, "code": None},
    "llv": {"protocol": "boosting", "d_bell": [3, 5, 7], "d_s": 19, "R": [1.0], "q0": 1.0,
            "n": 10, "k": 8, "r": 1},
    "compare": {"target": 1e-12, "p_bell": 0.01, "R": [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
                "d_s": 19, "p_local": 1e-3, "boost_table": None, "distill_m": 5, "distill_c": 0.69,
                "distill_e": 1.36, "concat": None},
    "fit": {"kind": "boosting", "inputs": [], "window": [0.01, 0.08]},
    "summarize": {"inputs": []},
    "circuit": {"protocol": "boost", "d_bell": 3, "d_s": 5, "p": 0.0, "p_bell": 0.0},
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        sys.exit(2)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bellboost", description="Logical Bell pair protocols: simulation and cost models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seeded=False):
        p.add_argument("--config", help="JSON file of option values")
        p.add_argument("--out", help="output directory")
        if seeded:
            p.add_argument("--seeds", type=int, nargs="+")
            p.add_argument("--shots", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument("--thresholds", type=float, nargs="*", help="explicit gap thresholds")
            p.add_argument("--discard", type=float, nargs="*", help="target discard fractions")
            p.add_argument("--records", action="store_const", const=True, help="write per-shot gap records")
            p.add_argument("--idle", action="store_const", const=True, help="enable idle noise")
            p.add_argument("--idle-p", type=float)
            p.add_argument("--allow-large", action="store_const", const=True,
                           help=f"acknowledge runs above {DECODER_CALL_LIMIT:.0e} decoder calls")

    p = sub.add_parser("boost", help="entanglement boosting sweep")
    common(p, True)
    p.add_argument("--d-bell", type=int, nargs="+")
    p.add_argument("--d-s", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--p-bell", type=float, nargs="+")

    p = sub.add_parser("surgery", help="distributed lattice surgery sweep")
    common(p, True)
    p.add_argument("--d-s", type=int, nargs="+")
    p.add_argument("--p", type=float)
    p.add_argument("--p-bell", type=float, nargs="+")

    p = sub.add_parser("distill", help="parity-code distillation analysis")
    common(p)
    p.add_argument("--m", type=int, nargs="+")
    p.add_argument("--p-in", type=float)
    p.add_argument("--max-weight", type=int)
    p.add_argument("--code", help="CSS code JSON to synthesize and schedule")

    p = sub.add_parser("llv", help="space-time volume per logical Bell pair")
    common(p)
    p.add_argument("--protocol", choices=["boosting", "surgery", "pipelined"])
    p.add_argument("--d-bell", type=int, nargs="+")
    p.add_argument("--d-s", type=int)
    p.add_argument("--R", type=float, nargs="+")
    p.add_argument("--q0", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--r", type=int)

    p = sub.add_parser("compare", help="cheapest protocol per Bell pair rate")
    common(p)
    p.add_argument("--target", type=float)
    p.add_argument("--p-bell", type=float)
    p.add_argument("--R", type=float, nargs="+")
    p.add_argument("--d-s", type=int)
    p.add_argument("--p-local", type=float)
    p.add_argument("--boost-table", help="JSON list of boosting fits (as written by 'fit')")
    p.add_argument("--distill-m", type=int)
    p.add_argument("--distill-c", type=float)
    p.add_argument("--distill-e", type=float)
    p.add_argument("--concat", help="JSON object of named stage sequences")

    p = sub.add_parser("fit", help="fit scaling laws to sweep CSVs")
    common(p)
    p.add_argument("--kind", choices=["boosting", "surgery"])
    p.add_argument("--inputs", nargs="+")
    p.add_argument("--window", type=float, nargs=2)

    p = sub.add_parser("summarize", help="pool sweep CSVs across seeds")
    common(p)
    p.add_argument("--inputs", nargs="+")

    p = sub.add_parser("circuit", help="write a protocol circuit in text form")
    common(p)
    p.add_argument("--protocol", choices=["boost", "surgery"])
    p.add_argument("--d-bell", type=int)
    p.add_argument("--d-s", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--p-bell", type=float)
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CliError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(doc, dict):
            raise CliError("config must be a JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise CliError(f"unknown config keys for '{args.command}': {unknown}")
        cfg.update(doc)
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def output_dir(args) -> Path:
    out = Path(args.out or os.environ.get("BELLBOOST_OUTPUT_DIR") or "bellboost-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("bellboost", "numpy", "scipy", "numba", "pymatching", "networkx"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _write(out: Path, name: str, text: str, written: list[str]) -> None:
    (out / name).write_text(text)
    written.append(name)


def _noise(cfg, p_bell) -> NoiseModel:
    idle_p = cfg["idle_p"] if cfg["idle_p"] is not None else cfg["p"]
    return NoiseModel(cfg["p"], p_bell, _bool(cfg["idle"]), idle_p if _bool(cfg["idle"]) else 0.0)


def _check_sampling(cfg) -> None:
    if cfg["shots"] <= 0:
        raise CliError("shots must be positive")
    if cfg["workers"] < 1:
        raise CliError("workers must be at least 1")
    total = decoder_calls(cfg["shots"]) * len(cfg["seeds"])
    if total > DECODER_CALL_LIMIT and not _bool(cfg["allow_large"]):
        raise SafetyLimitError(f"{total:.3g} decoder calls per configuration exceed {DECODER_CALL_LIMIT:.0e}; "
                               "rerun with --allow-large")
    for f in cfg["discard"]:
        if not 0 <= f < 1:
            raise CliError(f"discard fraction {f} outside [0, 1)")


def _run_points(protocol: str, points, cfg, out: Path, written: list[str]) -> None:
    _check_sampling(cfg)
    rows = []
    for d_bell, d_s, p_bell, circ in points:
        ctx = DecoderContext.build(circ) if cfg["workers"] <= 1 else None
        for seed in cfg["seeds"]:
            t0 = time.perf_counter()
            rec = run_experiment(circ, cfg["shots"], seed, cfg["workers"], allow_large=True, context=ctx)
            log.info("%s d_bell=%s d_s=%s p_bell=%s seed=%s: %.1fs", protocol, d_bell, d_s, p_bell, seed,
                     time.perf_counter() - t0)
            gap, wrong = rec.gap, rec.wrong
            for t in cfg["thresholds"]:
                rows.append(summary.sweep_row(protocol, d_bell, d_s, cfg["p"], p_bell, seed, None,
                                              postselect(gap, wrong, t)))
            for f, t in zip(cfg["discard"], thresholds_for_discard(gap, cfg["discard"])):
                rows.append(summary.sweep_row(protocol, d_bell, d_s, cfg["p"], p_bell, seed, f,
                                              postselect(gap, wrong, t)))
            if _bool(cfg["records"]):
                tag = f"{protocol}_db{d_bell}_" if d_bell is not None else f"{protocol}_"
                name = f"records_{tag}ds{d_s}_pb{fmt_float(p_bell)}_seed{seed}.csv"
                _write(out, name, rec.to_csv(), written)
    _write(out, f"{protocol}.csv", summary.write_rows(summary.SWEEP_COLUMNS, rows), written)


def cmd_boost(cfg, out, written):
    pts = []
    for d_bell in cfg["d_bell"]:
        for p_bell in cfg["p_bell"]:
            pts.append((d_bell, cfg["d_s"], p_bell, build_boosting_circuit(d_bell, cfg["d_s"], _noise(cfg, p_bell))))
    _run_points("boosting", pts, cfg, out, written)


def cmd_surgery(cfg, out, written):
    pts = []
    for d_s in cfg["d_s"]:
        for p_bell in cfg["p_bell"]:
            pts.append((None, d_s, p_bell, build_surgery_circuit(d_s, _noise(cfg, p_bell))))
    _run_points("surgery", pts, cfg, out, written)


def cmd_distill(cfg, out, written):
    rows, coefs = [], []
    for m in cfg["m"]:
        res = analyze_parity_distillation(m, max_weight=cfg["max_weight"])
        c = res.leading_coefficient
        coefs.append(c)
        rows.append([str(m), str(res.n), str(res.k), fmt_float(c), fmt_float(cfg["p_in"]),
                     fmt_float(res.success_probability(cfg["p_in"])), fmt_float(res.p_out(cfg["p_in"])),
                     str(res.undetected_weight1_logical), str(res.undetected_weight2_logical)])
    cols = ["m", "n", "k", "leading_coefficient", "p_in", "success", "p_out", "undetected_w1", "undetected_w2"]
    _write(out, "distill.csv", summary.write_rows(cols, rows), written)
    doc = {"leading_coefficients": dict(zip(map(str, cfg["m"]), coefs))}
    if len(cfg["m"]) >= 2:
        a, e = fit_power_law(cfg["m"], coefs)
        doc["power_law"] = {"c": a, "e": e}
    if cfg["code"]:
        spec = CssCodeSpec.from_json(Path(cfg["code"]).read_text())
        report = verify_code(spec)
        if report.commutation_violations:
            raise CliError(f"code {spec.name!r} has non-commuting checks")
        circ = synthesize_distillation(standard_form(spec.h_x, spec.h_z))
        sched = schedule_pipeline(circ)
        doc["circuit"] = {
            "n": circ.n, "k": circ.k, "r": circ.r, "qubit_order": circ.qubit_order,
            "stage1": circ.stage1, "stage2": circ.stage2,
            "schedule": [{"direction": s.direction, "moves": s.moves, "gates": s.gates} for s in sched.steps],
            "layer_counts": {str(k): v for k, v in sched.layer_counts().items()},
            "class_bounds": sched.class_bounds(),
        }
    _write(out, "distill.json", json.dumps(doc, indent=2, sort_keys=True) + "\n", written)


def cmd_llv(cfg, out, written):
    if cfg["protocol"] == "pipelined":
        v = cost.pipelined_volume(cfg["n"], cfg["k"], cfg["r"], cfg["d_s"])
        cols = ["n", "k", "r", "d_s", "volume"]
        text = summary.write_rows(cols, [[str(cfg["n"]), str(cfg["k"]), str(cfg["r"]), str(cfg["d_s"]), fmt_float(v)]])
        _write(out, "llv.csv", text, written)
        return
    reports = []
    for R in cfg["R"]:
        if cfg["protocol"] == "boosting":
            reports += [cost.llv_boosting(d, cfg["d_s"], R, cfg["q0"]) for d in cfg["d_bell"]]
        else:
            reports.append(cost.llv_surgery(cfg["d_s"], R))
    _write(out, "llv.csv", cost.cost_rows_csv(reports), written)


def _load_boost_table(path) -> list[cost.ScalingFit]:
    doc = json.loads(Path(path).read_text())
    fits = doc["fits"] if isinstance(doc, dict) else doc
    return [cost.ScalingFit(float(f["alpha"]), float(f["gamma"]), float(f["p_th"]), q0=float(f["q0"]),
                            threshold=f.get("threshold")) for f in fits]


def _load_concat(path) -> dict:
    doc = json.loads(Path(path).read_text())
    return {name: [DistillationStage(**st) for st in stages] for name, stages in doc.items()}


def cmd_compare(cfg, out, written):
    table = _load_boost_table(cfg["boost_table"]) if cfg["boost_table"] else cost.reference_boosting_table()
    models = cost.ProtocolModels(
        table, cost.DistillationModel(cfg["distill_m"], cfg["distill_c"], cfg["distill_e"]),
        p_local=cfg["p_local"], d_s=cfg["d_s"],
        concat=_load_concat(cfg["concat"]) if cfg["concat"] else {},
    )
    rows = cost.compare_protocols(cfg["target"], cfg["p_bell"], cfg["R"], models)
    _write(out, "compare.csv", cost.cost_rows_csv(rows), written)
    best = {}
    for r in rows:
        key = fmt_float(r.R)
        if key not in best or r.v_total < best[key]["v_total"]:
            best[key] = r.to_dict()
    doc = {"rows": [r.to_dict() for r in rows], "cheapest": best}
    _write(out, "compare.json", json.dumps(doc, indent=2, sort_keys=True, default=fmt_float) + "\n", written)


def _read_inputs(paths) -> list[dict[str, str]]:
    rows = []
    for p in paths:
        try:
            rows += summary.read_rows(Path(p).read_text())
        except OSError as e:
            raise CliError(f"cannot read {p}: {e}") from e
    return rows


def cmd_fit(cfg, out, written):
    pts = summary.pool_rows(_read_inputs(cfg["inputs"]))
    if cfg["kind"] == "boosting":
        by_sel: dict = {}
        for pt in pts:
            if pt.protocol != "boosting":
                continue
            sel = ("discard", pt.discard_target) if pt.discard_target is not None else ("threshold", pt.threshold)
            by_sel.setdefault(sel, []).append(pt)
        fits = []
        for (kind, val), group in sorted(by_sel.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            data = [(g.d_bell, g.p_bell, g.stats.p_l, g.stats.p_l_se) for g in group]
            try:
                f = cost.fit_boosting_scaling(data, tuple(cfg["window"]) if cfg["window"] else None)
            except ValueError as e:
                log.warning("skipping %s=%s: %s", kind, val, e)
                continue
            q0 = sum(g.stats.q0 for g in group) / len(group)
            fits.append({"selector": kind, "value": val, "q0": q0, "alpha": f.alpha, "gamma": f.gamma,
                         "p_th": f.p_th, "ci": f.ci, "residual": f.residual, "n_points": f.n_points,
                         "threshold": val if kind == "threshold" else None})
        doc = {"kind": "boosting", "fits": fits}
    else:
        data = [(pt.d_s, pt.p, pt.p_bell, pt.stats.p_l) for pt in pts
                if pt.protocol == "surgery" and not pt.stats.discarded]
        f = cost.fit_surgery_scaling(data)
        doc = {"kind": "surgery", "kappa": f.kappa, "eta": f.eta, "alpha_c": f.alpha_c, "ci": f.ci,
               "p_th_bell": f.p_th_bell, "p_th_local": f.p_th_local, "residual": f.residual}
    _write(out, "fit.json", json.dumps(doc, indent=2, sort_keys=True) + "\n", written)


def cmd_summarize(cfg, out, written):
    pts = summary.pool_rows(_read_inputs(cfg["inputs"]))
    _write(out, "summary.csv", summary.write_rows(summary.SUMMARY_COLUMNS, [p.row() for p in pts]), written)
    _write(out, "crossings.csv", summary.write_rows(summary.CROSSING_COLUMNS, summary.surgery_crossings(pts)),
           written)


def cmd_circuit(cfg, out, written):
    noise = NoiseModel(cfg["p"], cfg["p_bell"])
    if cfg["protocol"] == "boost":
        c = build_boosting_circuit(cfg["d_bell"], cfg["d_s"], noise)
        name = f"boost_db{cfg['d_bell']}_ds{cfg['d_s']}.txt"
    else:
        c = build_surgery_circuit(cfg["d_s"], noise)
        name = f"surgery_ds{cfg['d_s']}.txt"
    _write(out, name, serialize(c), written)


COMMANDS = {
    "boost": cmd_boost, "surgery": cmd_surgery, "distill": cmd_distill, "llv": cmd_llv,
    "compare": cmd_compare, "fit": cmd_fit, "summarize": cmd_summarize, "circuit": cmd_circuit,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args)
        out = output_dir(args)
        written: list[str] = []
        COMMANDS[args.command](cfg, out, written)
    except SafetyLimitError as e:
        _emit_error("safety_limit", str(e))
        return 3
    except (CliError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as e:
        _emit_error(type(e).__name__, str(e))
        return 1
    manifest = {
        "command": args.command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seeds": cfg.get("seeds"),
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "outputs": written,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    print(json.dumps({"status": "ok", "out": str(out), "outputs": written}))
    return 0


if __name__ == "__main__":
    sys.exit(main())

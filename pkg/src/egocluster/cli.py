"""``egocluster`` command line: cluster, diagnose, correct, simulate, oracle-check.

Settings come from an optional TOML file (``--config``); command-line flags
override it.  Exit codes: 0 success, 1 quality gate failed, 2 usage/data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .bias_correction import ArmStats, PopulationSizes, SampleStats, backtest_report, lift_and_significance, readout_table
from .clustering import build_solution
from .diagnostics import diagnose, summary_table
from .errors import EgoClusterError, SchemaError
from .export import (
    canonical_json,
    commit_outputs,
    read_solution,
    sha256_file,
    solution_manifest,
    solution_to_bytes,
    timestamp,
)
from .graph_model import (
    DEFAULT_MIN_EGOS,
    EdgeSchema,
    NetworkSnapshot,
    NetworkType,
    build_network,
    ingest_edges,
    restrict_egos,
    write_edges,
)
from .oracle import single_alter_case, run_oracle_check, tie_case
from .simulator import EffectModel, SimConfig, generate_graph, run_comparison

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_GATE, EXIT_USAGE = 0, 1, 2


class UsageError(EgoClusterError):
    pass


# -- config plumbing ---------------------------------------------------------

def _load_config(args) -> dict:
    if not args.config:
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    section = args.command.replace("-", "_")
    merged = {k: v for k, v in data.items() if not isinstance(v, dict)}
    merged.update(data.get(section, {}))
    return merged


def _resolve(args, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(defaults)
    file_cfg = _load_config(args)
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config key(s): {sorted(unknown)}")
    cfg.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    for k in keys:
        if cfg.get(k) in (None, "", []):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg)).hexdigest()


def _run_manifest(command: str, cfg: dict, inputs: list, outputs: dict[str, bytes], started: str) -> bytes:
    digests = {name: hashlib.sha256(data).hexdigest() for name, data in sorted(outputs.items())}
    return canonical_json({
        "tool": "egocluster",
        "tool_version": __version__,
        "command": command,
        "config": cfg,
        "config_hash": _config_hash(cfg),
        "seed": cfg.get("seed"),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": digests,
        "timestamps": {"started": started, "finished": timestamp()},
    })


def _check_inputs(*paths) -> list:
    out = []
    for p in paths:
        if p is None:
            continue
        if not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")
        out.append(p)
    return out


def _schema(cfg: dict) -> EdgeSchema:
    return EdgeSchema(delimiter=cfg.get("delimiter"), default_kind=cfg.get("default_kind"))


def _slice(snap: NetworkSnapshot, nt: NetworkType | None, *, window: bool = True) -> NetworkSnapshot:
    if nt is None:
        return snap
    if not window:
        nt = NetworkType(nt.kind, 10**9)
    return build_network(snap, nt)


def _emit(fmt: str, text: str, obj) -> None:
    if fmt == "json":
        sys.stdout.write(canonical_json(obj).decode())
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------

CLUSTER_DEFAULTS = {
    "input": None, "t14": None, "network_types": [], "seed": None, "treatment_fraction": 0.5,
    "ramp_fraction": 0.10, "id_mode": "string", "delimiter": None, "default_kind": None,
    "error_budget": 100, "ego_list": None, "min_egos": DEFAULT_MIN_EGOS, "workers": 1,
    "loss_gate": 0.4, "out_dir": None, "format": "text", "per_ego": False,
}


def cmd_cluster(args) -> int:
    started = timestamp()
    cfg = _resolve(args, CLUSTER_DEFAULTS)
    _require(cfg, "input", "seed", "out_dir", "network_types")
    inputs = _check_inputs(cfg["input"], cfg["t14"], cfg["ego_list"])
    network_types = sorted({NetworkType.parse(t) for t in cfg["network_types"]}, key=lambda n: n.sort_key)
    seed = int(cfg["seed"])

    base = ingest_edges(cfg["input"], _schema(cfg), cfg["id_mode"], error_budget=cfg["error_budget"], label="T0")
    t14_base = None
    if cfg["t14"]:
        t14_base = ingest_edges(cfg["t14"], _schema(cfg), cfg["id_mode"], error_budget=cfg["error_budget"], label="T14")
    if cfg["ego_list"]:
        ids = [line.strip() for line in Path(cfg["ego_list"]).read_text().splitlines() if line.strip()]
        if cfg["id_mode"] == "integer":
            ids = [int(x) for x in ids]
        base = restrict_egos(base, ids, min_egos=cfg["min_egos"])

    files: dict[str, bytes] = {"ingest_report.json": canonical_json(base.report.to_dict() if base.report else {})}
    runs = []
    gate_failures = []
    for nt in network_types:
        snap = _slice(base, nt)
        sol = build_solution(snap, seed, cfg["treatment_fraction"], network_type=nt, workers=cfg["workers"])
        t14 = _slice(t14_base, nt, window=False) if t14_base is not None else None
        diag = diagnose(sol, snap, t14, ramp_fraction=cfg["ramp_fraction"], network_type=nt)
        runs.append((nt, diag))
        name = f"assignments_{nt.slug}.csv"
        data = solution_to_bytes(sol)
        files[name] = data
        sol_cfg = {k: cfg[k] for k in ("seed", "treatment_fraction", "id_mode")} | {"network_type": str(nt)}
        files[f"assignments_{nt.slug}.manifest.json"] = canonical_json(solution_manifest(sol, name, data, sol_cfg))
        files[f"diagnostics_{nt.slug}.json"] = canonical_json(diag.to_dict(per_ego=cfg["per_ego"]))
        if diag.loss_rate_t0 > cfg["loss_gate"]:
            gate_failures.append(f"{nt}: loss rate {diag.loss_rate_t0:.3f} > gate {cfg['loss_gate']}")

    table = summary_table(runs)
    files["summary.txt"] = table.to_text().encode()
    files["summary.json"] = table.to_json().encode() + b"\n"
    files["manifest.json"] = _run_manifest("cluster", cfg, inputs, files, started)
    commit_outputs(cfg["out_dir"], files)
    _emit(cfg["format"], table.to_text(), json.loads(table.to_json()))
    if gate_failures:
        for msg in gate_failures:
            print(f"quality gate: {msg}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


DIAGNOSE_DEFAULTS = {
    "solution": None, "input": None, "t14": None, "network_type": None, "id_mode": "string",
    "delimiter": None, "default_kind": None, "error_budget": 100, "ramp_fraction": 0.10,
    "out_dir": None, "format": "text", "per_ego": False, "seed": None,
}


def cmd_diagnose(args) -> int:
    started = timestamp()
    cfg = _resolve(args, DIAGNOSE_DEFAULTS)
    _require(cfg, "solution", "input", "out_dir")
    inputs = _check_inputs(cfg["solution"], cfg["input"], cfg["t14"])
    nt = NetworkType.parse(cfg["network_type"]) if cfg["network_type"] else None
    sol = read_solution(cfg["solution"], id_mode=cfg["id_mode"], network_type=nt)
    t0 = ingest_edges(cfg["input"], _schema(cfg), cfg["id_mode"], error_budget=cfg["error_budget"], label="T0")
    t0 = _slice(t0, nt) if t0.events is not None else t0
    t14 = None
    if cfg["t14"]:
        t14 = ingest_edges(cfg["t14"], _schema(cfg), cfg["id_mode"], error_budget=cfg["error_budget"], label="T14")
        t14 = _slice(t14, nt, window=False) if t14.events is not None else t14
    diag = diagnose(sol, t0, t14, ramp_fraction=cfg["ramp_fraction"], network_type=nt)
    report = diag.to_dict(per_ego=cfg["per_ego"])
    files = {"diagnostics.json": canonical_json(report)}
    text = ""
    if nt is not None:
        table = summary_table([(nt, diag)])
        text = table.to_text()
        files["summary.txt"] = text.encode()
        files["summary.json"] = table.to_json().encode() + b"\n"
    else:
        text = json.dumps(report, indent=2) + "\n"
    files["manifest.json"] = _run_manifest("diagnose", cfg, inputs, files, started)
    commit_outputs(cfg["out_dir"], files)
    _emit(cfg["format"], text, report)
    return EXIT_OK


CORRECT_DEFAULTS = {
    "stats": None, "n_e": None, "n_1": None, "n_r": None, "n_t": None, "n_c": None,
    "alpha": 0.05, "power": 0.8, "metric": "metric", "out_dir": None, "format": "text",
}


def _arm(obj: dict, where: str) -> ArmStats:
    try:
        return ArmStats(**{f.name: obj[f.name] for f in fields(ArmStats)})
    except KeyError as exc:
        raise SchemaError(f"{where} is missing {exc.args[0]!r}", field=f"{where}.{exc.args[0]}") from None
    except TypeError:
        raise SchemaError(f"{where} must be an object", field=where) from None


def cmd_correct(args) -> int:
    started = timestamp()
    cfg = _resolve(args, CORRECT_DEFAULTS)
    _require(cfg, "stats", "out_dir")
    inputs = _check_inputs(cfg["stats"])
    try:
        doc = json.loads(Path(cfg["stats"]).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"stats file is not valid JSON: {exc}", field="stats") from None
    for key in ("treatment", "control"):
        if key not in doc:
            raise SchemaError(f"stats file lacks {key!r}", field=key)
    st, sc = _arm(doc["treatment"], "treatment"), _arm(doc["control"], "control")
    sizes_doc = dict(doc.get("sizes", {}))
    for flag, key in (("n_e", "n_E"), ("n_1", "n_1"), ("n_r", "n_R"), ("n_t", "n_T"), ("n_c", "n_C")):
        if cfg[flag] is not None:
            sizes_doc[key] = cfg[flag]
    for key in ("n_E", "n_1"):
        if key not in sizes_doc:
            raise SchemaError(f"population size {key} missing (stats 'sizes' or --{key.lower().replace('_', '-')})", field=f"sizes.{key}")
    sizes = PopulationSizes(**{k: sizes_doc.get(k) for k in ("n_E", "n_1", "n_R", "n_T", "n_C")})

    readout = lift_and_significance(st, sc, sizes, alpha=cfg["alpha"], power=cfg["power"])
    out = readout.to_dict()
    out["config"].update({"sizes": asdict(sizes), "metric": cfg["metric"]})
    files = {"readout.json": canonical_json(out), "readout.txt": readout_table(readout).encode()}
    text = readout_table(readout)
    if "full_population" in doc:
        fp = doc["full_population"]
        try:
            ft = SampleStats(**fp["treatment"])
            fc = SampleStats(**fp["control"])
        except (KeyError, TypeError):
            raise SchemaError("full_population needs treatment/control {mean, var, n}", field="full_population") from None
        bt = backtest_report(ft, fc, st, sc, sizes, alpha=cfg["alpha"], power=cfg["power"], metric=cfg["metric"])
        files["backtest.json"] = canonical_json(bt.to_dict())
        files["backtest.txt"] = bt.to_text().encode()
        text += "\n" + bt.to_text()
    files["manifest.json"] = _run_manifest("correct", cfg, inputs, files, started)
    commit_outputs(cfg["out_dir"], files)
    _emit(cfg["format"], text, out)
    return EXIT_OK


SIMULATE_DEFAULTS = {
    "seed": None, "n_seeds": 50, "ego_count": 200, "alter_count": 2000, "mean_degree": 3.0,
    "degree_exponent": 2.5, "affinity": 0.8, "weight_mean": 5.0, "weight_shape": 2.0,
    "base_rate": 1.0, "effect_size": 0.1, "response": "linear", "noise_sd": 0.05, "saturation": 3.0,
    "alpha": 0.05, "leakage": "control", "export_graph": False, "out_dir": None, "format": "text",
}


def cmd_simulate(args) -> int:
    started = timestamp()
    cfg = _resolve(args, SIMULATE_DEFAULTS)
    _require(cfg, "seed", "out_dir")
    seed = int(cfg["seed"])
    sim = SimConfig(**{f.name: cfg[f.name] for f in fields(SimConfig) if f.name != "seed"}, seed=seed)
    model = EffectModel(**{f.name: cfg[f.name] for f in fields(EffectModel)})
    seeds = range(seed, seed + int(cfg["n_seeds"]))
    report = run_comparison(sim, model, seeds, alpha=cfg["alpha"], leakage=cfg["leakage"])
    doc = report.to_dict()
    files = {"simulation_report.json": canonical_json(doc)}
    lines = [f"{'design':<14}{'mean estimate':>15}{'bias':>12}{'power':>8}{'null FPR':>10}"]
    for design, s in doc["summary"].items():
        lines.append(f"{design:<14}{s['mean_estimate']:>15.5f}{s['bias']:>12.5f}{s['power']:>8.3f}{s['null_fpr']:>10.3f}")
    text = f"true ATE {model.true_ate:.5f} over {len(seeds)} seeds\n" + "\n".join(lines) + "\n"
    files["summary.txt"] = text.encode()
    if cfg["export_graph"]:
        import io

        buf = io.StringIO()
        write_edges(generate_graph(sim), buf)
        files[f"graph_seed{seed}.csv"] = buf.getvalue().encode()
    files["manifest.json"] = _run_manifest("simulate", cfg, [], files, started)
    commit_outputs(cfg["out_dir"], files)
    _emit(cfg["format"], text, doc["summary"])
    return EXIT_OK


ORACLE_DEFAULTS = {
    "n": 200, "seed": 0, "max_alters": 12, "max_egos": 6, "max_weight": 9,
    "fixture": "random", "out_dir": None, "format": "text",
}


def cmd_oracle_check(args) -> int:
    started = timestamp()
    cfg = _resolve(args, ORACLE_DEFAULTS)
    fixture = cfg["fixture"]
    if fixture == "random":
        rep = run_oracle_check(cfg["n"], seed=cfg["seed"], max_alters=cfg["max_alters"],
                               max_egos=cfg["max_egos"], max_weight=cfg["max_weight"])
        doc = rep.to_dict()
        ok = rep.all_passed
        text = f"oracle check: {rep.n_pass}/{len(rep.cases)} instances match the brute-force minimum ({doc['instances_with_ties']} with ties)\n"
    elif fixture in ("single-alter", "tie"):
        case = single_alter_case(cfg["seed"]) if fixture == "single-alter" else tie_case(cfg["seed"])
        ok = case.passed
        doc = {"fixture": fixture, "n_instances": 1, "n_pass": int(ok), "all_passed": ok,
               "algorithm_loss": case.algorithm_loss, "oracle_loss": case.oracle_loss, "tie_flag": case.ties > 0}
        text = (f"oracle check [{fixture}]: {'pass' if ok else 'FAIL'} (loss {case.algorithm_loss:g} vs "
                f"minimum {case.oracle_loss:g}{', ties broken' if case.ties else ''})\n")
    else:
        raise UsageError(f"unknown fixture {fixture!r}")
    if cfg["out_dir"]:
        files = {"oracle_report.json": canonical_json(doc)}
        files["manifest.json"] = _run_manifest("oracle-check", cfg, [], files, started)
        commit_outputs(cfg["out_dir"], files)
    _emit(cfg["format"], text, doc)
    return EXIT_OK if ok else EXIT_GATE


# -- parser ------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file; flags override it")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--format", choices=("json", "text"))


def _ingest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--id-mode", dest="id_mode", choices=("string", "integer"))
    p.add_argument("--delimiter")
    p.add_argument("--default-kind", dest="default_kind", help="kind for files without a kind column")
    p.add_argument("--error-budget", dest="error_budget", type=int)
    p.add_argument("--ramp-fraction", dest="ramp_fraction", type=float)
    p.add_argument("--per-ego", dest="per_ego", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egocluster", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="build ego-cluster solutions and assignment files")
    _common(p)
    _ingest_flags(p)
    p.add_argument("--input", help="T0 edge-list file")
    p.add_argument("--t14", help="optional T14 edge-list file for 14-day diagnostics")
    p.add_argument("--network-type", dest="network_types", action="append", help="kind:days, repeatable")
    p.add_argument("--seed", type=int)
    p.add_argument("--treatment-fraction", dest="treatment_fraction", type=float)
    p.add_argument("--ego-list", dest="ego_list", help="file with one custom ego id per line")
    p.add_argument("--min-egos", dest="min_egos", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--loss-gate", dest="loss_gate", type=float)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("diagnose", help="quality metrics for an assignment file")
    _common(p)
    _ingest_flags(p)
    p.add_argument("--solution")
    p.add_argument("--input", help="T0 edge-list file")
    p.add_argument("--t14")
    p.add_argument("--network-type", dest="network_type")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("correct", help="bias-corrected readout for leftover-traffic experiments")
    _common(p)
    p.add_argument("--stats", help="JSON with treatment/control reserve+leftover stats")
    for flag in ("n-e", "n-1", "n-r", "n-t", "n-c"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--power", type=float)
    p.add_argument("--metric")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("simulate", help="compare ego-cluster and naive designs on synthetic graphs")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    for name in ("ego_count", "alter_count"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    for name in ("mean_degree", "degree_exponent", "affinity", "weight_mean", "weight_shape",
                 "base_rate", "effect_size", "noise_sd", "saturation", "alpha"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    p.add_argument("--response", choices=("linear", "saturating"))
    p.add_argument("--leakage", choices=("control", "random"))
    p.add_argument("--export-graph", dest="export_graph", action="store_true", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle-check", help="verify minimal loss against exhaustive search")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-alters", dest="max_alters", type=int)
    p.add_argument("--max-egos", dest="max_egos", type=int)
    p.add_argument("--max-weight", dest="max_weight", type=int)
    p.add_argument("--fixture", choices=("random", "single-alter", "tie"))
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code = args.func(args)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return code
    except (EgoClusterError, ValueError, OSError, tomllib.TOMLDecodeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, SchemaError) and exc.field:
            err["field"] = exc.field
        print(json.dumps(err), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

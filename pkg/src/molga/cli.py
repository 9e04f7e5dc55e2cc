"""Command-line surface: configuration, reference management, run
orchestration, and post-hoc analysis.

Run configs are single JSON documents; unknown keys are rejected and every
default is echoed into run_report.json. A determinism hash (SHA-256 over
the timing-stripped report) makes reproducibility checkable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Any

from . import analysis, tasks
from .codec import decode, encode, parse_genotype
from .discriminator import save_checkpoint
from .errors import MolgaError
from .evolver import EvolverConfig, GenerationLog, RunResult, run
from .graph import fingerprint, parse_smiles
from .props import penalized_logp
from .reference import ReferenceSet, load_reference, synthetic_reference
from .schedules import BetaSchedule


class ConfigError(MolgaError):
    """Invalid run configuration."""


_TASKS = ("unconstrained", "adaptive_dt", "constrained_similarity",
          "property_target", "logp_qed", "random_baseline", "beta_sweep")

_DEFAULTS: dict[str, Any] = {
    "task": "unconstrained",
    "seed": 0,
    "reference": None,  # path string, {"synthetic": N}, or None for the bundle
    "population_size": 500,
    "generations": 100,
    "beta": 0.0,
    "use_discriminator": None,  # None: implied by beta/task
    "adaptive": {"low": 0.0, "high": 1000.0, "window": 20, "epsilon": 1e-3},
    "elite_count": 1,
    "parent_selection": "uniform-survivors",
    "top_fraction": 0.2,
    "max_canonical_len": 81,
    "max_genotype_len": 100,
    "archive_k": 50,
    "snapshot_every": 0,
    "threads": 1,
    "output_dir": None,
    "initial_population": None,  # genotype text file; cycled up to size
    "constrained": {"delta": 0.4, "n_molecules": 50, "reference_smiles": None},
    "property_target": {"targets": None, "n_targets": 100},
    "logp_qed": {"w_j": 1.0, "w_qed": 10.0},
    "random_baseline": {"n_samples": 10000},
    "beta_sweep": {"betas": [0.0, 10.0, 50.0], "seeds_per_beta": 3},
}


def bundled_reference_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "reference_1k.smi")


def parse_config(doc: dict) -> dict:
    """Validate a config document and materialize every default."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    out: dict[str, Any] = {}
    for key, default in _DEFAULTS.items():
        if isinstance(default, dict) and key in doc:
            sub = doc[key]
            if not isinstance(sub, dict):
                raise ConfigError(f"{key!r} must be an object")
            unknown = set(sub) - set(default)
            if unknown:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
            out[key] = {**default, **sub}
        else:
            out[key] = doc.get(key, default)
    unknown = set(doc) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if out["task"] not in _TASKS:
        raise ConfigError(f"unknown task {out['task']!r}; expected one of {_TASKS}")
    if not isinstance(out["seed"], int):
        raise ConfigError("seed must be an integer")
    for key in ("population_size", "generations", "max_canonical_len",
                "max_genotype_len", "archive_k", "snapshot_every", "threads",
                "elite_count"):
        if not isinstance(out[key], int) or out[key] < 0:
            raise ConfigError(f"{key} must be a non-negative integer")
    if out["population_size"] < 1:
        raise ConfigError("population_size must be >= 1")
    if out["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if out["parent_selection"] not in ("uniform-survivors", "top-fraction"):
        raise ConfigError(f"unknown parent_selection {out['parent_selection']!r}")
    delta = out["constrained"]["delta"]
    if not (0 <= delta <= 1):
        raise ConfigError("constrained.delta must be in [0, 1]")
    if not out["beta_sweep"]["betas"]:
        raise ConfigError("beta_sweep.betas must be non-empty")
    return out


def load_config_reference(config: dict) -> tuple[ReferenceSet, dict]:
    source = config["reference"]
    if source is None:
        path = bundled_reference_path()
        ref, report = load_reference(path)
        info = {"path": path, "usable": report.n_usable, "failed": report.n_failed}
    elif isinstance(source, dict) and "synthetic" in source:
        n = int(source["synthetic"])
        ref = synthetic_reference(n, seed=config["seed"])
        info = {"synthetic": n}
    elif isinstance(source, str):
        if not os.path.exists(source):
            raise ConfigError(f"reference file not found: {source}")
        ref, report = load_reference(source)
        info = {"path": source, "usable": report.n_usable, "failed": report.n_failed}
    else:
        raise ConfigError("reference must be a path, {\"synthetic\": N}, or null")
    return ref, info


def determinism_hash(report: dict) -> str:
    """SHA-256 over the report minus timing and execution-infrastructure
    fields (thread count, output paths) that cannot affect results."""
    stripped = {k: v for k, v in report.items() if k not in ("timing", "determinism_hash")}
    if isinstance(stripped.get("config"), dict):
        cfg = {k: v for k, v in stripped["config"].items()
               if k not in ("threads", "output_dir")}
        stripped["config"] = cfg
    blob = json.dumps(stripped, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _load_initial_population(path: str, population_size: int):
    genotypes = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                genotypes.append(parse_genotype(line))
    if not genotypes:
        raise ConfigError(f"no genotypes in {path}")
    return [genotypes[i % len(genotypes)] for i in range(population_size)]


def _evolver_config(config: dict, schedule: BetaSchedule,
                    use_discriminator: bool) -> EvolverConfig:
    initial = None
    if config["initial_population"]:
        if not os.path.exists(config["initial_population"]):
            raise ConfigError(
                f"initial population file not found: {config['initial_population']}")
        initial = _load_initial_population(config["initial_population"],
                                           config["population_size"])
    return EvolverConfig(
        population_size=config["population_size"],
        generations=config["generations"],
        schedule=schedule,
        use_discriminator=use_discriminator,
        elite_count=config["elite_count"],
        parent_selection=config["parent_selection"],
        top_fraction=config["top_fraction"],
        max_canonical_len=config["max_canonical_len"],
        max_genotype_len=config["max_genotype_len"],
        archive_k=config["archive_k"],
        seed=config["seed"],
        threads=config["threads"],
        snapshot_every=config["snapshot_every"],
        initial_genotypes=initial,
    )


def _archive_json(result: RunResult) -> list[dict]:
    return [
        {"canonical": e.canonical, "genotype": e.genotype_text,
         "score": e.score, "record": e.record.to_dict()}
        for e in result.archive
    ]


def _write_outputs(out_dir: str, report: dict, result: RunResult | None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    if result is not None:
        with open(os.path.join(out_dir, "generations.csv"), "w") as fh:
            fh.write(GenerationLog.CSV_HEADER + "\n")
            for log in result.logs:
                fh.write(log.csv_row() + "\n")
        if result.model is not None:
            save_checkpoint(result.model, os.path.join(out_dir, "discriminator.json"))
        if result.snapshots:
            snap_dir = os.path.join(out_dir, "snapshots")
            os.makedirs(snap_dir, exist_ok=True)
            for gen, rows in sorted(result.snapshots.items()):
                with open(os.path.join(snap_dir, f"gen_{gen:05d}.txt"), "w") as fh:
                    for genotype_text, _, _ in rows:
                        fh.write(genotype_text + "\n")
    report["determinism_hash"] = determinism_hash(report)
    with open(os.path.join(out_dir, "run_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)


def run_task(config: dict, out_dir: str | None) -> dict:
    """Execute the configured task; returns the run report."""
    t_start = time.time()
    ref, ref_info = load_config_reference(config)
    task = config["task"]
    report: dict[str, Any] = {"config": config, "reference": ref_info, "task": task}
    result: RunResult | None = None

    if task == "unconstrained":
        beta = float(config["beta"])
        use_d = config["use_discriminator"]
        if use_d is None:
            use_d = beta != 0.0
        cfg = _evolver_config(config, BetaSchedule.const(beta), use_d)
        result = run(cfg, ref)
        report["result"] = {
            "best_j": result.best_trace[-1],
            "best": _archive_json(result)[:5],
            "best_trace": result.best_trace,
            "beta_trace": result.beta_trace,
        }
    elif task == "adaptive_dt":
        ad = config["adaptive"]
        schedule = BetaSchedule.adaptive(ad["low"], ad["high"], ad["window"], ad["epsilon"])
        cfg = _evolver_config(config, schedule, True)
        result = run(cfg, ref)
        report["result"] = {
            "best_j": result.best_trace[-1],
            "best": _archive_json(result)[:5],
            "best_trace": result.best_trace,
            "beta_trace": result.beta_trace,
            "first_trigger": tasks.first_trigger_generation(result, ad["high"]),
        }
    elif task == "constrained_similarity":
        c = config["constrained"]
        if c["reference_smiles"]:
            graph = parse_smiles(c["reference_smiles"])
            res = tasks.run_constrained(
                graph, ref, delta=c["delta"],
                population_size=config["population_size"],
                generations=config["generations"], seed=config["seed"],
                max_canonical_len=config["max_canonical_len"],
                threads=config["threads"])
            report["result"] = res.to_dict()
        else:
            batch = tasks.run_constrained_batch(
                ref, n_molecules=c["n_molecules"], delta=c["delta"],
                population_size=config["population_size"],
                generations=config["generations"], seed=config["seed"],
                threads=config["threads"])
            report["result"] = batch.to_dict()
    elif task == "property_target":
        p = config["property_target"]
        if p["targets"] is not None:
            t = tasks.PropertyTargets(*[float(x) for x in p["targets"]])
            res = tasks.run_property_target(
                t, ref, population_size=config["population_size"],
                generations=config["generations"], seed=config["seed"],
                max_canonical_len=config["max_canonical_len"],
                threads=config["threads"])
            report["result"] = res.to_dict()
        else:
            batch = tasks.run_property_target_batch(
                ref, n_targets=p["n_targets"],
                population_size=config["population_size"],
                generations=config["generations"], seed=config["seed"],
                threads=config["threads"])
            report["result"] = batch.to_dict()
    elif task == "logp_qed":
        w = config["logp_qed"]
        res = tasks.run_logp_qed(
            ref, w_j=w["w_j"], w_qed=w["w_qed"],
            population_size=config["population_size"],
            generations=config["generations"], seed=config["seed"],
            max_canonical_len=config["max_canonical_len"],
            threads=config["threads"], archive_k=config["archive_k"])
        result = res.run
        report["result"] = {
            "best": _archive_json(result)[:5],
            "archive_scatter": res.archive_scatter,
        }
    elif task == "random_baseline":
        rb = config["random_baseline"]
        res = tasks.run_random_baseline(
            ref, rb["n_samples"], seed=config["seed"],
            max_canonical_len=config["max_canonical_len"],
            max_genotype_len=config["max_genotype_len"])
        report["result"] = res.to_dict()
    elif task == "beta_sweep":
        bs = config["beta_sweep"]
        res = tasks.run_beta_sweep(
            ref, [float(b) for b in bs["betas"]],
            seeds_per_beta=bs["seeds_per_beta"],
            population_size=config["population_size"],
            generations=config["generations"], seed=config["seed"],
            max_canonical_len=config["max_canonical_len"],
            threads=config["threads"])
        report["result"] = res.to_dict()
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "beta_sweep.csv"), "w") as fh:
                fh.write("beta,generation,mean_j,mean_d\n")
                for row in res.rows:
                    for gen, (mj, md) in enumerate(zip(row.mean_j_trace, row.mean_d_trace)):
                        fh.write(f"{row.beta:g},{gen},{mj:.6f},{md:.6f}\n")
    report["timing"] = {"wall_seconds": time.time() - t_start}
    if out_dir:
        _write_outputs(out_dir, report, result)
    else:
        report["determinism_hash"] = determinism_hash(report)
    return report


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    config = parse_config(doc)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.threads is not None:
        config["threads"] = args.threads
    if args.synthetic_reference is not None:
        config["reference"] = {"synthetic": args.synthetic_reference}
    out_dir = args.out or config["output_dir"] or os.environ.get("MOLGA_OUT")
    report = run_task(config, out_dir)
    print(json.dumps({k: report[k] for k in ("task", "determinism_hash")}, indent=2))
    if out_dir:
        print(f"outputs written to {out_dir}", file=sys.stderr)
    return 0


def _cmd_decode(args) -> int:
    g = parse_genotype(args.genotype)
    print(decode(g).canonical())
    return 0


def _cmd_encode(args) -> int:
    graph = parse_smiles(args.smiles)
    print(encode(graph).text())
    return 0


def _cmd_props(args) -> int:
    ref, _ = load_reference(args.reference or bundled_reference_path())
    print("input,logp_raw,sa_raw,ring_raw,qed,j")
    for line in sys.stdin:
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            if text.startswith("["):
                graph = decode(parse_genotype(text))
            else:
                graph = parse_smiles(text)
            rec = penalized_logp(graph, ref.prop_stats)
            print(f"{text},{rec.logp_raw:.4f},{rec.sa_raw:.4f},{rec.ring_raw:.4f},"
                  f"{rec.qed:.4f},{rec.j:.4f}")
        except MolgaError as exc:
            print(f"{text},error:{exc},,,,", file=sys.stderr)
    return 0


def _cmd_baseline(args) -> int:
    if args.synthetic_reference:
        ref = synthetic_reference(args.synthetic_reference, seed=args.seed or 0)
    else:
        ref, _ = load_reference(args.reference or bundled_reference_path())
    res = tasks.run_random_baseline(ref, args.n, seed=args.seed or 0)
    print(json.dumps(res.to_dict(), indent=2))
    return 0


def _cmd_analyze(args) -> int:
    report_path = os.path.join(args.run_dir, "run_report.json")
    if not os.path.exists(report_path):
        print(f"error: no run_report.json in {args.run_dir}", file=sys.stderr)
        return 1
    with open(report_path) as fh:
        report = json.load(fh)
    snap_dir = os.path.join(args.run_dir, "snapshots")
    if not os.path.isdir(snap_dir):
        print("error: run has no population snapshots (set snapshot_every)", file=sys.stderr)
        return 1
    config = report["config"]
    ref, _ = load_config_reference(config)
    snapshots: dict[int, list] = {}
    for name in sorted(os.listdir(snap_dir)):
        if not name.startswith("gen_"):
            continue
        gen = int(name[4:9])
        rows = []
        with open(os.path.join(snap_dir, name)) as fh:
            for line in fh:
                genotype = parse_genotype(line.strip())
                graph = decode(genotype)
                rec = penalized_logp(graph, ref.prop_stats)
                rows.append((graph.canonical(), rec.j, fingerprint(graph)))
        snapshots[gen] = rows
    rows = analysis.snapshot_report(snapshots, seed=config["seed"])
    out_dir = os.path.join(args.run_dir, "analysis")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "snapshot_clusters.csv")
    with open(path, "w") as fh:
        fh.write(analysis.snapshot_rows_csv(rows))
    print(f"wrote {path}")
    if args.plot_data:
        long_path = os.path.join(out_dir, "snapshot_clusters_long.csv")
        with open(long_path, "w") as fh:
            fh.write("generation,canonical,series,value\n")
            for r in analysis.snapshot_report(snapshots, seed=config["seed"]):
                fh.write(f"{r.generation},{r.canonical},score,{r.score:.6f}\n")
                fh.write(f"{r.generation},{r.canonical},cluster,{r.cluster}\n")
                fh.write(f"{r.generation},{r.canonical},pca_x,{r.x:.6f}\n")
                fh.write(f"{r.generation},{r.canonical},pca_y,{r.y:.6f}\n")
        print(f"wrote {long_path}")
    return 0


def _cmd_sweep(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    doc["task"] = "beta_sweep"
    config = parse_config(doc)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.threads is not None:
        config["threads"] = args.threads
    out_dir = args.out or config["output_dir"] or os.environ.get("MOLGA_OUT")
    report = run_task(config, out_dir)
    print(json.dumps(report["result"], indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="molga",
                                description="genetic molecular design engine")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a run config (JSON)")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--threads", type=int, default=None)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--synthetic-reference", type=int, default=None,
                       help="replace the reference with N synthetic molecules")
    run_p.set_defaults(func=_cmd_run)

    dec_p = sub.add_parser("decode", help="decode a genotype to canonical text")
    dec_p.add_argument("genotype")
    dec_p.set_defaults(func=_cmd_decode)

    enc_p = sub.add_parser("encode", help="encode a SMILES string as a genotype")
    enc_p.add_argument("smiles")
    enc_p.set_defaults(func=_cmd_encode)

    props_p = sub.add_parser("props", help="score genotypes or SMILES from stdin as CSV")
    props_p.add_argument("--reference", default=None)
    props_p.set_defaults(func=_cmd_props)

    base_p = sub.add_parser("baseline", help="random-genotype baseline")
    base_p.add_argument("-n", type=int, required=True)
    base_p.add_argument("--seed", type=int, default=None)
    base_p.add_argument("--reference", default=None)
    base_p.add_argument("--synthetic-reference", type=int, default=None)
    base_p.set_defaults(func=_cmd_baseline)

    an_p = sub.add_parser("analyze", help="cluster/PCA report for a finished run")
    an_p.add_argument("run_dir")
    an_p.add_argument("--plot-data", action="store_true")
    an_p.set_defaults(func=_cmd_analyze)

    sw_p = sub.add_parser("sweep", help="beta sweep from a config (JSON)")
    sw_p.add_argument("config")
    sw_p.add_argument("--seed", type=int, default=None)
    sw_p.add_argument("--threads", type=int, default=None)
    sw_p.add_argument("--out", default=None)
    sw_p.set_defaults(func=_cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (MolgaError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

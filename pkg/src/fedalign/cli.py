"""Command-line entry point: ``fedalign run | sweep | gen-data``.

Configuration is a single JSON document per invocation.  Every run
directory is self-describing: ``manifest.json`` snapshots the normalized
config (with any ``--seed`` override applied), and feeding a manifest back
to ``run --config`` reproduces ``summary.json`` byte for byte — the
manifest plus the package is the whole experiment.

Exit codes: 0 success, 1 runtime failure (I/O, numerical), 2 configuration
error (the diagnostic names the offending field or file position).

Output goes under ``--out``; when omitted, under ``$FEDALIGN_OUT`` (or the
current directory) in a folder named after the config file.

A run config looks like::

    {
      "target": "dom3",
      "model": {"hidden_dim": 8, "activation": "relu"},
      "data": {"synthetic": {"family": "rotated_two_moons", ...}},
      "federation": {"strategy": "aligned", "rounds": 400, ...}
    }

``data`` is either ``synthetic`` (see SyntheticSpec) or ``csv`` with
``{"path", "feature_cols", "label_col", "domain_col"}``.  A sweep config
replaces ``target`` with a ``sweep`` block (strategies/seeds/targets plus
optional per-strategy overrides); a gen-data spec is the bare synthetic
object.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

from . import __version__
from .domains import CsvSchema, DomainSuite, SyntheticSpec, generate, load_csv, save_csv
from .errors import ConfigError, FedAlignError, InvalidLambda, InvalidSpec, ParseError
from .federation import FedConfig, run_experiment
from .models import ModelSpec
from .sweep import RESULT_CSV_COLUMNS, SweepSpec, run_sweep

__all__ = ["main", "cmd_run", "cmd_sweep", "cmd_gen_data"]


def _fmt(v) -> str:
    """CSV cell formatting: floats at 17 significant digits so files diff
    meaningfully; everything else via str."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def _write_csv(path: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, str(exc.colno), exc.msg) from exc


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _out_dir(args, suffix: str) -> str:
    if args.out:
        return args.out
    root = os.environ.get("FEDALIGN_OUT", ".")
    stem = os.path.splitext(os.path.basename(args.config_path))[0]
    return os.path.join(root, f"{stem}-{suffix}")


def _synthetic_from_dict(d: dict) -> SyntheticSpec:
    if not isinstance(d, dict):
        raise ConfigError("data.synthetic", "must be a JSON object")
    known = {"family", "num_domains", "samples_per_domain", "rotation_degrees", "noise_sigma", "seed"}
    for key in d:
        if key not in known:
            raise ConfigError(f"data.synthetic.{key}", "unknown field")
    kwargs = dict(d)
    if "rotation_degrees" in kwargs:
        kwargs["rotation_degrees"] = tuple(float(x) for x in kwargs["rotation_degrees"])
    try:
        return SyntheticSpec(**kwargs)
    except (InvalidSpec, TypeError) as exc:
        raise ConfigError("data.synthetic", str(exc)) from exc


def _suite_from_config(data: dict) -> tuple[DomainSuite, dict]:
    """Build the domain suite from the config's data block; returns the
    suite and the normalized block for the manifest."""
    if not isinstance(data, dict) or len(data) != 1 or next(iter(data)) not in ("synthetic", "csv"):
        raise ConfigError("data", 'must contain exactly one of "synthetic" or "csv"')
    if "synthetic" in data:
        spec = _synthetic_from_dict(data["synthetic"])
        suite = generate(spec)
        normalized = {
            "synthetic": {
                "family": spec.family,
                "num_domains": spec.num_domains,
                "samples_per_domain": spec.samples_per_domain,
                "rotation_degrees": list(spec.rotation_degrees),
                "noise_sigma": spec.noise_sigma,
                "seed": spec.seed,
            }
        }
        return suite, normalized
    block = data["csv"]
    if not isinstance(block, dict):
        raise ConfigError("data.csv", "must be a JSON object")
    required = {"path", "feature_cols", "label_col", "domain_col"}
    missing = required - set(block)
    if missing:
        raise ConfigError("data.csv", f"missing fields: {sorted(missing)}")
    schema = CsvSchema(
        feature_cols=tuple(block["feature_cols"]),
        label_col=block["label_col"],
        domain_col=block["domain_col"],
    )
    suite = load_csv(block["path"], schema)
    return suite, {"csv": dict(block)}


def _model_from_config(block: dict | None, suite: DomainSuite) -> ModelSpec:
    block = dict(block or {})
    known = {"hidden_dim", "activation"}
    for key in block:
        if key not in known:
            raise ConfigError(f"model.{key}", "unknown field")
    try:
        return ModelSpec(
            input_dim=suite.num_features,
            hidden_dim=int(block.get("hidden_dim", 8)),
            num_classes=suite.num_classes,
            activation=block.get("activation", "relu"),
        )
    except InvalidSpec as exc:
        raise ConfigError("model", str(exc)) from exc


def _model_dict(model: ModelSpec) -> dict:
    return {"hidden_dim": model.hidden_dim, "activation": model.activation}


def _manifest(command: str, config: dict, seed_list: list, outputs: dict) -> dict:
    return {
        "tool_version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "seed_list": seed_list,
        "config": config,
        "outputs": outputs,
    }


def _unwrap_manifest(doc: dict) -> dict:
    """Accept either a bare config or a previously written manifest."""
    if isinstance(doc, dict) and "config" in doc and "tool_version" in doc:
        return doc["config"]
    return doc


def cmd_run(args) -> int:
    doc = _unwrap_manifest(_load_json(args.config_path))
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a JSON object")
    known = {"target", "model", "data", "federation"}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown config section")
    if "target" not in doc or "data" not in doc:
        raise ConfigError("config", '"target" and "data" are required')

    suite, data_block = _suite_from_config(doc["data"])
    model = _model_from_config(doc.get("model"), suite)
    cfg = FedConfig.from_dict(doc.get("federation") or {})
    if args.seed is not None:
        cfg = FedConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    target = doc["target"]

    result = run_experiment(suite, target, model, cfg)

    outdir = _out_dir(args, "run")
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "manifest": os.path.join(outdir, "manifest.json"),
        "rounds": os.path.join(outdir, "rounds.csv"),
        "summary": os.path.join(outdir, "summary.json"),
    }
    normalized = {
        "target": target,
        "model": _model_dict(model),
        "data": data_block,
        "federation": cfg.to_dict(),
    }
    from .federation import ROUND_CSV_COLUMNS

    _write_csv(paths["rounds"], ROUND_CSV_COLUMNS, result.csv_rows())
    _write_json(paths["summary"], result.summary())
    _write_json(
        paths["manifest"],
        _manifest("run", normalized, [cfg.seed], {k: os.path.basename(v) for k, v in paths.items()}),
    )
    s = result.summary()
    _say(
        args.quiet,
        f"{cfg.strategy} target={target} seed={cfg.seed} rounds={s['rounds']}: "
        f"target accuracy {s['final_target_accuracy']:.4f} "
        f"(conflict rounds {s['conflict_round_fraction']:.0%})",
    )
    _say(args.quiet, f"wrote {outdir}")
    return 0


def cmd_sweep(args) -> int:
    doc = _unwrap_manifest(_load_json(args.config_path))
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a JSON object")
    known = {"sweep", "model", "data", "federation"}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown config section")
    if "sweep" not in doc or "data" not in doc:
        raise ConfigError("config", '"sweep" and "data" are required')

    suite, data_block = _suite_from_config(doc["data"])
    model = _model_from_config(doc.get("model"), suite)
    spec = SweepSpec.from_dict(doc["sweep"])
    if args.seed is not None:
        spec = SweepSpec(
            strategies=spec.strategies,
            seeds=(args.seed,),
            targets=spec.targets,
            overrides=spec.overrides,
        )
    base = dict(doc.get("federation") or {})
    base.pop("strategy", None)
    base.pop("seed", None)
    # Validate the base early so a bad shared field fails before any cell runs.
    FedConfig.from_dict({**base, "strategy": spec.strategies[0], "seed": spec.seeds[0]})
    for tgt in spec.targets:
        if tgt not in suite.domain_ids:
            raise ConfigError("sweep.targets", f"unknown domain {tgt!r}")

    result = run_sweep(
        suite,
        model,
        base,
        spec,
        jobs=args.jobs,
        progress=None if args.quiet else lambda line: print(line),
    )

    outdir = _out_dir(args, "sweep")
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "manifest": os.path.join(outdir, "manifest.json"),
        "results": os.path.join(outdir, "results.csv"),
        "aggregate": os.path.join(outdir, "aggregate.csv"),
        "summary": os.path.join(outdir, "summary.json"),
    }
    normalized = {
        "sweep": {
            "strategies": list(spec.strategies),
            "seeds": list(spec.seeds),
            "targets": list(spec.targets),
            "overrides": dict(spec.overrides or {}),
        },
        "model": _model_dict(model),
        "data": data_block,
        "federation": base,
    }
    _write_csv(paths["results"], RESULT_CSV_COLUMNS, result.results_rows())
    _write_csv(paths["aggregate"], result.aggregate_columns(), result.aggregate_rows())
    _write_json(paths["summary"], result.to_dict())
    _write_json(
        paths["manifest"],
        _manifest(
            "sweep", normalized, list(spec.seeds), {k: os.path.basename(v) for k, v in paths.items()}
        ),
    )
    if not args.quiet:
        for row in result.aggregate_rows():
            cells = "  ".join(f"{t}={row[t]:.4f}" for t in spec.targets)
            print(f"{row['strategy']:>8}: {cells}  average={row['average']:.4f}")
        failed = [c for c in result.cells if c.error]
        if failed:
            print(f"{len(failed)} cell(s) failed; see results.csv")
    _say(args.quiet, f"wrote {outdir}")
    return 0


def cmd_gen_data(args) -> int:
    doc = _unwrap_manifest(_load_json(args.config_path))
    spec = _synthetic_from_dict(doc)
    if args.seed is not None:
        spec = _synthetic_from_dict({**doc, "seed": args.seed})
    suite = generate(spec)
    out = args.out
    if not out:
        root = os.environ.get("FEDALIGN_OUT", ".")
        stem = os.path.splitext(os.path.basename(args.config_path))[0]
        out = os.path.join(root, f"{stem}.csv")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_csv(suite, out)
    rows = sum(d.num_rows for d in suite.domains)
    _say(args.quiet, f"wrote {rows} rows across {len(suite.domains)} domains to {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedalign",
        description="Deterministic federated-learning simulator with gradient-alignment aggregation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one leave-one-domain-out experiment")
    run_p.add_argument("--config", dest="config_path", required=True, help="run config or manifest JSON")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a strategy x target x seed grid")
    sweep_p.add_argument("--spec", dest="config_path", required=True, help="sweep config or manifest JSON")
    sweep_p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1: sequential)")
    sweep_p.set_defaults(func=cmd_sweep)

    gen_p = sub.add_parser("gen-data", help="generate a synthetic multi-domain CSV")
    gen_p.add_argument("--spec", dest="config_path", required=True, help="synthetic spec JSON")
    gen_p.set_defaults(func=cmd_gen_data)

    for p in (run_p, sweep_p, gen_p):
        p.add_argument("--out", default=None, help="output directory (gen-data: output file)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvalidSpec, InvalidLambda) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FedAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``facebias {synth,diversity,audit,debias,boxtrack}``.

Exit codes: 0 success, 2 input validation failure, 3 numerical failure.
Every run writes ``manifest-<command>.json`` into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .audit import AuditError, PredictionLog, axis, disparity_summary, group_slice, kinship_slice
from .boxtrack import TrackInput, propagate
from .core import DatasetSchema, atomic_write_text, load_dataset, save_dataset
from .debias import DebiasModel, Hyperparams, NonFiniteLossError, debias_transform, history_csv, train
from .diversity import diversity_report, report_csv, report_json
from .synth import SynthConfig, generate

log = logging.getLogger("facebias")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _csv_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _floats(s: str):
    vals = [float(x) for x in _csv_list(s)]
    return vals[0] if len(vals) == 1 else tuple(vals)


def _ints(s: str):
    vals = [int(x) for x in _csv_list(s)]
    return vals[0] if len(vals) == 1 else tuple(vals)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="single source of randomness")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="directory for outputs and manifest")
    common.add_argument("--log-base", choices=("e", "2"), default="e", help="logarithm base for Shannon indices")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="facebias", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic biased-embedding dataset")
    s.add_argument("--d1", type=int, default=64)
    s.add_argument("--k-p", type=int, default=10)
    s.add_argument("--sensitive", type=_ints, default=(5, 2), help="comma-separated cardinalities")
    s.add_argument("--names", type=_csv_list, default=None, help="comma-separated attribute names")
    s.add_argument("--mode", choices=("orthogonal", "random"), default="orthogonal")
    s.add_argument("--sigma", type=float, default=0.1)
    s.add_argument("--rho", type=float, default=0.6)
    s.add_argument("-n", "--n", type=int, default=5000)
    s.add_argument("--weights", type=_floats, default=None, help="primary-class sampling weights")

    d = sub.add_parser("diversity", parents=[common], help="Simpson/Shannon diversity report")
    d.add_argument("dataset", type=Path)
    d.add_argument("schema", type=Path)
    d.add_argument("--attributes", type=_csv_list, default=["age", "gender", "ita"])

    a = sub.add_parser("audit", parents=[common], help="per-demographic-cell metrics of a prediction log")
    a.add_argument("dataset", type=Path)
    a.add_argument("schema", type=Path)
    a.add_argument("predictions", type=Path, help="JSON-lines prediction log")
    a.add_argument("--axes", type=_csv_list, default=["gender", "age"])
    a.add_argument("--metric", choices=("accuracy", "mae"), default="accuracy")
    a.add_argument("--kinship", action="store_true", help="slice verification pairs by relationship x age difference")
    a.add_argument("--output", type=Path, default=None, help="JSON report path (default <out-dir>/audit.json)")

    dbg = sub.add_parser("debias", help="train or apply the decomposition model")
    dsub = dbg.add_subparsers(dest="action", required=True)
    t = dsub.add_parser("train", parents=[common])
    t.add_argument("dataset", type=Path)
    t.add_argument("schema", type=Path)
    defaults = Hyperparams()
    t.add_argument("--lam-dec", type=float, default=defaults.lam_dec)
    t.add_argument("--lam-ent", type=_floats, default=defaults.lam_ent)
    t.add_argument("--lam-or", type=_floats, default=defaults.lam_or)
    t.add_argument("--lr-main", type=float, default=defaults.lr_main)
    t.add_argument("--lr-adv", type=float, default=defaults.lr_adv)
    t.add_argument("--momentum", type=float, default=defaults.momentum)
    t.add_argument("--adv-steps", type=int, default=defaults.adv_steps)
    t.add_argument("--batch-size", type=int, default=defaults.batch_size)
    t.add_argument("--epochs", type=int, default=defaults.epochs)
    t.add_argument("--init-scale", type=float, default=defaults.init_scale)
    t.add_argument("--clip-norm", type=float, default=defaults.clip_norm, help="0 disables clipping")
    t.add_argument("--d2", type=int, default=None)
    t.add_argument("--d3", type=_ints, default=None)
    ap = dsub.add_parser("apply", parents=[common])
    ap.add_argument("dataset", type=Path)
    ap.add_argument("schema", type=Path)
    ap.add_argument("model", type=Path)

    b = sub.add_parser("boxtrack", parents=[common], help="propagate anchor face boxes through detections")
    b.add_argument("input", type=Path)
    return p


# ---------------------------------------------------------------------------
# commands; each returns (resolved config, input paths, output paths)
# ---------------------------------------------------------------------------


def cmd_synth(args):
    cfg = SynthConfig(
        d1=args.d1,
        K_p=args.k_p,
        sensitive=args.sensitive if isinstance(args.sensitive, tuple) else (args.sensitive,),
        mode=args.mode,
        sigma=args.sigma,
        rho=args.rho,
        n=args.n,
        seed=args.seed,
        weights=args.weights if args.weights is None or isinstance(args.weights, tuple) else (args.weights,),
        sensitive_names=tuple(args.names) if args.names else None,
    )
    ds, gt = generate(cfg)
    out = args.out_dir
    paths = [out / "dataset.csv", out / "schema.json", out / "ground_truth.json"]
    save_dataset(ds, paths[0])
    cfg.schema.save(paths[1])
    gt.save(paths[2])
    return asdict(cfg), [], paths


def cmd_diversity(args):
    schema = DatasetSchema.load(args.schema)
    ds = load_dataset(args.dataset, schema)
    if len(ds) == 0:
        raise ValueError(f"{args.dataset}: dataset is empty")
    rows = diversity_report(ds, [(name, None) for name in args.attributes], base=args.log_base)
    out = args.out_dir
    paths = [out / "diversity.csv", out / "diversity.json"]
    atomic_write_text(paths[0], report_csv(rows))
    atomic_write_text(paths[1], report_json(rows))
    return {"attributes": args.attributes, "log_base": args.log_base}, [args.dataset, args.schema], paths


def cmd_audit(args):
    schema = DatasetSchema.load(args.schema)
    ds = load_dataset(args.dataset, schema)
    plog = PredictionLog.from_jsonl(args.predictions)
    if args.kinship:
        kt = kinship_slice(plog)
        table = kt.table
        doc = table.to_dict(disparity_summary(table).to_dict() if table.nonempty() else None)
        doc["relationship_mean"] = kt.relationship_mean
        doc["overflow"] = kt.overflow
        text = json.dumps(doc, indent=2) + "\n"
        config = {"kinship": True, "metric": "accuracy"}
    else:
        table = group_slice(plog, ds, [axis(n) for n in args.axes], args.metric)
        text = table.to_json()
        config = {"axes": args.axes, "metric": args.metric}
    out_json = args.output or args.out_dir / "audit.json"
    out_csv = out_json.with_suffix(".csv")
    atomic_write_text(out_json, text)
    atomic_write_text(out_csv, table.to_csv())
    return config, [args.dataset, args.schema, args.predictions], [out_json, out_csv]


def _hyper_from_args(args) -> Hyperparams:
    return Hyperparams(
        lam_dec=args.lam_dec,
        lam_ent=args.lam_ent,
        lam_or=args.lam_or,
        lr_main=args.lr_main,
        lr_adv=args.lr_adv,
        momentum=args.momentum,
        adv_steps=args.adv_steps,
        batch_size=args.batch_size,
        epochs=args.epochs,
        init_scale=args.init_scale,
        clip_norm=args.clip_norm or None,
        seed=args.seed,
        d2=args.d2,
        d3=args.d3,
    )


def cmd_debias_train(args):
    schema = DatasetSchema.load(args.schema)
    ds = load_dataset(args.dataset, schema)
    if len(ds) == 0:
        raise ValueError(f"{args.dataset}: dataset is empty")
    hyper = _hyper_from_args(args)
    res = train(ds, schema, hyper)
    out = args.out_dir
    paths = [out / "model.json", out / "history.csv"]
    res.model.save(paths[0], hyper)
    atomic_write_text(paths[1], history_csv(res.history, schema.N))
    return asdict(hyper), [args.dataset, args.schema], paths


def cmd_debias_apply(args):
    schema = DatasetSchema.load(args.schema)
    ds = load_dataset(args.dataset, schema)
    model = DebiasModel.load(args.model)
    if model.d1 != schema.d1:
        raise ValueError(f"model d1={model.d1} does not match schema d1={schema.d1}")
    out_ds = ds.with_embeddings(debias_transform(model, ds.Z)) if len(ds) else ds
    path = args.out_dir / "debiased.csv"
    save_dataset(out_ds, path)
    return {}, [args.dataset, args.schema, args.model], [path]


def cmd_boxtrack(args):
    with open(args.input) as fh:
        inp = TrackInput.from_dict(json.load(fh))
    track = propagate(inp)
    path = args.out_dir / "track.json"
    atomic_write_text(path, json.dumps(track.to_dict(), indent=1) + "\n")
    return {}, [args.input], [path]


COMMANDS = {
    "synth": cmd_synth,
    "diversity": cmd_diversity,
    "audit": cmd_audit,
    "debias train": cmd_debias_train,
    "debias apply": cmd_debias_apply,
    "boxtrack": cmd_boxtrack,
}


def write_manifest(out_dir: Path, name: str, config, seed, inputs, outputs, started: float, duration: float) -> Path:
    doc = {
        "subcommand": name,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "duration_s": duration,
    }
    path = out_dir / f"manifest-{name.replace(' ', '-')}.json"
    atomic_write_text(path, json.dumps(doc, indent=2, default=str) + "\n")
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    name = args.command if args.command != "debias" else f"debias {args.action}"
    started = time.time()
    t0 = time.perf_counter()
    try:
        config, inputs, outputs = COMMANDS[name](args)
    except NonFiniteLossError as exc:
        print(f"facebias {name}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, AuditError, OSError, json.JSONDecodeError) as exc:
        print(f"facebias {name}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    write_manifest(args.out_dir, name, config, args.seed, inputs, outputs, started, time.perf_counter() - t0)
    log.info("wrote %s", ", ".join(map(str, outputs)))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

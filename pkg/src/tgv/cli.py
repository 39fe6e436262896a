"""Command-line entry point.

Every subcommand writes its artifacts into ``--out DIR`` together with a
``manifest.json`` recording the resolved arguments, git-style content hashes
of the inputs and timestamps. ``tgv replay MANIFEST --out OTHER`` re-executes
a run from its manifest alone.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import encoder as enc
from .data import DatasetSchema, from_synth, read_table, save_embeddings, write_matrix_csv, write_table
from .errors import TGVError
from .evaluation import FinetuneConfig, finetune, linear_probe, mean_guess, score
from .experiments import LAMBDA_GRID, REFSET_LADDER, THRESHOLD_GRID, Split, ablation, default_k_fraction
from .pairing import assign_pairs
from .synthdata import SynthConfig, generate
from .tabular import batch_similarity
from .trainer import TrainConfig, batches
from .trainer import train as run_training
from .zeroshot import ReferenceSet, ZeroShotConfig, build_reference, load_reference, predict_mean, save_reference

log = logging.getLogger("tgv")

PATH_ARGS = ("data", "eval_data", "schema", "checkpoint", "reference", "out")


# ---------------------------------------------------------------- arg types

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _batch_size(text):
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"must be >= 2, got {v}")
    return v


def _non_negative(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _unit_interval(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _fraction(text):
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return v


def _share(text):
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return v


def _name_list(text):
    return [t for t in text.split(",") if t]


def _int_list(text):
    return [int(t) for t in text.split(",") if t]


# ---------------------------------------------------------------- helpers

def git_hash(path) -> str:
    """SHA-1 over ``blob <size>\\0<content>``, as ``git hash-object`` computes."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load(args, attr="data"):
    schema = DatasetSchema.load(args.schema)
    return read_table(getattr(args, attr), schema), schema


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size, learning_rate=args.lr, epochs=args.epochs, lam=args.lam,
        threshold=args.threshold, tau=args.tau, optimizer=args.optimizer, seed=args.seed,
        pairing_mode=args.pairing_mode, include_self_in_denominator=args.include_self,
        aug_sigma=args.aug_sigma, aug_mask_rate=args.aug_mask_rate,
    )


def _encoder_config(args, input_dim: int) -> enc.EncoderConfig:
    return enc.EncoderConfig(
        input_dim=input_dim, encoder_hidden_dims=tuple(args.hidden_dims),
        embedding_dim=args.embedding_dim, projection_dim=args.projection_dim, seed=args.seed,
    )


def _write_predictions(path, ids, preds, targets=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "prediction"] + (["target"] if targets is not None else []))
        for k, i in enumerate(ids):
            row = [i, repr(float(preds[k]))]
            if targets is not None:
                row.append(repr(float(targets[k])))
            w.writerow(row)


def _resolved(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k in ("func",):
            continue
        if k in PATH_ARGS and v is not None:
            v = str(Path(v).resolve())
        out[k] = v
    return out


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> dict:
    cfg = SynthConfig(
        n_samples=args.n_samples, latent_dim=args.latent_dim, feature_dim=args.feature_dim,
        n_continuous=args.n_continuous, n_categorical=args.n_categorical,
        nuisance_dim=args.nuisance_dim, tabular_only_dim=args.tabular_only_dim,
        tabular_only_share=args.tabular_only_share,
        noise_sigma_image=args.noise_image, noise_sigma_tabular=args.noise_tabular,
        nonlinearity_depth=args.depth, disease_prevalence=args.prevalence, seed=args.seed,
    )
    ds = generate(cfg)
    train, test = ds.split(args.test_fraction, seed=args.seed)
    out = Path(args.out)
    for name, part in (("train.csv", train), ("test.csv", test)):
        table, schema = from_synth(part)
        write_table(out / name, table, schema)
    schema.save(out / "schema.json")
    # ground truth for tests and diagnostics only; never read by pretraining
    n_lat = ds.latents.shape[1]
    write_matrix_csv(out / "latents.csv", ds.ids, ds.latents, [f"latent_{k}" for k in range(n_lat)])
    _write_json(out / "synth_config.json", cfg.to_dict())
    return {"config": cfg.to_dict(), "outputs": ["train.csv", "test.csv", "schema.json", "latents.csv",
                                                  "synth_config.json"]}


def cmd_pretrain(args) -> dict:
    table, schema = _load(args)
    cfg = _train_config(args)
    tabular = None
    if cfg.pairing_mode == "tabular":
        attrs = schema.fit_attributes(table.records, args.exclude)
        tabular = table.tabular(attrs)
        _write_json(Path(args.out) / "attributes.json", attrs.to_dict())
    report = run_training(table.images, cfg, tabular=tabular,
                          encoder_config=_encoder_config(args, table.images.shape[1]))
    enc.save_checkpoint(report.state, Path(args.out) / "checkpoint.tgvw")
    _write_json(Path(args.out) / "report.json", report.to_dict())
    log.info("final loss %.5f", report.loss_history[-1])
    return {"config": report.to_dict()["config"], "outputs": ["checkpoint.tgvw", "report.json"],
            "wall_seconds_training": report.seconds}


def cmd_pairs(args) -> dict:
    table, schema = _load(args)
    attrs = schema.fit_attributes(table.records, args.exclude)
    tabular = table.tabular(attrs)
    rng = np.random.default_rng(args.seed)
    with open(Path(args.out) / "pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["batch", "anchor", "positive", "similarity"])
        for b, idx in enumerate(batches(len(table), args.batch_size, rng)):
            s = batch_similarity(tabular.take(idx), args.lam)
            for i, j, sim in assign_pairs(s, args.threshold).triples(s):
                w.writerow([b, table.ids[idx[i]], table.ids[idx[j]], repr(sim)])
    return {"outputs": ["pairs.csv"]}


def cmd_embed(args) -> dict:
    state = enc.load_checkpoint(args.checkpoint)
    table, _ = _load(args)
    v = enc.embed(state, table.images)
    save_embeddings(Path(args.out) / "embeddings.tgve", table.ids, v)
    return {"outputs": ["embeddings.tgve"], "rows": int(v.shape[0])}


def _reference(args, state) -> ReferenceSet:
    path = Path(args.reference)
    if path.read_bytes()[:4] == b"TGVR":
        return load_reference(path)
    table = read_table(path, DatasetSchema.load(args.schema))
    return build_reference(state, table.images, {args.attribute: table.column(args.attribute)}, table.ids)


def cmd_zeroshot(args) -> dict:
    state = enc.load_checkpoint(args.checkpoint)
    ref = _reference(args, state)
    queries, _ = _load(args)
    k_fraction = args.k_fraction or default_k_fraction(args.task)
    cfg = ZeroShotConfig(k_fraction)
    preds = np.atleast_1d(predict_mean(ref, enc.embed(state, queries.images), args.attribute, cfg))
    out = Path(args.out)
    save_reference(ref, out / "reference.tgvr")
    has_target = args.attribute in queries.targets or (queries.records and args.attribute in queries.records[0])
    targets = queries.column(args.attribute) if has_target else None
    _write_predictions(out / "predictions.csv", queries.ids, preds, targets)
    outputs = ["reference.tgvr", "predictions.csv"]
    if targets is not None:
        name, value = score(preds, targets, args.task)
        metrics = {"metric": name, "value": value, "n": len(targets),
                   "metadata": {"task": args.task, "regime": "ZS", "k": cfg.k(ref.R), "R": ref.R,
                                "attribute": args.attribute}}
        if args.task == "regression":
            metrics["metadata"]["mean_guess_mae"] = score(
                mean_guess(ref.labels[args.attribute]).predict(len(targets)), targets, "regression")[1]
        _write_json(out / "metrics.json", metrics)
        outputs.append("metrics.json")
    return {"outputs": outputs, "k_fraction": k_fraction}


def cmd_probe(args) -> dict:
    state = enc.load_checkpoint(args.checkpoint)
    train_t, _ = _load(args)
    eval_t, _ = _load(args, "eval_data")
    v_tr, v_ev = enc.embed(state, train_t.images), enc.embed(state, eval_t.images)
    head, report = linear_probe(v_tr, train_t.column(args.attribute), args.task, args.ridge,
                                v_ev, eval_t.column(args.attribute))
    report.metadata["attribute"] = args.attribute
    out = Path(args.out)
    _write_json(out / "metrics.json", report.to_dict())
    _write_predictions(out / "predictions.csv", eval_t.ids, head.predict(v_ev), eval_t.column(args.attribute))
    return {"outputs": ["metrics.json", "predictions.csv"]}


def cmd_eval(args) -> dict:
    state = enc.load_checkpoint(args.checkpoint)
    train_t, _ = _load(args)
    eval_t, _ = _load(args, "eval_data")
    y = train_t.column(args.attribute)
    cfg = FinetuneConfig(task=args.task, epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
                         freeze_encoder=args.freeze_encoder, seed=args.seed)
    result = finetune(state, None, train_t.images, y, cfg, eval_t.images, eval_t.column(args.attribute))
    report = result.report.to_dict()
    report["metadata"]["attribute"] = args.attribute
    report["metadata"]["loss_history"] = result.loss_history
    if args.task == "regression":
        report["metadata"]["mean_guess_mae"] = score(mean_guess(y).predict(len(eval_t)),
                                                     eval_t.column(args.attribute), "regression")[1]
    out = Path(args.out)
    _write_json(out / "metrics.json", report)
    preds = result.head.predict(enc.embed(result.state, eval_t.images))
    _write_predictions(out / "predictions.csv", eval_t.ids, preds, eval_t.column(args.attribute))
    enc.save_checkpoint(result.state, out / "finetuned.tgvw")
    return {"outputs": ["metrics.json", "predictions.csv", "finetuned.tgvw"]}


def _ablation_worker(payload):
    split, axis, value, cfg, attribute, task, ft_cfg, k_fraction, exclude, run_ft = payload
    return ablation(split, axis, [value], cfg, attribute, task, ft_cfg, k_fraction, exclude, run_ft)


def cmd_ablate(args) -> dict:
    schema = DatasetSchema.load(args.schema)
    split = Split(read_table(args.data, schema), read_table(args.eval_data, schema), schema)
    cfg = _train_config(args)
    ft_cfg = FinetuneConfig(task=args.task, epochs=args.ft_epochs, seed=args.seed)
    if args.sweep == "h":
        values = list(THRESHOLD_GRID)
    elif args.sweep == "lambda":
        values = list(LAMBDA_GRID)
    else:
        values = [max(1, int(round(s * args.scale))) for s in REFSET_LADDER]
    if args.values:
        values = [float(v) for v in args.values.split(",")]
    if args.sweep == "refset_size":
        rows = ablation(split, args.sweep, values, cfg, args.attribute, args.task, ft_cfg,
                        args.k_fraction, args.exclude, False)
    else:
        workers = max(1, int(os.environ.get("TGV_THREADS", "1")))
        payloads = [(split, args.sweep, v, cfg, args.attribute, args.task, ft_cfg, args.k_fraction,
                     args.exclude, not args.no_finetune) for v in values]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(values))) as pool:
                results = list(pool.map(_ablation_worker, payloads))
        else:
            results = [_ablation_worker(p) for p in payloads]
        rows = [r for res in results for r in res]
    with open(Path(args.out) / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([args.sweep, "zs_metric", "zs_std", "ft_metric"])
        for r in rows:
            w.writerow([repr(r.value), repr(r.zs_metric), repr(r.zs_std),
                        "" if r.ft_metric is None else repr(r.ft_metric)])
    return {"outputs": ["ablation.csv"], "values": values}


COMMANDS = {
    "synth": cmd_synth, "pretrain": cmd_pretrain, "pairs": cmd_pairs, "embed": cmd_embed,
    "zeroshot": cmd_zeroshot, "probe": cmd_probe, "eval": cmd_eval, "ablate": cmd_ablate,
}


def run_command(name: str, args) -> dict:
    """Execute a subcommand and write its manifest."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = _resolved(args)
    inputs = {}
    for key in ("data", "eval_data", "schema", "checkpoint", "reference"):
        path = resolved.get(key)
        if path:
            inputs[key] = {"path": path, "git_sha1": git_hash(path)}
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    info = COMMANDS[name](args)
    manifest = {
        "format": "tgv-manifest",
        "version": 1,
        "tgv_version": __version__,
        "subcommand": name,
        "args": resolved,
        "seed": resolved.get("seed"),
        "inputs": inputs,
        "result": info,
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_seconds": time.perf_counter() - t0,
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def cmd_replay(args) -> dict:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("format") != "tgv-manifest":
        raise TGVError(f"{args.manifest}: not a tgv manifest")
    ns = argparse.Namespace(**manifest["args"])
    if args.out:
        ns.out = args.out
    return run_command(manifest["subcommand"], ns)


# ---------------------------------------------------------------- parser

def _add_data(p, eval_data=False):
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--schema", required=True, help="schema sidecar JSON")
    if eval_data:
        p.add_argument("--eval-data", required=True, help="held-out CSV used for scoring")


def _add_train(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=_batch_size, default=128)
    p.add_argument("--lr", type=_non_negative, default=1e-3)
    p.add_argument("--epochs", type=_positive_int, default=10)
    p.add_argument("--lambda", dest="lam", type=_unit_interval, default=0.5)
    p.add_argument("--threshold", type=_non_negative, default=0.05)
    p.add_argument("--tau", type=_positive, default=0.1)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--pairing-mode", choices=("tabular", "augmentation"), default="tabular")
    p.add_argument("--include-self", action="store_true", help="keep the self term in the loss denominator")
    p.add_argument("--aug-sigma", type=_non_negative, default=0.5)
    p.add_argument("--aug-mask-rate", type=float, default=0.2)
    p.add_argument("--exclude", type=_name_list, default=[], help="comma-separated attributes left out of pairing")
    p.add_argument("--hidden-dims", type=_int_list, default=[128])
    p.add_argument("--embedding-dim", type=_positive_int, default=64)
    p.add_argument("--projection-dim", type=_positive_int, default=32)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tgv", description="Tabular-guided contrastive pretraining toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", type=_batch_size, default=4000)
    p.add_argument("--test-fraction", type=_unit_interval, default=0.25)
    d = SynthConfig()
    p.add_argument("--latent-dim", type=_positive_int, default=d.latent_dim)
    p.add_argument("--feature-dim", type=_positive_int, default=d.feature_dim)
    p.add_argument("--n-continuous", type=int, default=d.n_continuous)
    p.add_argument("--n-categorical", type=int, default=d.n_categorical)
    p.add_argument("--nuisance-dim", type=int, default=d.nuisance_dim)
    p.add_argument("--tabular-only-dim", type=int, default=d.tabular_only_dim)
    p.add_argument("--tabular-only-share", type=_share, default=d.tabular_only_share)
    p.add_argument("--noise-image", type=_non_negative, default=d.noise_sigma_image)
    p.add_argument("--noise-tabular", type=_non_negative, default=d.noise_sigma_tabular)
    p.add_argument("--depth", type=int, default=d.nonlinearity_depth)
    p.add_argument("--prevalence", type=_fraction, default=0.08)

    p = sub.add_parser("pretrain", help="contrastive pretraining")
    _add_data(p)
    p.add_argument("--out", required=True)
    _add_train(p)

    p = sub.add_parser("pairs", help="dump (anchor, positive, similarity) triples for one epoch")
    _add_data(p)
    p.add_argument("--out", required=True)
    _add_train(p)

    p = sub.add_parser("embed", help="export encoder embeddings")
    _add_data(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("zeroshot", help="k-NN zero-shot prediction against a reference set")
    _add_data(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reference", required=True, help="reference CSV or .tgvr file")
    p.add_argument("--attribute", required=True)
    p.add_argument("--task", choices=("regression", "binary"), default="regression")
    p.add_argument("--k-fraction", type=_fraction, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="linear probe on frozen embeddings")
    _add_data(p, eval_data=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--attribute", required=True)
    p.add_argument("--task", choices=("regression", "binary"), default="regression")
    p.add_argument("--ridge", type=_non_negative, default=1e-4)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="fine-tune encoder + linear head and score")
    _add_data(p, eval_data=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--attribute", required=True)
    p.add_argument("--task", choices=("regression", "binary"), default="regression")
    p.add_argument("--epochs", type=_positive_int, default=35)
    p.add_argument("--lr", type=_non_negative, default=1e-3)
    p.add_argument("--batch-size", type=_positive_int, default=128)
    p.add_argument("--freeze-encoder", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="threshold / lambda / reference-size sweeps")
    _add_data(p, eval_data=True)
    p.add_argument("--sweep", choices=("h", "lambda", "refset_size"), required=True)
    p.add_argument("--values", default=None, help="comma-separated override of the sweep grid")
    p.add_argument("--scale", type=_positive, default=1.0, help="multiplier on the reference-size ladder")
    p.add_argument("--attribute", required=True)
    p.add_argument("--task", choices=("regression", "binary"), default="regression")
    p.add_argument("--k-fraction", type=_fraction, default=None)
    p.add_argument("--ft-epochs", type=_positive_int, default=35)
    p.add_argument("--no-finetune", action="store_true")
    p.add_argument("--out", required=True)
    _add_train(p)

    p = sub.add_parser("replay", help="re-run a subcommand from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="write to a different directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.command
    del args.command, args.verbose
    try:
        if command == "replay":
            cmd_replay(args)
        else:
            run_command(command, args)
    except (TGVError, OSError) as err:
        print(f"tgv {command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

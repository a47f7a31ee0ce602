"""Command-line entry point: ``himo <subcommand> [flags]``.

Exit codes: 0 success, 1 usage, 2 invalid input, 3 runtime failure. Every
failure ends with one JSON line on stderr, e.g.
``{"error": "ValidationError", "exit_code": 2, "message": "..."}``.

Settings resolve as built-in defaults < ``--config`` JSON < explicit flags.
All outputs land under ``--out`` (default ``runs``).
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import dataio, encoders, hide, metrics, scoring, synth, trainer
from .errors import ValidationError
from .metrics import ScoreSequence
from .numeric import load_matrix, matrix_from_json
from .synth import HierarchySpec
from .trainer import TrainConfig

log = logging.getLogger("himo")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# --- config plumbing -------------------------------------------------------

def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: JSON parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return data


def _take(cfg: dict, keys) -> dict:
    return {k: cfg.pop(k) for k in list(cfg) if k in keys}


def _reject_leftovers(cfg: dict, command: str) -> None:
    if cfg:
        raise ValidationError(f"unknown config keys for {command}: {sorted(cfg)}")


def _flag_overrides(args, mapping: dict) -> dict:
    """Explicitly given flags (non-None) as config-field overrides."""
    return {field: getattr(args, dest) for dest, field in mapping.items()
            if getattr(args, dest, None) is not None}


_TRAIN_FLAGS = {
    "seed": "seed", "epochs": "epochs", "batch_size": "batch_size",
    "learning_rate": "learning_rate", "tau": "tau", "lam": "lam",
    "temperature": "temperature", "variant": "loss_variant",
    "embed_dim": "embed_dim", "hidden_dim": "hidden_dim", "warmup_steps": "warmup_steps",
}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} | {"lambda"}
_SPEC_KEYS = {f.name for f in fields(HierarchySpec)}


def _train_config(args, cfg: dict) -> TrainConfig:
    base = _take(cfg, _TRAIN_KEYS)
    base.update(_flag_overrides(args, _TRAIN_FLAGS))
    try:
        return TrainConfig.from_dict(base)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def _spec(args, cfg: dict) -> HierarchySpec:
    raw = _take(cfg, _SPEC_KEYS)
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "layer_variances", None) is not None:
        raw["layer_variances"] = args.layer_variances
    spec = HierarchySpec.from_dict({**trainer.DEFAULT_SPEC.to_dict(), "image_weights": None, **raw})
    spec.validate()
    return spec


def _out(args, *parts) -> Path:
    path = Path(args.out, *parts)
    path.mkdir(parents=True, exist_ok=True)
    return path


# --- subcommands -----------------------------------------------------------

def cmd_gen_data(args, cfg):
    sizes = _take(cfg, {"n_train", "n_test"})
    spec = _spec(args, cfg)
    _reject_leftovers(cfg, "gen-data")
    n_train = args.n_train or sizes.get("n_train", trainer.DEFAULT_N_TRAIN)
    n_test = args.n_test or sizes.get("n_test", trainer.DEFAULT_N_TEST)
    if n_train < 2 or n_test < 2:
        raise ValidationError("n_train and n_test must be >= 2")
    splits = trainer.make_synthetic_dataset(spec, n_train, n_test)
    out = _out(args, "data")
    meta = {"spec": spec.to_dict(), "n_train": n_train, "n_test": n_test}
    dataio.save_dataset(out, splits, meta)
    return {"data_dir": str(out), **meta}


def _dataset(path) -> tuple[dict, dict]:
    if not Path(path, "manifest.json").exists():
        raise ValidationError(f"no dataset at {path} (run gen-data first)")
    return dataio.load_dataset(path)


def cmd_train(args, cfg):
    config = _train_config(args, cfg)
    _reject_leftovers(cfg, "train")
    data_dir = Path(args.data) if args.data else Path(args.out, "data")
    splits, data_meta = _dataset(data_dir)
    if "train" not in splits:
        raise ValidationError(f"{data_dir} has no train split")
    trace = trainer.run_training(config, splits["train"])
    out = _out(args, "train")
    dataio.write_json(out / "config.json", config.to_dict())
    (out / "trace.jsonl").write_text(trace.to_jsonl())
    encoders.save_checkpoint(out / "checkpoint", trace.image_params, trace.text_params,
                             {"config": config.to_dict(), "data": data_meta})
    summary = {"config": config.to_dict(), "steps": len(trace.records),
               "final_loss": trace.records[-1]["loss_total"]}
    if "test" in splits:
        summary["test"] = trainer.evaluate(trace.image_params, trace.text_params, splits["test"])
    dataio.write_json(out / "metrics.json", summary)
    return {"train_dir": str(out), **summary}


def _checkpoint(args):
    path = Path(args.checkpoint) if args.checkpoint else Path(args.out, "train", "checkpoint")
    if not Path(path, "manifest.json").exists():
        raise ValidationError(f"no checkpoint at {path} (run train first)")
    return encoders.load_checkpoint(path)


def _write_report(args, report, stem):
    out = _out(args)
    dataio.write_report(report, out / f"{stem}.json", "json")
    dataio.write_report(report, out / f"{stem}.csv", "csv")
    return dataio.report_to_dict(report)


def cmd_eval_himo(args, cfg):
    _reject_leftovers(cfg, "eval-himo")
    if args.scores:
        if not args.captions or args.k is None:
            raise ValidationError("--scores needs --captions and --k")
        captions = {e.id: e for e in dataio.load_captions(args.captions).entries}
        scores = dataio.load_scores_csv(args.scores)
        sequences = []
        for sid in sorted(scores):
            if sid not in captions:
                raise ValidationError(f"scores reference unknown caption id {sid!r}")
            if len(scores[sid]) != args.k:
                raise ValidationError(f"sample {sid!r} has {len(scores[sid])} scores, expected K={args.k}")
            if len(captions[sid].segments) < args.k:
                raise ValidationError(f"caption {sid!r} has fewer than K={args.k} segments")
            sequences.append(ScoreSequence(tuple(scores[sid]), sid))
        meta = {"source": "scores", "captions": str(args.captions)}
    elif args.captions:
        # Featurized captions scored without a trained model.
        image = text = None
        d_in = args.d_in
        if args.checkpoint:
            image, text, _ = _checkpoint(args)
            d_in = image.d_in
        if args.k is None:
            raise ValidationError("--captions without --scores needs --k")
        sequences = [scoring.caption_subtext_scores(c, args.k, d_in, seed=args.seed or 0,
                                                    image=image, text=text)
                     for c in dataio.load_captions(args.captions).captions()]
        meta = {"source": "featurized", "captions": str(args.captions), "d_in": d_in}
    else:
        data_dir = Path(args.data) if args.data else Path(args.out, "data")
        splits, _ = _dataset(data_dir)
        if args.split not in splits:
            raise ValidationError(f"split {args.split!r} not in {sorted(splits)}")
        image, text, _ = _checkpoint(args)
        data = splits[args.split]
        if args.k is not None and not 2 <= args.k <= data.num_layers:
            raise ValidationError(f"--k must lie in [2, {data.num_layers}]")
        scores = trainer.subtext_scores(image, text, data, args.k)
        sequences = trainer.score_sequences(scores, args.split)
        meta = {"source": "synthetic", "split": args.split}
    return _write_report(args, metrics.build_report(sequences, meta), "himo_report")


def _retrieval(sim, ks) -> dict:
    n_q, n_g = sim.shape
    if n_q != n_g:
        raise ValidationError(f"similarity matrix must be square (pair i matches i), got {sim.shape}")
    gt = np.arange(n_q)
    out = {"n_queries": n_q}
    for k in ks:
        out[f"i2t_r{k}"] = metrics.recall_at_k(sim, gt, k)
        out[f"t2i_r{k}"] = metrics.recall_at_k(sim.T, gt, k)
    return out


def cmd_eval_retrieval(args, cfg):
    _reject_leftovers(cfg, "eval-retrieval")
    ks = args.ks or [1, 5, 10]
    if args.similarities:
        path = Path(args.similarities)
        sim = matrix_from_json(path.read_text()) if path.suffix == ".json" else load_matrix(path)
        source = str(path)
    else:
        data_dir = Path(args.data) if args.data else Path(args.out, "data")
        splits, _ = _dataset(data_dir)
        if args.split not in splits:
            raise ValidationError(f"split {args.split!r} not in {sorted(splits)}")
        image, text, _ = _checkpoint(args)
        data = splits[args.split]
        v = encoders.encode_batch(image, data.image_features)
        u = encoders.encode_batch(text, data.text_features)
        sim = v @ u.T
        source = f"synthetic:{args.split}"
    report = {"source": source, **_retrieval(sim, ks)}
    dataio.write_json(_out(args) / "retrieval.json", report)
    return report


def cmd_eval_ssi(args, cfg):
    _reject_leftovers(cfg, "eval-ssi")
    if args.scores_ori or args.scores_noised:
        if not (args.scores_ori and args.scores_noised):
            raise ValidationError("--scores-ori and --scores-noised go together")
        ori = dataio.load_scores_csv(args.scores_ori)
        noised = dataio.load_scores_csv(args.scores_noised)
        if set(ori) != set(noised):
            raise ValidationError("original and noised score files cover different sample ids")
        ids = sorted(ori)
        a = [ScoreSequence(tuple(ori[i]), i) for i in ids]
        b = [ScoreSequence(tuple(noised[i]), i) for i in ids]
        meta = {"source": "scores"}
    else:
        if not args.captions or not args.distractor:
            raise ValidationError("need --scores-ori/--scores-noised or --captions with --distractor")
        image = text = None
        d_in = args.d_in
        if args.checkpoint:
            image, text, _ = _checkpoint(args)
            d_in = image.d_in
        caps = dataio.load_captions(args.captions).captions()
        _, a, b = scoring.ssi_for_captions(caps, args.distractor, args.k, d_in, seed=args.seed or 0,
                                           position=args.position, image=image, text=text)
        meta = {"source": "featurized", "position": args.position, "d_in": d_in}
    value, skipped = metrics.ssi(a, b, return_skipped=True)
    report = {"ssi": value, "n_skipped": skipped, "n_samples": len(a), "meta": meta,
              "per_sample": [{"sample_id": x.sample_id, "ori": list(x.scores), "noised": list(y.scores)}
                             for x, y in zip(a, b)]}
    dataio.write_json(_out(args) / "ssi_report.json", report)
    return {k: report[k] for k in ("ssi", "n_skipped", "n_samples")}


def cmd_verify_theory(args, cfg):
    _reject_leftovers(cfg, "verify-theory")
    if args.chains < 1:
        raise ValidationError("--chains must be >= 1")
    seed = args.seed or 0
    rng = np.random.default_rng([seed, 0])
    passed = hyp = 0
    worst_gap = np.inf
    for _ in range(args.chains):
        chain = synth.generate_residual_chain(args.dim, args.k, rng=rng)
        ok, cos = synth.verify_monotone(chain)
        passed += ok
        hyp += chain.satisfies_hypotheses()
        worst_gap = min(worst_gap, float(np.min(np.diff(cos))))
    loose_rng = np.random.default_rng([seed, 1])
    loose = sum(synth.verify_monotone(
        synth.generate_residual_chain(args.dim, args.k, rng=loose_rng, consistent=False))[0]
        for _ in range(args.chains))
    variances = tuple(args.layer_variances or (10.0, 3.0, 1.0))
    spec = HierarchySpec(layer_variances=variances, layer_dims=(8,) * len(variances),
                         dim=max(32, 8 * len(variances)), batch_size=256, seed=seed,
                         image_weights=(1.0,) * len(variances))
    batch = synth.generate_hierarchical_batch(spec)
    pca = hide.fit(batch.text_embeddings, args.tau)
    report = {
        "chains": args.chains, "dim": args.dim, "k": args.k, "seed": seed,
        "pass_rate": passed / args.chains,
        "hypotheses_rate": hyp / args.chains,
        "min_cosine_step": worst_gap,
        "loose_pass_rate": loose / args.chains,
        "alignment": {"layer_variances": list(variances), "tau": args.tau, "rank_m": pca.rank_m,
                      "top_layers": 2,
                      "subspace_alignment": synth.subspace_alignment(pca, batch, min(2, len(variances)))},
    }
    dataio.write_json(_out(args) / "theory_report.json", report)
    return report


def _num_workers(n_jobs: int) -> int:
    raw = os.environ.get("HIMO_NUM_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError as exc:
            raise ValidationError(f"HIMO_NUM_THREADS must be an integer, got {raw!r}") from exc
    return max(1, min(cap, n_jobs))


def _ablation_cell(job):
    return trainer.ablation_cell(*job)


ABLATE_COLUMNS = ("axis", "value", "seed", "final_loss") + trainer.ABLATION_METRICS


def cmd_ablate(args, cfg):
    sizes = _take(cfg, {"n_train", "n_test"})
    base = _train_config(args, cfg)
    spec = _spec(argparse.Namespace(seed=None), cfg)
    _reject_leftovers(cfg, "ablate")
    field_name, defaults = trainer.ABLATION_AXES[args.axis]
    if args.values:
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        if args.axis == "loss_variant":
            bad = [v for v in values if v not in defaults]
            if bad:
                raise ValidationError(f"unknown loss variants {bad}")
        else:
            cast = int if args.axis == "batch_size" else float
            try:
                values = [cast(v) for v in values]
            except ValueError as exc:
                raise ValidationError(f"bad --values for {args.axis}: {exc}") from exc
    else:
        values = list(defaults)
    for v in values:  # fail before any training
        replace(base, **{field_name: v}).validate()
    if args.seeds < 1:
        raise ValidationError("--seeds must be >= 1")
    first = args.seed or 0
    seeds = list(range(first, first + args.seeds))
    n_train = args.n_train or sizes.get("n_train", trainer.DEFAULT_N_TRAIN)
    n_test = args.n_test or sizes.get("n_test", trainer.DEFAULT_N_TEST)
    jobs = [(args.axis, v, s, base, spec, n_train, n_test) for v in values for s in seeds]
    workers = _num_workers(len(jobs))
    if workers == 1:
        rows = [_ablation_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_ablation_cell, jobs))  # map keeps job order
    summary = trainer.summarize_ablation(rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATE_COLUMNS)
    for row in rows + summary:
        writer.writerow(["" if row[c] is None else dataio._fmt(row[c]) for c in ABLATE_COLUMNS])
    out = _out(args)
    (out / f"ablate_{args.axis}.csv").write_text(buf.getvalue())
    dataio.write_json(out / f"ablate_{args.axis}.json",
                      {"axis": args.axis, "seeds": seeds, "rows": rows, "summary": summary,
                       "base_config": base.to_dict(), "n_train": n_train, "n_test": n_test})
    return {"axis": args.axis, "summary": summary}


# --- parser ----------------------------------------------------------------

def _common(p, seed=True):
    p.add_argument("--out", default="runs", help="output root directory (default: runs)")
    p.add_argument("--config", help="JSON file of setting overrides")
    if seed:
        p.add_argument("--seed", type=int, help="random seed")


def _train_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--tau", type=float, help="explained-variance threshold")
    p.add_argument("--lambda", dest="lam", type=float, help="component-loss weight")
    p.add_argument("--temperature", type=float)
    p.add_argument("--variant", choices=trainer.losses.LOSS_VARIANTS)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--warmup-steps", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="himo", description="Hierarchy-aware contrastive alignment toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic hierarchical dataset")
    _common(p)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--layer-variances", type=_csv_floats, help="e.g. 8,4,2,1")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the toy dual encoders")
    _common(p)
    p.add_argument("--data", help="dataset directory (default: OUT/data)")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-himo", help="HiMo@K report from scores, captions or a checkpoint")
    _common(p)
    p.add_argument("--captions", help="caption JSON file")
    p.add_argument("--scores", help="CSV of sample_id,k,score")
    p.add_argument("--k", type=int, help="number of subtexts")
    p.add_argument("--data", help="dataset directory (default: OUT/data)")
    p.add_argument("--checkpoint", help="checkpoint directory (default: OUT/train/checkpoint)")
    p.add_argument("--split", default="test")
    p.add_argument("--d-in", type=int, default=256, help="hashed feature width without a checkpoint")
    p.set_defaults(func=cmd_eval_himo)

    p = sub.add_parser("eval-ssi", help="semantic stability index")
    _common(p)
    p.add_argument("--scores-ori", help="CSV of clean scores")
    p.add_argument("--scores-noised", help="CSV of scores after distractor injection")
    p.add_argument("--captions", help="caption JSON file")
    p.add_argument("--distractor", action="append", help="distractor sentence (repeatable)")
    p.add_argument("--position", choices=("front", "back", "random"), default="random")
    p.add_argument("--k", type=int, default=1, help="subtexts per caption (default: 1, full caption)")
    p.add_argument("--checkpoint", help="checkpoint directory; omit to compare raw features")
    p.add_argument("--d-in", type=int, default=256)
    p.set_defaults(func=cmd_eval_ssi)

    p = sub.add_parser("eval-retrieval", help="image-to-text and text-to-image Recall@K")
    _common(p)
    p.add_argument("--similarities", help="square similarity matrix (.bin or .json)")
    p.add_argument("--data", help="dataset directory (default: OUT/data)")
    p.add_argument("--checkpoint", help="checkpoint directory (default: OUT/train/checkpoint)")
    p.add_argument("--split", default="test")
    p.add_argument("--ks", type=_csv_ints, help="comma-separated K values (default: 1,5,10)")
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("verify-theory", help="check monotone cosines on random residual chains")
    _common(p)
    p.add_argument("--chains", type=int, default=1000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--tau", type=float, default=hide.DEFAULT_TAU)
    p.add_argument("--layer-variances", type=_csv_floats)
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("ablate", help="sweep one training setting over several seeds")
    _common(p)
    p.add_argument("--axis", required=True, choices=sorted(trainer.ABLATION_AXES))
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    p.add_argument("--values", help="comma-separated values (default: the axis grid)")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    _train_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def _fail(exc: BaseException, code: int) -> int:
    line = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    print(json.dumps(line, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(exc, EXIT_USAGE)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        result = args.func(args, cfg)
    except (ValidationError, FileNotFoundError) as exc:
        return _fail(exc, EXIT_INVALID)
    except Exception as exc:  # noqa: BLE001 - every failure gets the JSON line
        log.debug("unhandled error", exc_info=True)
        return _fail(exc, EXIT_RUNTIME)
    print(dataio.dumps_stable(result), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line frontend: train, predict, evaluate, bench, serve.

Exit codes: 0 success, 1 usage error, 2 data error (bad files, unknown
models, mismatched ids), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import bench as bench_mod
from . import corpus, metrics, neural, postlevel
from .errors import DataError, ToxspanError
from .neural import Device, ModelConfig
from .registry import Registry

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_span_dataset(path: str) -> corpus.Dataset:
    p = Path(path)
    if p.suffix == ".jsonl":
        ds = corpus.read_jsonl(p)
        if ds.granularity is not corpus.Granularity.SPAN:
            raise DataError(f"{path} is not a span-annotated dataset")
        return ds
    return corpus.parse_span_csv(p)


def _load_gold(path: str, schema: corpus.ColumnSchema) -> corpus.Dataset:
    p = Path(path)
    if p.suffix == ".jsonl":
        return corpus.read_jsonl(p)
    if p.suffix == ".tsv":
        return corpus.parse_post_tsv(p, schema)
    return corpus.parse_span_csv(p)


def _model_config(args) -> ModelConfig:
    overrides = {}
    if getattr(args, "config", None):
        overrides = json.loads(Path(args.config).read_text())
    overrides["base_checkpoint"] = args.base
    cfg = ModelConfig.from_dict(overrides)
    if getattr(args, "device", None):
        cfg = replace(cfg, device=_parse_device(args.device))
    return cfg


def _parse_device(value: str) -> Device:
    return Device.ACCELERATOR if value in ("accel", "accelerator", "cuda", "gpu") else Device.CPU


def _cmd_train(args) -> int:
    cfg = _model_config(args)
    ds = _load_span_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    seeds = list(cfg.seeds)
    if args.seed is not None:
        seeds = [args.seed + i for i in range(len(seeds))]
    seeds = seeds[: args.seeds]
    if not seeds:
        raise DataError("--seeds must be at least 1")

    if args.skip_mlm:
        adapted = cfg.base_checkpoint
    else:
        report = neural.mlm_adapt([p.text for p in ds.posts], cfg, out / "adapted")
        adapted = report.checkpoint_dir
        print(
            f"MLM adaptation: held-out loss {report.base_loss:.4f} -> "
            f"{report.adapted_loss:.4f} (perplexity {report.perplexity:.2f})"
        )
    train_cfg = replace(cfg, base_checkpoint=str(adapted), seeds=tuple(seeds))

    members = []
    validation = {}
    for seed in seeds:
        model = neural.train(ds, train_cfg, seed)
        member_dir = out / f"seed-{seed}"
        model.save(member_dir)
        members.append(str(member_dir))
        validation[str(seed)] = model.metadata.get("validation_span_f1")
        print(f"seed {seed}: validation span F1 {validation[str(seed)]}")

    manifest = {
        "base_checkpoint": cfg.base_checkpoint,
        "adapted_checkpoint": str(adapted),
        "seeds": seeds,
        "members": members,
    }
    (out / "ensemble.json").write_text(json.dumps(manifest, indent=2))
    (out / "validation_report.json").write_text(json.dumps(validation, indent=2))
    print(f"wrote {len(members)} artifact(s) and ensemble manifest to {out}")
    return EXIT_OK


def _highlight(text: str, spans: corpus.SpanSet, color: bool) -> str:
    """Mark toxic ranges with [[...]] (pipe-safe) or ANSI red with --color."""
    result = []
    pos = 0
    for start, end in spans.to_ranges():
        result.append(text[pos:start])
        if color:
            result.append(f"\x1b[31m{text[start:end]}\x1b[0m")
        else:
            result.append(f"[[{text[start:end]}]]")
        pos = end
    result.append(text[pos:])
    return "".join(result)


def _cmd_predict(args) -> int:
    registry = Registry(cache_dir=args.cache_dir)
    model = registry.resolve(args.model)

    if args.text is not None:
        spans, _ = model.predict(args.text, merge_adjacent=args.merge_adjacent)
        print(_highlight(args.text, spans, color=args.color))
        pairs = ", ".join(f"{s}-{e - 1}" for s, e in spans.to_ranges())
        print(f"offsets: {pairs}" if pairs else "offsets: (none)")
        return EXIT_OK

    in_path = Path(args.infile)
    out_path = Path(args.out) if args.out else None
    out_fh = out_path.open("w", encoding="utf-8") if out_path else sys.stdout
    try:
        with in_path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                if in_path.suffix == ".jsonl":
                    record = json.loads(line)
                    post_id, text = str(record["id"]), record["text"]
                else:
                    post_id, text = str(line_no), line
                spans, _ = model.predict(text, merge_adjacent=args.merge_adjacent)
                out_fh.write(json.dumps({"id": post_id, "spans": list(spans.offsets)}) + "\n")
    finally:
        if out_path:
            out_fh.close()
    return EXIT_OK


def _read_predictions(path: str) -> tuple[dict, bool]:
    """Load a JSONL prediction file; returns (records, is_span_mode)."""
    span_preds = {}
    label_preds = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "spans" in record:
                span_preds[str(record["id"])] = corpus.SpanSet.from_iterable(record["spans"])
            elif "label" in record:
                label_preds[str(record["id"])] = corpus.PostLabel(record["label"])
            else:
                raise DataError(f"prediction record without 'spans' or 'label': {record}")
    if span_preds and label_preds:
        raise DataError("prediction file mixes span and label records")
    if label_preds:
        return label_preds, False
    return span_preds, True


def _cmd_evaluate(args) -> int:
    schema = corpus.ColumnSchema(args.id_col, args.text_col, args.label_col)
    gold = _load_gold(args.gold, schema)
    preds, is_span = _read_predictions(args.pred)

    if args.post_level:
        if gold.granularity is not corpus.Granularity.POST:
            raise DataError("--post-level requires post-level gold data")
        if is_span:
            labels = {pid: postlevel.to_post_label(spans) for pid, spans in preds.items()}
        else:
            labels = preds
        report = postlevel.report_from_labels(labels, gold, model_name=args.pred)
        print(json.dumps(report.to_dict(), indent=2))
        print(f"macro F1: {report.macro_f1:.4f}")
        return EXIT_OK

    if not is_span:
        raise DataError("span evaluation requires span predictions (use --post-level for labels)")
    report = metrics.evaluate_spans(preds, gold)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    print(f"mean span F1: {report.mean_f1:.4f} over {report.n_posts} posts")
    return EXIT_OK


def _cmd_bench(args) -> int:
    registry = Registry(cache_dir=args.cache_dir)
    model = registry.resolve(args.model)
    if args.device:
        model.config = replace(model.config, device=_parse_device(args.device))
        model.model.to(model.config.torch_device())

    if args.texts:
        texts = [
            line.rstrip("\n")
            for line in Path(args.texts).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ][: args.n]
        if not texts:
            raise DataError(f"no texts found in {args.texts}")
    else:
        texts = bench_mod.sample_texts(args.n)

    result = bench_mod.run_benchmark(model, texts, warmup=args.warmup, model_id=args.model)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
    else:
        print(bench_mod.format_table([result]))
    return EXIT_OK


def _serve_default(args_value, config_key: str, env_var: str, fallback: int) -> int:
    """Service settings precedence: CLI flag, then config file, then env, then default."""
    if args_value is not None:
        return args_value
    from .registry import _load_config_file

    config = _load_config_file()
    if config_key in config:
        return int(config[config_key])
    if env_var in os.environ:
        return int(os.environ[env_var])
    return fallback


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceSettings, create_app

    datasets = {}
    for spec_arg in args.dataset or ():
        name, _, path = spec_arg.partition("=")
        if not path:
            raise DataError(f"--dataset expects NAME=PATH, got {spec_arg!r}")
        datasets[name] = _load_gold(path, corpus.ColumnSchema())

    settings = ServiceSettings(
        max_text_length=_serve_default(
            args.max_text_len, "max_text_length", "TOXSPAN_MAX_TEXT_LENGTH", 20_000
        ),
        model_lru_size=_serve_default(args.model_lru, "model_lru_size", "TOXSPAN_MODEL_LRU", 2),
        datasets=datasets,
        console_dir=Path(args.console) if args.console else None,
    )
    port = _serve_default(args.port, "port", "TOXSPAN_PORT", 8000)
    registry = Registry(cache_dir=args.cache_dir, offline=args.offline or None)
    app = create_app(registry=registry, settings=settings)
    uvicorn.run(app, host=args.host, port=port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toxspan", description="Offensive span detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="MLM-adapt a base checkpoint, then train seeded span models")
    p_train.add_argument("--data", required=True, help="span dataset (.csv or .jsonl)")
    p_train.add_argument("--base", required=True, help="base encoder checkpoint (path or hub id)")
    p_train.add_argument("--seeds", type=int, default=5, help="number of seeded runs")
    p_train.add_argument("--seed", type=int, default=None, help="first seed (overrides config seeds)")
    p_train.add_argument("--config", help="JSON file with model-config overrides")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--skip-mlm", action="store_true", help="skip the MLM adaptation phase")
    p_train.add_argument("--device", choices=("cpu", "accel"), default=None)
    p_train.set_defaults(func=_cmd_train)

    p_predict = sub.add_parser("predict", help="predict offensive spans")
    p_predict.add_argument("--model", required=True, help="registered model name or artifact path")
    group = p_predict.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="single text to analyze")
    group.add_argument("--in", dest="infile", help="input file (.jsonl with id/text, or plain lines)")
    p_predict.add_argument("--out", help="output JSONL file (default stdout)")
    p_predict.add_argument("--merge-adjacent", action="store_true")
    p_predict.add_argument("--color", action="store_true", help="ANSI highlighting instead of [[...]]")
    p_predict.add_argument("--cache-dir", default=None)
    p_predict.set_defaults(func=_cmd_predict)

    p_eval = sub.add_parser("evaluate", help="score predictions against gold data")
    p_eval.add_argument("--pred", required=True, help="JSONL predictions ({id,spans} or {id,label})")
    p_eval.add_argument("--gold", required=True, help="gold dataset (.csv, .tsv, or .jsonl)")
    p_eval.add_argument("--post-level", action="store_true", help="macro-F1 over OFF/NOT labels")
    p_eval.add_argument("--id-col", default="id")
    p_eval.add_argument("--text-col", default="text")
    p_eval.add_argument("--label-col", default="label")
    p_eval.add_argument("--json", action="store_true", help="print the full report as JSON")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_bench = sub.add_parser("bench", help="measure per-text prediction latency")
    p_bench.add_argument("--model", required=True)
    p_bench.add_argument("--n", type=int, default=100, help="number of texts")
    p_bench.add_argument("--device", choices=("cpu", "accel"), default=None)
    p_bench.add_argument("--texts", help="file with one text per line (default: built-in samples)")
    p_bench.add_argument("--warmup", type=int, default=2)
    p_bench.add_argument("--json", action="store_true")
    p_bench.add_argument("--cache-dir", default=None)
    p_bench.set_defaults(func=_cmd_bench)

    p_serve = sub.add_parser("serve", help="run the prediction HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=None, help="default 8000 (or TOXSPAN_PORT)")
    p_serve.add_argument("--dataset", action="append", metavar="NAME=PATH")
    p_serve.add_argument("--console", help="directory with the built web console")
    p_serve.add_argument("--model-lru", type=int, default=None)
    p_serve.add_argument("--max-text-len", type=int, default=None)
    p_serve.add_argument("--cache-dir", default=None)
    p_serve.add_argument("--offline", action="store_true")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ToxspanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.exception("unhandled failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

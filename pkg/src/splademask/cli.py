"""Command-line entry point: ``splademask <subcommand> ...``.

Data goes to files (or stdout for ``eval``); diagnostics go to stderr.
Exit status is 0 on success, 1 on any pipeline error, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import index as impact_index
from .demo import DemoRecipe, make_demo_corpus, read_token_file, write_demo
from .encoder import EncoderParams, encode_many, load_params, save_params
from .evaluation import mrr_at_10, ndcg_at_10, read_qrels, read_run, write_run
from .lexical import DEFAULT_SCALE, BERT_VOCAB_SIZE, iter_vectors, write_vectors
from .pipeline import DEFAULT_TAG, run_queries
from .sparsifier import DecaySchedule, one_percent_k, top_k_mask
from .trainer import TrainConfig, read_triples, steps_per_epoch, ablation_configs, train, write_history

CONFIG_ENV = "SPLADEMASK_CONFIG"
SCHEMA_VERSION = 1
ABLATION_ROWS = ("2", "a", "b", "c", "d", "e", "f")
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"schedule", "query_schedule"}


class CliError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Parsed TOML config. Relative paths resolve against the config file's directory."""

    schema_version: int = SCHEMA_VERSION
    vocab_size: int = 1000
    hidden: int = 32
    param_seed: int = 0
    projection_bias: float = 0.0
    scale: int = DEFAULT_SCALE
    train: dict[str, Any] = field(default_factory=dict)
    schedule: dict[str, Any] = field(default_factory=dict)
    paths: dict[str, Path] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except OSError as e:
            raise CliError(f"cannot read config {path}: {e.strerror}") from e
        except tomllib.TOMLDecodeError as e:
            raise CliError(f"{path}: {e}") from e
        return cls.from_dict(raw, path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base: Path = Path(".")) -> "ExperimentConfig":
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise CliError(f"config schema_version must be {SCHEMA_VERSION}, got {version!r}")
        enc = raw.get("encoder", {})
        tr = raw.get("train", {})
        unknown = set(tr) - TRAIN_KEYS
        if unknown:
            raise CliError(f"unknown [train] keys: {sorted(unknown)}")
        paths = {k: (base / v) for k, v in raw.get("paths", {}).items()}
        return cls(
            schema_version=version,
            vocab_size=int(enc.get("vocab_size", 1000)),
            hidden=int(enc.get("hidden", 32)),
            param_seed=int(enc.get("seed", 0)),
            projection_bias=float(enc.get("projection_bias", 0.0)),
            scale=int(raw.get("scale", DEFAULT_SCALE)),
            train=dict(tr),
            schedule=dict(raw.get("schedule", {})),
            paths=paths,
        )

    def check_paths(self, names) -> None:
        for n in names:
            p = self.paths.get(n)
            if p is not None and not p.exists():
                raise CliError(f"config path {n} = {p} does not exist")


def _schedule_from(section: dict, default_spe: int) -> DecaySchedule | None:
    if not section:
        return None
    mode = section.get("mode", "constant")
    k = int(section.get("k", 305))
    if mode == "constant":
        return DecaySchedule.constant(k)
    return DecaySchedule.exponential(
        float(section.get("r_decay", 0.2)),
        int(section.get("steps_per_epoch", default_spe)),
        k_min=int(section.get("k_min", k)),
    )


def _resolve_config(args) -> ExperimentConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    return ExperimentConfig.load(path) if path else ExperimentConfig()


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


def cmd_init(args) -> None:
    params = EncoderParams.init(args.vocab_size, args.hidden, args.seed, projection_bias=args.projection_bias)
    save_params(params, args.output)


def cmd_demo(args) -> None:
    out = Path(args.output)
    write_demo(out, make_demo_corpus(seed=args.seed))
    r = DemoRecipe()
    (out / "config.toml").write_text(
        f"""schema_version = {SCHEMA_VERSION}
scale = {DEFAULT_SCALE}

[encoder]
vocab_size = 1000
hidden = {r.hidden}
seed = {r.param_seed}
projection_bias = {r.projection_bias}

[train]
batch_size = {r.batch_size}
learning_rate = {r.learning_rate}
epochs = {r.epochs}
seed = {r.param_seed}
optimizer = "{r.optimizer}"
freeze_projection = true
masking = "joint"
lambda_kl = {r.lambda_kl}

[schedule]
mode = "exponential"
k = {r.k}
r_decay = {r.r_decay}

[paths]
triples = "triples.jsonl"
""",
        encoding="utf-8",
    )


def cmd_encode(args) -> None:
    if not Path(args.params).exists():
        raise CliError(f"params file {args.params} not found")
    params = load_params(args.params)
    items = read_token_file(args.input)
    vecs = encode_many(params, [t for _, t in items], threads=_threads(args))
    write_vectors(args.output, ((key, v) for (key, _), v in zip(items, vecs)))


def cmd_mask(args) -> None:
    write_vectors(args.output, ((key, top_k_mask(v, args.k)) for key, v in iter_vectors(args.input)))


def cmd_train(args) -> None:
    cfg = _resolve_config(args)
    cfg.check_paths(["params", "triples"])
    triples_path = args.triples or cfg.paths.get("triples")
    if triples_path is None:
        raise CliError("no triples file: pass --triples or set paths.triples")
    triples = read_triples(triples_path)

    section = dict(cfg.train)
    for key, value in (
        ("epochs", args.epochs),
        ("learning_rate", args.learning_rate),
        ("batch_size", args.batch_size),
        ("seed", args.seed),
        ("optimizer", args.optimizer),
    ):
        if value is not None:
            section[key] = value
    spe = steps_per_epoch(len(triples), int(section.get("batch_size", TrainConfig.batch_size)))
    sched = dict(cfg.schedule)
    if args.k is not None:
        sched["k"] = args.k
    if args.row is not None:
        k = int(sched.get("k", one_percent_k(BERT_VOCAB_SIZE)))
        lam = float(section.pop("lambda_kl", 0.0)) or 1.0
        section.pop("masking", None)
        config = ablation_configs(TrainConfig(**section), k, spe, float(sched.get("r_decay", 0.2)), lam)[args.row]
    else:
        config = TrainConfig(**section, schedule=_schedule_from(sched, spe))

    params_path = args.params or cfg.paths.get("params")
    if params_path is not None:
        params = load_params(params_path)
    else:
        params = EncoderParams.init(cfg.vocab_size, cfg.hidden, cfg.param_seed, cfg.projection_bias)

    log = None
    if args.verbose:

        def log(epoch, rec):
            print(f"epoch {epoch} step {rec.step} loss {rec.loss.combined:.6f} k {rec.k_effective}", file=sys.stderr)

    result = train(params, triples, config, log=log)
    save_params(result.params, args.output)
    if args.history:
        write_history(args.history, result.history)


def cmd_index(args) -> None:
    idx = impact_index.build(iter_vectors(args.input), args.scale)
    impact_index.save(idx, args.output)


def cmd_search(args) -> None:
    idx = impact_index.load(args.index)
    run = run_queries(idx, list(iter_vectors(args.queries)), args.top_k, args.tag)
    write_run(args.output, run)


def cmd_eval(args) -> None:
    run = read_run(args.run)
    qrels = read_qrels(args.qrels)
    print(f"mrr@10={mrr_at_10(run, qrels):.6f} ndcg@10={ndcg_at_10(run, qrels):.6f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splademask", description="Masked learned-sparse retrieval toolkit.")
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="write freshly initialized encoder params")
    s.add_argument("--vocab-size", type=int, default=1000)
    s.add_argument("--hidden", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--projection-bias", type=float, default=0.0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("demo", help="write the bundled synthetic corpus and a config")
    s.add_argument("--seed", type=int, default=13)
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_demo)

    s = sub.add_parser("encode", help="token JSONL -> sparse vector JSONL")
    s.add_argument("--params", required=True)
    s.add_argument("-i", "--input", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("mask", help="keep the k largest weights of every vector")
    s.add_argument("-k", "--k", type=int, default=one_percent_k(BERT_VOCAB_SIZE))
    s.add_argument("-i", "--input", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("train", help="train encoder params from triples")
    s.add_argument("--config", help=f"TOML config (or set {CONFIG_ENV})")
    s.add_argument("--params", help="starting params (default: fresh init from [encoder])")
    s.add_argument("--triples")
    s.add_argument("--row", choices=ABLATION_ROWS, help="ablation preset; k and r_decay come from [schedule]")
    s.add_argument("--k", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--optimizer", choices=("sgd", "adamw"))
    s.add_argument("--history", help="write per-step losses as CSV")
    s.add_argument("-v", "--verbose", action="store_true")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("index", help="vector JSONL -> binary impact index")
    s.add_argument("--scale", type=int, default=DEFAULT_SCALE)
    s.add_argument("-i", "--input", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("search", help="query vectors -> TREC run")
    s.add_argument("--index", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--top-k", type=int, default=10)
    s.add_argument("--tag", default=DEFAULT_TAG)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("eval", help="print MRR@10 and nDCG@10 of a run")
    s.add_argument("--run", required=True)
    s.add_argument("--qrels", required=True)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as e:
        print(f"splademask {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

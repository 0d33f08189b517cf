"""Command-line driver: ``reflalign {ingest,train,eval,diagnose,export}``.

Records go to stdout, logs to stderr. Failures print a single line
``error key=<key> message="<text>"`` and exit non-zero.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import CheckpointError, checkpoint_from_state, load_checkpoint, save_checkpoint, state_from_checkpoint
from .diagnostics import export_embeddings, isometry_report, orthogonality_residual, reflection_matrix, shape_similarity
from .diffmath import NonFiniteError
from .evaluation import evaluate_alignment, metrics_line
from .kg import DataError, build_union_index, load_kg_pair, save_kg_pair, split_seeds
from .model import ConfigError, ModelConfig, forward_model
from .training import TrainingAborted, init_state, run_epochs

logger = logging.getLogger("reflalign")

# flag name -> (ModelConfig field, parser)
MODEL_FLAGS = {
    "dim": ("dim", int),
    "layers": ("layers", int),
    "margin": ("margin", float),
    "dropout": ("dropout", float),
    "lr": ("learning_rate", float),
    "epochs": ("epochs", int),
    "neg-k": ("neg_k", int),
    "neg-refresh": ("neg_refresh_epochs", int),
    "seed": ("rng_seed", int),
}
RUN_FLAGS = {
    "data": str,
    "out": str,
    "mode": str,
    "metric": str,
    "train-ratio": float,
}
FIELD_TO_FLAG = {f: flag for flag, (f, _) in MODEL_FLAGS.items()}


class CliError(Exception):
    def __init__(self, key: str, message: str, status: int = 2):
        super().__init__(message)
        self.key = key
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        found = re.search(r"--([A-Za-z][\w-]*)", message)
        raise CliError(found.group(1) if found else "argv", message)


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: str | None = None
    out: str | None = None
    mode: str = "basic"
    metric: str = "csls"
    train_ratio: float = 0.3
    diagnostics: bool = True

    def validate(self) -> None:
        if self.mode not in ("basic", "semi"):
            raise CliError("mode", f"mode must be 'basic' or 'semi', got {self.mode!r}")
        if self.metric not in ("csls", "cosine"):
            raise CliError("metric", f"metric must be 'csls' or 'cosine', got {self.metric!r}")
        if not 0.0 < self.train_ratio < 1.0:
            raise CliError("train-ratio", f"train-ratio must lie in (0, 1), got {self.train_ratio}")

    def run_dict(self) -> dict:
        return {
            "data": self.data,
            "mode": self.mode,
            "metric": self.metric,
            "train_ratio": self.train_ratio,
        }


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys are flag names."""
    known = set(MODEL_FLAGS) | set(RUN_FLAGS)
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CliError("config", f"cannot read config file: {exc}", 1) from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError("config", f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise CliError(key, f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = value
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values: dict[str, object] = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for flag in list(MODEL_FLAGS) + list(RUN_FLAGS):
        v = getattr(args, flag.replace("-", "_"), None)
        if v is not None:
            values[flag] = v
    model_kw = {}
    for flag, (fname, conv) in MODEL_FLAGS.items():
        if flag in values:
            try:
                model_kw[fname] = conv(values[flag])
            except ValueError:
                raise CliError(flag, f"invalid value for {flag}: {values[flag]!r}") from None
    try:
        model = ModelConfig(**model_kw)
    except ConfigError as exc:
        raise CliError(FIELD_TO_FLAG.get(exc.key, exc.key), str(exc).replace(exc.key, FIELD_TO_FLAG.get(exc.key, exc.key), 1)) from None
    run = RunConfig(model=model)
    for flag, conv in RUN_FLAGS.items():
        if flag in values:
            try:
                setattr(run, flag.replace("-", "_"), conv(values[flag]))
            except ValueError:
                raise CliError(flag, f"invalid value for {flag}: {values[flag]!r}") from None
    run.validate()
    return run


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    for flag, (_, conv) in MODEL_FLAGS.items():
        p.add_argument(f"--{flag}", type=conv, default=None)
    p.add_argument("--mode", choices=None, default=None)
    p.add_argument("--metric", default=None)
    p.add_argument("--train-ratio", type=float, default=None)
    p.add_argument("--config", default=None, help="key = value file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reflalign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a DBP15K-style directory and print its statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="optionally write a normalised copy here")

    p = sub.add_parser("train", help="train a model and write a checkpoint plus a metrics record")
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.add_argument("--save-every", type=int, default=0, help="also checkpoint every N epochs")
    _add_model_flags(p)

    p = sub.add_parser("eval", help="rank the held-out alignment with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--metric", default=None)

    p = sub.add_parser("diagnose", help="shape similarity and reflection isometry reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", help="write dual-aspect embeddings as TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------- commands


def _load_data(path: str | None):
    if not path:
        raise CliError("data", "no data directory given")
    pair = load_kg_pair(path)
    return pair, build_union_index(pair)


def cmd_ingest(args) -> int:
    pair, index = _load_data(args.data)
    if args.out:
        save_kg_pair(pair, args.out)
    print(
        f"entities1={pair.g1.entity_count} relations1={pair.g1.relation_count} triples1={len(pair.g1.triples)} "
        f"entities2={pair.g2.entity_count} relations2={pair.g2.relation_count} triples2={len(pair.g2.triples)} "
        f"alignment={len(pair.alignment)} edges={index.edge_count}"
    )
    return 0


def _print_reports(reports: dict, metric: str) -> None:
    print(metrics_line(reports["l2r"], "l2r", metric))
    print(metrics_line(reports["r2l"], "r2l", metric))
    print(f"{'direction':<10}{'Hits@1':>9}{'Hits@5':>9}{'Hits@10':>9}{'MRR':>9}")
    for d in ("l2r", "r2l"):
        r = reports[d]
        print(f"{d:<10}{r.hits1:>9.4f}{r.hits5:>9.4f}{r.hits10:>9.4f}{r.mrr:>9.4f}")


def cmd_train(args) -> int:
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        state, model, split = state_from_checkpoint(ckpt)
        run = RunConfig(model=model, **{k: v for k, v in ckpt.run.items() if k in ("data", "mode", "metric", "train_ratio")})
        if args.epochs is not None:
            model.epochs = args.epochs
            model.validate()
        if args.data:
            run.data = args.data
        run.out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
        pair, index = _load_data(run.data)
    else:
        run = resolve_config(args)
        pair, index = _load_data(run.data)
        split = split_seeds(pair, run.train_ratio, run.model.rng_seed)
        state = init_state(index, run.model)
    if not run.out:
        raise CliError("out", "no output directory given")
    os.makedirs(run.out, exist_ok=True)
    ckpt_path = os.path.join(run.out, "checkpoint.ckpt")

    def periodic(st):
        if args.save_every and st.epoch % args.save_every == 0:
            save_checkpoint(checkpoint_from_state(st, run.model, split, run.run_dict()), ckpt_path)
        if st.epoch % 100 == 0:
            logger.info("epoch %d loss %.4f", st.epoch, st.report.losses[-1])

    try:
        run_epochs(state, index, split, run.model, semi=run.mode == "semi", callback=periodic)
    except TrainingAborted as exc:
        dump = os.path.join(run.out, "aborted.ckpt")
        save_checkpoint(checkpoint_from_state(exc.state, run.model, split, run.run_dict()), dump)
        raise CliError("loss", f"{exc}; state dumped to {dump}", 1) from None
    save_checkpoint(checkpoint_from_state(state, run.model, split, run.run_dict()), ckpt_path)
    h_mul, _ = forward_model(index, state.params, run.model, training=False)
    reports = evaluate_alignment(h_mul, split.test, index.entity_offset, run.metric, run.model.csls_k)
    line = metrics_line(reports["l2r"], "l2r", run.metric)
    with open(os.path.join(run.out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(line + "\n")
    print(line)
    return 0


def _restore(args):
    ckpt = load_checkpoint(args.checkpoint)
    state, model, split = state_from_checkpoint(ckpt)
    pair, index = _load_data(args.data or ckpt.run.get("data"))
    if index.unified_entity_count != state.params.entity.shape[0]:
        raise CliError("data", "checkpoint does not match the data directory")
    return ckpt, state, model, split, pair, index


def cmd_eval(args) -> int:
    ckpt, state, model, split, pair, index = _restore(args)
    metric = args.metric or ckpt.run.get("metric", "csls")
    if metric not in ("csls", "cosine"):
        raise CliError("metric", f"metric must be 'csls' or 'cosine', got {metric!r}")
    h_mul, _ = forward_model(index, state.params, model, training=False)
    _print_reports(evaluate_alignment(h_mul, split.test, index.entity_offset, metric, model.csls_k), metric)
    return 0


def cmd_diagnose(args) -> int:
    ckpt, state, model, split, pair, index = _restore(args)
    h_mul, _ = forward_model(index, state.params, model, training=False)
    n1 = index.entity_offset
    m = min(args.m, len(split.test))
    for metric in ("cosine", "l2"):
        rep = shape_similarity(h_mul[:n1], h_mul[n1:], split.test, metric, m, args.seed)
        print(rep.to_record())
    rng = np.random.default_rng(args.seed)
    probes = rng.normal(size=(32, model.dim))
    print(isometry_report(state.params.relation, probes, rng_seed=args.seed).to_record())
    rel = state.params.relation
    worst = max(orthogonality_residual(reflection_matrix(r)) for r in rel[: min(len(rel), 256)])
    print(f"max_orthogonality_residual={worst:.3e} relations_checked={min(len(rel), 256)}")
    return 0


def cmd_export(args) -> int:
    ckpt, state, model, split, pair, index = _restore(args)
    n = export_embeddings(state.params, pair, args.out, model, index)
    print(f"exported={n} path={args.out}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "export": cmd_export,
}


def _quote(s: str) -> str:
    return '"' + " ".join(str(s).split()).replace('"', "'") + '"'


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        if not args.command:
            raise CliError("command", "missing subcommand (ingest, train, eval, diagnose, export)")
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error key={exc.key} message={_quote(exc)}", file=sys.stderr)
        return exc.status
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        key = "checkpoint" if isinstance(exc, CheckpointError) else "data"
        print(f"error key={key} message={_quote(exc)}", file=sys.stderr)
        return 1
    except NonFiniteError as exc:
        print(f"error key=loss message={_quote(exc)}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())

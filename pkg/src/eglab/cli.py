"""Command-line entry point: ``eglab <subcommand> --config cfg.json ...``.

Every subcommand reads an experiment config (JSON, all keys optional) and
accepts ``--set dotted.key=value`` overrides. Exit status: 0 on success,
1 on a failed cell or runtime error, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import dataio, fisher, harness, strategies
from .errors import ConfigError, EglabError
from .harness import ExperimentConfig
from .metrics import evaluate
from .seqmodel import init_params, load_checkpoint, save_checkpoint, train

log = logging.getLogger("eglab")


class UsageError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str, overrides: list[str]) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_value(value)
    return ExperimentConfig.from_dict(doc)


def _alphabet(cfg: ExperimentConfig):
    return cfg.gen.alphabet


def _labeled(data, alphabet):
    missing = [u.id for u in data if u.reference is None]
    if missing:
        raise ConfigError(f"training data has unlabeled utterances: {missing[:5]}")
    return [(u, alphabet.encode(u.reference)) for u in data]


def cmd_gen_data(args, cfg):
    n = args.n or (cfg.n_seed + cfg.n_pool + cfg.n_test)
    gen = dataclasses.replace(cfg.gen, seed=args.seed)
    dataio.save_dataset(args.out, dataio.generate(gen, n))
    return 0


def cmd_train(args, cfg):
    data = _labeled(dataio.load_dataset(args.data), _alphabet(cfg))
    start = load_checkpoint(args.init) if args.init else init_params(cfg.shape, args.seed)
    history: list = []
    params = train(start, data, dataclasses.replace(cfg.train, seed=args.seed), history)
    save_checkpoint(args.out, params)
    if args.history:
        Path(args.history).write_text(json.dumps(history) + "\n")
    return 0


def _strategy(cfg: ExperimentConfig, name: str, seed: int) -> strategies.StrategyConfig:
    for s in cfg.strategies:
        if s.name == name:
            return dataclasses.replace(s, seed=seed) if s.kind == "random" else s
    if name in strategies.KINDS:
        return strategies.StrategyConfig(name, seed=seed)
    raise UsageError(f"unknown strategy {name!r}")


def cmd_score(args, cfg):
    params = load_checkpoint(args.checkpoint)
    pool = dataio.load_dataset(args.data)
    records = strategies.score_pool(params, pool, _strategy(cfg, args.strategy, args.seed))
    strategies.dump_scores(args.out, records)
    return 0


def cmd_select(args, cfg):
    ids = strategies.select_batch(strategies.load_scores(args.scores), args.fraction)
    Path(args.out).write_text(json.dumps(ids) + "\n")
    return 0


def cmd_eval(args, cfg):
    report = evaluate(load_checkpoint(args.checkpoint), dataio.load_dataset(args.data),
                      _alphabet(cfg), cfg.eval_beam_width)
    Path(args.out).write_text(report.to_json() + "\n")
    return 0


def cmd_al_run(args, cfg):
    if args.seed:
        cfg.seeds = list(args.seed)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    table = harness.run_experiment(cfg)
    print(table.pretty("cer"))
    if table.failed:
        for key in table.failed:
            print(f"failed cell: {key}", file=sys.stderr)
        return 1
    return 0


def cmd_rank_compare(args, cfg):
    params = load_checkpoint(args.checkpoint)
    pool = dataio.load_dataset(args.data)
    a, b = _strategy(cfg, args.a, args.seed), _strategy(cfg, args.b, args.seed)
    rec_a = strategies.score_pool(params, pool, a)
    rec_b = strategies.score_pool(params, pool, b)
    agreement = harness.rank_compare(params, pool, a, b, args.out_dir, rec_a, rec_b)
    names = {a.name: rec_a, b.name: rec_b}
    if "egl" in names and "entropy" in names and all(u.reference is not None for u in pool):
        probe = harness.silence_probe(pool, names["egl"], names["entropy"])
        Path(args.out_dir, "silence_probe.json").write_text(json.dumps(probe, sort_keys=True, indent=1) + "\n")
    print(f"spearman_rho={agreement.spearman_rho:.6f} kendall_tau={agreement.kendall_tau:.6f}")
    return 0


def cmd_fisher_check(args, cfg):
    opts = {"n": 500, "replicates": 2000, "x": 1.0, **cfg.fisher}
    n = args.n or int(opts["n"])
    reps = args.replicates or int(opts["replicates"])
    params, cand, mask = fisher.bernoulli_toy(x=float(opts["x"]))
    report = fisher.asymptotic_check(params, fisher.PoolDesign([1.0]), [cand], n, reps, args.seed, mask)
    Path(args.out).write_text(report.to_json() + "\n")
    print(f"cov_rel_err={report.cov_rel_err:.4f} loss_var_rel_err={report.loss_var_rel_err:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eglab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help, seed=True):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted key, JSON value)")
        if seed:
            p.add_argument("--seed", type=int, required=True)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "generate a synthetic dataset (JSON lines)")
    p.add_argument("--n", type=int)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a model on a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--init", help="warm-start checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="write per-epoch mean losses here")

    p = add("score", cmd_score, "score a pool with one strategy")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--out", required=True)

    p = add("select", cmd_select, "pick the top fraction of a score dump", seed=False)
    p.add_argument("--scores", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "evaluate a checkpoint on a labeled dataset", seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("al-run", help="run the full active-learning sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, nargs="+", required=True, help="replicate seeds")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_al_run)

    p = add("rank-compare", cmd_rank_compare, "compare two strategies' rankings of a pool")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("fisher-check", cmd_fisher_check, "Monte-Carlo check of MLE variance against inverse Fisher")
    p.add_argument("--n", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except (UsageError, ConfigError, TypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"eglab: error: {exc}", file=sys.stderr)
        return 2
    except (EglabError, OSError) as exc:
        print(f"eglab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

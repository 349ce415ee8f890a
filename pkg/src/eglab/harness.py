"""Desk-scale active-learning experiments.

Per replicate seed: generate seed/pool/test splits, train a base model on
the seed set, score the pool with every strategy under that base model,
then for each query fraction label the selection, continue training from
the base checkpoint on seed + selection, and evaluate on the test split.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataio, strategies
from .dataio import GenConfig
from .errors import ConfigError, EglabError
from .metrics import EvalReport, RankAgreement, evaluate, rank_agreement
from .seqmodel import (ModelParams, ModelShape, TrainConfig, init_params, load_checkpoint,
                       save_checkpoint, train)
from .strategies import ScoreRecord, StrategyConfig

log = logging.getLogger(__name__)

DEFAULT_STRATEGIES = ("random", "entropy", "pctc", "egl")
DEFAULT_RANK_PAIRS = (("pctc", "entropy"), ("egl", "entropy"))


@dataclass
class ExperimentConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    n_seed: int = 200
    n_pool: int = 2000
    n_test: int = 500
    hidden_dim: int = 16
    train: TrainConfig = field(default_factory=TrainConfig)
    strategies: list = field(default_factory=lambda: [StrategyConfig(k) for k in DEFAULT_STRATEGIES])
    query_fractions: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "al_run"
    eval_beam_width: int = 16
    rank_pairs: list = field(default_factory=lambda: [list(p) for p in DEFAULT_RANK_PAIRS])
    fisher: dict = field(default_factory=dict)  # fisher-check options: n, replicates, x

    def __post_init__(self):
        if not self.strategies or not self.query_fractions:
            raise ConfigError("need at least one strategy and one query fraction")
        if list(self.query_fractions) != sorted(self.query_fractions):
            raise ConfigError("query_fractions must be sorted ascending")
        if any(not 0 < f <= 1 for f in self.query_fractions):
            raise ConfigError("query fractions must lie in (0, 1]")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate strategies {names}")
        if min(self.n_seed, self.n_pool, self.n_test) < 1:
            raise ConfigError("split sizes must be positive")

    @property
    def shape(self) -> ModelShape:
        return ModelShape(self.gen.feature_dim, self.hidden_dim, self.gen.alphabet_size + 1)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kw = {}
        if "gen" in d:
            kw["gen"] = GenConfig.from_dict(d.pop("gen"))
        if "train" in d:
            kw["train"] = TrainConfig(**d.pop("train"))
        if "strategies" in d:
            kw["strategies"] = [StrategyConfig(s) if isinstance(s, str) else StrategyConfig.from_dict(s)
                                for s in d.pop("strategies")]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**kw, **d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["strategies"] = [dataclasses.asdict(s) for s in self.strategies]
        return d


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class ResultsTable:
    """Cells keyed by (strategy, fraction, seed); a failed cell maps to None."""

    cells: dict = field(default_factory=dict)

    def add(self, strategy: str, fraction: float, seed: int, report: EvalReport | None) -> None:
        self.cells[(strategy, float(fraction), int(seed))] = report

    @property
    def failed(self) -> list:
        return [k for k, v in sorted(self.cells.items()) if v is None]

    def aggregate(self) -> dict:
        """(strategy, fraction) -> {metric: (mean, std, n)} over successful seeds."""
        groups: dict = {}
        for (s, f, _), rep in sorted(self.cells.items()):
            if rep is not None:
                groups.setdefault((s, f), []).append(rep)
        out = {}
        for key, reps in groups.items():
            out[key] = {}
            for m in ("mean_ctc", "cer", "wer"):
                vals = np.array([getattr(r, m) for r in reps])
                std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
                out[key][m] = (float(vals.mean()), std, len(vals))
        return out

    def mean(self, strategy: str, fraction: float, metric: str = "cer") -> float:
        return self.aggregate()[(strategy, float(fraction))][metric][0]

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "fraction", "seed", "mean_ctc", "cer", "wer"])
        for (s, f, seed), rep in sorted(self.cells.items()):
            if rep is None:
                w.writerow([s, _fmt(f), seed, "failed", "failed", "failed"])
            else:
                w.writerow([s, _fmt(f), seed, _fmt(rep.mean_ctc), _fmt(rep.cer), _fmt(rep.wer)])
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "fraction", "n_seeds", "mean_ctc_mean", "mean_ctc_std",
                    "cer_mean", "cer_std", "wer_mean", "wer_std"])
        for (s, f), stats in sorted(self.aggregate().items()):
            w.writerow([s, _fmt(f), stats["cer"][2]]
                       + [_fmt(v) for m in ("mean_ctc", "cer", "wer") for v in stats[m][:2]])
        return buf.getvalue()

    def pretty(self, metric: str = "cer") -> str:
        """Fractions down, strategies across, as a compact comparison table."""
        agg = self.aggregate()
        strats = sorted({s for s, _ in agg}, key=lambda s: (DEFAULT_STRATEGIES + (s,)).index(s))
        fracs = sorted({f for _, f in agg})
        lines = [f"{metric:>8} " + " ".join(f"{s:>16}" for s in strats)]
        for f in fracs:
            cells = []
            for s in strats:
                m = agg.get((s, f), {}).get(metric)
                cells.append(f"{m[0]:8.4f} ± {m[1]:.4f}" if m else f"{'-':>16}")
            lines.append(f"{f:>8.0%} " + " ".join(cells))
        return "\n".join(lines)


def scatter_svg(points: Sequence[tuple], label_a: str, label_b: str, size: int = 640) -> str:
    """Self-contained SVG scatter of normalized ranks with the diagonal dashed."""
    pad = 40
    span = size - 2 * pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad + span}" x2="{pad + span}" y2="{pad}" stroke="gray" stroke-dasharray="6,4"/>',
    ]
    for a, b in points:
        x = pad + a * span
        y = pad + (1 - b) * span
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2" fill="steelblue" fill-opacity="0.6"/>')
    parts.append(f'<text x="{size / 2}" y="{size - 10}" text-anchor="middle" font-size="14">{label_a} rank</text>')
    parts.append(f'<text x="14" y="{size / 2}" text-anchor="middle" font-size="14" '
                 f'transform="rotate(-90 14 {size / 2})">{label_b} rank</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def silence_probe(pool: Sequence, egl: Sequence[ScoreRecord], entropy: Sequence[ScoreRecord],
                  top: int = 20, egl_quantile: float = 0.9, entropy_quantile: float = 0.25) -> dict:
    """Utterances EGL ranks informative while entropy ranks them uninformative.

    ``pool`` items need ``id``, ``silence`` and ``reference`` (the full,
    unhidden pool). The quadrant is the top decile of EGL normalized rank
    crossed with the bottom quartile of entropy normalized rank.
    """
    by_id = {u.id: u for u in pool}
    e_rank = {r.utterance_id: r.normalized_rank for r in egl}
    h_rank = {r.utterance_id: r.normalized_rank for r in entropy}
    ids = sorted(by_id)
    quadrant = [i for i in ids if e_rank[i] >= egl_quantile and h_rank[i] <= entropy_quantile]
    low_entropy = sorted((i for i in ids if h_rank[i] <= entropy_quantile), key=lambda i: (-e_rank[i], i))
    base_rate = sum(by_id[i].silence for i in ids) / len(ids)
    n_sil = sum(by_id[i].silence for i in quadrant)
    return {
        "n_pool": len(ids),
        "base_rate": base_rate,
        "n_quadrant": len(quadrant),
        "n_silence_in_quadrant": n_sil,
        "quadrant_silence_rate": n_sil / len(quadrant) if quadrant else None,
        "top": [
            {"id": i, "egl_rank": e_rank[i], "entropy_rank": h_rank[i],
             "reference_length": len(by_id[i].reference or ""), "n_frames": by_id[i].n_frames,
             "silence": bool(by_id[i].silence)}
            for i in low_entropy[:top]
        ],
    }


def rank_compare(params: ModelParams | None, pool: Sequence, strategy_a: StrategyConfig,
                 strategy_b: StrategyConfig, out_dir=None, records_a=None, records_b=None) -> RankAgreement:
    """Rank agreement of two strategies on one pool, optionally written as JSON/CSV/SVG."""
    if records_a is None:
        records_a = strategies.score_pool(params, pool, strategy_a)
    if records_b is None:
        records_b = strategies.score_pool(params, pool, strategy_b)
    agreement = rank_agreement({r.utterance_id: r.score for r in records_a},
                               {r.utterance_id: r.score for r in records_b})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{strategy_a.name}_vs_{strategy_b.name}"
        agreement.write_scatter_csv(out / f"{stem}.csv")
        (out / f"{stem}.svg").write_text(scatter_svg(agreement.scatter, strategy_a.name, strategy_b.name))
        (out / f"{stem}.json").write_text(json.dumps(
            {"a": strategy_a.name, "b": strategy_b.name, "n": len(agreement.scatter),
             "spearman_rho": agreement.spearman_rho, "kendall_tau": agreement.kendall_tau},
            sort_keys=True) + "\n")
    return agreement


def _replicate_gen(gen: GenConfig, seed: int) -> GenConfig:
    return dataclasses.replace(gen, seed=int(np.random.SeedSequence([gen.seed, seed]).generate_state(1)[0]))


def _labeled(pairs, alphabet):
    return [(u, alphabet.encode(ref)) for u, ref in pairs]


def train_base(config: ExperimentConfig, split: dataio.DatasetSplit, seed: int) -> ModelParams:
    alphabet = config.gen.alphabet
    data = _labeled([(u, u.reference) for u in split.labeled_seed], alphabet)
    init = init_params(config.shape, seed)
    return train(init, data, dataclasses.replace(config.train, seed=seed))


def run_seed(config: ExperimentConfig, seed: int, table: ResultsTable, out: Path) -> dict:
    """One replicate: base model, pool scores, every (strategy, fraction) cell."""
    alphabet = config.gen.alphabet
    split = dataio.make_splits(_replicate_gen(config.gen, seed), config.n_seed, config.n_pool, config.n_test)
    sdir = out / f"seed_{seed}"
    sdir.mkdir(parents=True, exist_ok=True)

    base = train_base(config, split, seed)
    save_checkpoint(sdir / "base.json", base)
    seed_data = _labeled([(u, u.reference) for u in split.labeled_seed], alphabet)

    records = {}
    for scfg in config.strategies:
        if scfg.kind == "random":
            scfg = dataclasses.replace(scfg, seed=scfg.seed + seed)
        records[scfg.name] = strategies.score_pool(base, split.unlabeled_pool, scfg)
        strategies.dump_scores(sdir / f"scores_{scfg.name}.jsonl", records[scfg.name])

    for scfg in config.strategies:
        for frac in config.query_fractions:
            cell = sdir / f"{scfg.name}_{frac:g}"
            try:
                chosen = strategies.select_batch(records[scfg.name], frac)
                oracle = split.oracle.fork()
                labeled = _labeled(oracle.query(sorted(chosen)), alphabet)
                data = sorted(seed_data + labeled, key=lambda p: p[0].id)
                model = train(base, data, dataclasses.replace(config.train, seed=seed))
                report = evaluate(model, split.test, alphabet, config.eval_beam_width)
            except (EglabError, FloatingPointError) as exc:
                log.error("cell %s/%g/%d failed: %s", scfg.name, frac, seed, exc)
                table.add(scfg.name, frac, seed, None)
                continue
            cell.mkdir(exist_ok=True)
            (cell / "cell.json").write_text(json.dumps(
                {"strategy": scfg.name, "fraction": frac, "seed": seed, "n_train": len(data),
                 "budget": oracle.budget, **dataclasses.asdict(report)}, sort_keys=True) + "\n")
            oracle.save_ledger(cell / "budget.json")
            table.add(scfg.name, frac, seed, report)
            with open(out / "run.log", "a") as fh:
                fh.write(f"seed={seed} strategy={scfg.name} fraction={frac:g} n_train={len(data)} "
                         f"cer={report.cer:.6f} wer={report.wer:.6f} mean_ctc={report.mean_ctc:.6f}\n")

    summaries = {}
    by_kind = {s.name: s for s in config.strategies}
    pool_full = split.oracle.inspect()
    for a, b in config.rank_pairs:
        if a in records and b in records:
            agreement = rank_compare(None, split.unlabeled_pool, by_kind[a], by_kind[b], sdir / "ranks",
                                     records[a], records[b])
            summaries[f"{a}_vs_{b}"] = {"spearman_rho": agreement.spearman_rho,
                                        "kendall_tau": agreement.kendall_tau}
    if "egl" in records and "entropy" in records:
        probe = silence_probe(pool_full, records["egl"], records["entropy"])
        (sdir / "ranks").mkdir(exist_ok=True)
        (sdir / "ranks" / "silence_probe.json").write_text(json.dumps(probe, sort_keys=True, indent=1) + "\n")
        summaries["silence_probe"] = {k: probe[k] for k in ("base_rate", "n_quadrant", "quadrant_silence_rate")}
    (sdir / "ranks_summary.json").write_text(json.dumps(summaries, sort_keys=True) + "\n")
    return summaries


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    """Run every (strategy, fraction, seed) cell and write tables under ``output_dir``."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.log").write_text("")
    (out / "config.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=1) + "\n")
    table = ResultsTable()
    for seed in config.seeds:
        run_seed(config, seed, table, out)
    (out / "results.csv").write_text(table.results_csv())
    (out / "aggregate.csv").write_text(table.aggregate_csv())
    return table

"""Learning-curve experiments: supervised baseline against the semi-VAE.

For every (labeled_count, seed) cell the harness draws one split and one
parameter initialization, then trains two arms from that shared starting
point: ``supervised`` updates the classifier on cross-entropy alone, and
``semi`` trains the full model on labeled plus unlabeled batches.  Pairing
the arms this way makes their F1 difference attributable to the objective
rather than to split or initialization luck.

Cells are independent, so a sweep could run them in parallel; this runner
executes them sequentially and assembles the report in a fixed order.
"""

from __future__ import annotations

import dataclasses
import time
from typing import Optional

import numpy as np

from .corpus import DatasetSplit, LabelSchema, build_vocab, sample_splits
from .metrics import evaluate
from .networks import ModelConfig
from .rng import SeededRng
from .semivae import SemiVAE, TrainConfig, predict, train

ARMS = ("supervised", "semi")


@dataclasses.dataclass(frozen=True)
class CurveRow:
    """Test-set micro scores for one trained arm."""

    labeled_count: int
    arm: str
    seed: int
    precision: float
    recall: float
    f1: float


@dataclasses.dataclass(frozen=True)
class CurveSummary:
    labeled_count: int
    arm: str
    n_runs: int
    mean_f1: float
    std_f1: float
    mean_precision: float
    mean_recall: float


_TSV_COLUMNS = ("labeled_count", "arm", "seed", "precision", "recall", "f1")


@dataclasses.dataclass
class CurveReport:
    """Per-run rows plus notes about skipped cells."""

    rows: list
    notes: list = dataclasses.field(default_factory=list)

    def counts(self) -> list:
        return sorted({r.labeled_count for r in self.rows})

    def select(self, labeled_count: int, arm: str) -> list:
        return [r for r in self.rows
                if r.labeled_count == labeled_count and r.arm == arm]

    def aggregate(self) -> list:
        """Mean and standard deviation over seeds per (count, arm); the
        standard deviation uses the n-1 denominator and is 0 for one run."""
        out = []
        for count in self.counts():
            for arm in ARMS:
                rows = self.select(count, arm)
                if not rows:
                    continue
                f1s = [r.f1 for r in rows]
                out.append(CurveSummary(
                    labeled_count=count,
                    arm=arm,
                    n_runs=len(rows),
                    mean_f1=float(np.mean(f1s)),
                    std_f1=float(np.std(f1s, ddof=1)) if len(f1s) > 1 else 0.0,
                    mean_precision=float(np.mean([r.precision for r in rows])),
                    mean_recall=float(np.mean([r.recall for r in rows])),
                ))
        return out

    def to_tsv(self, path=None) -> str:
        lines = [f"# note: {note}" for note in self.notes]
        lines.append("\t".join(_TSV_COLUMNS))
        for r in sorted(self.rows, key=lambda r: (r.labeled_count, r.arm, r.seed)):
            lines.append(f"{r.labeled_count}\t{r.arm}\t{r.seed}\t"
                         f"{r.precision!r}\t{r.recall!r}\t{r.f1!r}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_tsv(cls, text: str) -> "CurveReport":
        rows, notes = [], []
        header = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("# note: "):
                notes.append(line[len("# note: "):])
                continue
            if header is None:
                header = tuple(line.split("\t"))
                if header != _TSV_COLUMNS:
                    raise ValueError(f"unexpected columns: {header}")
                continue
            count, arm, seed, p, r, f1 = line.split("\t")
            rows.append(CurveRow(int(count), arm, int(seed),
                                 float(p), float(r), float(f1)))
        if header is None:
            raise ValueError("no header line found")
        return cls(rows, notes)

    def plot(self, path) -> None:
        """Mean F1 per labeled count with one-standard-deviation bars, one
        line per arm; file format follows the extension (svg, png, ...)."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        for arm, style in zip(ARMS, ("o-", "s--")):
            summaries = [s for s in self.aggregate() if s.arm == arm]
            if not summaries:
                continue
            xs = [s.labeled_count for s in summaries]
            ys = [s.mean_f1 for s in summaries]
            errs = [s.std_f1 for s in summaries]
            ax.errorbar(xs, ys, yerr=errs, fmt=style, capsize=3, label=arm)
        ax.set_xscale("log")
        ax.set_xlabel("labeled instances")
        ax.set_ylabel("test micro-F1")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def _train_arm(arm: str, split: DatasetSplit, schema: LabelSchema,
               model_config: ModelConfig, train_config: TrainConfig,
               init_seed: int, vocab) -> SemiVAE:
    model = SemiVAE(model_config, vocab, schema, SeededRng(init_seed))
    config = dataclasses.replace(train_config,
                                 supervised_only=(arm == "supervised"))
    model, _ = train(model, split, config)
    return model


def run_learning_curve(
    instances,
    schema: LabelSchema,
    labeled_counts,
    n_seeds: int,
    model_config: ModelConfig,
    train_config: TrainConfig,
    val_count: int = 500,
    test_count: int = 500,
    arms=ARMS,
    base_seed: int = 0,
    unlabeled_count: Optional[int] = None,
    log=None,
) -> CurveReport:
    """Train every (count, seed, arm) cell and score it on the test split.

    The split for a given seed keeps its test and validation sets fixed
    across labeled counts, and smaller labeled sets are prefixes of larger
    ones, so rows differ only in what the sweep varies.  ``unlabeled_count``
    caps each cell's unlabeled pool; since epoch length follows the larger
    of the two streams, the cap also bounds per-cell training time.
    """
    labeled_counts = sorted(set(int(c) for c in labeled_counts))
    if labeled_counts[0] < 1:
        raise ValueError("labeled counts must be positive")
    if unlabeled_count is not None and unlabeled_count < 0:
        raise ValueError("unlabeled count must be non-negative")
    available = len(instances) - val_count - test_count
    if labeled_counts[-1] > available:
        raise ValueError(
            f"corpus has {len(instances)} instances; {val_count} validation "
            f"+ {test_count} test leave {available}, fewer than the "
            f"requested {labeled_counts[-1]} labeled")
    for arm in arms:
        if arm not in ARMS:
            raise ValueError(f"unknown arm {arm!r}")

    vocab = build_vocab(instances)
    report = CurveReport(rows=[])
    for count in labeled_counts:
        for seed in range(n_seeds):
            split = sample_splits(instances, count, val_count, test_count,
                                  SeededRng(base_seed).fork(f"split:{seed}"))
            if unlabeled_count is not None:
                split = dataclasses.replace(
                    split, unlabeled=split.unlabeled[:unlabeled_count])
            gold = [inst.label for inst in split.test]
            init_seed = base_seed * 1_000_003 + seed * 1009 + count
            cell_config = dataclasses.replace(train_config,
                                              seed=init_seed + 7)
            for arm in arms:
                if arm == "semi" and not split.unlabeled:
                    note = (f"labeled_count={count} seed={seed}: "
                            f"semi arm skipped, no unlabeled instances remain")
                    report.notes.append(note)
                    if log:
                        log(note)
                    continue
                started = time.perf_counter()
                model = _train_arm(arm, split, schema, model_config,
                                   cell_config, init_seed, vocab)
                metrics = evaluate(predict(model, split.test), gold, schema)
                report.rows.append(CurveRow(
                    labeled_count=count, arm=arm, seed=seed,
                    precision=metrics.micro_precision,
                    recall=metrics.micro_recall,
                    f1=metrics.micro_f1))
                if log:
                    log(f"count={count} seed={seed} arm={arm}: "
                        f"F1={metrics.micro_f1:.4f} "
                        f"({time.perf_counter() - started:.1f}s)")
    return report

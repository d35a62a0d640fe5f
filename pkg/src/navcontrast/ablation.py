"""Ablation matrix: loss-form variants (contrast loss kind, memory bank,
pair mining) and term-removal variants (which contrast weights are live),
each trained over several seeds and summarized as mean and stdev SR/SPL
on both splits."""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .training import TrainConfig, evaluate, train_run

# loss-form rows: every contrast term active, the machinery varies
LOSS_FORM_ROWS = (
    ("t5_nce_bank", dict(contrast_loss="nce", use_bank=True,
                         use_mining=False)),
    ("t5_nce_bank_mine", dict(contrast_loss="nce", use_bank=True,
                              use_mining=True)),
    ("t5_circle", dict(contrast_loss="circle", use_bank=False,
                       use_mining=False)),
    ("t5_circle_bank", dict(contrast_loss="circle", use_bank=True,
                            use_mining=False)),
    ("t5_circle_mine", dict(contrast_loss="circle", use_bank=False,
                            use_mining=True)),
    ("t5_full", dict(contrast_loss="circle", use_bank=True,
                     use_mining=True)),
)

# term rows: full machinery, weights toggled one at a time
TERM_ROWS = (
    ("t6_baseline", dict(lambda_traj=0.0, lambda_instr=0.0,
                         lambda_subinstr=0.0)),
    ("t6_traj", dict(lambda_instr=0.0, lambda_subinstr=0.0)),
    ("t6_instr", dict(lambda_traj=0.0, lambda_subinstr=0.0)),
    ("t6_subinstr", dict(lambda_traj=0.0, lambda_instr=0.0)),
    ("t6_full", dict()),
)

DEFAULT_MATRIX = LOSS_FORM_ROWS + TERM_ROWS

ABLATION_CSV_HEADER = ("name,sr_seen_mean,sr_seen_std,spl_seen_mean,"
                       "spl_seen_std,sr_unseen_mean,sr_unseen_std,"
                       "spl_unseen_mean,spl_unseen_std")


@dataclass(frozen=True)
class AblationResult:
    """Per-seed SR/SPL samples for one matrix row."""

    name: str
    sr_seen: tuple
    spl_seen: tuple
    sr_unseen: tuple
    spl_unseen: tuple

    @staticmethod
    def _stat(xs):
        mean = float(np.mean(xs))
        std = float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0
        return mean, std

    def csv_row(self) -> str:
        cells = [self.name]
        for xs in (self.sr_seen, self.spl_seen, self.sr_unseen,
                   self.spl_unseen):
            mean, std = self._stat(xs)
            cells.extend([f"{mean:.4f}", f"{std:.4f}"])
        return ",".join(cells)

    def text_row(self) -> str:
        parts = [f"{self.name:<18}"]
        for label, xs in (("seen SR", self.sr_seen),
                          ("SPL", self.spl_seen),
                          ("unseen SR", self.sr_unseen),
                          ("SPL", self.spl_unseen)):
            mean, std = self._stat(xs)
            parts.append(f"{label} {mean:.3f}+/-{std:.3f}")
        return "  ".join(parts)


def matrix_config(base: TrainConfig, name, matrix=DEFAULT_MATRIX) \
        -> TrainConfig:
    for row_name, overrides in matrix:
        if row_name == name:
            return replace(base, **overrides)
    raise KeyError(f"unknown ablation row {name!r}")


def run_row(dataset, base: TrainConfig, name, overrides, seeds) \
        -> AblationResult:
    """Train one configuration per seed and evaluate both splits."""
    sr_s, spl_s, sr_u, spl_u = [], [], [], []
    for seed in seeds:
        cfg = replace(base, seed=int(seed), **overrides)
        train_eps = dataset.episodes("seen", cfg,
                                     augment=cfg.wants_contrast())
        params = train_run(train_eps, dataset.vocab, dataset.num_landmarks,
                           cfg)
        agg_s, _ = evaluate(
            params, dataset.episodes("seen", cfg, augment=False), cfg)
        agg_u, _ = evaluate(
            params, dataset.episodes("unseen", cfg, augment=False), cfg)
        sr_s.append(agg_s.sr)
        spl_s.append(agg_s.spl)
        sr_u.append(agg_u.sr)
        spl_u.append(agg_u.spl)
    return AblationResult(name, tuple(sr_s), tuple(spl_s), tuple(sr_u),
                          tuple(spl_u))


def run_matrix(dataset, base: TrainConfig, seeds, matrix=DEFAULT_MATRIX,
               progress=None):
    results = []
    for name, overrides in matrix:
        if progress is not None:
            progress(name)
        results.append(run_row(dataset, base, name, overrides, seeds))
    return results


def results_to_csv(results, config_hash=None) -> str:
    buf = io.StringIO()
    if config_hash:
        buf.write(f"# config_sha256={config_hash}\n")
    buf.write(ABLATION_CSV_HEADER + "\n")
    for res in results:
        buf.write(res.csv_row() + "\n")
    return buf.getvalue()


def results_to_text(results, seeds, config_hash=None) -> str:
    lines = [f"ablation over seeds {list(seeds)}"]
    if config_hash:
        lines.append(f"config sha256 {config_hash}")
    lines.extend(res.text_row() for res in results)
    return "\n".join(lines) + "\n"

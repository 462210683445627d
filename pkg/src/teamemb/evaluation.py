"""Majority-vote player matching, miss/correct/error counters, the derived
rates, grouped k-fold splits, and the cross-validated experiment runner.

A player counts as detected when strictly more than half of its evaluation
pixels (the near-axis body/pelvis support) fall inside the predicted
player mask; its team is then the majority non-zero occupancy label over
those pixels. Occupancy labels are symmetric, so each image is scored
under the better of the two label-to-team assignments.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baseline import axis_filtered_pixels, baseline_assign
from .clustering import cluster_teams
from .config import RunConfig, scene_config
from .data import (PlayerAnnotation, Scene, compose_scene_masks, generate_corpus,
                   load_corpus)
from .net import TeamNet
from .train import image_to_tensor, train_model

__all__ = [
    "EvalCounts",
    "MatchOutcome",
    "match_player",
    "accumulate",
    "best_alignment",
    "score_scene",
    "compute_metrics",
    "FoldSplit",
    "kfold_split",
    "evaluate_embedding",
    "evaluate_baseline",
    "MetricsReport",
    "ExperimentResult",
    "run_experiment",
    "report_csv",
    "report_text",
]


@dataclass
class EvalCounts:
    n_miss: int = 0
    n_corr: int = 0
    n_err: int = 0
    excluded: int = 0  # players with empty evaluation pixel sets

    @property
    def total(self) -> int:
        return self.n_miss + self.n_corr + self.n_err

    def merged(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(self.n_miss + other.n_miss, self.n_corr + other.n_corr,
                          self.n_err + other.n_err, self.excluded + other.excluded)


@dataclass
class MatchOutcome:
    status: str            # "detected" | "missed" | "excluded"
    label: Optional[int] = None


def match_player(pred_mask: np.ndarray, occupancy: np.ndarray,
                 player: PlayerAnnotation, instance_mask: np.ndarray) -> MatchOutcome:
    """Majority vote over the player's evaluation pixels.

    Detected only on a strict majority (exact half counts as missed); the
    team label is the most frequent non-zero occupancy value, smaller label
    on ties.
    """
    coords = axis_filtered_pixels(player, instance_mask)
    if coords.shape[0] == 0:
        return MatchOutcome("excluded")
    covered = int(pred_mask[coords[:, 0], coords[:, 1]].sum())
    if 2 * covered <= coords.shape[0]:
        return MatchOutcome("missed")
    labels = occupancy[coords[:, 0], coords[:, 1]]
    labels = labels[labels > 0]
    if labels.size == 0:
        return MatchOutcome("missed")
    counts = np.bincount(labels)
    return MatchOutcome("detected", int(counts.argmax()))


def accumulate(counts: EvalCounts, outcome: MatchOutcome, true_team: str,
               aligned_team: Optional[str]) -> None:
    """Fold one aligned match result into the counters."""
    if outcome.status == "excluded":
        counts.excluded += 1
    elif outcome.status == "missed":
        counts.n_miss += 1
    elif aligned_team == true_team:
        counts.n_corr += 1
    else:
        counts.n_err += 1


_ASSIGNMENTS = ({1: "A", 2: "B"}, {1: "B", 2: "A"})


def best_alignment(outcomes: Sequence[MatchOutcome],
                   truths: Sequence[str]) -> Dict[int, str]:
    """The label-to-team assignment maximizing correct matches (first wins ties)."""
    best, best_score = _ASSIGNMENTS[0], -1
    for mapping in _ASSIGNMENTS:
        score = sum(
            1 for o, t in zip(outcomes, truths)
            if o.status == "detected" and mapping[o.label] == t
        )
        if score > best_score:
            best, best_score = mapping, score
    return best


def score_scene(counts: EvalCounts, outcomes: Sequence[MatchOutcome],
                truths: Sequence[str]) -> None:
    mapping = best_alignment(outcomes, truths)
    for outcome, truth in zip(outcomes, truths):
        aligned = mapping[outcome.label] if outcome.status == "detected" else None
        accumulate(counts, outcome, truth, aligned)


def compute_metrics(counts: EvalCounts) -> Tuple[float, Optional[float]]:
    """(R_miss, R_CTA); R_CTA is None when no player was detected."""
    if counts.total == 0:
        raise ValueError("compute_metrics: all counters are zero")
    r_miss = counts.n_miss / counts.total
    assigned = counts.n_corr + counts.n_err
    r_cta = counts.n_corr / assigned if assigned else None
    return r_miss, r_cta


# -- grouped K-fold -------------------------------------------------------------


@dataclass
class FoldSplit:
    mode: str
    fold_groups: List[List[str]]           # group ids per fold
    test: List[List[int]]                  # scene indices per fold
    val: List[List[int]]
    train: List[List[int]]

    @property
    def k(self) -> int:
        return len(self.test)


def kfold_split(scenes: Sequence[Scene], k: int = 10, mode: str = "game") -> FoldSplit:
    """Grouped folds: no game (or arena) contributes scenes to two folds.

    Groups go to the currently smallest fold, largest group first, which
    keeps test sizes within one group of balance. Iteration i tests on fold
    i, validates on fold (i+1) mod k, trains on the rest.
    """
    if mode not in ("game", "arena"):
        raise ValueError(f"kfold_split: unknown mode {mode!r}")
    if k < 3:
        raise ValueError("kfold_split: need k >= 3 (test and val each take one fold)")
    key = (lambda s: s.game_id) if mode == "game" else (lambda s: s.arena_id)
    members: Dict[str, List[int]] = {}
    for i, s in enumerate(scenes):
        members.setdefault(key(s), []).append(i)
    if len(members) < k:
        raise ValueError(f"kfold_split: only {len(members)} distinct groups for k={k}")
    fold_groups: List[List[str]] = [[] for _ in range(k)]
    fold_sizes = [0] * k
    for gid in sorted(members, key=lambda g: (-len(members[g]), g)):
        target = int(np.argmin(fold_sizes))
        fold_groups[target].append(gid)
        fold_sizes[target] += len(members[gid])
    fold_scenes = [sorted(i for g in groups for i in members[g]) for groups in fold_groups]
    test, val, train = [], [], []
    for i in range(k):
        test.append(fold_scenes[i])
        val.append(fold_scenes[(i + 1) % k])
        rest = [idx for j in range(k) if j not in (i, (i + 1) % k) for idx in fold_scenes[j]]
        train.append(sorted(rest))
    return FoldSplit(mode=mode, fold_groups=fold_groups, test=test, val=val, train=train)


# -- scene-set evaluation ---------------------------------------------------------


def evaluate_embedding(model: TeamNet, scenes: Sequence[Scene]) -> Tuple[EvalCounts, List[dict]]:
    """Run infer + clustering + majority vote over a scene list."""
    counts = EvalCounts()
    rows = []
    for sid, scene in enumerate(scenes):
        seg, emb = model.infer(image_to_tensor(scene.image))
        occupancy = cluster_teams(seg, emb).occupancy
        pred_mask = seg > 0.5
        pyramid = compose_scene_masks(scene.players, *scene.shape)
        outcomes = [
            match_player(pred_mask, occupancy, p, pyramid.instances[i])
            for i, p in enumerate(scene.players)
        ]
        truths = [p.team for p in scene.players]
        before = EvalCounts(**vars(counts))
        score_scene(counts, outcomes, truths)
        rows.append({
            "scene": sid,
            "n_miss": counts.n_miss - before.n_miss,
            "n_corr": counts.n_corr - before.n_corr,
            "n_err": counts.n_err - before.n_err,
            "excluded": counts.excluded - before.excluded,
        })
    return counts, rows


def evaluate_baseline(scenes: Sequence[Scene], seed: int = 0) -> Tuple[EvalCounts, List[dict]]:
    """Score the histogram + DP-GMM baseline on ground-truth instances."""
    counts = EvalCounts()
    rows = []
    for sid, scene in enumerate(scenes):
        labels, _ = baseline_assign(scene, seed=seed)
        outcomes = [
            MatchOutcome("excluded") if lab is None else MatchOutcome("detected", lab)
            for lab in labels
        ]
        truths = [p.team for p in scene.players]
        for pid, (lab, p) in enumerate(zip(labels, scene.players)):
            rows.append({
                "scene": sid,
                "player": pid,
                "true_team": p.team,
                "label": lab if lab is not None else "",
                "flag": "unassigned" if lab is None else "",
            })
        score_scene(counts, outcomes, truths)
    return counts, rows


# -- experiment harness ------------------------------------------------------------


@dataclass
class MetricsReport:
    method: str
    fold_r_miss: List[float] = field(default_factory=list)
    fold_r_cta: List[float] = field(default_factory=list)

    @property
    def mean_r_miss(self) -> float:
        return float(np.mean(self.fold_r_miss))

    @property
    def std_r_miss(self) -> float:
        return float(np.std(self.fold_r_miss))  # population std over folds

    @property
    def mean_r_cta(self) -> float:
        return float(np.mean(self.fold_r_cta))

    @property
    def std_r_cta(self) -> float:
        return float(np.std(self.fold_r_cta))


@dataclass
class ExperimentResult:
    config: RunConfig
    embedding: MetricsReport
    baseline: MetricsReport
    fold_details: List[dict] = field(default_factory=list)


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0] % (2 ** 31))


def _run_fold(fold: int, corpus: Sequence[Scene], split: FoldSplit,
              cfg: RunConfig) -> dict:
    train_scenes = [corpus[i] for i in split.train[fold]]
    val_scenes = [corpus[i] for i in split.val[fold]]
    test_scenes = [corpus[i] for i in split.test[fold]]
    trained = train_model(
        train_scenes, val_scenes,
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, lr_power=cfg.lr_power,
        weights=cfg.loss_weights(), embed_dim=cfg.embed_dim, resolution=cfg.resolution,
        seed=_fold_seed(cfg.seed, fold),
        augment_geometry=cfg.augment_geometry, augment_jitter=cfg.augment_jitter,
        validate_every=cfg.validate_every,
    )
    emb_counts, _ = evaluate_embedding(trained.model, test_scenes)
    base_counts, _ = evaluate_baseline(test_scenes, seed=cfg.seed)
    if not np.isfinite(trained.history[-1]["total"]):
        raise RuntimeError(f"fold {fold}: training diverged (non-finite loss)")
    emb_miss, emb_cta = compute_metrics(emb_counts)
    base_miss, base_cta = compute_metrics(base_counts)
    return {
        "fold": fold,
        "best_epoch": trained.best_epoch,
        "val_iou": trained.best_score,
        "emb_r_miss": emb_miss,
        "emb_r_cta": emb_cta if emb_cta is not None else float("nan"),
        "base_r_miss": base_miss,
        "base_r_cta": base_cta if base_cta is not None else float("nan"),
        "test_scenes": len(test_scenes),
        "test_players": emb_counts.total + emb_counts.excluded,
    }


def run_experiment(cfg: RunConfig, corpus: Optional[Sequence[Scene]] = None) -> ExperimentResult:
    """K-fold cross-validated comparison of the embedding pipeline and the
    color-histogram baseline. Deterministic given the config."""
    if corpus is None:
        if cfg.corpus_dir:
            corpus = load_corpus(cfg.corpus_dir)
        else:
            corpus = generate_corpus(scene_config(cfg), cfg.scenes, cfg.seed)
    split = kfold_split(corpus, k=cfg.folds, mode=cfg.mode)

    workers = cfg.threads or int(os.environ.get("TEAMEMB_THREADS", "1"))
    workers = max(1, min(workers, split.k))
    if workers == 1:
        details = [_run_fold(i, corpus, split, cfg) for i in range(split.k)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_fold, i, corpus, split, cfg) for i in range(split.k)]
            details = [f.result() for f in futures]

    embedding = MetricsReport("associative-embedding")
    baseline = MetricsReport("color-histogram")
    for row in details:
        embedding.fold_r_miss.append(row["emb_r_miss"])
        embedding.fold_r_cta.append(row["emb_r_cta"])
        baseline.fold_r_miss.append(row["base_r_miss"])
        baseline.fold_r_cta.append(row["base_r_cta"])
    return ExperimentResult(config=cfg, embedding=embedding, baseline=baseline,
                            fold_details=details)


def report_csv(result: ExperimentResult) -> str:
    """Per-fold rows plus a summary row; seeds echoed in the header."""
    cfg = result.config
    lines = [
        f"# seed={cfg.seed} scenes={cfg.scenes} folds={cfg.folds} mode={cfg.mode} "
        f"variant={cfg.variant} epochs={cfg.epochs} embed_dim={cfg.embed_dim}",
        "fold,best_epoch,val_iou,emb_r_miss,emb_r_cta,base_r_miss,base_r_cta",
    ]
    for row in result.fold_details:
        lines.append(
            f"{row['fold']},{row['best_epoch']},{row['val_iou']:.4f},"
            f"{row['emb_r_miss']:.4f},{row['emb_r_cta']:.4f},"
            f"{row['base_r_miss']:.4f},{row['base_r_cta']:.4f}"
        )
    emb, base = result.embedding, result.baseline
    lines.append(
        f"summary,,,{emb.mean_r_miss:.4f}+-{emb.std_r_miss:.4f},"
        f"{emb.mean_r_cta:.4f}+-{emb.std_r_cta:.4f},"
        f"{base.mean_r_miss:.4f}+-{base.std_r_miss:.4f},"
        f"{base.mean_r_cta:.4f}+-{base.std_r_cta:.4f}"
    )
    return "\n".join(lines) + "\n"


def report_text(result: ExperimentResult) -> str:
    emb, base = result.embedding, result.baseline
    cfg = result.config
    head = (f"{cfg.folds}-fold cross-{cfg.mode} evaluation "
            f"({cfg.scenes} scenes, variant={cfg.variant}, seed={cfg.seed})")
    rows = [
        head,
        "-" * len(head),
        f"{'method':26s} {'R_miss':>16s} {'R_CTA':>16s}",
        f"{emb.method:26s} {emb.mean_r_miss:.2f} +- {emb.std_r_miss:.2f}"
        f"{emb.mean_r_cta:13.2f} +- {emb.std_r_cta:.2f}",
        f"{base.method:26s} {base.mean_r_miss:.2f} +- {base.std_r_miss:.2f}"
        f"{base.mean_r_cta:13.2f} +- {base.std_r_cta:.2f}",
    ]
    return "\n".join(rows) + "\n"

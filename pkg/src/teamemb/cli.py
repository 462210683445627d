"""Command-line entry point: corpus generation, training, inference,
clustering, the histogram baseline, metric evaluation, the k-fold
experiment, and the gradient verification suite.

Config files are flat `key = value` text; command-line flags override file
values. Every artifact-producing subcommand writes its resolved config
next to its outputs and is byte-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

__all__ = ["cli_main", "main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teamemb",
        description="Game-agnostic team discrimination via pixel-wise associative embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, out_required=True):
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--config", type=str, default=None, help="key = value config file")
        p.add_argument("--out", type=str, required=out_required, help="output directory")
        p.add_argument("--resolution", type=int, default=None)

    p = sub.add_parser("gen", help="generate a synthetic corpus (images + JSON annotations)")
    common(p)
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--arenas", type=int, default=None)
    p.add_argument("--variant", choices=["standard", "low-contrast", "high-contrast"], default=None)

    p = sub.add_parser("train", help="train a model on a corpus directory")
    common(p)
    p.add_argument("--corpus", type=str, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--dim", type=int, default=None, help="embedding dimension D")

    p = sub.add_parser("infer", help="dump segmentation/embedding maps for a corpus")
    common(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--corpus", type=str, required=True)

    p = sub.add_parser("cluster", help="write team occupancy PNGs for a corpus")
    common(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--corpus", type=str, required=True)

    p = sub.add_parser("baseline", help="run the color-histogram baseline over a corpus")
    common(p)
    p.add_argument("--corpus", type=str, required=True)

    p = sub.add_parser("eval", help="score predicted occupancy maps against annotations")
    common(p)
    p.add_argument("--corpus", type=str, required=True)
    p.add_argument("--pred", type=str, required=True, help="directory of *_occupancy.png maps")

    p = sub.add_parser("kfold", help="run the cross-validated experiment")
    common(p)
    p.add_argument("--corpus", type=str, default=None)
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--arenas", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--mode", choices=["game", "arena"], default=None)
    p.add_argument("--variant", choices=["standard", "low-contrast", "high-contrast"], default=None)

    p = sub.add_parser("gradcheck", help="finite-difference verification of the losses and network")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _resolve_config(args) -> "RunConfig":
    from .config import RunConfig, parse_config_file

    cfg = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        cfg = parse_config_file(path, cfg)
    overrides = {
        "seed": "seed", "scenes": "scenes", "resolution": "resolution",
        "epochs": "epochs", "batch": "batch_size", "dim": "embed_dim",
        "folds": "folds", "mode": "mode", "variant": "variant",
        "games": "n_games", "arenas": "n_arenas", "corpus": "corpus_dir",
        "out": "out_dir",
    }
    for arg_name, field in overrides.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            cfg = replace(cfg, **{field: value})
    cfg.validate()
    return cfg


def _prepare_out(cfg) -> Path:
    from .config import write_config

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "run_config.txt")
    return out


def _load_scenes(directory: str):
    from .data import load_corpus

    path = Path(directory)
    if not path.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {path}")
    return load_corpus(path)


def _cmd_gen(args) -> int:
    from .config import scene_config
    from .data import generate_corpus, save_corpus

    cfg = _resolve_config(args)
    out = _prepare_out(cfg)
    scenes = generate_corpus(scene_config(cfg), cfg.scenes, cfg.seed)
    save_corpus(scenes, out)
    print(f"wrote {cfg.scenes} scenes to {out}")
    return 0


def _train_val_split(scenes, mode: str = "game"):
    # hold out every tenth group (deterministic) for validation
    key = (lambda s: s.game_id) if mode == "game" else (lambda s: s.arena_id)
    groups = sorted({key(s) for s in scenes})
    held = set(groups[::10]) if len(groups) >= 10 else {groups[-1]}
    train = [s for s in scenes if key(s) not in held]
    val = [s for s in scenes if key(s) in held]
    if not train or not val:  # degenerate corpora: fall back to a scene split
        cut = max(1, len(scenes) // 10)
        train, val = scenes[cut:], scenes[:cut]
    return train, val


def _cmd_train(args) -> int:
    from .train import train_model, write_loss_csv

    cfg = _resolve_config(args)
    out = _prepare_out(cfg)
    scenes = _load_scenes(args.corpus)
    train_scenes, val_scenes = _train_val_split(scenes, cfg.mode)
    trained = train_model(
        train_scenes, val_scenes,
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, lr_power=cfg.lr_power,
        weights=cfg.loss_weights(), embed_dim=cfg.embed_dim, resolution=cfg.resolution,
        seed=cfg.seed, augment_geometry=cfg.augment_geometry,
        augment_jitter=cfg.augment_jitter, validate_every=cfg.validate_every,
    )
    trained.model.save(out / "model.ckpt")
    write_loss_csv(trained.history, out / "loss.csv")
    print(f"trained {cfg.epochs} epochs on {len(train_scenes)} scenes; "
          f"best epoch {trained.best_epoch} (val IoU {trained.best_score:.3f}); "
          f"checkpoint at {out / 'model.ckpt'}")
    return 0


def _load_model(path: str):
    from .net import TeamNet

    ckpt = Path(path)
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    return TeamNet.load(ckpt)


def _cmd_infer(args) -> int:
    from .serialize import save_dump
    from .train import image_to_tensor

    cfg = _resolve_config(args)
    out = _prepare_out(cfg)
    model = _load_model(args.model)
    scenes = _load_scenes(args.corpus)
    for i, scene in enumerate(scenes):
        seg, emb = model.infer(image_to_tensor(scene.image))
        save_dump(out / f"scene_{i:04d}_seg.tdmp", seg)
        save_dump(out / f"scene_{i:04d}_emb.tdmp", emb)
    print(f"dumped seg/emb maps for {len(scenes)} scenes to {out}")
    return 0


def _cmd_cluster(args) -> int:
    from .clustering import cluster_teams
    from .data import save_mask_png
    from .train import image_to_tensor

    cfg = _resolve_config(args)
    out = _prepare_out(cfg)
    model = _load_model(args.model)
    scenes = _load_scenes(args.corpus)
    for i, scene in enumerate(scenes):
        seg, emb = model.infer(image_to_tensor(scene.image))
        result = cluster_teams(seg, emb)
        save_mask_png(out / f"scene_{i:04d}_occupancy.png", result.occupancy)
    print(f"wrote occupancy maps for {len(scenes)} scenes to {out}")
    return 0


def _cmd_baseline(args) -> int:
    from .evaluation import evaluate_baseline

    cfg = _resolve_config(args)
    out = _prepare_out(cfg)
    scenes = _load_scenes(args.corpus)
    counts, rows = evaluate_baseline(scenes, seed=cfg.seed)
    lines = ["scene_id,player_index,true_team,predicted_label,flag"]
    for r in rows:
        lines.append(f"scene_{r['scene']:04d},{r['player']},{r['true_team']},{r['label']},{r['flag']}")
    (out / "baseline.csv").write_text("\n".join(lines) + "\n")
    from .evaluation import compute_metrics

    r_miss, r_cta = compute_metrics(counts)
    print(f"baseline on {len(scenes)} scenes: R_miss={r_miss:.4f} "
          f"R_CTA={'n/a' if r_cta is None else f'{r_cta:.4f}'}; CSV at {out / 'baseline.csv'}")
    return 0


def _cmd_eval(args) -> int:
    from .data import compose_scene_masks, load_mask_png
    from .evaluation import EvalCounts, compute_metrics, match_player, score_scene

    cfg = _resolve_config(args)
    out = _prepare_out(cfg)
    scenes = _load_scenes(args.corpus)
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
    total = EvalCounts()
    lines = ["scene_id,n_miss,n_corr,n_err,excluded,r_miss,r_cta"]
    for i, scene in enumerate(scenes):
        pred_path = pred_dir / f"scene_{i:04d}_occupancy.png"
        if not pred_path.exists():
            raise FileNotFoundError(f"missing prediction: {pred_path}")
        occupancy = load_mask_png(pred_path)
        pred_mask = occupancy > 0
        pyramid = compose_scene_masks(scene.players, *scene.shape)
        outcomes = [match_player(pred_mask, occupancy, p, pyramid.instances[k])
                    for k, p in enumerate(scene.players)]
        counts = EvalCounts()
        score_scene(counts, outcomes, [p.team for p in scene.players])
        r_miss, r_cta = compute_metrics(counts)
        cta_txt = "" if r_cta is None else f"{r_cta:.4f}"
        lines.append(f"scene_{i:04d},{counts.n_miss},{counts.n_corr},{counts.n_err},"
                     f"{counts.excluded},{r_miss:.4f},{cta_txt}")
        total = total.merged(counts)
    r_miss, r_cta = compute_metrics(total)
    cta_txt = "" if r_cta is None else f"{r_cta:.4f}"
    lines.append(f"TOTAL,{total.n_miss},{total.n_corr},{total.n_err},"
                 f"{total.excluded},{r_miss:.4f},{cta_txt}")
    (out / "eval.csv").write_text("\n".join(lines) + "\n")
    print(f"eval over {len(scenes)} scenes: R_miss={r_miss:.4f} "
          f"R_CTA={cta_txt or 'n/a'}; CSV at {out / 'eval.csv'}")
    return 0


def _cmd_kfold(args) -> int:
    from .evaluation import report_csv, report_text, run_experiment

    cfg = _resolve_config(args)
    out = _prepare_out(cfg)
    result = run_experiment(cfg)
    (out / "report.csv").write_text(report_csv(result))
    text = report_text(result)
    (out / "report.txt").write_text(text)
    print(text, end="")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import grad_check
    from .losses import TeamPixelSets, pull_loss, push_loss, seg_loss, total_loss
    from .net import TeamNet
    from .tensor import Tensor

    rng = np.random.default_rng(args.seed)
    failures = []

    def report(name, err, tol):
        status = "ok" if err < tol else "FAIL"
        print(f"{name:24s} max rel err {err:.3e} (tol {tol:.0e}) {status}")
        if err >= tol:
            failures.append(name)

    pred = Tensor(rng.random((1, 4, 4), dtype=np.float32), requires_grad=True)
    target = rng.random((4, 4)).astype(np.float32)
    report("seg_loss", grad_check(lambda: seg_loss(pred.sigmoid(), target), [pred]), 1e-4)

    emb = Tensor(rng.standard_normal((5, 4, 4)).astype(np.float32) * 0.5, requires_grad=True)
    sets = TeamPixelSets(team1=[[0, 0], [1, 2], [3, 3]], team2=[[2, 1], [0, 3]])
    report("pull_loss", grad_check(lambda: pull_loss(emb, sets)[0], [emb]), 1e-4)

    def push():
        _, cents = pull_loss(emb, sets)
        return push_loss(emb, sets, cents)

    report("push_loss", grad_check(push, [emb]), 1e-4)

    net = TeamNet(embed_dim=3, resolution=8, seed=args.seed)
    image = Tensor(rng.random((3, 8, 8), dtype=np.float32))
    out_shapes = {s: t.shape[1:] for s, t in net.forward(image).logits.items()}
    targets = {s: rng.random(shape).astype(np.float32) for s, shape in out_shapes.items()}
    net_sets = TeamPixelSets(team1=[[0, 0]], team2=[[1, 1], [0, 1]])

    def full():
        loss, _ = total_loss(net.forward(image), targets, net_sets)
        return loss

    # eps=1e-4 keeps the centered difference from straddling relu kinks
    report("total_loss/network", grad_check(full, net.parameters(), eps=1e-4,
                                            max_coords=400, seed=args.seed), 1e-3)

    if failures:
        print(f"gradient check FAILED for: {', '.join(failures)}")
        return 1
    print("all gradient checks passed")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "cluster": _cmd_cluster,
    "baseline": _cmd_baseline,
    "eval": _cmd_eval,
    "kfold": _cmd_kfold,
    "gradcheck": _cmd_gradcheck,
}


def cli_main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()

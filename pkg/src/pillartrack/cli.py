"""Command-line entry points: gen, train, track, eval, gradcheck, oracle."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checks import gradient_suite, oracle_suite
from .config import Config, ConfigError, load_config, save_config
from .fileio import (FormatError, find_manifests, load_manifest_frames,
                     read_manifest, read_predictions, save_checkpoint,
                     load_checkpoint, write_curve_csv, write_manifest,
                     write_metrics_csv, write_points, write_predictions)
from .metrics import (TrackRun, aggregate, precision_curve, run_distances,
                      run_ious, success_curve, ope_precision, ope_success)
from .pillars import EmptyRegionError
from .synth import gen_synthetic_tracklet, random_tracklet_params
from .tracker import track_sequence
from .train import TrainingError, build_model, train


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="key = value configuration file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")
    parser.add_argument("--out", type=Path, required=True,
                        help="output directory")


def _load_cfg(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    return cfg


def _cmd_gen(args) -> int:
    cfg = _load_cfg(args)
    out = args.out
    (out / "points").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    for k in range(args.tracklets):
        params = random_tracklet_params(rng, n_frames=args.frames)
        frames = gen_synthetic_tracklet(params, rng)
        tid = f"tr{k:03d}"
        (out / "points" / tid).mkdir(parents=True, exist_ok=True)
        entries = []
        for fi, frame in enumerate(frames):
            rel = f"points/{tid}/{fi:04d}.bin"
            write_points(out / rel, frame.points)
            entries.append((rel, frame.gt))
        write_manifest(out / f"{tid}.txt", entries, args.category, tid)
    print(f"wrote {args.tracklets} tracklets x {args.frames} frames to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    manifests = find_manifests(args.data)
    if not manifests:
        raise FormatError(f"no manifests (*.txt) under {args.data}")
    tracklets = [load_manifest_frames(read_manifest(m)) for m in manifests]
    args.out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, args.out / "config.txt")
    result = train(cfg, tracklets, out_dir=args.out)
    print(f"trained {result.steps} steps over {len(tracklets)} tracklets; "
          f"loss {result.first_loss():.4f} -> {result.last_loss():.4f}; "
          f"skipped {result.skipped_samples} samples")
    print(f"checkpoint: {args.out / 'checkpoint.bin'}")
    return 0


def _cmd_track(args) -> int:
    cfg = _load_cfg(args)
    model = build_model(cfg)
    load_checkpoint(args.checkpoint, model)
    model.eval()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    for mpath in find_manifests(args.data):
        manifest = read_manifest(mpath)
        frames = load_manifest_frames(manifest)
        run = track_sequence(frames, frames[0].gt, model, rng,
                             n_template=cfg.n_template, n_search=cfg.n_search,
                             enlarge=cfg.enlarge)
        write_predictions(args.out / f"{manifest.tracklet_id}_pred.csv", run)
        print(f"{manifest.tracklet_id}: {len(run)} frames, "
              f"{sum(run.flags)} degenerate")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    rows = []
    per_seq = []
    all_ious = []
    all_dists = []
    for mpath in find_manifests(args.data):
        manifest = read_manifest(mpath)
        pred_path = Path(args.pred) / f"{manifest.tracklet_id}_pred.csv"
        if not pred_path.exists():
            raise FormatError(f"missing predictions file {pred_path}")
        states, flags = read_predictions(pred_path)
        gts = [gt for _, gt in manifest.frames]
        run = TrackRun(predictions=states, ground_truths=gts, flags=flags)
        succ = ope_success(run, cfg.iou_thresholds)
        prec = ope_precision(run, cfg.dist_thresholds, cfg.dist_max)
        rows.append({"sequence": manifest.tracklet_id, "category": manifest.category,
                     "frames": len(run), "success": repr(succ), "precision": repr(prec),
                     "degenerate": sum(flags)})
        per_seq.append(((succ, prec), len(run)))
        all_ious.append(run_ious(run))
        all_dists.append(run_distances(run))
    if not rows:
        raise FormatError(f"no manifests (*.txt) under {args.data}")

    mean_succ, mean_prec = aggregate([v for v, _ in per_seq], [n for _, n in per_seq])
    rows.append({"sequence": "MEAN", "category": "all",
                 "frames": sum(n for _, n in per_seq),
                 "success": repr(mean_succ), "precision": repr(mean_prec),
                 "degenerate": sum(r["degenerate"] for r in rows)})
    args.out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(args.out / "metrics.csv", rows)
    taus, sfrac = success_curve(np.concatenate(all_ious), cfg.iou_thresholds)
    write_curve_csv(args.out / "success_curve.csv", taus, sfrac, "iou_threshold")
    ds, pfrac = precision_curve(np.concatenate(all_dists), cfg.dist_thresholds,
                                cfg.dist_max)
    write_curve_csv(args.out / "precision_curve.csv", ds, pfrac, "distance_threshold")
    print(f"mean success {mean_succ:.2f}, mean precision {mean_prec:.2f} "
          f"over {len(per_seq)} sequences")
    return 0


def _cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = gradient_suite(seed=seed, probes=args.probes)
    ok = True
    for res in results:
        print(res.line())
        ok = ok and res.ok
    return 0 if ok else 1


def _cmd_oracle(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = oracle_suite(seed=seed, iou_pairs=args.iou_pairs,
                           iou_samples=args.iou_samples)
    ok = True
    for res in results:
        print(res.line())
        ok = ok and res.ok
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pillartrack",
        description="Pillar-based Siamese tracker: data generation, training, "
                    "tracking, evaluation, and self-verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--tracklets", type=int, default=5)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--category", default="car")
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("train", help="train on a manifest directory")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("track", help="run the tracker over sequences")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.set_defaults(fn=_cmd_track)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--probes", type=int, default=20)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("oracle", help="brute-force oracle comparisons")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iou-pairs", type=int, default=20)
    p.add_argument("--iou-samples", type=int, default=500_000)
    p.set_defaults(fn=_cmd_oracle)

    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FormatError) as exc:
        print(f"error (input): {exc}", file=sys.stderr)
        return 1
    except TrainingError as exc:
        print(f"error (training): {exc}", file=sys.stderr)
        return 1
    except EmptyRegionError as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())

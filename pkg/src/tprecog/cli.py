"""Command-line pipeline: synth, train, index, recognize, eval-ranks, eval-recog.

Exit codes: 0 success, 2 configuration or input error, 3 nothing to evaluate.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import load_config
from .curvature import c_all
from .errors import EmptyView, FormatError, TPRecogError
from .evaluation import (evaluate_scene, rank_report, summarize, train_from_scans,
                         true_feature_ranks, two_object_scene, write_rank_csv, write_records_csv)
from .hashing import build_index
from .models import notched_cube, notched_half
from .relation import phi_all
from .search import recognize_sequential, symmetry_table
from .synth import ScenePlacement, compose_scene

EXIT_OK, EXIT_INPUT, EXIT_EMPTY = 0, 2, 3


class EmptyEvaluation(TPRecogError):
    """Nothing to evaluate."""


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _models(cfg, paths=None):
    paths = list(paths or cfg.models)
    if not paths:
        raise FormatError("no model files given (use --models or the 'models' key)")
    return [io.read_model(p) for p in paths]


def _scan_pairs(paths):
    """Scans with ground truth read from ``<stem>.truth`` beside each scan when present."""
    scans = []
    for p in paths:
        p = Path(p)
        truth = p.with_suffix(".truth")
        scans.append(io.read_scan(p, truth if truth.exists() else None))
    return scans


def cmd_synth(args, cfg):
    entries = io.read_scene(args.scene)
    placements = [ScenePlacement(io.read_model(mp), pose) for mp, pose in entries]
    gaze = np.array(args.gaze, dtype=float)
    gaze = gaze / np.linalg.norm(gaze)
    scan = compose_scene(placements, cfg.synth_params(args.seed), gaze)
    out = _out_dir(args)
    stem = Path(args.scene).stem
    io.write_scan(out / f"{stem}.scan", scan)
    io.write_truth(out / f"{stem}.truth", scan)
    print(f"{len(scan.points)} points -> {out / (stem + '.scan')}")


def cmd_train(args, cfg):
    scans = _scan_pairs(args.scans)
    if not any(s.features for s in scans):
        raise FormatError("training scans carry no ground-truth features")
    m = max(f.shape_class for s in scans for f in s.features)
    dm = train_from_scans(scans, cfg, m, args.seed)
    out = _out_dir(args) / "density.txt"
    io.write_density(out, dm)
    print(f"density m={dm.m} counts={[g.count for g in dm.grids]} -> {out}")


def cmd_index(args, cfg):
    models = _models(cfg, args.models)
    for m in models:
        if len(m.features) < 3:
            raise FormatError(f"model {m.class_id} has fewer than 3 features")
    index = build_index(models, cfg.q_d, cfg.gamma_init)
    out = _out_dir(args) / "index.txt"
    io.write_index(out, index)
    print(f"{len(index)} entries under {len(index.table)} keys -> {out}")


def _load_search(cfg, args):
    density = args.density or cfg.density
    index = args.index or cfg.index
    if not density or not index:
        raise FormatError("density and index files are required")
    return io.read_density(density), io.read_index(index)


def cmd_recognize(args, cfg):
    models = _models(cfg, args.models)
    dm, index = _load_search(cfg, args)
    scan = io.read_scan(args.scan)
    lp = cfg.likelihood_params().with_normalizations(models, scan.gaze)
    results = recognize_sequential(scan, models, dm, index, lp, cfg.search_config(), args.seed, cfg.max_objects)
    out = _out_dir(args) / "results.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "outcome", "class", "qw", "qx", "qy", "qz", "tx", "ty", "tz", "L", "tp", "evaluations"])
        for k, r in enumerate(results):
            if r.found:
                vals = [*r.pose.quaternion(), *r.pose.translation]
                w.writerow([k, r.outcome, r.c, *(io.fmt(v) for v in vals), io.fmt(r.L), io.fmt(r.tp), r.evaluations])
            else:
                w.writerow([k, r.outcome, "", *([""] * 9), r.evaluations])
    for k, r in enumerate(results):
        print(f"step {k}: {r.outcome}" + (f" class {r.c} L={r.L:.1f}" if r.found else ""))


def cmd_eval_ranks(args, cfg):
    scans = _scan_pairs(args.scans)
    if not any(s.visible_features() for s in scans):
        raise EmptyEvaluation("no true features in any scan")
    if not (args.density or cfg.density):
        raise FormatError("a density file is required")
    dm = io.read_density(args.density or cfg.density)
    phi_r, c_r = [], []
    for k, scan in enumerate(scans):
        phi = phi_all(scan, dm, args.seed + k)
        phi_r.append(true_feature_ranks(phi, scan, cfg.feature_radius))
        c_r.append(true_feature_ranks(c_all(scan, cfg.curvature_radius), scan, cfg.feature_radius))
    out = _out_dir(args)
    rows = []
    for name, ranks in (("phi", phi_r), ("c", c_r)):
        rep = rank_report(name, np.concatenate(ranks))
        write_rank_csv(out / f"ranks_{name}.csv", rep)
        rows.append((name, len(rep.ranks), rep.median, rep.fraction_below(0.6)))
    with open(out / "ranks_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["score", "n_true", "median_rank", "fraction_below_0.6"])
        for name, n, med, frac in rows:
            w.writerow([name, n, f"{med:.4f}", f"{frac:.4f}"])
    for name, n, med, frac in rows:
        print(f"{name}: n={n} median={med:.3f} below0.6={frac:.3f}")


def cmd_eval_recog(args, cfg):
    models = _models(cfg, args.models) if (args.models or cfg.models) else [notched_cube(1), notched_half(2)]
    if len(models) < 2:
        raise FormatError("the two-object suite needs two models")
    dm, index = _load_search(cfg, args)
    syms = symmetry_table(models)
    scfg = cfg.search_config()
    records = []
    n = args.scenes or cfg.suite_size
    for k in range(n):
        seed = args.seed + k
        try:
            scan = two_object_scene(models[0], models[1], cfg.synth_params(seed), seed)
        except EmptyView:
            continue
        lp = cfg.likelihood_params().with_normalizations(models, scan.gaze)
        records.append(evaluate_scene(seed, scan, models, dm, index, lp, scfg, cfg, syms))
    if not records:
        raise EmptyEvaluation("no scene produced data")
    out = _out_dir(args)
    write_records_csv(out / "recognition.csv", records)
    s = summarize(records)
    print(f"scenes={s.n_scenes} found={s.n_found} success={s.success_rate:.3f} "
          f"second={s.second_rate:.3f} max_time={s.max_wall_time:.2f}s")


def build_parser():
    p = argparse.ArgumentParser(prog="tprecog", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("synth", help="sample a scan from a scene description")
    s.add_argument("scene")
    s.add_argument("--gaze", type=float, nargs=3, default=(0.0, 0.0, -1.0))

    s = sub.add_parser("train", help="train relation densities from labeled scans")
    s.add_argument("scans", nargs="+")

    s = sub.add_parser("index", help="build the geometric hash index")
    s.add_argument("--models", nargs="+")

    s = sub.add_parser("recognize", help="recognize objects in one scan")
    s.add_argument("scan")
    s.add_argument("--models", nargs="+")
    s.add_argument("--density")
    s.add_argument("--index")

    s = sub.add_parser("eval-ranks", help="rank true features under Φ and curvature scores")
    s.add_argument("scans", nargs="+")
    s.add_argument("--density")

    s = sub.add_parser("eval-recog", help="run the synthetic two-object recognition suite")
    s.add_argument("--models", nargs="+")
    s.add_argument("--density")
    s.add_argument("--index")
    s.add_argument("--scenes", type=int, default=None)
    return p


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "index": cmd_index, "recognize": cmd_recognize,
    "eval-ranks": cmd_eval_ranks, "eval-recog": cmd_eval_recog,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        COMMANDS[args.cmd](args, cfg)
    except EmptyEvaluation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (TPRecogError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

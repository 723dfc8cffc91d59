"""Command-line interface.

Subcommands: phantom, train, segment, eval, gradcheck. Exit codes: 0
success, 1 verification failure, 2 usage/input error, 3 numeric failure
during training. All failures print a single `error: ...` line.
"""

import argparse
import glob
import os
import sys
import time

import numpy as np

from . import gradcheck, io, mesh, phantom
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .metrics import dice_3d, slicewise_dice_profile
from .networks import InitPredictor, PropPredictor
from .pipeline import segment_volume
from .training import (AugmentConfig, TrainConfig, TrainingDiverged,
                       build_init_dataset, build_propagation_dataset,
                       train_init, train_prop)
from .volume import normalize_intensity, preprocess, PLANE_SIZE, TARGET_SPACING_MM

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


def _parse_spec_file(path):
    """key = value lines (n_slices, image_size, noise_sigma); # comments."""
    overrides = {}
    types = {"n_slices": int, "image_size": int, "noise_sigma": float}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise UsageError(
                    f"{path}:{ln}: unknown phantom key {key!r} "
                    f"(valid: {', '.join(types)})"
                )
            try:
                overrides[key] = types[key](value)
            except ValueError as e:
                raise UsageError(f"{path}:{ln}: {e}") from e
    return overrides


def cmd_phantom(args):
    overrides = _parse_spec_file(args.spec) if args.spec else {}
    if args.n_slices is not None:
        overrides["n_slices"] = args.n_slices
    spec = phantom.build_spec(args.seed, **overrides)
    vol, gt = phantom.generate_phantom(spec)
    io.write_volume(args.out_volume, vol)
    io.write_mask(args.out_gt, gt, vol.spacing, vol.base_index)
    nx, ny, nz = vol.dims
    myo = int(gt.sum())
    print(f"phantom seed={args.seed} dims={nx}x{ny}x{nz} base_index={vol.base_index}")
    print(f"myocardium voxels: {myo} ({100.0 * myo / gt.size:.2f}% of volume)")
    return EXIT_OK


def _load_training_pairs(data_dir):
    vol_paths = sorted(glob.glob(os.path.join(data_dir, "*.cvol")))
    if not vol_paths:
        raise UsageError(f"no .cvol files found in {data_dir}")
    pairs = []
    for vp in vol_paths:
        mp = vp[:-5] + ".cmsk"
        if not os.path.exists(mp):
            raise UsageError(f"missing ground-truth mask {mp} for {vp}")
        v = io.read_volume(vp)
        if v.data.shape[1:] != (PLANE_SIZE, PLANE_SIZE):
            raise UsageError(
                f"{vp}: training volumes must be {PLANE_SIZE}x{PLANE_SIZE} "
                f"in-plane on the {TARGET_SPACING_MM} mm grid "
                f"(got {v.data.shape[2]}x{v.data.shape[1]}); "
                "run raw volumes through `segment`-style preprocessing first"
            )
        gt, _, _, _ = io.read_mask(mp)
        if gt.shape != v.data.shape:
            raise UsageError(f"{mp}: mask shape {gt.shape} != volume {v.data.shape}")
        pairs.append((normalize_intensity(v), gt))
    return pairs


def cmd_train(args):
    kind = {"init": "init", "prop": "propagation"}[args.kind]
    pairs = _load_training_pairs(args.data)
    dataset = []
    for v, gt in pairs:
        if kind == "init":
            dataset.extend(build_init_dataset(v.data, gt.astype(np.float64),
                                              v.base_index))
        else:
            dataset.extend(build_propagation_dataset(v.data, gt.astype(np.float64),
                                                     v.base_index))
    cfg = TrainConfig(
        learning_rate=args.lr,
        iterations=args.iterations,
        seed=args.seed,
        augmentation=AugmentConfig(enabled=not args.no_augment),
        checkpoint_every=args.checkpoint_every,
        log_every=args.log_every,
        batch_size=args.batch_size,
    )
    print(f"training {kind} network: {len(dataset)} samples, "
          f"iterations={cfg.iterations or 'default'} lr={cfg.learning_rate} "
          f"seed={cfg.seed} batch_size={cfg.batch_size} "
          f"augmentation={'on' if cfg.augmentation.enabled else 'off'}")
    t0 = time.perf_counter()

    def progress(it, total):
        print(f"  iter {it}: loss {total:.4f}", flush=True)

    trainer = train_init if kind == "init" else train_prop
    ckpt_dir = os.path.dirname(os.path.abspath(args.out)) if cfg.checkpoint_every else None
    params, log = trainer(dataset, cfg, checkpoint_dir=ckpt_dir,
                          progress=progress if args.verbose else None)
    save_checkpoint(params, args.out)
    if args.log:
        log.to_csv(args.log)
    print(f"wrote {args.out} ({time.perf_counter() - t0:.1f} s, "
          f"final loss {log.rows[-1][1]:.4f})")
    return EXIT_OK


def cmd_segment(args):
    v = io.read_volume(args.volume)
    init_params = load_checkpoint(args.init_ckpt, expected_kind="init")
    prop_params = load_checkpoint(args.prop_ckpt, expected_kind="propagation")
    t0 = time.perf_counter()
    vp = preprocess(v)
    result = segment_volume(vp, InitPredictor(init_params),
                            PropPredictor(prop_params), stride=args.stride)
    elapsed = time.perf_counter() - t0
    io.write_mask(args.out_mask, result.binary, vp.spacing, vp.base_index)
    if args.out_prob:
        io.write_prob(args.out_prob, result.probability, vp.spacing, vp.base_index)
    if args.out_mesh:
        surface = mesh.extract_surface(result.binary, spacing_mm=vp.spacing[0])
        mesh.write_mesh(surface, args.out_mesh)
    print(f"segmented {args.volume}: init_index={result.init_index} "
          f"slices=[0,{vp.base_index}] time={elapsed:.2f}s")
    return EXIT_OK


def cmd_eval(args):
    pred, _, _, _ = io.read_mask(args.pred)
    gt, _, _, _ = io.read_mask(args.gt)
    if pred.shape != gt.shape:
        raise UsageError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    d = dice_3d(pred, gt)
    if args.profile:
        slicewise_dice_profile(pred, gt, csv_path=args.profile)
    print(f"3D Dice: {d:.4f}")
    return EXIT_OK


def cmd_gradcheck(args):
    seeds = tuple(range(args.seed, args.seed + 5))
    results = gradcheck.run_suite(seeds=seeds, corrupt=args.corrupt)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<22} max_rel_err {r.max_rel_err:.3e} "
              f"(tol {r.tolerance:.0e}) {status}")
    if failed:
        print("error: gradient check failed for: "
              + ", ".join(r.name for r in failed))
        return EXIT_VERIFICATION
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="cardioseg",
        description="Biventricular myocardium segmentation pipeline",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="generate a synthetic volume + ground truth")
    sp.add_argument("--spec", help="phantom spec file (key = value lines)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-slices", type=int, default=None)
    sp.add_argument("--out-volume", required=True)
    sp.add_argument("--out-gt", required=True)
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("train", help="train a network on volume/mask pairs")
    sp.add_argument("--kind", choices=["init", "prop"], required=True)
    sp.add_argument("--data", required=True, help="directory of .cvol/.cmsk pairs")
    sp.add_argument("--iterations", type=int, default=None,
                    help="default: 300000 (init) / 600000 (prop)")
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--batch-size", type=int, default=1)
    sp.add_argument("--out", required=True, help="checkpoint output path")
    sp.add_argument("--log", help="loss log CSV path")
    sp.add_argument("--log-every", type=int, default=100)
    sp.add_argument("--checkpoint-every", type=int, default=0)
    sp.add_argument("--no-augment", action="store_true")
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("segment", help="segment a volume end to end")
    sp.add_argument("--volume", required=True)
    sp.add_argument("--init-ckpt", required=True)
    sp.add_argument("--prop-ckpt", required=True)
    sp.add_argument("--out-mask", required=True)
    sp.add_argument("--out-prob")
    sp.add_argument("--out-mesh")
    sp.add_argument("--stride", type=int, choices=[1, 4], default=4)
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("eval", help="Dice between predicted and reference masks")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--profile", help="per-slice Dice CSV path")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--corrupt", choices=["conv2d"],
                    help="negative-control fixture: corrupt one gradient")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as e:
        print(f"error: {e}")
        return EXIT_NUMERIC
    except (UsageError, CheckpointError, io.FileFormatError, ValueError,
            OSError) as e:
        print(f"error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: count, ufa, train, infer, bench, inspect.

Exit codes: 0 success, 2 usage/config error, 3 data/file error.  All
imports of numeric code happen inside the command functions so that the
thread-count environment variables take effect before the BLAS loads.
"""

from __future__ import annotations

import argparse
import math
import os
import sys


def _set_threads(n) -> None:
    if n is None:
        n = os.environ.get("BCNN_THREADS")
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_config(args):
    from .network import config_preset, load_config_file

    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ValueError(f"config file not found: {args.config}")
        return load_config_file(args.config)
    return config_preset(args.preset)


# ---------------------------------------------------------------------------
# count
# ---------------------------------------------------------------------------

def cmd_count(args) -> int:
    from . import complexity

    cfg = _load_config(args)
    rep = complexity.report(cfg)
    keys = ["binary_params", "binary_macs", "real_params", "real_macs",
            "real_adds", "real_mults", "sign_ops", "prelu_ops"]
    if args.normalized:
        keys += ["param_mb", "normalized_mops", "decoder_share"]
    if args.csv:
        print(",".join(keys))
        print(",".join(f"{rep[k]:.6g}" if isinstance(rep[k], float) else str(rep[k])
                       for k in keys))
        return 0
    width = max(len(k) for k in keys)
    for k in keys:
        v = f"{rep[k]:.4f}" if isinstance(rep[k], float) else f"{rep[k]:,}"
        print(f"{k:<{width}}  {v}")
    return 0


# ---------------------------------------------------------------------------
# ufa
# ---------------------------------------------------------------------------

def _ufa_target(name: str):
    import numpy as np

    if name == "sinewave":
        return lambda x: 0.5 + 0.4 * math.sin(2 * math.pi * x)
    if name == "ramp":
        return lambda x: x
    if name == "step":
        return lambda x: 0.0 if x < 0.5 else 1.0
    if name.startswith("csv:"):
        path = name[4:]
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        if data.ndim != 2 or data.shape[1] < 2:
            raise ValueError(f"target csv {path} needs two columns (x, y)")
        xs, ys = data[:, 0], data[:, 1]
        return lambda x: float(np.interp(x, xs, ys))
    raise ValueError(f"unknown target function {name!r}")


def cmd_ufa(args) -> int:
    from . import ufa as U

    f = _ufa_target(args.fn)
    if args.sweep:
        rows = U.refinement_sweep(f, steps=args.sweep)
        U.write_sweep_csv(rows, args.out)
        for d, q, err in rows:
            print(f"d={d:<10.6g} Q={q:<6d} sup_error={err:.6f}")
        print(f"wrote {args.out}")
        return 0
    spec = U.spec_from_function(f, args.d, args.Q)
    net = U.build_ufa(spec)
    if args.fn == "step":
        net = U.add_discontinuity_branch(net, 0.5, f(0.5))
    err = U.sup_error(net, f, 10_000)
    U.write_curve_csv(net, f, args.out)
    print(f"d={args.d:g} Q={args.Q} layer1_units={net.n_layer1_units} "
          f"subbranches={net.n_subbranches} sup_error={err:.6f}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_folder_dataset(path: str, size: int):
    import numpy as np
    from PIL import Image

    classes = sorted(d for d in os.listdir(path)
                     if os.path.isdir(os.path.join(path, d)))
    if not classes:
        raise OSError(f"no class folders under {path}")
    images, labels = [], []
    for ci, cname in enumerate(classes):
        cdir = os.path.join(path, cname)
        for fname in sorted(os.listdir(cdir)):
            if not fname.lower().endswith((".png", ".ppm")):
                continue
            with Image.open(os.path.join(cdir, fname)) as im:
                im = im.convert("RGB")
                if im.size != (size, size):
                    im = im.resize((size, size), Image.BILINEAR)
                arr = np.asarray(im, dtype=np.float32) / 255.0
            images.append(arr.transpose(2, 0, 1))
            labels.append(ci)
    if not images:
        raise OSError(f"no PPM/PNG images found under {path}")
    return np.stack(images), np.asarray(labels, dtype=np.int64), classes


def cmd_train(args) -> int:
    import numpy as np

    from .training import loop
    from .training.data import make_shapes

    cfg = _load_config(args)
    if args.dataset == "synthetic":
        n_total = args.train_n + args.test_n
        images, labels = make_shapes(n_total, size=cfg.input_size,
                                     classes=cfg.classes, seed=args.data_seed)
        tr_x, tr_y = images[: args.train_n], labels[: args.train_n]
        te_x, te_y = images[args.train_n :], labels[args.train_n :]
    else:
        images, labels, classes = _load_folder_dataset(args.dataset, cfg.input_size)
        if len(classes) != cfg.classes:
            raise ValueError(
                f"dataset has {len(classes)} classes, config expects {cfg.classes}")
        rng = np.random.default_rng(args.data_seed)
        perm = rng.permutation(len(labels))
        n_test = max(1, len(labels) // 6)
        te_x, te_y = images[perm[:n_test]], labels[perm[:n_test]]
        tr_x, tr_y = images[perm[n_test:]], labels[perm[n_test:]]

    s1 = loop.default_step1()
    s2 = loop.default_step2(decay_epochs=40)
    if args.epochs_override:
        s1 = loop.StepSettings(**{**s1.__dict__, "decay_epochs": args.epochs_override})
        s2 = loop.StepSettings(**{**s2.__dict__, "decay_epochs": args.epochs_override})
    if args.max_lr_override:
        s1 = loop.StepSettings(**{**s1.__dict__, "max_lr": args.max_lr_override})
        s2 = loop.StepSettings(**{**s2.__dict__, "max_lr": args.max_lr_override})
    if args.batch_size:
        s1 = loop.StepSettings(**{**s1.__dict__, "batch_size": args.batch_size})
        s2 = loop.StepSettings(**{**s2.__dict__, "batch_size": args.batch_size})

    os.makedirs(args.out, exist_ok=True)
    if args.step == "both":
        if args.resume:
            raise ValueError("--resume is only valid with --step 1 or --step 2")
        result = loop.train_two_step(cfg, tr_x, tr_y, te_x, te_y, args.out,
                                     seed=args.seed, step1=s1, step2=s2)
        print(f"final eval accuracy: {result['final_eval_acc']:.4f}")
        return 0

    step = int(args.step)
    settings = s1 if step == 1 else s2
    from .network import build_model

    fresh_cycle = False
    if step == 2:
        if not args.resume:
            raise ValueError("--step 2 needs --resume with a step-1 checkpoint")
        state_step = loop.load_checkpoint(args.resume)["step"]
        fresh_cycle = state_step != 2 or args.max_lr_override is not None
    model = build_model(cfg, seed=args.seed)
    hist = loop.run_step(model, step, settings, tr_x, tr_y, te_x, te_y,
                         os.path.join(args.out, f"metrics_step{step}.csv"),
                         os.path.join(args.out, f"checkpoint_step{step}.bin"),
                         seed=args.seed, resume=args.resume,
                         fresh_cycle=fresh_cycle)
    if hist:
        print(f"final eval accuracy: {hist[-1]['eval_acc']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def cmd_infer(args) -> int:
    import numpy as np

    from .model_io import load_model

    if args.image is None and not args.random:
        raise ValueError("infer needs --image or --random")
    model = load_model(args.model)
    size = model.config.input_size
    if args.random:
        rng = np.random.default_rng(args.seed)
        img = rng.uniform(0.0, 1.0, size=(3, size, size)).astype(np.float32)
    else:
        from PIL import Image

        with Image.open(args.image) as im:
            if im.format not in ("PPM", "PNG"):
                raise OSError(f"unsupported image format {im.format}; use PPM or PNG")
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        img = arr.transpose(2, 0, 1)
        if img.shape[1] != size or img.shape[2] != size:
            raise ValueError(
                f"image is {img.shape[1]}x{img.shape[2]}, model wants {size}x{size}")
    from .network import forward

    logits = forward(model, img, engine=args.engine)
    exp = np.exp(logits - logits.max())
    probs = exp / exp.sum()
    order = np.argsort(logits)[::-1][: args.topk]
    for rank, ci in enumerate(order, 1):
        print(f"{rank}. class {ci}  logit {logits[ci]:+.6f}  p {probs[ci]:.4f}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    import time

    import numpy as np

    from . import bitcore

    if min(args.m, args.k, args.n) < 1:
        raise ValueError("bench sizes must be >= 1")
    rng = np.random.default_rng(args.seed)
    if args.op == "conv":
        # 1x1 binary conv: k input channels on an m-pixel map, n filters.
        # The pixel rows of the lowered (pixels, channels) matrix are the
        # GEMM left operand.
        side = max(1, int(math.isqrt(args.m)))
        pixels = side * side
        x = np.where(rng.random((args.k, side, side)) < 0.5, -1.0, 1.0).astype(np.float32)
        a = np.ascontiguousarray(x.reshape(args.k, pixels).T)
        b = np.where(rng.random((args.k, args.n)) < 0.5, -1.0, 1.0).astype(np.float32)
        a_bits = bitcore.pack_rows(a)
        m_eff = pixels
    else:
        a = np.where(rng.random((args.m, args.k)) < 0.5, -1.0, 1.0).astype(np.float32)
        b = np.where(rng.random((args.k, args.n)) < 0.5, -1.0, 1.0).astype(np.float32)
        a_bits = bitcore.pack_rows(a)
        m_eff = args.m
    bt_bits = bitcore.pack_rows(np.ascontiguousarray(b.T))
    flops = 2.0 * m_eff * args.k * args.n

    t0 = time.perf_counter()
    for _ in range(args.iters):
        ref = a @ b
    t_float = (time.perf_counter() - t0) / args.iters

    t0 = time.perf_counter()
    for _ in range(args.iters):
        out = bitcore.gemm_packed_nt(a_bits, bt_bits, args.k)
    t_bin = (time.perf_counter() - t0) / args.iters

    exact = bool(np.array_equal(ref.astype(np.int64), out.astype(np.int64)))
    print(f"m={args.m} k={args.k} n={args.n} iters={args.iters}")
    print(f"float  {flops / t_float / 1e9:10.3f} Gop/s   ({t_float * 1e3:.3f} ms)")
    print(f"binary {flops / t_bin / 1e9:10.3f} Gop/s   ({t_bin * 1e3:.3f} ms)")
    print(f"bitwise_match {exact}")
    if not exact:
        raise AssertionError("binary result diverged from float oracle")
    if args.k >= 512 and t_bin > t_float:
        print("warning: binary path slower than float reference at this size")
    return 0


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------

def cmd_inspect(args) -> int:
    from . import complexity, model_io

    model = model_io.load_model(args.model)
    cfg = model.config
    print(f"format version {model_io.VERSION}")
    print(f"input {cfg.input_channels}x{cfg.input_size}x{cfg.input_size}  "
          f"classes {cfg.classes}  parallel {cfg.parallel}")
    print(f"stem  R={cfg.stem.replication} S={cfg.stem.stride} C={cfg.stem.channels}")
    for i, lv in enumerate(cfg.levels, 1):
        print(f"level{i}  blocks={lv.blocks} R={lv.replication} S={lv.stride} "
              f"C={lv.channels}")
    audit = complexity.param_count_audit(model)
    print(f"binary_params {audit['binary_params']:,}")
    print(f"real_params   {audit['real_params']:,}")
    expected = model_io.file_size(cfg)
    actual = os.path.getsize(args.model)
    print(f"file_bytes    {actual:,} (expected {expected:,})")
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bcnn",
                                 description="Binary CNN toolkit")
    ap.add_argument("--threads", type=int, default=None,
                    help="BLAS/OpenMP thread count (env BCNN_THREADS as fallback)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="operation/parameter counting")
    p.add_argument("--preset", choices=["p1", "p2", "toy"], default="p1")
    p.add_argument("--config", default=None)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of a table")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("ufa", help="universal approximator demos")
    p.add_argument("--fn", default="sinewave",
                   help="sinewave | ramp | step | csv:path")
    p.add_argument("--d", type=float, default=1.0 / 32)
    p.add_argument("--Q", type=int, default=32)
    p.add_argument("--sweep", type=int, default=0, metavar="N",
                   help="run an N-stage refinement sweep instead of one build")
    p.add_argument("--out", default="ufa.csv")
    p.set_defaults(func=cmd_ufa)

    p = sub.add_parser("train", help="two-step training")
    p.add_argument("--dataset", default="synthetic",
                   help="'synthetic' or a folder-per-class image directory")
    p.add_argument("--preset", choices=["p1", "p2", "toy"], default="toy")
    p.add_argument("--config", default=None)
    p.add_argument("--step", choices=["1", "2", "both"], default="both")
    p.add_argument("--resume", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=12345)
    p.add_argument("--epochs-override", type=int, default=None,
                   help="decay-epoch count for both steps")
    p.add_argument("--max-lr-override", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--train-n", type=int, default=5000)
    p.add_argument("--test-n", type=int, default=1000)
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="classify one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--random", action="store_true",
                   help="classify a random image instead of a file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--engine", choices=["float", "packed"], default="packed")
    p.add_argument("--topk", type=int, default=5)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="binary vs float matmul throughput")
    p.add_argument("--op", choices=["gemm", "conv"], default="gemm")
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--k", type=int, default=1024)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="describe a model file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _set_threads(args.threads)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # typed model-file errors land here
        from .model_io import ModelIOError

        if isinstance(exc, ModelIOError):
            print(f"error: {exc}", file=sys.stderr)
            return 3
        raise


if __name__ == "__main__":
    sys.exit(main())

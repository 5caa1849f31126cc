"""Command-line front end.

Exit codes: 0 success, 2 usage, 3 I/O or file format, 4 shape or invariant,
5 training divergence. Every failure prints one ``error: ...`` line.
"""

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from iterskel import config
from iterskel.bench import METHODS, bench, skeletonizer, table
from iterskel.bezier import GenParams, generate_many
from iterskel.dataset import grid_files, load_dataset, load_images, write_dataset, write_json
from iterskel.errors import FormatError, SkelError, UsageError
from iterskel.fileio import load_grid, load_skw, save_pgm, save_skt, save_skw, write_bytes
from iterskel.losses import LossConfig
from iterskel.metrics import Report, evaluate, summarize
from iterskel.net import STUDENT, TEACHER, init_net

log = logging.getLogger("iterskel")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dims(text):
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}") from None
    if len(dims) not in (2, 3):
        raise argparse.ArgumentTypeError("dims must have 2 or 3 entries")
    return dims


def _iters(text):
    if text == "auto":
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("iters must be an integer or 'auto'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("iters must be >= 1")
    return n


def _outdir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _arch(cfg, default):
    hidden = cfg.get("net", {}).get("hidden")
    return (3,) + tuple(hidden) + (1,) if hidden else default


def _train_config(args, cfg):
    from iterskel.train import TrainConfig

    tc = config.apply(TrainConfig(seed=args.seed), cfg.get("train", {}))
    if args.epochs is not None:
        tc = config.apply(tc, {"epochs": args.epochs})
    return tc


def _loss_config(cfg):
    return config.apply(LossConfig(), cfg.get("loss", {}))


# -- subcommands ----------------------------------------------------------------


def cmd_gen(args, cfg):
    params = config.apply(GenParams(dims=args.dims, seed=args.seed), cfg.get("gen", {}))
    manifest = write_dataset(params, args.count, _outdir(args.out))
    print(f"wrote {manifest['count']} samples to {args.out}")


def _fit(args, cfg, student):
    from iterskel.train import distill, train_teacher

    samples = load_dataset(args.data)
    val = load_dataset(args.val) if args.val else None
    nd = samples[0].image.ndim
    tc, lc = _train_config(args, cfg), _loss_config(cfg)
    out = _outdir(args.out)
    if student:
        teacher = load_skw(args.teacher)
        if teacher.ndim != nd:
            raise UsageError(f"teacher is {teacher.ndim}D but the data is {nd}D")
        net = init_net(_arch(cfg, STUDENT), nd, seed=args.seed)
        params, hist = distill(teacher, net, samples, tc, lc, val=val)
    else:
        net = init_net(_arch(cfg, TEACHER), nd, seed=args.seed)
        params, hist = train_teacher(samples, net, tc, lc, val=val)
    digest = save_skw(out / "weights.skw", params, exclusive=True)
    write_json(out / "history.json", hist.to_dict())
    run = {
        "command": "distill" if student else "train",
        "data": str(args.data),
        "seed": args.seed,
        "train": {k: v for k, v in vars(tc).items()},
        "loss": {k: v for k, v in vars(lc).items()},
        "channels": list(params.channels),
        "n_params": params.n_params,
        "weights_sha256": digest,
    }
    write_json(out / "run.json", run)
    print(f"{params.n_params} parameters, final loss {hist.loss[-1]:.4f}; weights in {out / 'weights.skw'}")


def cmd_train(args, cfg):
    _fit(args, cfg, student=False)


def cmd_distill(args, cfg):
    _fit(args, cfg, student=True)


def _save_grid(path, g, fmt):
    if fmt == "pgm":
        return save_pgm(path.with_suffix(".pgm"), g, exclusive=True)
    return save_skt(path.with_suffix(".skt"), g, exclusive=True)


def cmd_skel(args, cfg):
    from iterskel.engine import run
    from iterskel.net import binarize_ste

    images = load_images(args.input)
    if not images:
        raise UsageError(f"no input grids under {args.input}")
    weights = load_skw(args.weights) if args.weights else None
    if args.method == "skelite" and weights is None:
        raise UsageError("method skelite needs --weights")
    if args.trace and args.method != "skelite":
        raise UsageError("--trace is only available for method skelite")
    out = _outdir(args.out)
    gran = cfg.get("infer", {}).get("granularity", "grid")
    rng = np.random.default_rng(args.seed)
    fn = skeletonizer(args.method) if args.method != "skelite" else None
    timings = {}
    for sid, img in images.items():
        if args.method == "skelite" and gran != "grid" and img.dtype.kind == "f":
            img, _ = binarize_ste(img, rng, granularity=gran)
        t0 = time.perf_counter()
        if fn is not None:
            skel = fn(img)
        elif args.trace:
            skel, trace = run(weights, img, N=args.iters, record_trace=True, rng=rng)
        else:
            skel = run(weights, img, N=args.iters, rng=rng)
        timings[sid] = (time.perf_counter() - t0) * 1e3
        if args.trace:
            tdir = _outdir(Path(args.trace) / sid)
            for n, st in enumerate(trace.steps, 1):
                _save_grid(tdir / f"step{n:02d}", st.skeleton_after, args.format)
                for name in ("eroded", "boundary", "delta"):
                    _save_grid(tdir / f"step{n:02d}_{name}", getattr(st, name), args.format)
            _save_grid(tdir / "final", skel, args.format)
        _save_grid(out / f"{sid}_pred", skel, args.format)
    if args.timings:
        write_json(out / "timings.json", timings)
    print(f"skeletonized {len(images)} grid(s) with {args.method} into {out}")


def _report_text(reports, fmt):
    if fmt == "json":
        rows = [dict(zip(Report.COLUMNS, r.row())) | {"empty_prediction": r.empty} for r in reports]
        return json.dumps({"samples": rows, "mean": summarize(reports)}, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(Report.COLUMNS)
    for r in reports:
        w.writerow([r.sample_id] + [repr(float(v)) for v in r.row()[1:]])
    return buf.getvalue()


def cmd_eval(args, cfg):
    preds = grid_files(args.pred)
    targets = grid_files(args.target, "*_lbl.skt") or grid_files(args.target)
    missing = sorted(set(preds) - set(targets))
    if not preds:
        raise UsageError(f"no predictions under {args.pred}")
    if missing:
        raise UsageError(f"no target for prediction(s) {', '.join(missing[:5])}")
    timings = {}
    tfile = Path(args.pred) / "timings.json"
    if tfile.exists():
        timings = json.loads(tfile.read_text())
    reports = []
    for sid in sorted(preds):
        pred, target = load_grid(preds[sid]), load_grid(targets[sid])
        reports.append(evaluate(pred, target, sid, timings.get(sid, 0.0)))
    fmt = "json" if str(args.out).endswith(".json") else "csv"
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_bytes(args.out, _report_text(reports, fmt).encode(), exclusive=True)
    mean = summarize(reports)
    print(" ".join(f"{k}={v:.4f}" for k, v in mean.items()))


def cmd_bench(args, cfg):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {', '.join(bad)}")
    weights = load_skw(args.weights) if args.weights else None
    if "skelite" in methods and weights is None:
        raise UsageError("method skelite needs --weights")
    if args.data:
        samples = load_dataset(args.data)
        inputs = [s.image for s in samples]
        targets = [s.skeleton for s in samples]
    else:
        params = config.apply(GenParams(dims=args.dims, seed=args.seed), cfg.get("gen", {}))
        samples = generate_many(params, args.count)
        inputs = [s.image for s in samples]
        targets = [s.skeleton for s in samples]
    results = bench(methods, inputs, args.repeats, args.warmup, weights, targets)
    out = _outdir(args.out)
    write_json(out / "bench.json", {"repeats": args.repeats, "warmup": args.warmup,
                                    "results": [r.to_dict() for r in results]})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "input", "median_ms", "speedup_vs_boolean"])
    for r in results:
        for i, ms in enumerate(r.median_ms):
            w.writerow([r.method, i, repr(ms), "" if r.speedup is None else repr(r.speedup)])
    write_bytes(out / "bench.csv", buf.getvalue().encode(), exclusive=True)
    text = table(results)
    write_bytes(out / "summary.txt", (text + "\n").encode(), exclusive=True)
    print(text)


def cmd_net_inspect(args, cfg):
    if args.weights:
        params = load_skw(args.weights)
    else:
        arch = {"teacher": TEACHER, "student": STUDENT}[args.arch]
        params = init_net(_arch(cfg, arch), args.ndim, seed=args.seed)
    text = params.describe()
    if args.out:
        write_bytes(args.out, (text + "\n").encode(), exclusive=True)
    print(text)


# -- wiring ----------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="iterskel", description="Learned iterative skeletonization toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True, out_help="output directory"):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--out", required=out_required, help=out_help)
        sp.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, deterministic)")
        return sp

    sp = common(sub.add_parser("gen", help="generate synthetic samples"))
    sp.add_argument("--dims", type=_dims, default=(64, 64))
    sp.add_argument("--count", type=int, required=True)
    sp.set_defaults(func=cmd_gen)

    for name, func in (("train", cmd_train), ("distill", cmd_distill)):
        sp = common(sub.add_parser(name, help=f"{name} a network"))
        sp.add_argument("--data", required=True, help="sample directory from 'gen'")
        sp.add_argument("--val", help="held-out sample directory")
        sp.add_argument("--epochs", type=int)
        if name == "distill":
            sp.add_argument("--teacher", required=True, help="teacher weights (SKW1)")
        sp.set_defaults(func=func)

    sp = common(sub.add_parser("skel", help="skeletonize grids"))
    sp.add_argument("--method", choices=METHODS, required=True)
    sp.add_argument("--input", required=True, help="grid file or directory")
    sp.add_argument("--weights")
    sp.add_argument("--iters", type=_iters, default=None, help="N or 'auto'")
    sp.add_argument("--trace", help="directory for per-step grids (skelite)")
    sp.add_argument("--format", choices=("skt", "pgm"), default="skt")
    sp.add_argument("--timings", action="store_true", help="record wall-clock per grid in timings.json")
    sp.set_defaults(func=cmd_skel)

    sp = common(sub.add_parser("eval", help="score predictions against labels"),
                out_help="report file (.csv or .json)")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--target", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("bench", help="time skeletonization methods"))
    sp.add_argument("--methods", default="boolean,morph,skelite")
    sp.add_argument("--data", help="sample directory; synthetic inputs otherwise")
    sp.add_argument("--dims", type=_dims, default=(256, 256))
    sp.add_argument("--count", type=int, default=50)
    sp.add_argument("--weights")
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--warmup", type=int, default=2)
    sp.set_defaults(func=cmd_bench)

    def inspect_args(sp):
        common(sp, out_required=False, out_help="optional text file")
        sp.add_argument("--weights")
        sp.add_argument("--arch", choices=("teacher", "student"), default="teacher")
        sp.add_argument("--ndim", type=int, choices=(2, 3), default=2)
        sp.set_defaults(func=cmd_net_inspect)

    inspect_args(sub.add_parser("net-inspect", help="print architecture and parameter count"))
    net = sub.add_parser("net", help="network utilities")
    inspect_args(net.add_subparsers(dest="action", required=True, parser_class=_Parser).add_parser(
        "inspect", help="print architecture and parameter count"))
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        cfg = config.load(args.config)
        with threadpool_limits(limits=max(1, args.threads)):
            args.func(args, cfg)
    except SkelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return FormatError.exit_code
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"error: malformed input ({exc})", file=sys.stderr)
        return FormatError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

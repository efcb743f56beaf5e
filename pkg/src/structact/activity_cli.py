"""Command line entry point: ``structact <command> [options]``.

Every command writes ``run_manifest.txt`` (the resolved configuration,
seed and inputs) into ``--out`` so a run can be repeated exactly.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import structured_net as net
from .config import ConfigError, RunConfig, format_config, load_config
from .dataset import ManifestError, read_boundaries, read_manifest, write_synthetic_dataset
from .gradcheck import classifier_gradient_errors, network_gradient_errors
from .latent_segmentation import SegmentationConfig, count_assignments, enumerate_assignments
from .predictor import evaluate, predict
from .trainer import TrainingError, pretrain_softmax, train, write_history_csv
from .video_io import VideoFormatError, VideoSample, read_video

log = logging.getLogger("structact")

GRAD_TOL = 1e-5


class _Parser(argparse.ArgumentParser):
    """Reports usage errors on a single line."""

    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--profile", choices=sorted(net.PROFILES), default="mini",
                   help="architecture profile (default mini)")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default ./out)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="structact",
                     description="Latent-segmentation 3D CNN activity recognition.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p.add_argument("--n-per-class", type=int, help="training videos per class")
    p.add_argument("--n-test-per-class", type=int, help="held-out videos per class")
    p.add_argument("--classes", type=int, help="number of classes")

    p = sub.add_parser("pretrain", parents=[common],
                       help="softmax pre-training on the gray channel")
    p.add_argument("--data", required=True, metavar="MANIFEST")

    p = sub.add_parser("train", parents=[common], help="alternating latent/SGD training")
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--init", metavar="CHECKPOINT", help="start from these parameters")

    p = sub.add_parser("eval", parents=[common], help="accuracy and confusion on a split")
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))

    p = sub.add_parser("predict", parents=[common], help="label and segmentation per video")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("videos", nargs="+", metavar="VIDEO")

    sub.add_parser("check-grad", parents=[common], help="finite-difference gradient check")

    p = sub.add_parser("enumerate", parents=[common], help="count latent decompositions")
    p.add_argument("--A", type=int, help="anchor frames")
    p.add_argument("--M", type=int, help="segments")
    p.add_argument("--Lmin", type=int, help="minimum segment length")
    p.add_argument("--list", action="store_true", help="also print every decomposition")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run_manifest(out: Path, args, run: RunConfig, inputs=()) -> None:
    lines = [f"command = {args.command}", f"version = {__version__}", f"seed = {args.seed}"]
    if args.config:
        lines.append(f"config_file = {args.config}")
    for p in inputs:
        lines.append(f"input = {p} sha256:{_sha256(p)}")
    (out / "run_manifest.txt").write_text("\n".join(lines) + "\n" + format_config(run))


def _load_checkpoint(path, run: RunConfig):
    params = net.load_checkpoint(path)
    if params.profile.channels != run.profile.channels:
        raise ValueError(f"checkpoint expects {params.profile.channels}-channel video")
    return params


def _gray(samples):
    return [VideoSample(s.pixels[:, :1], s.label, s.id, s.meta) for s in samples]


def _print_table(rows, header):
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    print(fmt.format(*header))
    for r in rows:
        print(fmt.format(*r))


def _fmt(x) -> str:
    return "nan" if x != x else f"{x:.4f}"


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, run: RunConfig, out: Path) -> int:
    n = args.n_per_class if args.n_per_class is not None else run.n_per_class
    nt = args.n_test_per_class if args.n_test_per_class is not None else run.n_test_per_class
    classes = args.classes if args.classes is not None else run.n_classes
    m = write_synthetic_dataset(out, run.profile, args.seed, n, classes, nt)
    write_run_manifest(out, args, run)
    print(f"wrote {len(m.entries)} videos ({len(m.split('train'))} train, "
          f"{len(m.split('test'))} test) to {out / 'manifest.txt'}")
    return 0


def cmd_pretrain(args, run: RunConfig, out: Path) -> int:
    manifest = read_manifest(args.data)
    samples = _gray(manifest.load("train"))
    params, losses = pretrain_softmax(samples, run.profile, run.train, args.seed,
                                      n_classes=len(manifest.classes))
    net.save_checkpoint(out / "pretrained.lsnm", params)
    with open(out / "pretrain_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "cross_entropy"])
        w.writerows([i + 1, repr(v)] for i, v in enumerate(losses))
    write_run_manifest(out, args, run, [args.data])
    final = _fmt(losses[-1]) if losses else "nan"
    print(f"pretrained {len(losses)} epochs, final cross-entropy {final}; "
          f"wrote {out / 'pretrained.lsnm'}")
    return 0


def cmd_train(args, run: RunConfig, out: Path) -> int:
    from .plotting import plot_loss_history

    manifest = read_manifest(args.data)
    samples = manifest.load("train")
    init = _load_checkpoint(args.init, run) if args.init else None
    if init is not None and init.profile != run.profile:
        raise ValueError("initial checkpoint was built for a different profile/config")
    result = train(samples, run.profile, run.train, args.seed,
                   n_classes=len(manifest.classes), init=init)
    net.save_checkpoint(out / "checkpoint.lsnm", result.params)
    write_history_csv(out / "loss_history.csv", result.history)
    plot_loss_history(result.history, out / "loss_history.png")
    with open(out / "latents.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label", "lengths"])
        w.writerows([s.id, s.label, str(h)] for s, h in zip(samples, result.latents))
    write_run_manifest(out, args, run, [args.data] + ([args.init] if args.init else []))
    last = result.history[-1]
    print(f"trained {len(result.history)} outer iterations; best objective at iteration "
          f"{result.best_iteration}; last train accuracy {_fmt(last.train_accuracy)}")
    print(f"wrote {out / 'checkpoint.lsnm'}")
    return 0


def _boundary_recovery(manifest, samples, preds):
    """Share of samples whose predicted segment starts are all within one anchor."""
    sidecar = manifest.root / "boundaries.csv"
    if not sidecar.is_file():
        return None
    planted = read_boundaries(sidecar)
    hits = []
    for s, p in zip(samples, preds):
        truth = planted.get(s.id)
        if truth is None or len(truth) != len(p.assignment.lengths):
            continue
        t_starts = np.cumsum((1,) + truth[:-1])
        hits.append(bool(np.all(np.abs(np.array(p.assignment.starts) - t_starts) <= 1)))
    return float(np.mean(hits)) if hits else None


def cmd_eval(args, run: RunConfig, out: Path) -> int:
    from .plotting import plot_confusion

    manifest = read_manifest(args.data)
    samples = manifest.load(args.split)
    if not samples:
        raise ManifestError(f"split {args.split!r} is empty")
    params = _load_checkpoint(args.checkpoint, run)
    if params.n_classes != len(manifest.classes):
        raise ValueError(f"checkpoint has {params.n_classes} classes, dataset "
                         f"{len(manifest.classes)}")
    metrics, preds = evaluate(samples, params, run.train.workers)
    recovery = _boundary_recovery(manifest, samples, preds)

    rows = [[i, name, int(metrics.confusion[i].sum()), _fmt(metrics.per_class_accuracy[i])]
            for i, name in enumerate(manifest.classes)]
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "class", "name", "support", "value"])
        for i, name, support, acc in rows:
            w.writerow(["class_accuracy", i, name, support, acc])
        w.writerow(["average_accuracy", "", "", len(samples), _fmt(metrics.average_accuracy)])
        w.writerow(["overall_accuracy", "", "", len(samples), _fmt(metrics.overall_accuracy)])
        if recovery is not None:
            w.writerow(["boundary_recovery", "", "", len(samples), _fmt(recovery)])
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "true", "pred", "lengths", "score"])
        w.writerows([s.id, s.label, p.label, str(p.assignment), repr(p.score)]
                    for s, p in zip(samples, preds))
    plot_confusion(metrics.confusion, out / "confusion.png", manifest.classes)
    write_run_manifest(out, args, run, [args.data, args.checkpoint])

    _print_table(rows, ["class", "name", "support", "accuracy"])
    print(f"average accuracy {_fmt(metrics.average_accuracy)}  "
          f"overall accuracy {_fmt(metrics.overall_accuracy)}")
    if recovery is not None:
        print(f"boundaries within one anchor {_fmt(recovery)}")
    return 0


def cmd_predict(args, run: RunConfig, out: Path) -> int:
    params = _load_checkpoint(args.checkpoint, run)
    assignments = enumerate_assignments(params.profile.segmentation)
    rows = []
    for path in args.videos:
        p = predict(read_video(path), params, assignments, run.train.workers)
        rows.append([path, p.label, str(p.assignment), f"{p.score:.6f}"])
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video", "label", "lengths", "score"])
        w.writerows(rows)
    write_run_manifest(out, args, run, [args.checkpoint, *args.videos])
    _print_table(rows, ["video", "label", "lengths", "score"])
    return 0


def cmd_check_grad(args, run: RunConfig, out: Path) -> int:
    errors = network_gradient_errors(run.profile, args.seed, loss_cfg=run.train.loss)
    errors += [e._replace(name=f"binary.{e.name}")
               for e in classifier_gradient_errors(args.seed, loss_cfg=run.train.loss)]
    with open(out / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "size", "rel_error"])
        w.writerows([e.name, e.size, repr(e.rel_error)] for e in errors)
    write_run_manifest(out, args, run)
    worst = max(errors, key=lambda e: e.rel_error)
    print(f"max relative error {worst.rel_error:.3e} ({worst.name}) over {len(errors)} groups")
    if worst.rel_error > GRAD_TOL:
        print(f"gradient check FAILED: {worst.rel_error:.3e} > {GRAD_TOL:g}", file=sys.stderr)
        return 1
    return 0


def cmd_enumerate(args, run: RunConfig, out: Path) -> int:
    p = run.profile
    cfg = SegmentationConfig(A=args.A if args.A is not None else p.A,
                             M=args.M if args.M is not None else p.M,
                             m=p.m,
                             L_min=args.Lmin if args.Lmin is not None else p.L_min)
    print(count_assignments(cfg))
    if args.list:
        for h in enumerate_assignments(cfg):
            print(h)
    write_run_manifest(out, args, run)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "check-grad": cmd_check_grad,
    "enumerate": cmd_enumerate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = load_config(args.config, args.profile)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, run, out)
    except ConfigError as exc:
        print(f"structact: invalid config: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"structact: missing file: {exc}", file=sys.stderr)
    except (VideoFormatError, net.CheckpointError, ManifestError) as exc:
        print(f"structact: bad input: {exc}", file=sys.stderr)
    except TrainingError as exc:
        print(f"structact: training failed: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"structact: error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())

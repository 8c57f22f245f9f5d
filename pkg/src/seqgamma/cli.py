"""Command line entry point: ``seqgamma synth|train|enhance|oracle|eval``.

Exit codes: 0 success, 1 runtime error, 2 usage error.  Set
``SEQGAMMA_LOG`` (e.g. ``INFO``, ``DEBUG``) for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import controller as ctl
from .frames import DEFAULT_PATTERN, Frame, FrameError, Sequence, as_array, load_sequence, save_sequence
from .gamma import GAMMA_MAX, GAMMA_MIN, gamma_array
from .oracle import OracleConfig, oracle_gamma
from .photometric import read_correspondences, sequence_photometric_score
from .ssim import SsimConfig
from .synth import SynthConfig, adjacent_inconsistency, generate
from .trainer import TrainConfig, make_training_windows, train

log = logging.getLogger("seqgamma")
TOOL = "seqgamma"
REPORT_SCHEMA_VERSION = "1"
INPUT_PATTERNS = (DEFAULT_PATTERN, "frame_%06d.npy", "frame_%06d.pgm", "frame_%06d.ppm")


class UsageError(Exception):
    pass


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: Path, doc: dict) -> None:
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _clean_float(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _load_dir(path, pattern=None) -> Sequence:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"no such frame directory: {path}")
    if pattern:
        return load_sequence(path, pattern)
    for pat in INPUT_PATTERNS:
        ext = pat.rsplit(".", 1)[1]
        if any(path.glob(f"*.{ext}")):
            return load_sequence(path, pat)
    raise FrameError(f"no frames found in {path}")


def report_schema() -> dict:
    """JSON Schema (draft 2020-12) for every report this tool writes."""
    text = resources.files(__package__).joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def _header(kind: str, config: dict) -> dict:
    return {"tool": TOOL, "version": __version__, "schema_version": REPORT_SCHEMA_VERSION,
            "kind": kind, "config": config}


def _metrics(seq, corr=None) -> dict:
    return {
        "adjacent_inconsistency": _clean_float(adjacent_inconsistency(seq)),
        "photometric_score": _clean_float(sequence_photometric_score(seq, corr)),
    }


# -- synth ------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.len < 10:
        raise UsageError(f"--len must be at least 10, got {args.len}")
    cfg = SynthConfig(length=args.len, height=args.size, width=args.size,
                      walk_sigma=args.walk_sigma, seed=args.seed, contrast=args.contrast)
    out = Path(args.out)
    degraded, clean, truth = generate(cfg)
    save_sequence(clean, out / "clean")
    save_sequence(degraded, out / "degraded")
    _write_text(out / "truth.csv", truth.to_csv())
    print(f"wrote {len(clean)} frames to {out / 'clean'} and {out / 'degraded'}; truth in {out / 'truth.csv'}")
    return 0


# -- train ------------------------------------------------------------------

def _snippet_dirs(root: Path) -> list:
    if not root.is_dir():
        raise FileNotFoundError(f"no such training directory: {root}")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    return subdirs or [root]


def cmd_train(args) -> int:
    root = Path(args.data)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
                      seed=args.seed, seq_len=args.seq_len)
    windows = []
    for d in _snippet_dirs(root):
        try:
            snippet = _load_dir(d, args.pattern)
        except FrameError as exc:
            log.warning("skipping %s: %s", d, exc)
            continue
        windows.extend(make_training_windows(snippet, cfg.seq_len, args.stride))
    if not windows:
        raise RuntimeError(f"no {cfg.seq_len}-frame training windows found under {root}")
    params = ctl.ControllerParams.initialize(args.channels, args.input_size, seed=args.seed)
    trained, report = train(params, windows, cfg)
    out = Path(args.out)
    ctl.save_params(trained, out / "weights.json")
    _write_text(out / "train.csv", report.to_csv(timing=args.timing))
    doc = _header("train", {
        "data": str(args.data), "lr": cfg.learning_rate, "epochs": cfg.epochs,
        "batch": cfg.batch_size, "seed": cfg.seed, "seq_len": cfg.seq_len,
        "seed_frames": cfg.seed_count, "stride": args.stride, "channels": args.channels,
        "input_size": args.input_size,
    })
    doc["windows"] = len(windows)
    doc["epoch_mean_loss"] = [float(x) for x in report.epoch_losses]
    if args.timing:
        doc["epoch_seconds"] = [float(x) for x in report.epoch_seconds]
    _write_json(out / "train_report.json", doc)
    print(f"trained on {len(windows)} windows; final epoch loss {report.epoch_losses[-1]:.6f}"
          if report.epoch_losses else f"no epochs run on {len(windows)} windows")
    return 0


# -- enhance / oracle -------------------------------------------------------

def _parse_mode(mode: str):
    if mode in ("rnn", "oracle"):
        return mode, None
    if mode.startswith("fixed:"):
        try:
            g = float(mode.split(":", 1)[1])
        except ValueError:
            g = float("nan")
        if not GAMMA_MIN <= g <= GAMMA_MAX:
            raise UsageError(f"fixed gamma in mode {mode!r} must lie in [{GAMMA_MIN}, {GAMMA_MAX}]")
        return "fixed", g
    raise UsageError(f"invalid mode {mode!r}; expected rnn, oracle or fixed:<gamma>")


def _run_enhancer(seq: Sequence, kind: str, value, params):
    frames, gammas, losses, times = [], [], [], []
    state = ctl.ControllerState.zeros(params) if kind == "rnn" else None
    ocfg = OracleConfig() if kind == "oracle" else None
    for t, frame in enumerate(seq):
        t0 = time.perf_counter()
        loss = None
        if kind == "rnn":
            g, state = ctl.step(params, state, ctl.prepare_input(frame, params.input_size))
        elif kind == "oracle":
            if t < ocfg.seed_count:
                g = 1.0
            else:
                g, loss = oracle_gamma(seq, t, frames, ocfg)
        else:
            g = value
        frames.append(gamma_array(frame.data, g))
        times.append((time.perf_counter() - t0) * 1000.0)
        gammas.append(float(g))
        losses.append(loss)
    out = Sequence(tuple(Frame(a, k) for k, a in enumerate(frames)), seq.fps)
    return out, gammas, losses, times


def _enhance(args, kind, value) -> int:
    params = None
    if kind == "rnn":
        if not args.weights:
            raise UsageError("--weights is required for mode rnn")
        params = ctl.load_params(args.weights)
    seq = _load_dir(args.input, args.pattern)
    if kind == "oracle" and len(seq) < 3:
        raise RuntimeError("oracle mode needs at least 3 frames")
    enhanced, gammas, losses, times = _run_enhancer(seq, kind, value, params)
    out = Path(args.output)
    save_sequence(enhanced, out, "frame_%06d.npy" if args.float else DEFAULT_PATTERN)
    rows = ["t,gamma,loss"] + [
        f"{t},{g!r},{'' if l is None or not np.isfinite(l) else repr(l)}"
        for t, (g, l) in enumerate(zip(gammas, losses))
    ]
    _write_text(out / "gammas.csv", "\n".join(rows) + "\n")
    doc = _header(args.command, {
        "input": str(args.input), "output": str(args.output), "mode": args.mode,
        "weights": str(args.weights) if args.weights else None, "float": bool(args.float),
    })
    doc["frames"] = len(seq)
    doc["gamma_trace"] = gammas
    doc["metrics"] = {"before": _metrics(seq), "after": _metrics(enhanced)}
    if args.timing:
        doc["timing"] = {"per_frame_ms": times, "mean_ms": float(np.mean(times))}
    report = Path(args.report) if args.report else out / "report.json"
    _write_json(report, doc)
    m = doc["metrics"]
    print(f"enhanced {len(seq)} frames ({args.mode}); adjacent inconsistency "
          f"{m['before']['adjacent_inconsistency']:.6f} -> {m['after']['adjacent_inconsistency']:.6f}")
    return 0


def cmd_enhance(args) -> int:
    kind, value = _parse_mode(args.mode)
    return _enhance(args, kind, value)


def cmd_oracle(args) -> int:
    args.mode, args.weights = "oracle", None
    return _enhance(args, "oracle", None)


# -- eval -------------------------------------------------------------------

def _load_corr_dir(path, pairs: int):
    if path is None:
        return None
    path = Path(path)
    out = []
    for k in range(pairs):
        f = path / f"pair_{k:06d}.txt"
        if not f.exists():
            raise FileNotFoundError(f"missing correspondence file {f}")
        out.append(read_correspondences(f))
    return out


def cmd_eval(args) -> int:
    a = _load_dir(args.a, args.pattern)
    b = _load_dir(args.b, args.pattern)
    if len(a) != len(b):
        raise RuntimeError(f"sequence lengths differ: {args.a} has {len(a)}, {args.b} has {len(b)}")
    corr = _load_corr_dir(args.corr, len(a) - 1)
    doc = _header("eval", {"a": str(args.a), "b": str(args.b),
                           "corr": str(args.corr) if args.corr else None})
    doc["frames"] = len(a)
    doc["metrics"] = {"a": _metrics(a, corr), "b": _metrics(b, corr)}
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


# -- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=TOOL, description="Adaptive gamma correction for frame sequences.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic degraded/clean pair")
    s.add_argument("--len", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--walk-sigma", type=float, default=0.08)
    s.add_argument("--contrast", action="store_true", help="add scale/offset jitter")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train the recurrent controller")
    t.add_argument("--data", required=True, help="directory of snippet frame directories")
    t.add_argument("--out", required=True)
    t.add_argument("--lr", type=float, default=5e-5)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch", type=int, default=4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--seq-len", type=int, default=10)
    t.add_argument("--stride", type=int, default=1)
    t.add_argument("--channels", type=int, default=8)
    t.add_argument("--input-size", type=int, default=64)
    t.add_argument("--pattern", default=None)
    t.add_argument("--no-timing", dest="timing", action="store_false",
                   help="omit wall-clock fields so reports are reproducible byte for byte")
    t.set_defaults(func=cmd_train)

    for name, helptext in (("enhance", "enhance a frame directory"),
                           ("oracle", "enhance with the grid-search oracle")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--input", required=True)
        e.add_argument("--output", required=True)
        if name == "enhance":
            e.add_argument("--mode", default="rnn", help="rnn | oracle | fixed:<gamma>")
            e.add_argument("--weights")
        e.add_argument("--report", help="report path (default OUTPUT/report.json)")
        e.add_argument("--float", action="store_true", help="write float32 .npy frames")
        e.add_argument("--pattern", default=None)
        e.add_argument("--no-timing", dest="timing", action="store_false")
        e.set_defaults(func=cmd_enhance if name == "enhance" else cmd_oracle)

    v = sub.add_parser("eval", help="compare consistency metrics of two frame directories")
    v.add_argument("a")
    v.add_argument("b")
    v.add_argument("--corr", help="directory of pair_%%06d.txt correspondence files")
    v.add_argument("--out")
    v.add_argument("--pattern", default=None)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    level = os.environ.get("SEQGAMMA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"{TOOL}: usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: simulate, train, detect, eval and report."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import benchmark
from .estimators import FutureObjectLocalizer
from .evaluation import corpus_auc, per_video_auc
from .exceptions import FoladError
from .io import checkpoint_bytes, file_mode, load_checkpoint, load_video, video_lines
from .pipeline import TrackingOptions, score_video
from .plots import roc_svg, timeline_svg
from .scoring import METHOD_LABELS, METHODS, series_from_csv, series_to_csv
from .synthetic import generate

log = logging.getLogger("folad")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
MANIFEST = "manifest.json"

# built-in defaults; a config file overrides these and flags override both
DEFAULTS = {
    "seed": 0,
    "delta": 5,
    "method": None,
    "split": None,
    "dropout": 0.0,
    "test_dropout": 0.05,
    "flow": "layered",
    "epochs": benchmark.TRAIN_RECIPE["n_epochs"],
    "hidden_size": benchmark.TRAIN_RECIPE["hidden_size"],
    "ego_hidden_size": benchmark.TRAIN_RECIPE["ego_hidden_size"],
    "learning_rate": benchmark.TRAIN_RECIPE["learning_rate"],
    "batch_size": benchmark.TRAIN_RECIPE["batch_size"],
    "window": benchmark.TRAIN_RECIPE["window"],
    "stride": benchmark.TRAIN_RECIPE["stride"],
    "ego_weight": 1.0,
    "max_age": 5,
    "iou_threshold": 0.3,
    "use_track_ids": False,
    "pixel_units": False,
    "jobs": 1,
}
TYPES = {k: type(v) for k, v in DEFAULTS.items() if v is not None}
TYPES.update(method=str, split=str)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Outputs:
    """Files staged in memory and written together only once a command succeeds."""

    def __init__(self):
        self.files: list[tuple[Path, bytes]] = []

    def add(self, path, data: str | bytes):
        self.files.append((Path(path), data.encode("utf-8") if isinstance(data, str) else data))

    def commit(self):
        staged = []
        try:
            for path, data in self.files:
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
                with os.fdopen(fd, "wb") as f:
                    f.write(data)
                os.chmod(tmp, file_mode())
                staged.append((tmp, path))
            for tmp, path in staged:
                os.replace(tmp, path)
        except BaseException:
            for tmp, _ in staged:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            raise


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use underscores or dashes."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read config {path}: {e.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        parser.read_string("[folad]\n" + text, source=str(path))
    except configparser.Error as e:
        raise DataError(f"malformed config {path}: {e}") from None
    out = {}
    for key, raw in parser["folad"].items():
        k = key.replace("-", "_")
        if k not in DEFAULTS:
            raise DataError(f"config {path}: unknown key {key!r}")
        kind = TYPES[k]
        try:
            out[k] = _bool(raw) if kind is bool else kind(raw)
        except ValueError:
            raise DataError(f"config {path}: {key} = {raw!r} is not a valid {kind.__name__}") from None
    return out


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--config", default=d, help="key = value settings file; flags take precedence")
    p.add_argument("--delta", type=int, default=d, help="prediction horizon in frames (default 5)")
    p.add_argument("--method", choices=METHODS, default=d, help="scoring method")
    p.add_argument("-v", "--verbose", action="store_true", default=d if suppress else False,
                   help="log progress to standard error")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="folad", description="Traffic anomaly detection from future object localization.")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(sp, suppress=True)
        return sp

    s = add("simulate", "generate the synthetic benchmark as JSONL videos")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--split", choices=("all",) + benchmark.SPLITS)
    s.add_argument("--dropout", type=float, help="detection dropout for train/val videos")
    s.add_argument("--test-dropout", type=float, help="detection dropout for test videos")
    s.add_argument("--flow", choices=("layered", "grid"), help="flow storage")

    t = add("train", "train the localizer on normal videos and write a checkpoint")
    t.add_argument("--videos", nargs="+", required=True, help="JSONL files or benchmark directories")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--split", help="manifest split to read from directories (default train)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--hidden-size", type=int)
    t.add_argument("--ego-hidden-size", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--window", type=int)
    t.add_argument("--stride", type=int)
    t.add_argument("--ego-weight", type=float)
    t.add_argument("--loss-log", help="epoch loss CSV (default: checkpoint path + .loss.csv)")

    d = add("detect", "score videos frame by frame")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--videos", nargs="+", required=True)
    d.add_argument("--out", required=True, help="directory for <video>.<method>.csv files")
    d.add_argument("--split", help="manifest split to read from directories (default test)")
    d.add_argument("--max-age", type=int)
    d.add_argument("--iou-threshold", type=float)
    d.add_argument("--use-track-ids", action="store_const", const=True, default=None)
    d.add_argument("--pixel-units", action="store_const", const=True, default=None)
    d.add_argument("--jobs", type=int, help="worker processes")

    e = add("eval", "frame-level AUC of score CSVs against annotations")
    e.add_argument("--scores", required=True, help="directory written by detect")
    e.add_argument("--videos", nargs="+", required=True, help="annotated videos")
    e.add_argument("--out", required=True, help="directory for auc.csv, per_video_auc.csv, roc.svg")
    e.add_argument("--split", help="manifest split to read from directories (default test)")

    r = add("report", "plot a score series with its anomaly window")
    r.add_argument("--scores", required=True, help="score CSV")
    r.add_argument("--video", help="video JSONL carrying the annotation")
    r.add_argument("--out", required=True, help="SVG path")
    return p


def resolve(args: argparse.Namespace) -> dict:
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    out = dict(DEFAULTS)
    out.update(cfg)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    if out["delta"] < 1:
        raise UsageError("--delta must be a positive integer")
    if out["method"] is not None and out["method"] not in METHODS:
        raise UsageError(f"unknown method {out['method']!r}")
    return out


def _video_paths(sources, split: str | None) -> list[Path]:
    paths = []
    for src in sources:
        src = Path(src)
        if src.is_dir():
            man = src / MANIFEST
            if man.is_file():
                try:
                    entries = json.loads(man.read_text(encoding="utf-8"))["videos"]
                    paths += [src / e["file"] for e in entries if split in (None, "all", e["split"])]
                except (ValueError, KeyError, TypeError):
                    raise DataError(f"{man}: malformed manifest") from None
            else:
                paths += sorted(src.glob("*.jsonl"))
        elif src.is_file():
            paths.append(src)
        else:
            raise DataError(f"no such file or directory: {src}")
    if not paths:
        raise DataError("no videos found")
    return paths


def _load_videos(sources, split):
    out = []
    for p in _video_paths(sources, split):
        try:
            out.append(load_video(p))
        except OSError as e:
            raise DataError(f"cannot read {p}: {e.strerror}") from None
        except FoladError as e:
            raise DataError(f"{p}: {e}") from None
    return out


def cmd_simulate(args, s) -> Outputs:
    opts = benchmark.BenchmarkOptions(seed=s["seed"], dropout=s["dropout"], test_dropout=s["test_dropout"],
                                      horizon=s["delta"])
    split = s["split"] or "all"
    outs = Outputs()
    entries = []
    for e in benchmark.manifest(opts):
        if split != "all" and e.split != split:
            continue
        video = generate(e.config)
        name = f"{video.video_id}.jsonl"
        outs.add(Path(args.out) / name, "\n".join(video_lines(video, s["flow"])) + "\n")
        a = e.config.anomaly
        entries.append({"split": e.split, "video_id": video.video_id, "file": name, "seed": e.config.seed,
                        "anomaly": None if a is None else {"kind": a.kind, "onset": a.onset},
                        "dropout": e.config.dropout})
        log.info("generated %s", video.video_id)
    manifest = {"format_version": 1, "seed": s["seed"], "videos": entries}
    outs.add(Path(args.out) / MANIFEST, json.dumps(manifest, indent=1) + "\n")
    return outs


def cmd_train(args, s) -> Outputs:
    videos = _load_videos(args.videos, s["split"] or "train")
    est = FutureObjectLocalizer(hidden_size=s["hidden_size"], ego_hidden_size=s["ego_hidden_size"],
                                horizon=s["delta"], n_epochs=s["epochs"], batch_size=s["batch_size"],
                                learning_rate=s["learning_rate"], window=s["window"], stride=s["stride"],
                                ego_weight=s["ego_weight"], random_state=s["seed"])
    try:
        est.fit(videos)
    except ValueError as e:
        raise DataError(str(e)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss"])
    for i, value in enumerate(est.loss_curve_, start=1):
        w.writerow([i, repr(float(value))])
    outs = Outputs()
    outs.add(args.out, checkpoint_bytes(est.params_))
    outs.add(args.loss_log or f"{args.out}.loss.csv", buf.getvalue())
    return outs


def _score_one(job):
    params, video, methods, options, pixel_units = job
    return score_video(params, video, methods, options, pixel_units)


def cmd_detect(args, s) -> Outputs:
    try:
        params = load_checkpoint(args.checkpoint)
    except OSError as e:
        raise DataError(f"cannot read {args.checkpoint}: {e.strerror}") from None
    except FoladError as e:
        raise DataError(f"{args.checkpoint}: {e}") from None
    if args.delta is not None or s["delta"] != DEFAULTS["delta"]:
        if params.config.horizon != s["delta"]:
            raise DataError(f"checkpoint horizon is {params.config.horizon}, --delta asks for {s['delta']}")
    videos = _load_videos(args.videos, s["split"] or "test")
    methods = METHODS if s["method"] is None else (s["method"],)
    options = TrackingOptions(s["max_age"], s["iou_threshold"], s["use_track_ids"])
    for v in videos:
        if v.dims != params.config.dims:
            raise DataError(f"video {v.video_id} is {v.dims}, checkpoint expects {params.config.dims}")
    jobs = [(params, v, methods, options, s["pixel_units"]) for v in videos]
    try:
        if s["jobs"] > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=s["jobs"]) as pool:
                results = list(pool.map(_score_one, jobs))
        else:
            results = [_score_one(j) for j in jobs]
    except ValueError as e:
        raise DataError(str(e)) from None
    outs = Outputs()
    for v, series in zip(videos, results):
        for m in methods:
            outs.add(Path(args.out) / f"{v.video_id}.{m}.csv", series_to_csv(series[m]))
    return outs


def _read_scores(path, method, video_id):
    try:
        return series_from_csv(Path(path).read_text(encoding="utf-8"), method, video_id)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    except FoladError as e:
        raise DataError(f"{path}: {e}") from None


def cmd_eval(args, s) -> Outputs:
    videos = _load_videos(args.videos, s["split"] or "test")
    score_dir = Path(args.scores)
    if not score_dir.is_dir():
        raise DataError(f"no such directory: {score_dir}")
    candidates = METHODS if s["method"] is None else (s["method"],)
    methods = [m for m in candidates
               if all((score_dir / f"{v.video_id}.{m}.csv").is_file() for v in videos)]
    if not methods:
        raise DataError(f"{score_dir} holds no complete set of score CSVs for these videos")
    annotations = [v.annotation for v in videos]
    auc_buf, pv_buf = io.StringIO(), io.StringIO()
    auc_w = csv.writer(auc_buf, lineterminator="\n")
    pv_w = csv.writer(pv_buf, lineterminator="\n")
    auc_w.writerow(["method", "label", "auc", "n_videos", "n_frames", "n_positive"])
    pv_w.writerow(["video_id", "method", "auc"])
    curves = {}
    for m in methods:
        series = []
        for v in videos:
            sr = _read_scores(score_dir / f"{v.video_id}.{m}.csv", m, v.video_id)
            if len(sr) != len(v):
                raise DataError(f"{v.video_id}.{m}.csv has {len(sr)} rows, video has {len(v)} frames")
            series.append(sr)
        try:
            roc = corpus_auc(series, annotations)
        except ValueError as e:
            raise DataError(str(e)) from None
        curves[METHOD_LABELS[m]] = roc
        n_pos = sum(int(a.end - a.start + 1) for a in annotations if a is not None)
        auc_w.writerow([m, METHOD_LABELS[m], repr(roc.auc), len(videos), sum(len(v) for v in videos), n_pos])
        for v, a in zip(videos, per_video_auc(series, annotations)):
            pv_w.writerow([v.video_id, m, "" if a != a else repr(a)])
    outs = Outputs()
    out = Path(args.out)
    outs.add(out / "auc.csv", auc_buf.getvalue())
    outs.add(out / "per_video_auc.csv", pv_buf.getvalue())
    outs.add(out / "roc.svg", roc_svg(curves))
    return outs


def cmd_report(args, s) -> Outputs:
    annotation, video_id = None, Path(args.scores).stem
    if args.video:
        try:
            video = load_video(args.video)
        except OSError as e:
            raise DataError(f"cannot read {args.video}: {e.strerror}") from None
        except FoladError as e:
            raise DataError(f"{args.video}: {e}") from None
        annotation, video_id = video.annotation, video.video_id
    series = _read_scores(args.scores, s["method"] or "", video_id)
    title = f"{video_id} anomaly score"
    outs = Outputs()
    outs.add(args.out, timeline_svg(series.frames, series.normalized, annotation, title))
    return outs


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "detect": cmd_detect,
            "eval": cmd_eval, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        settings = resolve(args)
        outs = COMMANDS[args.command](args, settings)
        outs.commit()
    except UsageError as e:
        print(f"folad: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"folad: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FoladError, OSError) as e:
        print(f"folad: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""``framegrind`` command line: run, bench, eval, costmodel, gen-corpus.

Exit status is 0 on success, 2 for usage or configuration errors and 3 when a
stage fails at run time. Failures print a single JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import threading
from collections import OrderedDict
from dataclasses import dataclass

from . import costmodel as cm
from .dataset import (ManifestError, ScoreRow, directory_frames, generate_corpus, load_manifest,
                      read_scores, synthetic_frames, write_scores)
from .image import ImageFormatError, write_pnm
from .metrics import MetricsError, accuracy, as_samples, auc, confusion, decide
from .pipeline import ConfigError, Pipeline, PipelineConfig
from .stages import PluginSpec, build_stage_impls
from .stages.plugin import PluginError, PluginProcess
from .stages.types import SmileScore, SourceMeta

log = logging.getLogger("framegrind")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    """Carries an exit code and a JSON-able error body."""

    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.body = OrderedDict([("error", kind), ("message", message)])
        self.body.update(extra)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "UsageError", f"{self.prog}: {message}")


def shipped_config(name: str) -> str:
    """Path of a bundled config (``smile``, ``smile_realtime``, ``scheduler``, ``bench``)."""
    return os.path.join(os.path.dirname(__file__), "data", "configs", f"{name}.json")


def _load_pipeline_config(path, clock=None) -> tuple[PipelineConfig, dict]:
    if not path:
        raise CliError(EXIT_USAGE, "ConfigError", "--config is required")
    if not os.path.exists(path) and os.sep not in path and os.path.isfile(shipped_config(path)):
        path = shipped_config(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise CliError(EXIT_USAGE, "ConfigError", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_USAGE, "ConfigError", f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise CliError(EXIT_USAGE, "ConfigError", f"{path}: top level must be an object")
    if clock is not None:
        raw = dict(raw)
        raw["clock"] = dict(raw.get("clock", {}), mode=clock)
    try:
        return PipelineConfig.from_dict(raw), raw
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, "ConfigError", str(exc)) from None


def _impls(config):
    try:
        return build_stage_impls(config)
    except (ConfigError, ValueError) as exc:
        raise CliError(EXIT_USAGE, "ConfigError", str(exc)) from None


def _check_panic(report):
    if report.error is not None:
        raise CliError(EXIT_RUNTIME, report.error["type"], report.error["message"],
                       stage=report.error["stage"])


# ---------------------------------------------------------------------------
# run


def _summary_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("stage", "done", "skipped", "errors", "fps", "skip_fraction"))
        for row in report.summary().values():
            w.writerow((row["stage"], row["done"], row["skipped"], row["errors"],
                        repr(row["fps"]), repr(row["skip_fraction"])))


def cmd_run(config_path, input_dir=None, synthetic=None, out_dir="out", seed=0, clock=None) -> int:
    """Run the configured pipeline over a frame directory or synthetic faces.

    Writes ``frames/`` (display-stage images), ``trace.json``, ``report.csv``
    and ``scores.csv`` into ``out_dir``.
    """
    config, _ = _load_pipeline_config(config_path, clock)
    impls = _impls(config)
    if (input_dir is None) == (synthetic is None):
        raise CliError(EXIT_USAGE, "UsageError", "give exactly one of --input or --synthetic")
    if synthetic is not None:
        if synthetic <= 0:
            raise CliError(EXIT_USAGE, "UsageError", "--synthetic needs a positive face count")
        source = synthetic_frames(synthetic, seed)
    else:
        if not os.path.isdir(input_dir):
            raise CliError(EXIT_USAGE, "UsageError", f"input directory not found: {input_dir}")
        source = directory_frames(input_dir)

    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    display = config.display
    smile_stages = {s.name for s in config.stages
                    if s.kind == "classify" or (s.kind == "plugin" and s.params.get("role") == "smile")}
    scores: dict[int, ScoreRow] = {}
    lock = threading.Lock()

    def on_result(stage, frame, payload):
        if stage == display and payload.tag == "overlay":
            write_pnm(os.path.join(frames_dir, f"frame_{frame.id:06d}.ppm"), payload.value)
        elif stage in smile_stages and isinstance(payload.value, SmileScore):
            meta = frame.results.get(config.source_stages[0]) if config.source_stages else None
            meta = meta.value if meta is not None and isinstance(meta.value, SourceMeta) else SourceMeta()
            with lock:
                scores[frame.id] = ScoreRow(meta.path or f"frame/{frame.id}", meta.label,
                                            payload.value.p)

    try:
        report = Pipeline(config, impls, on_result=on_result).run(source)
    except (ValueError, OSError) as exc:
        # unreadable input data (manifest, images, landmark files)
        raise CliError(EXIT_USAGE, type(exc).__name__, str(exc)) from None
    with open(os.path.join(out_dir, "trace.json"), "w") as fh:
        fh.write(report.to_json())
    _summary_csv(os.path.join(out_dir, "report.csv"), report)
    write_scores(os.path.join(out_dir, "scores.csv"), [scores[k] for k in sorted(scores)])
    _check_panic(report)
    for row in report.summary().values():
        log.info("%s: %.2f fps, %d done, %d skipped", row["stage"], row["fps"], row["done"],
                 row["skipped"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


@dataclass(frozen=True)
class BenchRow:
    name: str
    fps: float | None
    display_fps: float | None
    skip_fraction: float | None
    latency_p50_ms: float | None

    @property
    def available(self) -> bool:
        return self.fps is not None


BENCH_HEADER = ("name", "fps", "display_fps", "skip_fraction", "latency_p50_ms")


def _fmt(v, digits):
    return cm.UNAVAILABLE if v is None else f"{v:.{digits}f}"


def bench_rows_to_csv(rows) -> str:
    lines = [",".join(BENCH_HEADER)]
    for r in rows:
        lines.append(",".join((r.name, _fmt(r.fps, 2), _fmt(r.display_fps, 2),
                               _fmt(r.skip_fraction, 4), _fmt(r.latency_p50_ms, 3))))
    return "\n".join(lines) + "\n"


def bench_rows_to_json(rows) -> str:
    def cell(v):
        return cm.UNAVAILABLE if v is None else v
    return json.dumps([OrderedDict((k, cell(getattr(r, k)) if k != "name" else r.name)
                                   for k in BENCH_HEADER) for r in rows], indent=1) + "\n"


def run_bench(raw: dict, clock=None, seed: int = 0) -> list[BenchRow]:
    """One row per variant of ``raw['bench']``, sorted by target-stage fps descending.

    Each variant may override ``service_times`` (ms) or set ``unavailable``.
    The target stage defaults to the first classify stage, else the display
    stage. Simulated runs use the service-time model alone; real-clock runs
    execute the configured stages on synthetic faces.
    """
    base = PipelineConfig.from_dict(raw)
    bench = raw.get("bench", {})
    target = bench.get("stage")
    if target is None:
        target = next((s.name for s in base.stages if s.kind == "classify"), base.display)
    base.stage(target)
    variants = bench.get("variants") or [{"name": bench.get("name", "baseline")}]
    mode = clock or base.clock.mode
    rows = []
    for v in variants:
        name = str(v["name"])
        if v.get("unavailable"):
            rows.append(BenchRow(name, None, None, None, None))
            continue
        d = dict(raw)
        c = dict(raw.get("clock", {}))
        c["service_times"] = dict(c.get("service_times", {}), **v.get("service_times", {}))
        c["mode"] = mode
        d["clock"] = c
        config = PipelineConfig.from_dict(d)
        if mode == "sim":
            if config.clock.duration_s is None:
                raise ConfigError("bench needs clock.duration_s")
            report = Pipeline(config).run()
        else:
            n = int(round((config.clock.duration_s or 5.0) * config.clock.source_fps))
            report = Pipeline(config, build_stage_impls(config)).run(synthetic_frames(n, seed))
        _check_panic(report)
        tp = report.throughput()
        lat = tp.latency_p50_ns
        rows.append(BenchRow(name, tp.fps(target),
                             tp.fps(config.display) if config.display else None,
                             tp.stage(target).skip_fraction,
                             None if lat is None else lat / 1e6))
    avail = sorted((r for r in rows if r.available), key=lambda r: (-r.fps, r.name))
    return avail + [r for r in rows if not r.available]


def cmd_bench(config_path, out_dir=None, fmt="csv", clock=None, seed=0) -> int:
    _, raw = _load_pipeline_config(config_path, clock)
    try:
        rows = run_bench(raw, clock, seed)
    except (ConfigError, KeyError, ValueError) as exc:
        raise CliError(EXIT_USAGE, "ConfigError", str(exc)) from None
    text = bench_rows_to_csv(rows) if fmt == "csv" else bench_rows_to_json(rows)
    sys.stdout.write(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "bench.csv"), "w") as fh:
            fh.write(bench_rows_to_csv(rows))
        with open(os.path.join(out_dir, "bench.json"), "w") as fh:
            fh.write(bench_rows_to_json(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _plugin_scores(manifest, command, timeout_ms):
    from .image import read_pnm

    spec = PluginSpec(command=command, role="smile", timeout_ms=timeout_ms)
    proc = PluginProcess(spec)
    rows = []
    try:
        for i, row in enumerate(manifest.rows):
            img_path, _ = row.resolve(manifest.base_dir)
            if not os.path.isfile(img_path):
                continue
            payload = proc.request(i, read_pnm(img_path))
            if not isinstance(payload.value, SmileScore):
                raise PluginError(f"smile plugin answered with {payload.tag!r}")
            rows.append(ScoreRow(row.image_path, row.label, payload.value.p))
    finally:
        proc.close()
    return rows


def evaluate(manifest, score_rows, threshold: float = 0.5) -> OrderedDict:
    """ACC at ``threshold`` and AUC over manifest rows joined with scores by path.

    Score files without a path column are taken in their own order with their
    own labels. Manifest rows lacking a score are listed under ``missing`` and
    left out of both metrics.
    """
    missing = []
    if score_rows and all(r.path is None for r in score_rows):
        if any(r.label is None for r in score_rows):
            raise ManifestError("scores without paths must carry labels")
        labels = [r.label for r in score_rows]
        scores = [r.score for r in score_rows]
    else:
        by_path = {}
        for r in score_rows:
            if r.path is not None:
                by_path[os.path.normpath(r.path)] = r.score
        labels, scores = [], []
        for row in manifest.rows:
            key = os.path.normpath(row.image_path)
            alt = os.path.normpath(os.path.join(manifest.base_dir, row.image_path))
            s = by_path.get(key, by_path.get(alt))
            if s is None:
                missing.append(row.image_path)
                continue
            labels.append(row.label)
            scores.append(s)
    samples = as_samples(labels, scores)
    decisions = decide(scores, threshold)
    cc = confusion(labels, decisions)
    out = OrderedDict()
    out["n"] = len(labels)
    out["n_pos"] = sum(labels)
    out["n_neg"] = len(labels) - sum(labels)
    out["threshold"] = threshold
    out["accuracy"] = accuracy(labels, decisions)
    out["auc"] = auc(samples)
    out["confusion"] = OrderedDict([("tp", cc.tp), ("tn", cc.tn), ("fp", cc.fp), ("fn", cc.fn)])
    out["missing"] = missing
    out["manifest_problems"] = list(manifest.problems)
    return out


def cmd_eval(manifest_path, scores_path=None, plugin=None, out_dir=None, threshold=0.5,
             plugin_timeout_ms=2000.0) -> int:
    if (scores_path is None) == (plugin is None):
        raise CliError(EXIT_USAGE, "UsageError", "give exactly one of --scores or --plugin")
    try:
        manifest = load_manifest(manifest_path)
        if scores_path is not None:
            rows = read_scores(scores_path)
        else:
            rows = _plugin_scores(manifest, plugin, plugin_timeout_ms)
        metrics = evaluate(manifest, rows, threshold)
    except FileNotFoundError as exc:
        raise CliError(EXIT_USAGE, "FileNotFound", str(exc)) from None
    except (ManifestError, MetricsError, ImageFormatError) as exc:
        raise CliError(EXIT_USAGE, type(exc).__name__, str(exc)) from None
    except PluginError as exc:
        raise CliError(EXIT_RUNTIME, type(exc).__name__, str(exc)) from None
    text = json.dumps(metrics, indent=1) + "\n"
    sys.stdout.write(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
            fh.write(text)
        with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
            fh.write("metric,value\n")
            for k in ("n", "n_pos", "n_neg", "threshold", "accuracy", "auc"):
                fh.write(f"{k},{metrics[k]!r}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# costmodel


def parse_variants(text: str) -> list[tuple[float, float]]:
    """``"0.25:0.714,1:1"`` -> ``[(0.25, 0.714), (1.0, 1.0)]``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, r = item.split(":")
            out.append((float(a), float(r)))
        except ValueError:
            raise CliError(EXIT_USAGE, "UsageError", f"bad variant {item!r}, expected alpha:rho") from None
    return out


def cmd_costmodel(arch_dir=None, variants=None, fmt="csv", out_dir=None, unavailable=()) -> int:
    arch_dir = arch_dir or cm.shipped_architecture_dir()
    try:
        archs = cm.load_architecture_dir(arch_dir)
        rows = cm.table_report(archs, variants if variants is not None else cm.MOBILENET_VARIANTS,
                               unavailable)
    except cm.ArchitectureError as exc:
        extra = {"line": exc.line} if exc.line is not None else {}
        raise CliError(EXIT_USAGE, "ArchitectureError", str(exc), **extra) from None
    except (cm.InvalidAlpha, cm.InvalidRho) as exc:
        raise CliError(EXIT_USAGE, type(exc).__name__, str(exc)) from None
    except FileNotFoundError as exc:
        raise CliError(EXIT_USAGE, "FileNotFound", str(exc)) from None
    sys.stdout.write(cm.report_to_csv(rows) if fmt == "csv" else cm.report_to_json(rows))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "costmodel.csv"), "w") as fh:
            fh.write(cm.report_to_csv(rows))
        with open(os.path.join(out_dir, "costmodel.json"), "w") as fh:
            fh.write(cm.report_to_json(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen-corpus


def cmd_gen_corpus(n, seed, out_dir, size=160) -> int:
    if n <= 0:
        raise CliError(EXIT_USAGE, "UsageError", f"--n must be positive, got {n}")
    if size < 64:
        raise CliError(EXIT_USAGE, "UsageError", f"--size must be at least 64, got {size}")
    m = generate_corpus(n, seed, out_dir, size)
    log.info("wrote %d faces (%d smiling) to %s", len(m), sum(m.labels), out_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="framegrind", description="Real-time smile pipeline toolkit.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a pipeline over frames")
    p.add_argument("--config", required=True, help="config file, or a bundled name such as 'smile'")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="frame directory (manifest.csv or *.ppm/*.pgm)")
    src.add_argument("--synthetic", type=int, metavar="N", help="render N synthetic faces")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clock", choices=("real", "sim"))

    p = sub.add_parser("bench", help="throughput table for stage cost variants")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--clock", choices=("real", "sim"))
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="accuracy and AUC of smile scores")
    p.add_argument("--manifest", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scores", help="CSV with path,label,score (or label,score)")
    g.add_argument("--plugin", help="smile plugin command line")
    p.add_argument("--plugin-timeout-ms", type=float, default=2000.0)
    p.add_argument("--out")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("costmodel", help="parameter and FLO table")
    p.add_argument("--arch-dir", help="directory of architecture JSON files (default: shipped)")
    p.add_argument("--variants", help="alpha:rho list, e.g. 0.25:0.714,1:1")
    p.add_argument("--unavailable", action="append", default=[], help="mark a row name as '*'")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")

    p = sub.add_parser("gen-corpus", help="write a synthetic face corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=160)
    p.add_argument("--out", required=True)
    return ap


def _configure_logging():
    level = os.environ.get("FRAMEGRIND_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise CliError(EXIT_USAGE, "UsageError",
                       f"FRAMEGRIND_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        if args.command == "run":
            return cmd_run(args.config, args.input, args.synthetic, args.out, args.seed, args.clock)
        if args.command == "bench":
            return cmd_bench(args.config, args.out, args.format, args.clock, args.seed)
        if args.command == "eval":
            return cmd_eval(args.manifest, args.scores, args.plugin, args.out, args.threshold,
                            args.plugin_timeout_ms)
        if args.command == "costmodel":
            variants = parse_variants(args.variants) if args.variants else None
            return cmd_costmodel(args.arch_dir, variants, args.format, args.out, tuple(args.unavailable))
        return cmd_gen_corpus(args.n, args.seed, args.out, args.size)
    except CliError as exc:
        sys.stderr.write(json.dumps(exc.body) + "\n")
        return exc.code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

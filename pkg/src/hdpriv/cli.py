"""``hdpriv`` command line: run sweeps, verify the mechanism, emit plot data."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from hdpriv import __version__, verify
from hdpriv.config import ConfigError, load_config, resolve_seed
from hdpriv.experiments import GROUP_ORDER, REPORT_COLUMNS, run_sweep

log = logging.getLogger("hdpriv")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
PLOT_COLUMNS = ("x", "series", "mean_recall", "variance")
FIGURES = ("fig1", "fig2", "fig3")


def fmt(value) -> str:
    """Fixed CSV cell rendering: floats at 9 significant digits, blanks for None."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "0" if v == 0 else format(v, ".9g")
    return str(value)


def render_csv(columns: Sequence[str], rows: Sequence[dict]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue().encode("utf-8")


def render_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n").encode("utf-8")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _timestamp(seconds: float) -> str:
    return dt.datetime.fromtimestamp(seconds, dt.timezone.utc).isoformat(timespec="seconds")


def _publish(out_dir: Path, files: dict[str, bytes]) -> None:
    """Write every file into a staging directory, then move them in together."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".hdpriv-", dir=out_dir))
    try:
        for name, data in files.items():
            (staging / name).write_bytes(data)
        for name in files:
            os.replace(staging / name, out_dir / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


# --------------------------------------------------------------------------
# run


def cmd_run(config_path: str, out_dir: str, seed: int | None = None, jobs: int = 1) -> int:
    try:
        config, file_seed, config_hash = load_config(config_path)
        seed = resolve_seed(seed, os.environ.get("HDP_SEED"), file_seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    config = dataclasses.replace(config, seed=seed)
    started = time.time()
    try:
        report = run_sweep(config, jobs=jobs, progress=_progress)
        files = {
            "results.csv": render_csv(REPORT_COLUMNS, report.rows),
            "results.json": render_json(report.to_json()),
        }
        finished = time.time()
        manifest = {
            "tool": "hdpriv",
            "version": __version__,
            "config_path": str(config_path),
            "config_sha256": config_hash,
            "seed": seed,
            "jobs": jobs,
            "started": _timestamp(started),
            "finished": _timestamp(finished),
            "outputs": [{"file": n, "sha256": _sha256(d), "bytes": len(d)} for n, d in files.items()],
        }
        files["manifest.json"] = render_json(manifest)
        _publish(Path(out_dir), files)
    except Exception as exc:  # noqa: BLE001 - any failure past validation maps to exit 3
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {', '.join(files)} to {out_dir} ({finished - started:.1f}s)", file=sys.stderr)
    return EXIT_OK


def _progress(done: int, total: int) -> None:
    if done == total or done % max(1, total // 20) == 0:
        log.info("sweep progress %d/%d", done, total)


# --------------------------------------------------------------------------
# verify


def cmd_verify(level: str, seed: int = 0) -> int:
    results = verify.run_suite(level, seed)
    failed = False
    for res in results:
        print(res.line())
        if not res.passed:
            failed = True
            print("  counterexample: " + json.dumps(res.counterexample, sort_keys=True, default=float))
    return EXIT_VIOLATION if failed else EXIT_OK


# --------------------------------------------------------------------------
# emit-plotdata


class PlotDataError(ValueError):
    pass


def read_results(path: str | Path) -> list[dict]:
    """Load report rows from results.csv or results.json (or a run directory)."""
    path = Path(path)
    if path.is_dir():
        path = path / "results.csv"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PlotDataError(f"cannot read {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            rows = json.loads(text)["rows"]
        except (ValueError, KeyError, TypeError) as exc:
            raise PlotDataError(f"{path} is not a results file: {exc}") from None
        return rows
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or set(REPORT_COLUMNS) - set(reader.fieldnames):
        raise PlotDataError(f"{path} lacks the results columns")
    rows = []
    for raw in reader:
        row: dict = {}
        for key, value in raw.items():
            if value == "":
                row[key] = None
            elif key in ("arm", "group"):
                row[key] = value
            elif key in ("slices", "count"):
                row[key] = int(value)
            else:
                row[key] = float(value)
        rows.append(row)
    return rows


def _cells_mean(rows: list[dict]) -> tuple[float, float]:
    """Unweighted mean of cell means and of cell variances."""
    return (
        float(np.mean([r["mean_recall"] for r in rows])),
        float(np.mean([r["variance"] for r in rows])),
    )


def _hdp(rows, group="all"):
    return [r for r in rows if r["arm"] == "hdp" and r["group"] == group]


def plot_fig1(rows: list[dict]) -> dict[str, list[dict]]:
    hdp = [r for r in _hdp(rows) if r.get("u_lo") is not None]
    if not hdp:
        raise PlotDataError("no slice-sweep rows in results")
    xs = sorted({r["u_lo"] for r in hdp})
    out = []
    for x in xs:
        mean, var = _cells_mean([r for r in hdp if r["u_lo"] == x])
        out.append({"x": x, "series": "hdp", "mean_recall": mean, "variance": var})
    for arm in ("baseline", "random"):
        ref = [r for r in rows if r["arm"] == arm and r["group"] == "all"]
        if ref:
            for x in xs:
                out.append({"x": x, "series": arm, "mean_recall": ref[0]["mean_recall"],
                            "variance": ref[0]["variance"]})
    return {"fig1.csv": out}


def plot_fig2(rows: list[dict]) -> dict[str, list[dict]]:
    hdp = [r for r in _hdp(rows) if r.get("slices") is not None]
    if not hdp:
        raise PlotDataError("no slice-sweep rows in results")
    cells = defaultdict(list)
    for r in hdp:
        cells[(r["u_lo"], r["slices"])].append(r)
    out = []
    for (u_lo, n), cell in sorted(cells.items()):
        mean, var = _cells_mean(cell)
        out.append({"x": n, "series": f"u_lo={fmt(u_lo)}", "mean_recall": mean, "variance": var})
    return {"fig2.csv": out}


def plot_fig3(rows: list[dict]) -> dict[str, list[dict]]:
    group_rows = [r for r in rows if r["arm"] == "hdp" and r.get("fundamentalists") is not None
                  and r["group"] != "all"]
    if not group_rows:
        raise PlotDataError("no group-sweep rows in results")
    panels = defaultdict(lambda: defaultdict(list))
    for r in group_rows:
        panels[r["pragmatists"]][(r["fundamentalists"], r["group"])].append(r)
    order = {g.value: i for i, g in enumerate(GROUP_ORDER)}
    files = {}
    for prag, cells in sorted(panels.items()):
        out = []
        for (f, group), cell in sorted(cells.items(), key=lambda kv: (kv[0][0], order[kv[0][1]])):
            mean, var = _cells_mean(cell)
            out.append({"x": f, "series": group, "mean_recall": mean, "variance": var})
        files[f"fig3_pragmatists_{fmt(prag)}.csv"] = out
    return files


_PLOTTERS = {"fig1": plot_fig1, "fig2": plot_fig2, "fig3": plot_fig3}


def cmd_emit_plotdata(results_path: str, figure: str, out_dir: str | None = None) -> int:
    if figure not in _PLOTTERS:
        print(f"unknown figure {figure!r}; expected one of {', '.join(FIGURES)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = read_results(results_path)
        if not rows:
            raise PlotDataError("results file has no rows")
        panels = _PLOTTERS[figure](rows)
    except PlotDataError as exc:
        print(f"plot data error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    target = Path(out_dir) if out_dir else Path(results_path).resolve().parent
    if Path(results_path).is_dir() and not out_dir:
        target = Path(results_path)
    _publish(target, {name: render_csv(PLOT_COLUMNS, data) for name, data in panels.items()})
    for name in panels:
        print(target / name)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdpriv", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None,
                     help="overrides HDP_SEED and the config's seed")
    run.add_argument("--jobs", type=int, default=1)

    ver = sub.add_parser("verify", help="run the brute-force property suites")
    ver.add_argument("--level", choices=("fast", "full"), default="fast")
    ver.add_argument("--seed", type=int, default=0)

    emit = sub.add_parser("emit-plotdata", help="write figure-ready CSV series")
    emit.add_argument("--results", required=True, help="results.csv, results.json or a run directory")
    emit.add_argument("--figure", required=True, help="fig1 | fig2 | fig3")
    emit.add_argument("--out", default=None, help="output directory (default: next to results)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed, args.jobs)
    if args.command == "verify":
        return cmd_verify(args.level, args.seed)
    return cmd_emit_plotdata(args.results, args.figure, args.out)


if __name__ == "__main__":
    sys.exit(main())

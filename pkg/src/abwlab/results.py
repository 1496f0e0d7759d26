"""Persistence, aggregation and reporting of sweep results.

Floats are written with ``repr`` so that re-reading ``raw.csv`` and
re-aggregating reproduces ``summary.csv`` byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from collections import OrderedDict
from pathlib import Path

from .harness import SessionRow, SweepResult

RAW_COLUMNS = [f.name for f in dataclasses.fields(SessionRow)]
SUMMARY_COLUMNS = [
    "tool", "cross_rate_bps", "expected_abw_bps", "sessions", "ok_sessions",
    "mean_estimate_bps", "std_estimate_bps", "mean_relative_error",
    "frac_error_lt_0.1", "frac_error_lt_0.2", "mean_intrusiveness", "mean_probe_rate_bps",
    "mean_response_time_s", "aborted_loss", "no_convergence", "errors",
]
_INT_FIELDS = {"session", "bytes_sent"}
_STR_FIELDS = {"tool", "status"}
NAN = float("nan")


class ResultsError(OSError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else NAN


def _std(values):
    values = list(values)
    if len(values) < 2:
        return 0.0 if values else NAN
    m = _mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


def _finite(values):
    return [v for v in values if v is not None and not math.isnan(v)]


def aggregate(rows) -> list:
    """One summary dict per (tool, cross rate), in first-seen order."""
    cells: "OrderedDict[tuple, list]" = OrderedDict()
    for row in rows:
        cells.setdefault((row.tool, row.cross_rate_bps), []).append(row)
    out = []
    for (tool, rate), members in cells.items():
        ok = [r for r in members if r.status == "ok"]
        errs = _finite(r.relative_error for r in ok)
        out.append({
            "tool": tool,
            "cross_rate_bps": rate,
            "expected_abw_bps": members[0].expected_abw_bps,
            "sessions": len(members),
            "ok_sessions": len(ok),
            "mean_estimate_bps": _mean(_finite(r.value_bps for r in ok)),
            "std_estimate_bps": _std(_finite(r.value_bps for r in ok)),
            "mean_relative_error": _mean(errs),
            "frac_error_lt_0.1": _mean(1.0 if e < 0.1 else 0.0 for e in errs),
            "frac_error_lt_0.2": _mean(1.0 if e < 0.2 else 0.0 for e in errs),
            "mean_intrusiveness": _mean(_finite(r.intrusiveness for r in members)),
            "mean_probe_rate_bps": _mean(_finite(r.probe_rate_bps for r in members)),
            "mean_response_time_s": _mean(r.duration_s for r in members),
            "aborted_loss": sum(r.status == "aborted_loss" for r in members),
            "no_convergence": sum(r.status == "no_convergence" for r in members),
            "errors": sum(r.status == "error" for r in members),
        })
    return out


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def write_raw(rows, path) -> None:
    _write_csv(Path(path), RAW_COLUMNS, [dataclasses.asdict(r) for r in rows])


def write_summary(summary, path) -> None:
    _write_csv(Path(path), SUMMARY_COLUMNS, summary)


def read_raw(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RAW_COLUMNS:
            raise ResultsError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            values = {}
            for name in RAW_COLUMNS:
                text = rec[name]
                if name in _STR_FIELDS:
                    values[name] = text
                elif text == "":
                    values[name] = None
                elif name in _INT_FIELDS:
                    values[name] = int(text)
                else:
                    values[name] = float(text)
            rows.append(SessionRow(**values))
    return rows


def _plot_tables(summary):
    tools = list(OrderedDict.fromkeys(s["tool"] for s in summary))
    by_rate: "OrderedDict[float, dict]" = OrderedDict()
    for s in summary:
        by_rate.setdefault(s["cross_rate_bps"], {})[s["tool"]] = s
    figures = {
        "accuracy": ("mean_estimate_bps", 1e-6, "measured available bandwidth (Mbps)"),
        "relative_error": ("mean_relative_error", 1.0, "relative error"),
        "response_time": ("mean_response_time_s", 1.0, "response time (s)"),
        "load": ("mean_probe_rate_bps", 1e-3, "probe traffic (kbps)"),
    }
    tables = {}
    for name, (key, scale, _) in figures.items():
        lines = ["# expected_abw_mbps " + " ".join(tools)]
        for rate, cells in sorted(by_rate.items(), key=lambda kv: -kv[0]):
            expected = next(iter(cells.values()))["expected_abw_bps"] * 1e-6
            vals = []
            for tool in tools:
                v = cells.get(tool, {}).get(key, NAN)
                vals.append("NaN" if v is None or math.isnan(v) else f"{v * scale:.6g}")
            lines.append(f"{expected:.6g} " + " ".join(vals))
        tables[name] = "\n".join(lines) + "\n"
    script = ["set terminal pngcairo size 800,600", "set key left top",
              "set xlabel 'expected available bandwidth (Mbps)'"]
    for name, (_, _, ylabel) in figures.items():
        script.append(f"set output '{name}.png'")
        script.append(f"set ylabel '{ylabel}'")
        plots = [f"'{name}.dat' using 1:{i + 2} with linespoints title '{tool}'" for i, tool in enumerate(tools)]
        if name == "accuracy":
            plots.append("x with lines dashtype 2 title 'expected'")
        script.append("plot " + ", \\\n     ".join(plots) if plots else "# no data")
    return tables, "\n".join(script) + "\n"


def write_results(result: SweepResult, directory) -> dict:
    """Write raw.csv, summary.csv, config.json and plots/; return the written paths."""
    d = Path(directory)
    try:
        os.makedirs(d / "plots", exist_ok=True)
        paths = {"raw": d / "raw.csv", "summary": d / "summary.csv", "config": d / "config.json"}
        write_raw(result.rows, paths["raw"])
        summary = aggregate(read_raw(paths["raw"]))
        write_summary(summary, paths["summary"])
        with open(paths["config"], "w") as fh:
            json.dump(result.config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        tables, script = _plot_tables(summary)
        for name, text in tables.items():
            p = d / "plots" / f"{name}.dat"
            p.write_text(text)
            paths[f"plot_{name}"] = p
        (d / "plots" / "figures.gp").write_text(script)
    except OSError as err:
        raise ResultsError(f"cannot write results to {err.filename or d}: {err.strerror or err}") from err
    return paths


def tool_overview(rows) -> "OrderedDict[str, dict]":
    """Per-tool totals over the whole sweep."""
    per_tool: "OrderedDict[str, list]" = OrderedDict()
    for r in rows:
        per_tool.setdefault(r.tool, []).append(r)
    out = OrderedDict()
    for tool, members in per_tool.items():
        errs = _finite(r.relative_error for r in members if r.status == "ok")
        out[tool] = {
            "sessions": len(members),
            "mean_relative_error": _mean(errs),
            "frac_error_lt_0.1": _mean(1.0 if e < 0.1 else 0.0 for e in errs),
            "frac_error_lt_0.2": _mean(1.0 if e < 0.2 else 0.0 for e in errs),
            "mean_intrusiveness": _mean(_finite(r.intrusiveness for r in members)),
            "mean_response_time_s": _mean(r.duration_s for r in members),
            "aborted_loss": sum(r.status == "aborted_loss" for r in members),
            "no_convergence": sum(r.status == "no_convergence" for r in members),
        }
    return out


def summarize(rows) -> str:
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to summarize")
    header = (f"{'tool':<10} {'sessions':>8} {'mean err':>9} {'err<0.1':>8} {'err<0.2':>8} "
              f"{'load':>9} {'resp (s)':>9} {'aborted':>8} {'no conv':>8}")
    lines = [header, "-" * len(header)]
    for tool, o in tool_overview(rows).items():
        lines.append(
            f"{tool:<10} {o['sessions']:>8d} {o['mean_relative_error']:>9.3f} {o['frac_error_lt_0.1']:>8.3f} "
            f"{o['frac_error_lt_0.2']:>8.3f} {o['mean_intrusiveness']:>9.5f} {o['mean_response_time_s']:>9.2f} "
            f"{o['aborted_loss']:>8d} {o['no_convergence']:>8d}")
    return "\n".join(lines) + "\n"

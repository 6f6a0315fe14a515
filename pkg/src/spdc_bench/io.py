"""Flat-file formats: histogram CSV, metadata JSON, sweep and analysis CSV,
whitespace-separated plot data."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

HISTOGRAM_HEADER = ("bin_center_m", "total", "coinc_A", "coinc_B", "no_coinc")


class HistogramFormatError(ValueError):
    pass


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_histogram_csv(path, result) -> None:
    columns = (result.bin_centers, result.histogram_total, result.histogram_coinc_A,
               result.histogram_coinc_B, result.histogram_no_coinc)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTOGRAM_HEADER)
        for row in zip(*columns):
            writer.writerow([_fmt(row[0])] + [str(int(v)) for v in row[1:]])


def read_histogram_csv(path) -> dict[str, np.ndarray]:
    """Read a simulator histogram; errors name the file and line."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise HistogramFormatError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HISTOGRAM_HEADER:
            raise HistogramFormatError(
                f"{path}:1: expected header {','.join(HISTOGRAM_HEADER)}, got {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HISTOGRAM_HEADER):
                raise HistogramFormatError(
                    f"{path}:{lineno}: expected {len(HISTOGRAM_HEADER)} fields, got {len(row)}")
            try:
                rows.append([float(row[0])] + [int(v) for v in row[1:]])
            except ValueError as exc:
                raise HistogramFormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise HistogramFormatError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    out = {"bin_center_m": data[:, 0]}
    for i, name in enumerate(HISTOGRAM_HEADER[1:], start=1):
        out[name] = data[:, i].astype(np.int64)
    return out


def write_metadata(path, config, result, extra=None) -> None:
    meta = {
        "config": config.to_dict(),
        "resolved_layout": config.experiment().layout.to_dict(),
        "seed": result.seed,
        "counters": result.counters,
        "both_access_share": result.both_access_share if result.n_both_access + result.n_single_access else None,
        "double_slit_count_share": (result.double_slit_count_share
                                    if result.n_both_access + result.n_single_access else None),
        "digest": result.digest,
        "layout_digest": config.layout_digest,
    }
    if extra:
        meta.update(extra)
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_metadata(path) -> dict:
    return json.loads(Path(path).read_text())


def write_table_csv(path_or_file, columns, records) -> None:
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec[c]) if not isinstance(rec[c], str) else rec[c]
                             for c in columns])
    finally:
        if own:
            fh.close()


def write_plot_data(path, positions, model, counts=None) -> None:
    """Two columns (position, model); a third with the raw counts when given."""
    cols = [positions, model] if counts is None else [positions, model, counts]
    np.savetxt(path, np.column_stack(cols), fmt="%.10e",
               header="position_m model" + (" counts" if counts is not None else ""))

"""Metrics output: CSV and JSON writers (field-for-field equivalent) and a
dependency-free SVG line chart of per-client accuracy over rounds.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .errors import DataError

CSV_HEADER = ["round", "client_id", "model_id", "accuracy",
              "bytes_down", "bytes_up", "registry_size"]

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"]


def write_csv(records: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow([rec[k] for k in CSV_HEADER])


def write_json(records: list[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump(records, fh, indent=2)
        fh.write("\n")


def read_metrics_csv(path) -> list[dict]:
    """Parse a metrics.csv back into records; validates the header."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such metrics file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"metrics file {path} is empty") from None
        if header != CSV_HEADER:
            raise DataError(f"metrics file {path} has unexpected header {header}")
        records = []
        for row in reader:
            if len(row) != len(CSV_HEADER):
                raise DataError(f"metrics file {path}: malformed row {row}")
            records.append({
                "round": int(row[0]),
                "client_id": int(row[1]),
                "model_id": int(row[2]),
                "accuracy": float(row[3]),
                "bytes_down": int(row[4]),
                "bytes_up": int(row[5]),
                "registry_size": int(row[6]),
            })
    return records


def final_round_accuracies(records: list[dict]) -> dict[int, float]:
    """client_id -> accuracy at the highest round present."""
    if not records:
        raise DataError("metrics are empty")
    last = max(rec["round"] for rec in records)
    return {rec["client_id"]: rec["accuracy"] for rec in records if rec["round"] == last}


def compare_finals(records_a: list[dict], records_b: list[dict]) -> list[dict]:
    """Per-client final accuracies of two runs and their difference (b - a)."""
    finals_a = final_round_accuracies(records_a)
    finals_b = final_round_accuracies(records_b)
    if set(finals_a) != set(finals_b):
        raise DataError(
            f"client sets differ: {sorted(finals_a)} vs {sorted(finals_b)}"
        )
    return [
        {
            "client_id": client_id,
            "final_a": finals_a[client_id],
            "final_b": finals_b[client_id],
            "difference": finals_b[client_id] - finals_a[client_id],
        }
        for client_id in sorted(finals_a)
    ]


def write_accuracy_svg(records: list[dict], path, width: int = 640, height: int = 420) -> None:
    """One accuracy-vs-round polyline per client; output is deterministic."""
    margin_l, margin_r, margin_t, margin_b = 50, 130, 20, 40
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    by_client: dict[int, list[tuple[int, float]]] = {}
    for rec in records:
        by_client.setdefault(rec["client_id"], []).append((rec["round"], rec["accuracy"]))
    rounds = sorted({rec["round"] for rec in records}) or [1]
    rmin, rmax = rounds[0], rounds[-1]
    span = max(rmax - rmin, 1)

    def x(round_no: int) -> float:
        return margin_l + (round_no - rmin) / span * plot_w

    def y(acc: float) -> float:
        return margin_t + (1.0 - acc) * plot_h

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333" stroke-width="1"/>',
    ]
    for tick in range(0, 6):
        acc = tick / 5.0
        ty = y(acc)
        lines.append(f'<line x1="{margin_l}" y1="{ty:.1f}" x2="{margin_l + plot_w}" '
                     f'y2="{ty:.1f}" stroke="#ddd" stroke-width="1"/>')
        lines.append(f'<text x="{margin_l - 8}" y="{ty + 4:.1f}" font-size="11" '
                     f'text-anchor="end" font-family="sans-serif">{acc:.1f}</text>')
    for round_no in rounds:
        tx = x(round_no)
        lines.append(f'<text x="{tx:.1f}" y="{height - margin_b + 16}" font-size="11" '
                     f'text-anchor="middle" font-family="sans-serif">{round_no}</text>')
    lines.append(f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 6}" font-size="12" '
                 'text-anchor="middle" font-family="sans-serif">round</text>')
    for i, client_id in enumerate(sorted(by_client)):
        color = _PALETTE[i % len(_PALETTE)]
        points = " ".join(
            f"{x(r):.1f},{y(a):.1f}" for r, a in sorted(by_client[client_id])
        )
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                     f'points="{points}"/>')
        ly = margin_t + 14 + 18 * i
        lx = margin_l + plot_w + 12
        lines.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        lines.append(f'<text x="{lx + 26}" y="{ly}" font-size="11" '
                     f'font-family="sans-serif">client {client_id}</text>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")

"""Report emission: structured JSON, flat CSV, trace dumps, and figures.

The CSV uses one row per node for energy and a single summary row for the
QoS metrics (column `row` distinguishes them). Figures are rendered next to
the delimited output whenever an output directory is given.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .core import US_PER_S
from .mac import LISTEN, RX, SLEEP, TX
from .scenario import emit_scenario

ENERGY_COLUMNS = [
    "tx_s", "rx_s", "listen_s", "sleep_s",
    "tx_j", "rx_j", "listen_j", "sleep_j", "total_j",
]
SUMMARY_COLUMNS = [
    "run_s", "sent", "delivered", "dropped", "in_flight", "pdr",
    "throughput_bps", "mean_delay_s", "p95_delay_s", "error_rate",
    "discovery_count", "discovery_rate", "discovery_completeness",
    "rreq_floods", "energy_j", "energy_per_delivered_bit",
]


def report_dict(result) -> dict:
    return {
        "metrics": result.report.to_dict(),
        "energy": {
            "per_node": result.energy.node_rows(),
            "network_total_j": result.report.energy_j,
        },
        "scenario": {
            "seed": result.cfg.seed,
            "mode": result.cfg.mode,
            "mac": result.cfg.mac,
            "nodes": result.cfg.n_nodes,
            "run_s": result.cfg.run_us / US_PER_S,
        },
    }


def report_json_text(result) -> str:
    return json.dumps(report_dict(result), indent=2, sort_keys=True) + "\n"


def report_csv_text(result) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "node"] + ENERGY_COLUMNS + SUMMARY_COLUMNS)
    for node_row in result.energy.node_rows():
        writer.writerow(
            ["energy", node_row["node"]]
            + [node_row[c] for c in ENERGY_COLUMNS]
            + ["" for _ in SUMMARY_COLUMNS]
        )
    metrics = result.report.to_dict()
    writer.writerow(
        ["summary", ""]
        + ["" for _ in ENERGY_COLUMNS]
        + [("" if metrics[c] is None else metrics[c]) for c in SUMMARY_COLUMNS]
    )
    return buf.getvalue()


def render_figures(result, out_dir: Path) -> list[Path]:
    """Energy breakdown per node, and the delay distribution when there was
    traffic. Written as PNGs alongside the reports."""
    paths = []
    rows = result.energy.node_rows()
    nodes = [r["node"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(nodes) * 0.45), 4))
    bottom = [0.0] * len(rows)
    for state, color in ((TX, "#d62728"), (RX, "#ff7f0e"),
                         (LISTEN, "#1f77b4"), (SLEEP, "#2ca02c")):
        values = [r[f"{state.lower()}_j"] for r in rows]
        ax.bar(nodes, values, bottom=bottom, label=state, color=color)
        bottom = [b + v for b, v in zip(bottom, values)]
    ax.set_xlabel("node")
    ax.set_ylabel("energy (J)")
    ax.set_title(f"Per-node radio energy ({result.cfg.mode}, mac={result.cfg.mac})")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "energy_per_node.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    delays = sorted(
        (p.finished_at - p.created_at) / US_PER_S
        for p in result.recorder.packets.values()
        if p.state == "delivered"
    )
    if delays:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(delays, bins=min(40, max(5, len(delays) // 3)), color="#1f77b4")
        ax.set_xlabel("end-to-end delay (s)")
        ax.set_ylabel("packets")
        ax.set_title("Delivered packet delay")
        fig.tight_layout()
        path = out_dir / "delay_hist.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def write_report(
    result, fmt: str, out_dir: Path, *, trace: bool = False, figures: bool = True,
    stem: str = "report",
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if fmt in ("json", "both"):
        p = out_dir / f"{stem}.json"
        p.write_text(report_json_text(result))
        paths.append(p)
    if fmt in ("csv", "both"):
        p = out_dir / f"{stem}.csv"
        p.write_text(report_csv_text(result))
        paths.append(p)
    p = out_dir / f"{stem}.scenario"
    p.write_text(emit_scenario(result.cfg))
    paths.append(p)
    if trace:
        p = out_dir / f"{stem}.trace"
        p.write_text("\n".join(result.trace) + ("\n" if result.trace else ""))
        paths.append(p)
    if figures:
        paths.extend(render_figures(result, out_dir))
    return paths


# -- mode comparison -----------------------------------------------------------

_TABLE_FIELDS = [
    ("pdr", "pdr"),
    ("throughput_bps", "thrpt_bps"),
    ("mean_delay_s", "delay_s"),
    ("error_rate", "err"),
    ("discovery_rate", "disc/s"),
    ("discovery_completeness", "compl"),
    ("rreq_floods", "floods"),
    ("energy_j", "energy_J"),
]


def comparison_table(rows) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    header = ["mode"] + [short for _, short in _TABLE_FIELDS]
    body = []
    for label, report in rows:
        d = report.to_dict()
        body.append([label] + [fmt(d[f]) for f, _ in _TABLE_FIELDS])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def write_comparison(rows, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out_dir / "comparison.json"
    p.write_text(json.dumps(
        {label: report.to_dict() for label, report in rows},
        indent=2, sort_keys=True,
    ) + "\n")
    paths.append(p)
    p = out_dir / "comparison.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mode"] + [f for f, _ in _TABLE_FIELDS])
    for label, report in rows:
        d = report.to_dict()
        writer.writerow([label] + [("" if d[f] is None else d[f]) for f, _ in _TABLE_FIELDS])
    p.write_text(buf.getvalue())
    paths.append(p)

    labels = [label for label, _ in rows]
    energies = [report.energy_j for _, report in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.2), 4))
    ax.bar(labels, energies, color="#1f77b4")
    ax.set_ylabel("network energy (J)")
    ax.set_title("Total energy by mode")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    p = out_dir / "compare_energy.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, axes = plt.subplots(1, 2, figsize=(max(9, len(labels) * 1.8), 4))
    disc = [report.discovery_rate for _, report in rows]
    axes[0].bar(labels, disc, color="#ff7f0e")
    axes[0].set_ylabel("first discoveries / s")
    axes[0].set_title("Discovery rate")
    delays = [report.mean_delay_s or 0.0 for _, report in rows]
    axes[1].bar(labels, delays, color="#2ca02c")
    axes[1].set_ylabel("mean delay (s)")
    axes[1].set_title("End-to-end delay")
    for ax in axes:
        plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    p = out_dir / "compare_metrics.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths

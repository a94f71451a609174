"""Task-graph DOT export and per-worker execution timelines.

The DOT output is deterministic (nodes ordered by task id) so identical
insertion sequences produce byte-identical files.  Timelines are written
as CSV (one record per executed task) plus an optional self-contained
SVG Gantt rendering; disabled-and-skipped tasks are omitted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .task import Activation, TaskKind, TaskNode

KIND_COLORS = {
    TaskKind.NORMAL: "#4c72b0",
    TaskKind.UNCERTAIN: "#2a9d8f",
    TaskKind.COPY: "#b0b0b0",
    TaskKind.SPECULATIVE: "#e76f51",
    TaskKind.SELECT: "#9b5de5",
}

TIMELINE_HEADER = ["task_id", "worker", "start_ns", "end_ns", "kind", "group", "label"]


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def generate_dot(tasks: Sequence[TaskNode], labels: bool = True) -> str:
    """Render the (frozen) task graph as a DOT digraph."""
    lines = ["digraph tasks {"]
    for task in sorted(tasks, key=lambda t: t.id):
        attrs = [
            ("label", task.label if labels else f"t{task.id}"),
            ("kind", task.kind.value),
            ("activation", task.activation.value),
            ("group", "" if task.group is None else str(task.group.id)),
            ("fillcolor", KIND_COLORS[task.kind]),
            ("style", "filled,dashed" if task.activation is Activation.DISABLED else "filled"),
        ]
        rendered = " ".join(f"{key}={_quote(value)}" for key, value in attrs)
        lines.append(f"  t{task.id} [{rendered}];")
    edges = sorted(
        (pred.id, task.id) for task in tasks for pred in task.preds
    )
    for src, dst in edges:
        lines.append(f"  t{src} -> t{dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TraceRecord:
    task_id: int
    worker: int
    start_ns: int
    end_ns: int
    kind: str
    group: str
    label: str


def records_from_runtime(runtime) -> list[TraceRecord]:
    records = []
    for task, worker, start, end in runtime._trace:
        records.append(
            TraceRecord(
                task_id=task.id,
                worker=worker,
                start_ns=start,
                end_ns=end,
                kind=task.kind.value,
                group="" if task.group is None else str(task.group.id),
                label=task.label,
            )
        )
    records.sort(key=lambda r: (r.start_ns, r.task_id))
    return records


def write_timeline_csv(records: Iterable[TraceRecord], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMELINE_HEADER)
        for record in records:
            writer.writerow(
                [
                    record.task_id,
                    record.worker,
                    record.start_ns,
                    record.end_ns,
                    record.kind,
                    record.group,
                    record.label,
                ]
            )


def read_timeline_csv(path: str) -> list[TraceRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TIMELINE_HEADER:
            raise ValueError(f"unexpected timeline header: {header}")
        return [
            TraceRecord(int(r[0]), int(r[1]), int(r[2]), int(r[3]), r[4], r[5], r[6])
            for r in reader
        ]


def render_timeline_svg(
    records: Sequence[TraceRecord],
    path: str,
    title: str = "execution trace",
    width: int = 1000,
) -> None:
    """Write a self-contained SVG Gantt chart, one row per worker."""
    kind_colors = {kind.value: color for kind, color in KIND_COLORS.items()}
    row_height, margin_left, margin_top = 28, 90, 48
    if records:
        t0 = min(r.start_ns for r in records)
        t1 = max(r.end_ns for r in records)
        span = max(t1 - t0, 1)
        workers = sorted({r.worker for r in records})
    else:
        t0, span, workers = 0, 1, []
    height = margin_top + row_height * max(len(workers), 1) + 40
    scale = (width - margin_left - 20) / span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<text x="{margin_left}" y="18" font-size="14">{title}</text>',
        f'<text x="{margin_left}" y="34" fill="#555">span: {span / 1e6:.3f} ms, '
        f"tasks: {len(records)}</text>",
    ]
    for row, worker in enumerate(workers):
        y = margin_top + row * row_height
        parts.append(
            f'<text x="8" y="{y + row_height * 0.65:.1f}">worker {worker}</text>'
        )
        parts.append(
            f'<line x1="{margin_left}" y1="{y + row_height - 4}" x2="{width - 10}" '
            f'y2="{y + row_height - 4}" stroke="#ddd"/>'
        )
    for record in records:
        row = workers.index(record.worker)
        x = margin_left + (record.start_ns - t0) * scale
        w = max((record.end_ns - record.start_ns) * scale, 0.75)
        y = margin_top + row * row_height + 3
        color = kind_colors.get(record.kind, "#333333")
        parts.append(
            f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{row_height - 10}" '
            f'fill="{color}"><title>{record.label} [{record.kind}] '
            f"{(record.end_ns - record.start_ns) / 1e6:.3f} ms</title></rect>"
        )
    legend_x = margin_left
    for kind, color in kind_colors.items():
        parts.append(
            f'<rect x="{legend_x}" y="{height - 22}" width="10" height="10" fill="{color}"/>'
        )
        parts.append(f'<text x="{legend_x + 14}" y="{height - 13}">{kind}</text>')
        legend_x += 14 + 8 * len(kind) + 20
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")

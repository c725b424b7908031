"""Run counters, the three report formulas, and report emission.

delivery_rate = Delivered / Created
overhead_ratio = (Relayed - Delivered) / Delivered
latency_avg = mean over first deliveries of (t_delivered - t_created)

Delivered counts first deliveries only; Relayed counts every completed
node-to-node transfer including the final delivery hop; aborted transfers
are tracked separately and excluded.  Formatted values use 4 decimals,
raw full-precision values are emitted alongside them in CSV.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

__all__ = [
    "DeliveryRecord",
    "MetricsAccumulator",
    "delivery_rate",
    "overhead_ratio",
    "latency_avg",
    "format_metric",
    "report_csv_rows",
    "render_report_text",
    "write_atomic",
]

NA = "n/a"


@dataclass(frozen=True)
class DeliveryRecord:
    message_id: str
    created_at_s: float
    delivered_at_s: float


@dataclass
class MetricsAccumulator:
    created: int = 0
    delivered: int = 0
    relayed: int = 0
    aborted: int = 0
    delivery_records: list[DeliveryRecord] = field(default_factory=list)

    def record_created(self) -> None:
        self.created += 1

    def record_relay(self) -> None:
        self.relayed += 1

    def record_abort(self) -> None:
        self.aborted += 1

    def record_delivery(self, message_id: str, created_at_s: float, delivered_at_s: float) -> None:
        assert delivered_at_s >= created_at_s
        self.delivered += 1
        self.delivery_records.append(DeliveryRecord(message_id, created_at_s, delivered_at_s))

    def check(self) -> None:
        assert self.delivered == len(self.delivery_records)
        assert self.delivered <= self.created
        assert self.relayed >= self.delivered


def delivery_rate(acc: MetricsAccumulator) -> float | None:
    """Delivered / Created; None (reported as n/a) when nothing was created."""
    if acc.created == 0:
        return None
    return acc.delivered / acc.created


def overhead_ratio(acc: MetricsAccumulator) -> float | None:
    """(Relayed - Delivered) / Delivered; None when nothing was delivered."""
    if acc.delivered == 0:
        return None
    return (acc.relayed - acc.delivered) / acc.delivered


def latency_avg(acc: MetricsAccumulator) -> float | None:
    """Mean first-delivery latency in seconds; None when nothing delivered."""
    n = len(acc.delivery_records)
    if n == 0:
        return None
    return sum(r.delivered_at_s - r.created_at_s for r in acc.delivery_records) / n


def format_metric(value: float | None) -> str:
    return NA if value is None else f"{value:.4f}"


REPORT_COLUMNS = [
    "protocol", "seed", "created", "delivered", "relayed", "aborted",
    "delivery_rate", "overhead_ratio", "latency_avg_s",
    "delivery_rate_raw", "overhead_ratio_raw", "latency_avg_s_raw",
]


def report_csv_rows(protocol: str, seed: int, acc: MetricsAccumulator) -> list[str]:
    dr, ov, la = delivery_rate(acc), overhead_ratio(acc), latency_avg(acc)
    row = [
        protocol, str(seed), str(acc.created), str(acc.delivered),
        str(acc.relayed), str(acc.aborted),
        format_metric(dr), format_metric(ov), format_metric(la),
        NA if dr is None else repr(dr),
        NA if ov is None else repr(ov),
        NA if la is None else repr(la),
    ]
    return [",".join(REPORT_COLUMNS), ",".join(row)]


def render_report_text(rows: list[dict]) -> str:
    """Aligned comparison table: one column per run/protocol row dict with
    keys protocol, delivery_rate, overhead_ratio, latency_avg_s."""
    headers = [""] + [r["protocol"] for r in rows]
    lines = [
        ["Delivery rate"] + [str(r["delivery_rate"]) for r in rows],
        ["Overhead rate"] + [str(r["overhead_ratio"]) for r in rows],
        ["Average delay"] + [str(r["latency_avg_s"]) for r in rows],
    ]
    widths = [max(len(row[c]) for row in [headers] + lines) for c in range(len(headers))]
    out = []
    for row in [headers] + lines:
        out.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
    return "\n".join(out) + "\n"


def write_atomic(path: str, content: str) -> None:
    """Write via temp file + rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-report-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise

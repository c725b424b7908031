"""Independent recomputation of run metrics from a routing trace.

The routing trace is the wire format `time,event,message_id,from,to,hops`
with events CREATE, SEND, RECV, DROP, ACK, DELIVER.  Created counts
CREATE rows, Relayed counts RECV rows (every completed transfer),
Delivered counts DELIVER rows (first deliveries only), and latency pairs
each DELIVER with its message's CREATE time.  This module deliberately
shares no code with the engine's in-line accounting so it can serve as an
oracle for it.
"""

from __future__ import annotations

from dataclasses import dataclass

from dtnsim.metrics import format_metric

EVENTS = ("CREATE", "SEND", "RECV", "DROP", "ACK", "DELIVER")


class TraceError(ValueError):
    pass


@dataclass
class ReplayMetrics:
    created: int
    delivered: int
    relayed: int
    delivery_rate: float | None
    overhead_ratio: float | None
    latency_avg_s: float | None

    def formatted(self) -> dict[str, str]:
        return {
            "created": str(self.created),
            "delivered": str(self.delivered),
            "relayed": str(self.relayed),
            "delivery_rate": format_metric(self.delivery_rate),
            "overhead_ratio": format_metric(self.overhead_ratio),
            "latency_avg_s": format_metric(self.latency_avg_s),
        }


def replay_rows(rows: list[str]) -> ReplayMetrics:
    created_at: dict[str, float] = {}
    delivered_at: dict[str, float] = {}
    relayed = 0
    for lineno, row in enumerate(rows, start=1):
        row = row.strip()
        if not row or row.startswith("time,"):
            continue
        parts = row.split(",")
        if len(parts) != 6:
            raise TraceError(f"line {lineno}: expected 6 columns, got {len(parts)}")
        t_text, event, msg_id, _frm, _to, _hops = parts
        try:
            t = float(t_text)
        except ValueError:
            raise TraceError(f"line {lineno}: bad timestamp {t_text!r}") from None
        if event == "CREATE":
            if msg_id in created_at:
                raise TraceError(f"line {lineno}: duplicate CREATE for {msg_id}")
            created_at[msg_id] = t
        elif event == "RECV":
            relayed += 1
        elif event == "DELIVER":
            if msg_id in delivered_at:
                raise TraceError(f"line {lineno}: second DELIVER for {msg_id}")
            if msg_id not in created_at:
                raise TraceError(f"line {lineno}: DELIVER for unknown {msg_id}")
            delivered_at[msg_id] = t
        elif event not in EVENTS:
            raise TraceError(f"line {lineno}: unknown event {event!r}")
    created = len(created_at)
    delivered = len(delivered_at)
    latencies = [delivered_at[m] - created_at[m] for m in delivered_at]
    return ReplayMetrics(
        created=created,
        delivered=delivered,
        relayed=relayed,
        delivery_rate=(delivered / created) if created else None,
        overhead_ratio=((relayed - delivered) / delivered) if delivered else None,
        latency_avg_s=(sum(latencies) / len(latencies)) if latencies else None,
    )


def replay_file(path: str) -> ReplayMetrics:
    with open(path) as handle:
        return replay_rows(handle.read().splitlines())

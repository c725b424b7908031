"""Contact detection and byte-accurate transfer scheduling.

Contacts: two nodes are in contact iff their Euclidean distance is within
the larger of the two radio ranges (rule "max"; "min" gives strict
symmetric radios).  Detection is a pure function of positions; an O(n^2)
pairwise sweep is used for small populations and a uniform-grid index
above GRID_THRESHOLD nodes.  Both produce identical contact sets.

Transfers: one active transfer per interface; pending send intents queue
FIFO per contact.  Each step every interface has a time budget of dt;
completing a transfer frees the remaining budget for the next queued one,
so throughput over a contact never exceeds bandwidth * duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dtnsim import _kernels

GRID_THRESHOLD = 128

_EPS_TIME = 1e-12
_EPS_BYTES = 1e-6


@dataclass(frozen=True)
class Contact:
    a: int  # a < b
    b: int
    up_since_s: float


class ContactTracker:
    """Incremental contact detection over packed upper-triangle pairs."""

    def __init__(self, n: int, radio_range, rule: str = "max",
                 grid_threshold: int = GRID_THRESHOLD):
        if rule not in ("max", "min"):
            raise ValueError(f"unknown contact rule {rule!r}")
        self.n = n
        self.rule_min = rule == "min"
        self.grid_threshold = grid_threshold
        self.radio_range = np.asarray(radio_range, dtype=np.float64)
        self.cell_size = float(self.radio_range.max()) if n else 1.0
        n_pairs = n * (n - 1) // 2
        self.adj = np.zeros(n_pairs, dtype=np.uint8)
        iu, ju = np.triu_indices(n, k=1)
        self.pair_i = iu.astype(np.int32)
        self.pair_j = ju.astype(np.int32)
        # k = pack(i, j) for i < j, row-major over the upper triangle
        self._row_base = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            self._row_base[i] = self._row_base[i - 1] + (n - i)
        self._ups_buf = np.empty(max(n_pairs, 1), dtype=np.int32)
        self._downs_buf = np.empty(max(n_pairs, 1), dtype=np.int32)
        self.live: dict[tuple[int, int], Contact] = {}

    def pack(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return int(self._row_base[i]) + (j - i - 1)

    def unpack(self, k: int) -> tuple[int, int]:
        return int(self.pair_i[k]), int(self.pair_j[k])

    def step(self, px, py, now: float) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        """Detect contact changes; returns (ups, downs) as sorted (i, j)
        pairs and updates the live contact registry."""
        if self.n < 2:
            return [], []
        if self.n > self.grid_threshold:
            n_up, n_down = self._step_grid(px, py)
        else:
            n_up, n_down = _kernels.contact_delta(
                px, py, self.radio_range, self.adj, self.rule_min,
                self._ups_buf, self._downs_buf,
            )
        ups = []
        for k in self._ups_buf[:n_up].tolist():
            pair = self.unpack(k)
            self.live[pair] = Contact(pair[0], pair[1], now)
            ups.append(pair)
        downs = []
        for k in self._downs_buf[:n_down].tolist():
            pair = self.unpack(k)
            del self.live[pair]
            downs.append(pair)
        return ups, downs

    def _step_grid(self, px, py) -> tuple[int, int]:
        """Uniform-grid candidate generation + exact pair re-check.

        New contacts can only appear between nodes in neighbouring cells
        (cell size = max range); current contacts are always re-checked,
        so the result matches the pairwise sweep exactly."""
        cell = self.cell_size
        cx = np.floor(px / cell).astype(np.int64)
        cy = np.floor(py / cell).astype(np.int64)
        buckets: dict[tuple[int, int], list[int]] = {}
        cx_l = cx.tolist()
        cy_l = cy.tolist()
        for i in range(self.n):
            buckets.setdefault((cx_l[i], cy_l[i]), []).append(i)
        candidates = set()
        for i in range(self.n):
            for gx in (cx_l[i] - 1, cx_l[i], cx_l[i] + 1):
                for gy in (cy_l[i] - 1, cy_l[i], cy_l[i] + 1):
                    for j in buckets.get((gx, gy), ()):
                        if j > i:
                            candidates.add(self.pack(i, j))
        for pair in self.live:
            candidates.add(self.pack(*pair))
        ks = np.fromiter(sorted(candidates), dtype=np.int32, count=len(candidates))
        return _kernels.check_pairs(
            px, py, self.radio_range, self.adj, self.rule_min,
            ks, self.pair_i, self.pair_j, self._ups_buf, self._downs_buf,
        )

    def contacts(self) -> list[tuple[int, int]]:
        return sorted(self.live)

    def is_up(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.live


@dataclass
class SendIntent:
    sender: int
    receiver: int
    message_id: str
    seq: int  # global enqueue order


@dataclass
class TransferJob:
    seq: int
    message_id: str
    sender: int
    receiver: int
    size_bytes: float
    bytes_remaining: float
    link_bandwidth: float
    started_at_s: float


@dataclass
class TransferManager:
    """Owns pending intent queues and active jobs; single-writer per step."""

    bandwidth: np.ndarray  # per-node interface bandwidth, bytes/s
    queues: dict[tuple[int, int], list[SendIntent]] = field(default_factory=dict)
    active_by_node: dict[int, TransferJob] = field(default_factory=dict)
    active: list[TransferJob] = field(default_factory=list)
    in_flight: set[tuple[int, str]] = field(default_factory=set)  # (receiver, msg)
    # Completed sends whose sender-side bookkeeping (copy split, ack
    # deletion) has not run yet; the same (sender, msg) must not start
    # another transfer until it has.
    pending_commit: set[tuple[int, str]] = field(default_factory=set)
    _seq: int = 0

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def enqueue(self, intent: SendIntent) -> None:
        pair = (min(intent.sender, intent.receiver), max(intent.sender, intent.receiver))
        self.queues.setdefault(pair, []).append(intent)

    def abort_contact(self, pair: tuple[int, int]) -> list[TransferJob]:
        """Contact went down: drop its queue and abort its active job (the
        receiver discards the partial copy; no partial custody)."""
        self.queues.pop(pair, None)
        aborted = []
        job = self.active_by_node.get(pair[0])
        if job is not None and {job.sender, job.receiver} == {pair[0], pair[1]}:
            aborted.append(job)
            self._release(job, clear_flight=True)
        return aborted

    def _release(self, job: TransferJob, clear_flight: bool) -> None:
        # Completed jobs stay in in_flight until the engine has processed
        # the receive; clearing early could start a duplicate this step.
        self.active.remove(job)
        del self.active_by_node[job.sender]
        del self.active_by_node[job.receiver]
        if clear_flight:
            self.in_flight.discard((job.receiver, job.message_id))

    def advance(self, dt: float, validate_start, job_started=None) -> list[TransferJob]:
        """Advance active jobs by up to dt of per-interface time budget and
        start queued intents while interfaces and budget allow.

        validate_start(intent) -> size_bytes or None decides, at start
        time, whether an intent is still worth sending.  Returns completed
        jobs in completion order."""
        budget: dict[int, float] = {}
        completed: list[TransferJob] = []

        def node_budget(node: int) -> float:
            return budget.get(node, dt)

        def run_job(job: TransferJob) -> None:
            give = min(job.bytes_remaining / job.link_bandwidth,
                       node_budget(job.sender), node_budget(job.receiver))
            if give <= 0.0:
                return
            job.bytes_remaining -= job.link_bandwidth * give
            budget[job.sender] = node_budget(job.sender) - give
            budget[job.receiver] = node_budget(job.receiver) - give
            if job.bytes_remaining <= _EPS_BYTES:
                completed.append(job)
                self.pending_commit.add((job.sender, job.message_id))
                self._release(job, clear_flight=False)

        for job in list(self.active):
            run_job(job)

        progressed = True
        while progressed:
            progressed = False
            for pair in sorted(self.queues):
                queue = self.queues[pair]
                while queue:
                    head = queue[0]
                    if head.sender in self.active_by_node or head.receiver in self.active_by_node:
                        break
                    if node_budget(head.sender) <= _EPS_TIME or node_budget(head.receiver) <= _EPS_TIME:
                        break
                    if (head.sender, head.message_id) in self.pending_commit:
                        break  # retry next step, after the commit
                    intent = queue.pop(0)
                    if (intent.receiver, intent.message_id) in self.in_flight:
                        continue
                    size = validate_start(intent)
                    if size is None:
                        continue
                    bw = min(float(self.bandwidth[intent.sender]),
                             float(self.bandwidth[intent.receiver]))
                    job = TransferJob(
                        seq=self.next_seq(), message_id=intent.message_id,
                        sender=intent.sender, receiver=intent.receiver,
                        size_bytes=float(size), bytes_remaining=float(size),
                        link_bandwidth=bw, started_at_s=math.nan,
                    )
                    self.active.append(job)
                    self.active_by_node[intent.sender] = job
                    self.active_by_node[intent.receiver] = job
                    self.in_flight.add((intent.receiver, intent.message_id))
                    if job_started is not None:
                        job_started(job)
                    run_job(job)
                    progressed = True
                    break
            if not self.queues:
                break
            # prune empty queues so the sorted() above stays cheap
            for pair in [p for p, q in self.queues.items() if not q]:
                del self.queues[pair]
        return completed

    def sending_ids(self, node: int) -> set[str]:
        job = self.active_by_node.get(node)
        if job is not None and job.sender == node:
            return {job.message_id}
        return set()

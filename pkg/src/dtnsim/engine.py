"""Deterministic fixed-step simulation loop.

Every step runs in a fixed order: advance clock, move nodes, contact
delta, contact-down aborts, contact-up exchanges, message generation,
transfer advancement, completed-transfer callbacks.  Node iteration is
ascending node id everywhere and all randomness comes from named
sub-streams of the master seed, so a (config, seed) pair reproduces its
reports and traces byte for byte.  A single run is strictly
single-threaded; callers may run many independent simulations in
parallel since runs share nothing mutable.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dtnsim import _kernels, mobility, roadmap
from dtnsim.metrics import MetricsAccumulator
from dtnsim.radio import ContactTracker, SendIntent, TransferManager, GRID_THRESHOLD
from dtnsim.routing import (
    Buffer,
    MaxPropRouter,
    Message,
    accept_message,
    make_router,
    place_new_message,
)
from dtnsim.scenario import ScenarioConfig

_EPS = 1e-9

ROUTE_CAP_INITIAL = 64


def steps_for(duration_s: float, dt_s: float) -> int:
    """ceil(duration/dt) with protection against float-quotient noise."""
    ratio = duration_s / dt_s
    nearest = round(ratio)
    if abs(ratio - nearest) < 1e-6:
        return int(nearest)
    return int(math.ceil(ratio))


def stream_rng(master_seed: int, name: str) -> random.Random:
    """Named RNG sub-stream; adding a consumer never perturbs the others."""
    return random.Random(f"{master_seed}:{name}")


class Node:
    """One simulated entity: identity, radio profile, buffer, router."""

    __slots__ = ("id", "group_index", "group", "role", "relays", "buffer",
                 "router", "delivered_ids", "current_vertex")

    def __init__(self, node_id: int, group_index: int, group, router):
        self.id = node_id
        self.group_index = group_index
        self.group = group
        self.role = group.role
        self.relays = group.role != "destination"
        self.buffer = Buffer(group.buffer_capacity_bytes)
        self.router = router
        self.delivered_ids: set[str] = set()
        self.current_vertex = -1


@dataclass
class RunOptions:
    repair_mode: str = "drop"
    trace_movement: str | None = None
    trace_contacts: str | None = None
    trace_routing: str | None = None
    movement_sample_interval_s: float = 60.0
    dump_graph: str | None = None
    debug_invariants: bool = False
    grid_threshold: int = GRID_THRESHOLD
    scripted_contacts: list[tuple[float, str, int, int]] | None = None
    scripted_messages: list[tuple[float, int, int, int]] | None = None


@dataclass
class RunResult:
    protocol: str
    seed: int
    metrics: MetricsAccumulator
    repair_report: roadmap.RepairReport | None
    kernel_mode: str
    wall_time_s: float
    steps: int
    holders: dict[str, list[int]] = field(default_factory=dict)
    delivered: dict[str, int] = field(default_factory=dict)  # msg id -> destination
    movement_rows: list[str] = field(default_factory=list)
    contact_rows: list[str] = field(default_factory=list)
    routing_rows: list[str] = field(default_factory=list)
    # Spray-and-Wait copy ledger (debug runs): id -> (in_buffers, absorbed, leaked)
    copy_ledger: dict[str, tuple[int, int, int]] = field(default_factory=dict)


class World:
    """All mutable state of one simulation run."""

    def __init__(self, config: ScenarioConfig, base_dir: str | Path = ".",
                 options: RunOptions | None = None):
        self.config = config
        self.options = options or RunOptions()
        self.base_dir = Path(base_dir)
        self.now = 0.0
        self.dt = config.time_step_s
        self.protocol = config.router.protocol
        self.debug = self.options.debug_invariants

        self.graph: roadmap.RoadGraph | None = None
        self.repair_report: roadmap.RepairReport | None = None
        self.planners: dict[int, roadmap.RoutePlanner] = {}  # group index -> planner
        self._load_maps()

        n = config.node_count
        self.n = n
        self.nodes: list[Node] = []
        ranges = np.zeros(n)
        bandwidth = np.zeros(n)
        self.kind = np.zeros(n, dtype=np.int8)
        self.px = np.zeros(n)
        self.py = np.zeros(n)
        self.wait_until = np.zeros(n)
        self.speed = np.zeros(n)
        self.route_cap = ROUTE_CAP_INITIAL
        self.route_x = np.zeros((n, self.route_cap))
        self.route_y = np.zeros((n, self.route_cap))
        self.route_next = np.zeros(n, dtype=np.int32)
        self.route_len = np.zeros(n, dtype=np.int32)
        self.route_dest = np.full(n, -1, dtype=np.int32)
        self._plan_buf = np.empty(n, dtype=np.int32)
        self._arrive_buf = np.empty(n, dtype=np.int32)

        self.rng_init = stream_rng(config.rng_seed, "mobility-init")
        self.rng_route = stream_rng(config.rng_seed, "mobility-route")
        self.rng_gen = stream_rng(config.rng_seed, "generator")
        self.rng_protocol = stream_rng(config.rng_seed, "protocol")

        node_id = 0
        for gi, group in enumerate(config.groups):
            for k in range(group.count):
                router = make_router(self.protocol, node_id, n, config.router)
                node = Node(node_id, gi, group, router)
                self.nodes.append(node)
                ranges[node_id] = group.interface.range_m
                bandwidth[node_id] = group.interface.bandwidth_bytes_per_s
                if group.movement == "stationary":
                    self.kind[node_id] = 0
                    self.px[node_id], self.py[node_id] = group.points[k]
                else:
                    self.kind[node_id] = 1
                    overlay = self.planners[gi].overlay
                    vertex = mobility.init_vertex(overlay, self.rng_init)
                    node.current_vertex = vertex
                    self.px[node_id], self.py[node_id] = overlay.position(vertex)
                node_id += 1

        self.source_pool = [nd.id for nd in self.nodes if nd.role == "source"]
        self.dest_pool = [nd.id for nd in self.nodes if nd.role == "destination"]

        self.scripted = self.options.scripted_contacts is not None
        self.scripted_msgs = self.options.scripted_messages is not None
        self.tracker = ContactTracker(n, ranges, config.contact_rule,
                                      grid_threshold=self.options.grid_threshold)
        self.live: dict[tuple[int, int], float] = {}
        self._script_queue = sorted(self.options.scripted_contacts or [],
                                    key=lambda e: (e[0], e[2], e[3]))
        self._script_pos = 0
        self._msg_queue = sorted(self.options.scripted_messages or [])
        self._msg_pos = 0

        self.tm = TransferManager(bandwidth=bandwidth)
        self.metrics = MetricsAccumulator()
        self.msg_seq = 0
        self.messages: dict[str, Message] = {}  # originals, for t_is lookup
        self.next_fire = config.message_interval_s
        self.ttl = config.router.ttl_s
        self._next_ttl_sweep = 0.0

        self.movement_rows: list[str] = []
        self.contact_rows: list[str] = []
        self.routing_rows: list[str] = []
        self._trace_routing = self.options.trace_routing is not None
        self._trace_contacts = self.options.trace_contacts is not None
        self._trace_movement = self.options.trace_movement is not None
        self._next_sample = 0.0

        # Spray-and-Wait copy-conservation ledger (debug runs only).
        self._copies_in_buffers: dict[str, int] = {}
        self._copies_absorbed: dict[str, int] = {}
        self._copies_leaked: dict[str, int] = {}

    # -- setup ------------------------------------------------------------

    def _load_maps(self) -> None:
        config = self.config
        needs_map = any(g.movement == "shortest-path-map-based" for g in config.groups)
        if not needs_map:
            return
        if not config.map_file:
            raise roadmap.MapError("scenario uses map-based movement but sets no map.file")
        text = (self.base_dir / config.map_file).read_text()
        polylines = roadmap.parse_wkt(text)
        roadmap.check_bounds(polylines, config.world_width_m, config.world_height_m,
                             name=config.map_file)
        graph = roadmap.build_graph(polylines, config.map_snap_tolerance_m)
        self.graph, self.repair_report = roadmap.repair_connectivity(
            graph, self.options.repair_mode)
        for gi, group in enumerate(config.groups):
            if group.movement != "shortest-path-map-based":
                continue
            overlay_text = (self.base_dir / group.overlay_file).read_text()
            overlay_lines = roadmap.parse_wkt(overlay_text)
            roadmap.check_bounds(overlay_lines, config.world_width_m, config.world_height_m,
                                 name=group.overlay_file)
            overlay = roadmap.snap_overlay(self.graph, overlay_lines,
                                           config.map_snap_tolerance_m,
                                           name=group.overlay_file)
            self.planners[gi] = roadmap.RoutePlanner(overlay)

    # -- trace helpers ------------------------------------------------------

    def _troute(self, event: str, msg_id: str, frm: int, to: int, hops: int) -> None:
        if self._trace_routing:
            self.routing_rows.append(f"{self.now:.4f},{event},{msg_id},{frm},{to},{hops}")

    def _tcontact(self, event: str, a: int, b: int) -> None:
        if self._trace_contacts:
            self.contact_rows.append(f"{self.now:.4f},{event},{a},{b}")

    def _sample_movement(self) -> None:
        for node in self.nodes:
            self.movement_rows.append(
                f"{self.now:.4f},{node.id},{self.px[node.id]!r},{self.py[node.id]!r}")

    # -- movement -----------------------------------------------------------

    def _grow_route_cap(self, needed: int) -> None:
        new_cap = self.route_cap
        while new_cap < needed:
            new_cap *= 2
        rx = np.zeros((self.n, new_cap))
        ry = np.zeros((self.n, new_cap))
        rx[:, :self.route_cap] = self.route_x
        ry[:, :self.route_cap] = self.route_y
        self.route_x, self.route_y, self.route_cap = rx, ry, new_cap

    def _plan_route(self, i: int) -> None:
        node = self.nodes[i]
        planner = self.planners[node.group_index]
        overlay = planner.overlay
        dest = overlay.vertices[self.rng_route.randrange(overlay.vertex_count)]
        path = planner.route(node.current_vertex, dest)
        waypoints = path[1:] if len(path) > 1 else path
        if len(waypoints) > self.route_cap:
            self._grow_route_cap(len(waypoints))
        for w, vid in enumerate(waypoints):
            x, y = overlay.position(vid)
            self.route_x[i, w] = x
            self.route_y[i, w] = y
        self.route_next[i] = 0
        self.route_len[i] = len(waypoints)
        self.route_dest[i] = dest
        group = node.group
        self.speed[i] = self.rng_route.uniform(group.speed_min_mps, group.speed_max_mps)

    def _move_nodes(self) -> None:
        n_plan, n_arr = _kernels.move_step(
            self.px, self.py, self.kind, self.wait_until, self.speed,
            self.route_x, self.route_y, self.route_next, self.route_len,
            self.now, self.dt, self._plan_buf, self._arrive_buf)
        # Process planning and arrival in ascending node-id order so the
        # RNG consumption order is identical in both kernel modes.
        plans = self._plan_buf[:n_plan].tolist()
        arrivals = self._arrive_buf[:n_arr].tolist()
        pi = ai = 0
        while pi < len(plans) or ai < len(arrivals):
            if ai >= len(arrivals) or (pi < len(plans) and plans[pi] < arrivals[ai]):
                self._plan_route(plans[pi])
                pi += 1
            else:
                i = arrivals[ai]
                node = self.nodes[i]
                node.current_vertex = int(self.route_dest[i])
                group = node.group
                wait = self.rng_route.uniform(group.wait_min_s, group.wait_max_s)
                self.wait_until[i] = self.now + wait
                self.route_len[i] = 0
                self.route_next[i] = 0
                ai += 1

    # -- contacts -----------------------------------------------------------

    def _contact_delta(self) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        if self.scripted:
            ups: list[tuple[int, int]] = []
            downs: list[tuple[int, int]] = []
            q = self._script_queue
            while self._script_pos < len(q) and q[self._script_pos][0] <= self.now + _EPS:
                _, event, a, b = q[self._script_pos]
                self._script_pos += 1
                pair = (min(a, b), max(a, b))
                if event == "UP" and pair not in self.live:
                    self.live[pair] = self.now
                    ups.append(pair)
                elif event == "DOWN" and pair in self.live:
                    del self.live[pair]
                    downs.append(pair)
            return ups, downs
        ups, downs = self.tracker.step(self.px, self.py, self.now)
        for pair in ups:
            self.live[pair] = self.now
        for pair in downs:
            del self.live[pair]
        return ups, downs

    def _live_peers(self, node_id: int) -> list[int]:
        peers = []
        for a, b in self.live:
            if a == node_id:
                peers.append(b)
            elif b == node_id:
                peers.append(a)
        return sorted(peers)

    # -- routing exchanges ----------------------------------------------------

    def _expired(self, msg: Message) -> bool:
        return self.ttl is not None and self.now - msg.created_at_s > self.ttl

    def _sweep_expired(self, node: Node) -> None:
        if self.ttl is None:
            return
        protected = self.tm.sending_ids(node.id)
        for stored in node.buffer.by_receive_order():
            if stored.msg.id in protected:
                continue
            if self._expired(stored.msg):
                node.buffer.remove(stored.msg.id)
                self._note_copies_gone(stored.msg)
                self._troute("DROP", stored.msg.id, node.id, -1, stored.msg.hop_count)

    def _contact_up_pair(self, a: int, b: int) -> None:
        na, nb = self.nodes[a], self.nodes[b]
        if self.ttl is not None:
            self._sweep_expired(na)
            self._sweep_expired(nb)
        if self.protocol == "maxprop":
            ra, rb = na.router, nb.router
            ra.on_meet(b)
            rb.on_meet(a)
            if self.debug:
                assert abs(ra.own.sum() - 1.0) <= 1e-9
                assert abs(rb.own.sum() - 1.0) <= 1e-9
            ra.on_receive_vector(b, rb.own)
            rb.on_receive_vector(a, ra.own)
            merged = ra.acks | rb.acks
            for node, peer in ((na, b), (nb, a)):
                protected = self.tm.sending_ids(node.id)
                for stored in node.buffer.by_receive_order():
                    mid = stored.msg.id
                    if mid in merged and mid not in protected:
                        node.buffer.remove(mid)
                        self._troute("ACK", mid, node.id, peer, stored.msg.hop_count)
            ra.acks = set(merged)
            rb.acks = set(merged)
            if self.debug:
                for node in (na, nb):
                    held = set(node.buffer.store) - self.tm.sending_ids(node.id)
                    assert not (held & merged), "acked message still buffered"
        for sender, receiver in ((na, nb), (nb, na)):
            for msg in sender.router.offer_list(sender, receiver):
                if self._expired(msg):
                    continue
                self.tm.enqueue(SendIntent(sender.id, receiver.id, msg.id,
                                           self.tm.next_seq()))

    # -- message generation -----------------------------------------------------

    def _create_message(self, source_id: int, dest_id: int, size: int) -> None:
        self.msg_seq += 1
        msg_id = f"M{self.msg_seq}"
        copies = (self.config.router.snw_initial_copies
                  if self.protocol == "spray-and-wait" else 1)
        msg = Message(id=msg_id, seq=self.msg_seq, source=source_id,
                      destination=dest_id, size_bytes=size,
                      created_at_s=self.now, hop_count=0, copies_remaining=copies)
        self.messages[msg_id] = msg
        self.metrics.record_created()
        self._troute("CREATE", msg_id, source_id, dest_id, 0)
        source = self.nodes[source_id]
        protected = self.tm.sending_ids(source_id)
        placed, evicted = place_new_message(source, msg.clone(), self.now, protected)
        for victim in evicted:
            self._note_copies_gone(victim.msg)
            self._troute("DROP", victim.msg.id, source_id, -1, victim.msg.hop_count)
        if not placed:
            # Created counts it anyway; the copy just never enters custody.
            self._troute("DROP", msg_id, source_id, -1, 0)
            return
        if self.debug:
            self._copies_in_buffers[msg_id] = copies
            self._copies_absorbed[msg_id] = 0
            self._copies_leaked[msg_id] = 0
        stored = source.buffer.get(msg_id)
        for peer_id in self._live_peers(source_id):
            peer = self.nodes[peer_id]
            if source.router.wants(source, peer, stored.msg):
                self.tm.enqueue(SendIntent(source_id, peer_id, msg_id,
                                           self.tm.next_seq()))

    def _fire_generator(self) -> None:
        config = self.config
        while self.now + _EPS >= self.next_fire:
            if config.message_per_source:
                for source_id in self.source_pool:
                    dest_id = self.dest_pool[self.rng_gen.randrange(len(self.dest_pool))]
                    size = self.rng_gen.randint(config.message_size_min_bytes,
                                                config.message_size_max_bytes)
                    self._create_message(source_id, dest_id, size)
            else:
                source_id = self.source_pool[self.rng_gen.randrange(len(self.source_pool))]
                dest_id = self.dest_pool[self.rng_gen.randrange(len(self.dest_pool))]
                size = self.rng_gen.randint(config.message_size_min_bytes,
                                            config.message_size_max_bytes)
                self._create_message(source_id, dest_id, size)
            self.next_fire += config.message_interval_s

    def _fire_scripted_messages(self) -> None:
        q = self._msg_queue
        while self._msg_pos < len(q) and q[self._msg_pos][0] <= self.now + _EPS:
            _, src, dst, size = q[self._msg_pos]
            self._msg_pos += 1
            self._create_message(src, dst, size)

    # -- transfers ----------------------------------------------------------

    def _validate_start(self, intent: SendIntent) -> int | None:
        sender = self.nodes[intent.sender]
        stored = sender.buffer.get(intent.message_id)
        if stored is None:
            return None
        if self._expired(stored.msg):
            return None
        receiver = self.nodes[intent.receiver]
        if not sender.router.wants(sender, receiver, stored.msg):
            return None
        return stored.msg.size_bytes

    def _job_started(self, job) -> None:
        job.started_at_s = self.now
        sender = self.nodes[job.sender]
        stored = sender.buffer.get(job.message_id)
        hops = stored.msg.hop_count if stored else 0
        self._troute("SEND", job.message_id, job.sender, job.receiver, hops)

    def _note_copies_gone(self, msg: Message) -> None:
        if self.debug and msg.id in self._copies_in_buffers:
            self._copies_in_buffers[msg.id] -= msg.copies_remaining
            self._copies_leaked[msg.id] += msg.copies_remaining

    def _process_completion(self, job) -> None:
        sender = self.nodes[job.sender]
        receiver = self.nodes[job.receiver]
        self.tm.pending_commit.discard((job.sender, job.message_id))
        stored = sender.buffer.get(job.message_id)
        if stored is None:
            # Sender lost the copy mid-flight (should not happen: sends are
            # eviction-protected); treat as an abort.
            self.metrics.record_abort()
            self.tm.in_flight.discard((job.receiver, job.message_id))
            return
        msg = stored.msg
        copies_for_receiver = 1
        if self.protocol == "spray-and-wait":
            copies_for_receiver = sender.router.after_send(sender, stored, receiver)
        elif self.protocol == "maxprop" and msg.destination == receiver.id:
            sender.router.acks.add(msg.id)
            sender.buffer.remove(msg.id)
        incoming = msg.clone()
        incoming.hop_count += 1
        incoming.copies_remaining = copies_for_receiver
        self.metrics.record_relay()
        self._troute("RECV", msg.id, sender.id, receiver.id, incoming.hop_count)

        protected = self.tm.sending_ids(receiver.id)
        outcome = accept_message(receiver, incoming, self.now, protected)
        for victim in outcome.evicted:
            self._note_copies_gone(victim.msg)
            self._troute("DROP", victim.msg.id, receiver.id, -1, victim.msg.hop_count)

        if self.debug and self.protocol == "spray-and-wait":
            ledger = self._copies_in_buffers
            if msg.id in ledger:
                ledger[msg.id] -= copies_for_receiver
                if outcome.delivered:
                    self._copies_absorbed[msg.id] += copies_for_receiver
                elif outcome.stored:
                    ledger[msg.id] += copies_for_receiver
                else:
                    self._copies_leaked[msg.id] += copies_for_receiver
            self._check_copy_ledger(msg.id)

        if outcome.delivered:
            original = self.messages[msg.id]
            self.metrics.record_delivery(msg.id, original.created_at_s, self.now)
            self._troute("DELIVER", msg.id, sender.id, receiver.id, incoming.hop_count)
        elif outcome.rejected:
            self._troute("DROP", msg.id, receiver.id, -1, incoming.hop_count)
        elif outcome.stored:
            for peer_id in self._live_peers(receiver.id):
                if peer_id == sender.id:
                    continue
                peer = self.nodes[peer_id]
                if receiver.router.wants(receiver, peer, incoming):
                    self.tm.enqueue(SendIntent(receiver.id, peer_id, msg.id,
                                               self.tm.next_seq()))
        self.tm.in_flight.discard((receiver.id, job.message_id))

    def _check_copy_ledger(self, msg_id: str) -> None:
        initial = self.config.router.snw_initial_copies
        have = self._copies_in_buffers.get(msg_id)
        if have is None:
            return
        total = have + self._copies_absorbed[msg_id] + self._copies_leaked[msg_id]
        assert total == initial, (
            f"{msg_id}: copy budget {total} != initial {initial}")
        assert have + self._copies_absorbed[msg_id] <= initial

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        t0 = time.perf_counter()
        config = self.config
        n_steps = steps_for(config.duration_s, self.dt)
        sample_interval = self.options.movement_sample_interval_s
        if self._trace_movement:
            self._sample_movement()
            self._next_sample = sample_interval
        for step_index in range(1, n_steps + 1):
            self.now = step_index * self.dt
            if self.planners:
                self._move_nodes()
            ups, downs = self._contact_delta()
            for pair in downs:
                self._tcontact("DOWN", *pair)
                for job in self.tm.abort_contact(pair):
                    self.metrics.record_abort()
            for pair in ups:
                self._tcontact("UP", *pair)
                self._contact_up_pair(*pair)
            if self.scripted_msgs:
                self._fire_scripted_messages()
            else:
                self._fire_generator()
            completed = self.tm.advance(self.dt, self._validate_start, self._job_started)
            for job in completed:
                self._process_completion(job)
            if self._trace_movement and self.now + _EPS >= self._next_sample:
                self._sample_movement()
                self._next_sample += sample_interval
        self.metrics.check()
        holders: dict[str, list[int]] = {mid: [] for mid in self.messages}
        delivered: dict[str, int] = {}
        for node in self.nodes:
            for mid in node.buffer.store:
                holders[mid].append(node.id)
            for mid in node.delivered_ids:
                delivered[mid] = node.id
        ledger = {
            mid: (self._copies_in_buffers[mid], self._copies_absorbed[mid],
                  self._copies_leaked[mid])
            for mid in self._copies_in_buffers
        }
        return RunResult(
            protocol=self.protocol,
            seed=config.rng_seed,
            metrics=self.metrics,
            repair_report=self.repair_report,
            kernel_mode=_kernels.KERNEL_MODE,
            wall_time_s=time.perf_counter() - t0,
            steps=n_steps,
            holders=holders,
            delivered=delivered,
            movement_rows=self.movement_rows,
            contact_rows=self.contact_rows,
            routing_rows=self.routing_rows,
            copy_ledger=ledger,
        )


def run(config: ScenarioConfig, base_dir: str | Path = ".",
        options: RunOptions | None = None) -> RunResult:
    """Build a world from the config and execute the full run."""
    world = World(config, base_dir, options)
    return world.run()

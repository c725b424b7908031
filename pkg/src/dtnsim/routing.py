"""Store-carry-forward routing: Epidemic, Spray-and-Wait, MaxProp.

Routers decide what a node offers on contact, in what order, what it
accepts, and what it drops.  All router state is owned by its node and
mutated only inside the engine's single-writer step.

Role convention: destination nodes are pure sinks.  They accept messages
addressed to them but never take relay custody, so routers only offer a
destination peer the messages destined to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush

import numpy as np

__all__ = [
    "Message",
    "Buffer",
    "StoredMessage",
    "AcceptOutcome",
    "split_copies",
    "uniform_likelihood",
    "update_likelihood",
    "compute_path_cost",
    "path_costs_from",
    "accept_message",
    "place_new_message",
    "make_router",
    "EpidemicRouter",
    "SprayAndWaitRouter",
    "MaxPropRouter",
]

INFINITE_COST = math.inf


@dataclass
class Message:
    """One copy of a tracked report.  Each holder owns its own instance;
    hop_count counts completed transfers on this copy's path and
    copies_remaining is the Spray-and-Wait replication budget."""

    id: str
    seq: int
    source: int
    destination: int
    size_bytes: int
    created_at_s: float
    hop_count: int = 0
    copies_remaining: int = 1

    def clone(self) -> "Message":
        return Message(self.id, self.seq, self.source, self.destination,
                       self.size_bytes, self.created_at_s,
                       self.hop_count, self.copies_remaining)


@dataclass
class StoredMessage:
    msg: Message
    received_at_s: float
    recv_seq: int


class Buffer:
    """Per-node message store with byte accounting and receive ordering."""

    def __init__(self, capacity_bytes: float):
        self.capacity = capacity_bytes
        self.store: dict[str, StoredMessage] = {}
        self.bytes_used = 0.0
        self._recv_counter = 0

    def __contains__(self, message_id: str) -> bool:
        return message_id in self.store

    def __len__(self) -> int:
        return len(self.store)

    def get(self, message_id: str) -> StoredMessage | None:
        return self.store.get(message_id)

    def add(self, msg: Message, now: float) -> StoredMessage:
        assert msg.id not in self.store, f"second copy of {msg.id} in one buffer"
        self._recv_counter += 1
        stored = StoredMessage(msg, now, self._recv_counter)
        self.store[msg.id] = stored
        self.bytes_used += msg.size_bytes
        return stored

    def remove(self, message_id: str) -> StoredMessage:
        stored = self.store.pop(message_id)
        self.bytes_used -= stored.msg.size_bytes
        return stored

    def by_receive_order(self) -> list[StoredMessage]:
        return sorted(self.store.values(), key=lambda s: s.recv_seq)

    def by_creation_order(self) -> list[StoredMessage]:
        return sorted(self.store.values(), key=lambda s: (s.msg.created_at_s, s.msg.seq))


# ---------------------------------------------------------------------------
# Spray-and-Wait copy arithmetic


def split_copies(copies_remaining: int, mode: str) -> tuple[int, int]:
    """Split a copy budget between the keeping node and the receiving node.

    binary: give floor(c/2), keep ceil(c/2); vanilla: give 1, keep c-1.
    """
    assert copies_remaining > 1, "split_copies requires more than one copy"
    if mode == "binary":
        given = copies_remaining // 2
        kept = copies_remaining - given
    elif mode == "vanilla":
        given = 1
        kept = copies_remaining - 1
    else:
        raise ValueError(f"unknown spray mode {mode!r}")
    return kept, given


# ---------------------------------------------------------------------------
# MaxProp delivery likelihoods


def uniform_likelihood(n_nodes: int, self_id: int) -> np.ndarray:
    """Initial meeting-likelihood vector: uniform 1/(N-1) over all peers."""
    v = np.full(n_nodes, 1.0 / (n_nodes - 1), dtype=np.float64)
    v[self_id] = 0.0
    return v


def update_likelihood(table: np.ndarray, met_peer: int) -> np.ndarray:
    """Incremental averaging: bump the met peer by 1, renormalize to sum 1."""
    out = table.copy()
    out[met_peer] += 1.0
    out /= out.sum()
    return out


def compute_path_cost(origin: int, destination: int, vectors: np.ndarray) -> float:
    """Minimum over likelihood-graph paths of sum(1 - f) along the edges.

    vectors[u] is node u's meeting-likelihood vector (uniform-initialized
    where never received).  Ties prefer fewer hops, then smaller node ids;
    an unreachable destination costs +inf.  Reference implementation; the
    engine uses the vectorized path_costs_from for the same values.
    """
    n = vectors.shape[0]
    if destination == origin:
        return 0.0
    best = {origin: (0.0, 0)}
    heap = [(0.0, 0, origin)]
    while heap:
        cost, hops, u = heappop(heap)
        if u == destination:
            return cost
        if best.get(u, (INFINITE_COST, 0)) < (cost, hops):
            continue
        for v in range(n):
            if v == u or v == origin:
                continue
            w = 1.0 - vectors[u, v]
            cand = (cost + w, hops + 1)
            if cand < best.get(v, (INFINITE_COST, 0)):
                best[v] = cand
                heappush(heap, (cand[0], cand[1], v))
    return INFINITE_COST


def path_costs_from(origin: int, vectors: np.ndarray) -> np.ndarray:
    """Dijkstra over the dense likelihood graph, all destinations at once."""
    n = vectors.shape[0]
    dist = np.full(n, INFINITE_COST)
    dist[origin] = 0.0
    visited = np.zeros(n, dtype=bool)
    for _ in range(n):
        masked = np.where(visited, INFINITE_COST, dist)
        u = int(np.argmin(masked))
        if math.isinf(masked[u]):
            break
        visited[u] = True
        nd = dist[u] + (1.0 - vectors[u])
        improve = ~visited & (nd < dist)
        dist[improve] = nd[improve]
    return dist


# ---------------------------------------------------------------------------
# Routers


class RouterBase:
    protocol = "base"

    def __init__(self, node_id: int, n_nodes: int):
        self.node_id = node_id
        self.n_nodes = n_nodes

    # Contact bookkeeping hooks (MaxProp overrides these).
    def on_meet(self, peer_id: int) -> None:
        pass

    def on_receive_vector(self, peer_id: int, vector: np.ndarray) -> None:
        pass

    def offer_list(self, node, peer) -> list[Message]:
        raise NotImplementedError

    def eviction_order(self, node, protected: set[str]) -> list[str]:
        """Message ids in the order they should be evicted."""
        return [s.msg.id for s in node.buffer.by_receive_order()
                if s.msg.id not in protected]


def _peer_lacks(peer, message_id: str) -> bool:
    return message_id not in peer.buffer and message_id not in peer.delivered_ids


def _deliverable(node, peer, msg: Message) -> bool:
    return msg.destination == peer.id and msg.id not in peer.delivered_ids


class EpidemicRouter(RouterBase):
    """Unbounded replication: offer everything the peer lacks, oldest first."""

    protocol = "epidemic"

    def offer_list(self, node, peer) -> list[Message]:
        stored = node.buffer.by_creation_order()
        if not peer.relays:
            return [s.msg for s in stored if _deliverable(node, peer, s.msg)]
        return [s.msg for s in stored if _peer_lacks(peer, s.msg.id)]

    def wants(self, node, peer, msg: Message) -> bool:
        if not peer.relays:
            return _deliverable(node, peer, msg)
        return _peer_lacks(peer, msg.id)


class SprayAndWaitRouter(RouterBase):
    """Bounded replication: spray while copies_remaining > 1, then hold the
    last copy for direct delivery to the destination."""

    protocol = "spray-and-wait"

    def __init__(self, node_id: int, n_nodes: int, initial_copies: int, mode: str):
        super().__init__(node_id, n_nodes)
        self.initial_copies = initial_copies
        self.mode = mode

    def offer_list(self, node, peer) -> list[Message]:
        direct = []
        spray = []
        for s in node.buffer.by_creation_order():
            if _deliverable(node, peer, s.msg):
                direct.append(s.msg)
            elif peer.relays and s.msg.copies_remaining > 1 and _peer_lacks(peer, s.msg.id):
                spray.append(s.msg)
        return direct + spray

    def wants(self, node, peer, msg: Message) -> bool:
        if _deliverable(node, peer, msg):
            return True
        return peer.relays and msg.copies_remaining > 1 and _peer_lacks(peer, msg.id)

    def after_send(self, node, stored: StoredMessage, peer) -> int:
        """Sender-side bookkeeping after a completed transfer; returns the
        copy budget travelling with the receiver's copy."""
        if stored.msg.destination == peer.id:
            # Direct delivery hands over the whole copy.
            given = stored.msg.copies_remaining
            node.buffer.remove(stored.msg.id)
            return given
        kept, given = split_copies(stored.msg.copies_remaining, self.mode)
        stored.msg.copies_remaining = kept
        return given


class MaxPropRouter(RouterBase):
    """Hop-count priority plus meeting-likelihood path costs, with network-
    wide acknowledgement flooding that purges delivered messages."""

    protocol = "maxprop"

    def __init__(self, node_id: int, n_nodes: int, hop_threshold: int):
        super().__init__(node_id, n_nodes)
        self.hop_threshold = hop_threshold
        self.own = uniform_likelihood(n_nodes, node_id)
        self.vectors = np.array(
            [uniform_likelihood(n_nodes, u) for u in range(n_nodes)], dtype=np.float64
        )
        self.vectors[node_id] = self.own
        self.acks: set[str] = set()
        self._costs: np.ndarray | None = None

    def on_meet(self, peer_id: int) -> None:
        self.own = update_likelihood(self.own, peer_id)
        self.vectors[self.node_id] = self.own
        self._costs = None

    def on_receive_vector(self, peer_id: int, vector: np.ndarray) -> None:
        self.vectors[peer_id] = vector.copy()
        self._costs = None

    def costs(self) -> np.ndarray:
        if self._costs is None:
            self._costs = path_costs_from(self.node_id, self.vectors)
        return self._costs

    def offer_list(self, node, peer) -> list[Message]:
        direct = []
        low_hop = []
        rest = []
        for s in node.buffer.by_creation_order():
            msg = s.msg
            if _deliverable(node, peer, msg):
                direct.append(msg)
            elif peer.relays and _peer_lacks(peer, msg.id):
                if msg.hop_count < self.hop_threshold:
                    low_hop.append(msg)
                else:
                    rest.append(msg)
        low_hop.sort(key=lambda m: (m.hop_count, m.seq))
        if rest:
            costs = self.costs()
            rest.sort(key=lambda m: (costs[m.destination], m.seq))
        return direct + low_hop + rest

    def wants(self, node, peer, msg: Message) -> bool:
        if _deliverable(node, peer, msg):
            return True
        return peer.relays and _peer_lacks(peer, msg.id)

    def eviction_order(self, node, protected: set[str]) -> list[str]:
        high_hop = []
        low_hop = []
        for s in node.buffer.by_receive_order():
            if s.msg.id in protected:
                continue
            if s.msg.hop_count >= self.hop_threshold:
                high_hop.append(s)
            else:
                low_hop.append(s)
        costs = self.costs()
        high_hop.sort(key=lambda s: (-costs[s.msg.destination], s.recv_seq))
        return [s.msg.id for s in high_hop] + [s.msg.id for s in low_hop]


def make_router(protocol: str, node_id: int, n_nodes: int, router_config) -> RouterBase:
    if protocol == "epidemic":
        return EpidemicRouter(node_id, n_nodes)
    if protocol == "spray-and-wait":
        return SprayAndWaitRouter(node_id, n_nodes,
                                  router_config.snw_initial_copies, router_config.snw_mode)
    if protocol == "maxprop":
        return MaxPropRouter(node_id, n_nodes, router_config.maxprop_hop_threshold)
    raise ValueError(f"unknown protocol {protocol!r}")


# ---------------------------------------------------------------------------
# Acceptance / placement


@dataclass
class AcceptOutcome:
    stored: bool = False
    delivered: bool = False  # destined to this node, first delivery
    duplicate: bool = False  # resident copy, past delivery, or acked
    rejected: bool = False
    evicted: list[StoredMessage] = field(default_factory=list)


def accept_message(node, incoming: Message, now: float,
                   protected: frozenset[str] | set[str] = frozenset()) -> AcceptOutcome:
    """Decide what a node does with a received copy.

    Deliveries (destination == self) are always accepted and consume no
    buffer space; duplicates of already-delivered ids are acknowledged but
    not re-counted.  Relay copies evict per the router's policy until the
    copy fits, except that a node never evicts to accept a copy of a
    message it originated.
    """
    out = AcceptOutcome()
    if incoming.destination == node.id:
        if incoming.id in node.delivered_ids:
            out.duplicate = True
            return out
        node.delivered_ids.add(incoming.id)
        if isinstance(node.router, MaxPropRouter):
            node.router.acks.add(incoming.id)
        out.delivered = True
        return out

    if incoming.id in node.buffer:
        out.duplicate = True
        return out
    if isinstance(node.router, MaxPropRouter) and incoming.id in node.router.acks:
        out.duplicate = True
        return out
    if incoming.size_bytes > node.buffer.capacity:
        out.rejected = True
        return out

    if node.buffer.bytes_used + incoming.size_bytes > node.buffer.capacity:
        if incoming.source == node.id:
            out.rejected = True
            return out
        order = node.router.eviction_order(node, set(protected))
        for victim in order:
            if node.buffer.bytes_used + incoming.size_bytes <= node.buffer.capacity:
                break
            out.evicted.append(node.buffer.remove(victim))
        if node.buffer.bytes_used + incoming.size_bytes > node.buffer.capacity:
            out.rejected = True
            return out

    node.buffer.add(incoming, now)
    out.stored = True
    return out


def place_new_message(node, msg: Message, now: float,
                      protected: frozenset[str] | set[str] = frozenset(),
                      ) -> tuple[bool, list[StoredMessage]]:
    """Put a freshly generated message into its source's buffer, evicting
    oldest non-own messages if needed.  Returns (placed, evicted)."""
    if msg.size_bytes > node.buffer.capacity:
        return False, []
    evicted: list[StoredMessage] = []
    if node.buffer.bytes_used + msg.size_bytes > node.buffer.capacity:
        for s in node.buffer.by_receive_order():
            if node.buffer.bytes_used + msg.size_bytes <= node.buffer.capacity:
                break
            if s.msg.source == node.id or s.msg.id in protected:
                continue
            evicted.append(node.buffer.remove(s.msg.id))
    if node.buffer.bytes_used + msg.size_bytes > node.buffer.capacity:
        return False, evicted
    node.buffer.add(msg, now)
    return True, evicted

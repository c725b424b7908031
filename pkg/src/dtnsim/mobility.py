"""Movement models: Stationary and Shortest-Path-Map-Based.

A mobile node repeats: pick a uniform random destination vertex on its
group overlay, follow the shortest map path there at a single random leg
speed, then wait a random time drawn from the group's wait range.  The
RNG draw order is fixed (destination, speed on planning; wait on
arrival) so traces are reproducible for a given seed.

The per-step kinematics live in dtnsim._kernels (compiled when
available); this module owns route planning and provides a single-node
`step` harness over the same kernel the engine batches over.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from dtnsim import _kernels
from dtnsim.roadmap import GroupOverlay, RoutePlanner


def init_vertex(overlay: GroupOverlay, rng: random.Random) -> int:
    """Uniformly chosen overlay vertex (base-graph id) for initial placement."""
    if overlay.vertex_count == 0:
        raise ValueError("empty overlay")
    return overlay.vertices[rng.randrange(overlay.vertex_count)]


def plan_route(current_vertex: int, planner: RoutePlanner, group,
               rng: random.Random) -> tuple[list[int], int, float]:
    """Draw a destination and leg speed; returns (waypoints, dest, speed).

    Waypoints exclude the current vertex except for the degenerate
    same-vertex draw, which yields a single zero-length leg.
    """
    overlay = planner.overlay
    dest = overlay.vertices[rng.randrange(overlay.vertex_count)]
    path = planner.route(current_vertex, dest)
    waypoints = path[1:] if len(path) > 1 else path
    speed = rng.uniform(group.speed_min_mps, group.speed_max_mps)
    return waypoints, dest, speed


def draw_wait(group, rng: random.Random) -> float:
    return rng.uniform(group.wait_min_s, group.wait_max_s)


@dataclass
class MobilityState:
    """Single-node movement state (the engine batches the same fields
    across nodes in arrays)."""

    position: tuple[float, float]
    current_vertex: int = -1
    route: list[tuple[float, float]] = field(default_factory=list)
    route_dest: int = -1
    leg_speed_mps: float = 0.0
    wait_until_s: float = 0.0
    stationary: bool = False


def init_position(overlay: GroupOverlay | None, rng: random.Random,
                  point: tuple[float, float] | None = None) -> MobilityState:
    """Initial state: the configured point for stationary nodes, otherwise
    a uniformly chosen overlay vertex with an empty route."""
    if point is not None:
        return MobilityState(position=point, stationary=True)
    vertex = init_vertex(overlay, rng)
    return MobilityState(position=overlay.position(vertex), current_vertex=vertex)


def step(state: MobilityState, planner: RoutePlanner | None, group,
         now_s: float, dt_s: float, rng: random.Random) -> MobilityState:
    """Advance one node by one time step.

    Exactly one of: keep waiting, plan a new route (no movement this
    step), or advance leg_speed*dt along the remaining waypoints; on
    arrival a wait is drawn.  Total function for any valid state.
    """
    assert dt_s > 0
    if state.stationary:
        return state
    if state.wait_until_s > now_s:
        return state
    if not state.route:
        waypoints, dest, speed = plan_route(state.current_vertex, planner, group, rng)
        state.route = [planner.overlay.position(v) for v in waypoints]
        state.route_dest = dest
        state.leg_speed_mps = speed
        return state

    n_way = len(state.route)
    px = np.array([state.position[0]])
    py = np.array([state.position[1]])
    kind = np.ones(1, dtype=np.int8)
    wait_until = np.array([state.wait_until_s])
    speed = np.array([state.leg_speed_mps])
    route_x = np.array([[p[0] for p in state.route]])
    route_y = np.array([[p[1] for p in state.route]])
    route_next = np.zeros(1, dtype=np.int32)
    route_len = np.array([n_way], dtype=np.int32)
    plan_buf = np.empty(1, dtype=np.int32)
    arrive_buf = np.empty(1, dtype=np.int32)
    _, n_arrived = _kernels.move_step(
        px, py, kind, wait_until, speed, route_x, route_y,
        route_next, route_len, now_s, dt_s, plan_buf, arrive_buf)
    state.position = (float(px[0]), float(py[0]))
    state.route = state.route[int(route_next[0]):]
    if n_arrived:
        state.current_vertex = state.route_dest
        state.route = []
        state.wait_until_s = now_s + draw_wait(group, rng)
    return state

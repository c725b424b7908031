"""Synthetic desk-scale map generator.

Produces a world in the spirit of a mountain town: a ring of mountain
roads around a town grid, connector roads between them, a river crossing
the northern arc, and two base stations beside the ring.  Emits the base
map, four movement overlays (strict subsets of the base geometry), the
station points, and a ready-to-run scenario file.  Output is a pure
function of the parameters, so regeneration is byte-identical.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

__all__ = ["MapParams", "generate_map", "write_map_files", "DEFAULT_SCENARIO_NAME"]

DEFAULT_SCENARIO_NAME = "yaan_default.cfg"

STATION_A = (9600.0, 1000.0)
STATION_B = (5180.0, 10393.0)
WORLD_W = 12000.0
WORLD_H = 11400.0

# Ring vertices, counter-clockwise.  Two of them anchor the base stations
# (within the 600 m station reception range) and two are river bridges.
_RING = [
    (1200.0, 1800.0), (2600.0, 900.0), (4400.0, 600.0), (6400.0, 500.0),
    (8200.0, 700.0), (9350.0, 1530.0), (10600.0, 2600.0), (11200.0, 4200.0),
    (11000.0, 6000.0), (10300.0, 7800.0), (9000.0, 9300.0), (7200.0, 10200.0),
    (5500.0, 10750.0), (3600.0, 10300.0), (2100.0, 9400.0), (1000.0, 8000.0),
    (500.0, 6200.0), (600.0, 4200.0), (800.0, 3000.0),
]
_RING_FIXED = {5, 12, 15, 10}  # station anchors and river bridges stay put


@dataclass(frozen=True)
class MapParams:
    seed: int = 42
    town_size: int = 5       # grid vertices per side
    town_step_m: float = 800.0
    jitter_m: float = 40.0


@dataclass
class GeneratedMap:
    base: list[list[tuple[float, float]]]
    truck: list[list[tuple[float, float]]]
    pedestrian: list[list[tuple[float, float]]]
    vehicle: list[list[tuple[float, float]]]
    freighter: list[list[tuple[float, float]]]
    stations: list[tuple[float, float]]
    town_vertices: list[tuple[float, float]]


def _jitter(rng: random.Random, p: tuple[float, float], amount: float) -> tuple[float, float]:
    return (p[0] + rng.uniform(-amount, amount), p[1] + rng.uniform(-amount, amount))


def generate_map(params: MapParams = MapParams()) -> GeneratedMap:
    rng = random.Random(f"mapgen:{params.seed}")
    jit = params.jitter_m

    ring = [p if i in _RING_FIXED else _jitter(rng, p, jit) for i, p in enumerate(_RING)]
    ring_loop = ring + [ring[0]]

    # Town grid centred under the ring; rows/columns as full streets.
    size = params.town_size
    step = params.town_step_m
    x0 = 5400.0 - step * (size - 1) / 2.0
    y0 = 5500.0 - step * (size - 1) / 2.0
    town = [[(x0 + c * step, y0 + r * step) for c in range(size)] for r in range(size)]
    town = [[_jitter(rng, p, jit) for p in row] for row in town]
    town_streets = [list(row) for row in town]
    town_streets += [[town[r][c] for r in range(size)] for c in range(size)]
    town_vertices = [p for row in town for p in row]

    mid = size // 2
    south_town, north_town = town[0][mid], town[size - 1][mid]
    west_town, east_town = town[mid][0], town[mid][size - 1]
    # The south-east connector ends at the ring vertex beside the east
    # station and the north one beside the north station, so town traffic
    # regularly crosses both reception zones.
    connectors = [
        [south_town, _jitter(rng, (4900.0, 2200.0), jit), ring[2]],
        [east_town, _jitter(rng, (8600.0, 3100.0), jit), ring[5]],
        [north_town, (5400.0, 8800.0), (5400.0, 9900.0), ring[12]],  # river bridge at 9900
        [west_town, _jitter(rng, (2100.0, 5800.0), jit), ring[16]],
    ]

    # The river swings close to the north station, so cargo ships both
    # relay to road traffic at the bridges and deliver directly.
    river = [
        _jitter(rng, (600.0, 7200.0), jit),
        ring[15],                              # west bridge
        _jitter(rng, (2400.0, 8900.0), jit),
        _jitter(rng, (3900.0, 9500.0), jit),
        (5400.0, 9900.0),                      # bridge on the north connector
        _jitter(rng, (6900.0, 9400.0), jit),
        _jitter(rng, (8300.0, 9200.0), jit),
        ring[10],                              # east bridge
        _jitter(rng, (9900.0, 9800.0), jit),
    ]

    base = [ring_loop] + town_streets + connectors + [river]
    return GeneratedMap(
        base=base,
        truck=[ring_loop],
        pedestrian=town_streets,
        vehicle=[ring_loop] + town_streets + connectors,
        freighter=[river],
        stations=[STATION_A, STATION_B],
        town_vertices=town_vertices,
    )


def _wkt_lines(polylines: list[list[tuple[float, float]]]) -> str:
    records = []
    for line in polylines:
        coords = ", ".join(f"{x!r} {y!r}" for x, y in line)
        records.append(f"LINESTRING ({coords})")
    return "\n".join(records) + "\n"


def _wkt_points(points: list[tuple[float, float]]) -> str:
    return "\n".join(f"POINT ({x!r} {y!r})" for x, y in points) + "\n"


def _scenario_text(seed: int) -> str:
    return f"""\
# Desk-scale Ya'an truck-tracking scenario: 77 nodes on a synthetic
# mountain-ring / town-grid / river map.  Distances in meters, times in
# seconds, sizes in bytes.  Generated by `dtnsim gen-map` (seed {seed}).
duration = 28800
time_step = 0.1
seed = 1
message.interval = 60
message.size_min = 10000
message.size_max = 100000
world.width = {WORLD_W!r}
world.height = {WORLD_H!r}
map.file = yaan_base.wkt
map.snap_tolerance = 1.0
router.protocol = epidemic
router.snw_copies = 20
router.snw_mode = binary
router.maxprop_hop_threshold = 3
groups = 6

# Base stations: message sinks with long reception range and a fast link.
Group1.name = station_east
Group1.count = 1
Group1.role = destination
Group1.movement = stationary
Group1.points = {STATION_A[0]!r},{STATION_A[1]!r}
Group1.range = 600
Group1.bandwidth = 15000000
Group1.buffer_capacity = 20000000

Group2.name = station_north
Group2.count = 1
Group2.role = destination
Group2.movement = stationary
Group2.points = {STATION_B[0]!r},{STATION_B[1]!r}
Group2.range = 600
Group2.bandwidth = 15000000
Group2.buffer_capacity = 20000000

# Delivery trucks on the mountain ring; they never enter the town centre.
Group3.name = trucks
Group3.count = 20
Group3.role = source
Group3.movement = shortest-path-map-based
Group3.overlay = truck_paths.wkt
Group3.speed_min = 6 mph
Group3.speed_max = 35 mph
Group3.range = 100
Group3.bandwidth = 7500000
Group3.buffer_capacity = 20000000

Group4.name = pedestrians
Group4.count = 20
Group4.role = carrier
Group4.movement = shortest-path-map-based
Group4.overlay = pedestrian_paths.wkt
Group4.speed_min = 3 mph
Group4.speed_max = 5 mph
Group4.range = 100
Group4.bandwidth = 7500000
Group4.buffer_capacity = 20000000

Group5.name = freighters
Group5.count = 5
Group5.role = carrier
Group5.movement = shortest-path-map-based
Group5.overlay = freighter_paths.wkt
Group5.speed_min = 12 mph
Group5.speed_max = 33 mph
Group5.range = 100
Group5.bandwidth = 7500000
Group5.buffer_capacity = 20000000

Group6.name = vehicles
Group6.count = 30
Group6.role = carrier
Group6.movement = shortest-path-map-based
Group6.overlay = vehicle_paths.wkt
Group6.speed_min = 8 mph
Group6.speed_max = 45 mph
Group6.range = 100
Group6.bandwidth = 7500000
Group6.buffer_capacity = 20000000
"""


def write_map_files(out_dir: str | Path, params: MapParams = MapParams()) -> list[Path]:
    """Generate and write all map artifacts; returns the written paths."""
    generated = generate_map(params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "yaan_base.wkt": _wkt_lines(generated.base),
        "truck_paths.wkt": _wkt_lines(generated.truck),
        "pedestrian_paths.wkt": _wkt_lines(generated.pedestrian),
        "vehicle_paths.wkt": _wkt_lines(generated.vehicle),
        "freighter_paths.wkt": _wkt_lines(generated.freighter),
        "stations.wkt": _wkt_points(generated.stations),
        DEFAULT_SCENARIO_NAME: _scenario_text(params.seed),
    }
    written = []
    for name, content in files.items():
        path = out / name
        path.write_text(content)
        written.append(path)
    return written

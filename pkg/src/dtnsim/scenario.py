"""Scenario configuration: parse, validate, and normalize to SI units.

File format: UTF-8 text with one `key = value` per line, `#` comments,
and group-scoped keys written as `Group<N>.<key>` (groups are numbered
from 1; node ids are assigned contiguously in group order starting at 0).
Speeds accept a `mph` suffix and are stored as m/s.  All functions here
are pure; configs are plain dataclasses safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

__all__ = [
    "ScenarioError",
    "InterfaceProfile",
    "RouterConfig",
    "GroupConfig",
    "ScenarioConfig",
    "mph_to_mps",
    "load_scenario",
    "parse_keyvalues",
    "build_scenario",
    "dump_scenario",
]

MPH_TO_MPS = 0.44704

PROTOCOLS = ("epidemic", "spray-and-wait", "maxprop")
ROLES = ("source", "carrier", "destination")
MOVEMENTS = ("stationary", "shortest-path-map-based")
SNW_MODES = ("vanilla", "binary")
CONTACT_RULES = ("max", "min")

DEFAULT_BUFFER_BYTES = 5_000_000


class ScenarioError(ValueError):
    """Configuration parse or validation failure."""


def mph_to_mps(v: float) -> float:
    """Convert miles/hour to meters/second (exactly v * 0.44704)."""
    if v < 0:
        raise ScenarioError(f"speed must be non-negative, got {v} mph")
    return v * MPH_TO_MPS


@dataclass(frozen=True)
class InterfaceProfile:
    range_m: float
    bandwidth_bytes_per_s: float


@dataclass(frozen=True)
class RouterConfig:
    protocol: str = "epidemic"
    snw_initial_copies: int = 20
    snw_mode: str = "binary"
    maxprop_hop_threshold: int = 3
    ttl_s: float | None = None  # None = infinite


@dataclass(frozen=True)
class GroupConfig:
    name: str
    count: int
    role: str
    movement: str
    points: tuple[tuple[float, float], ...] = ()  # stationary only
    overlay_file: str = ""  # map-based only
    speed_min_mps: float = 0.0
    speed_max_mps: float = 0.0
    wait_min_s: float = 0.0
    wait_max_s: float = 0.0
    interface: InterfaceProfile = InterfaceProfile(100.0, 7_500_000.0)
    buffer_capacity_bytes: float = DEFAULT_BUFFER_BYTES


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float = 28800.0
    time_step_s: float = 0.1
    rng_seed: int = 1
    message_interval_s: float = 60.0
    message_per_source: bool = False
    message_size_min_bytes: int = 10_000
    message_size_max_bytes: int = 100_000
    world_width_m: float = 10_000.0
    world_height_m: float = 10_000.0
    map_file: str = ""
    map_snap_tolerance_m: float = 1.0
    contact_rule: str = "max"
    groups: tuple[GroupConfig, ...] = ()
    router: RouterConfig = RouterConfig()

    @property
    def node_count(self) -> int:
        return sum(g.count for g in self.groups)

    def node_id_ranges(self) -> list[tuple[int, int]]:
        """Per-group [first_id, last_id] in declaration order from 0."""
        ranges = []
        next_id = 0
        for g in self.groups:
            ranges.append((next_id, next_id + g.count - 1))
            next_id += g.count
        return ranges


# ---------------------------------------------------------------------------
# key=value layer

_GLOBAL_KEYS = {
    "duration",
    "time_step",
    "seed",
    "message.interval",
    "message.per_source",
    "message.size_min",
    "message.size_max",
    "world.width",
    "world.height",
    "map.file",
    "map.snap_tolerance",
    "radio.contact_rule",
    "router.protocol",
    "router.snw_copies",
    "router.snw_mode",
    "router.maxprop_hop_threshold",
    "router.ttl",
    "groups",
}

_GROUP_KEYS = {
    "name",
    "count",
    "role",
    "movement",
    "points",
    "overlay",
    "speed_min",
    "speed_max",
    "wait_min",
    "wait_max",
    "range",
    "bandwidth",
    "buffer_capacity",
}


def parse_keyvalues(text: str) -> dict[str, str]:
    """Parse the raw key=value layer; duplicate and unknown keys are errors
    (this is what catches typos)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ScenarioError(f"line {lineno}: empty key")
        _check_key(key, lineno)
        if key in values:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _check_key(key: str, lineno: int) -> None:
    if key in _GLOBAL_KEYS:
        return
    if key.startswith("Group"):
        head, _, tail = key.partition(".")
        idx = head[len("Group"):]
        if idx.isdigit() and int(idx) >= 1 and tail in _GROUP_KEYS:
            return
    raise ScenarioError(f"line {lineno}: unknown key {key!r}")


def _parse_float(values: dict[str, str], key: str, default: float) -> float:
    if key not in values:
        return default
    try:
        return float(values[key])
    except ValueError:
        raise ScenarioError(f"{key}: expected a number, got {values[key]!r}") from None


def _parse_int(values: dict[str, str], key: str, default: int) -> int:
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ScenarioError(f"{key}: expected an integer, got {values[key]!r}") from None


def _parse_bool(values: dict[str, str], key: str, default: bool) -> bool:
    if key not in values:
        return default
    v = values[key].lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ScenarioError(f"{key}: expected true/false, got {values[key]!r}")


def _parse_speed(values: dict[str, str], key: str, default: float) -> float:
    """A speed value: plain number = m/s, `<number> mph` converts."""
    if key not in values:
        return default
    raw = values[key]
    token = raw.lower()
    mph = token.endswith("mph")
    if mph:
        token = token[:-3].strip()
    try:
        v = float(token)
    except ValueError:
        raise ScenarioError(f"{key}: expected a speed like '3.5' or '12 mph', got {raw!r}") from None
    if v < 0:
        raise ScenarioError(f"{key}: speed must be non-negative, got {raw!r}")
    return mph_to_mps(v) if mph else v


def _parse_points(raw: str, key: str) -> tuple[tuple[float, float], ...]:
    points = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(",")
        if len(pieces) != 2:
            raise ScenarioError(f"{key}: expected 'x,y' pairs separated by ';', got {part!r}")
        try:
            points.append((float(pieces[0]), float(pieces[1])))
        except ValueError:
            raise ScenarioError(f"{key}: non-numeric coordinate in {part!r}") from None
    return tuple(points)


def _parse_choice(values: dict[str, str], key: str, choices: tuple[str, ...], default: str) -> str:
    v = values.get(key, default)
    if v not in choices:
        raise ScenarioError(f"{key}: expected one of {choices}, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# Config assembly + validation


def build_scenario(values: dict[str, str]) -> ScenarioConfig:
    """Assemble and validate a config from a parsed key=value mapping."""
    n_groups = _parse_int(values, "groups", 0)
    declared = sorted(
        {int(k.partition(".")[0][len("Group"):]) for k in values if k.startswith("Group")}
    )
    if n_groups == 0:
        n_groups = declared[-1] if declared else 0
    if declared and (declared[0] < 1 or declared[-1] > n_groups):
        raise ScenarioError(
            f"group numbers must run 1..{n_groups}, found Group{declared[-1]}"
        )

    groups = []
    for g in range(1, n_groups + 1):
        prefix = f"Group{g}."
        sub = {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}
        if not sub:
            raise ScenarioError(f"Group{g} is declared by 'groups = {n_groups}' but has no keys")
        movement = _parse_choice(sub, "movement", MOVEMENTS, "shortest-path-map-based")
        group = GroupConfig(
            name=sub.get("name", f"group{g}"),
            count=_parse_int(sub, "count", 1),
            role=_parse_choice(sub, "role", ROLES, "carrier"),
            movement=movement,
            points=_parse_points(sub.get("points", ""), f"Group{g}.points"),
            overlay_file=sub.get("overlay", ""),
            speed_min_mps=_parse_speed(sub, "speed_min", 0.0),
            speed_max_mps=_parse_speed(sub, "speed_max", 0.0),
            wait_min_s=_parse_float(sub, "wait_min", 0.0),
            wait_max_s=_parse_float(sub, "wait_max", 0.0),
            interface=InterfaceProfile(
                range_m=_parse_float(sub, "range", 100.0),
                bandwidth_bytes_per_s=_parse_float(sub, "bandwidth", 7_500_000.0),
            ),
            buffer_capacity_bytes=_parse_float(sub, "buffer_capacity", DEFAULT_BUFFER_BYTES),
        )
        groups.append(group)

    ttl_raw = values.get("router.ttl", "").strip()
    router = RouterConfig(
        protocol=_parse_choice(values, "router.protocol", PROTOCOLS, "epidemic"),
        snw_initial_copies=_parse_int(values, "router.snw_copies", 20),
        snw_mode=_parse_choice(values, "router.snw_mode", SNW_MODES, "binary"),
        maxprop_hop_threshold=_parse_int(values, "router.maxprop_hop_threshold", 3),
        ttl_s=float(ttl_raw) if ttl_raw else None,
    )

    config = ScenarioConfig(
        duration_s=_parse_float(values, "duration", 28800.0),
        time_step_s=_parse_float(values, "time_step", 0.1),
        rng_seed=_parse_int(values, "seed", 1),
        message_interval_s=_parse_float(values, "message.interval", 60.0),
        message_per_source=_parse_bool(values, "message.per_source", False),
        message_size_min_bytes=_parse_int(values, "message.size_min", 10_000),
        message_size_max_bytes=_parse_int(values, "message.size_max", 100_000),
        world_width_m=_parse_float(values, "world.width", 10_000.0),
        world_height_m=_parse_float(values, "world.height", 10_000.0),
        map_file=values.get("map.file", ""),
        map_snap_tolerance_m=_parse_float(values, "map.snap_tolerance", 1.0),
        contact_rule=_parse_choice(values, "radio.contact_rule", CONTACT_RULES, "max"),
        groups=tuple(groups),
        router=router,
    )
    validate_scenario(config)
    return config


def validate_scenario(config: ScenarioConfig) -> None:
    if config.duration_s <= 0:
        raise ScenarioError(f"duration must be > 0, got {config.duration_s}")
    if not 0 < config.time_step_s <= config.message_interval_s:
        raise ScenarioError(
            f"time_step must satisfy 0 < time_step <= message.interval, got "
            f"{config.time_step_s} vs {config.message_interval_s}"
        )
    if config.rng_seed < 0:
        raise ScenarioError(f"seed must be non-negative, got {config.rng_seed}")
    if config.message_size_min_bytes > config.message_size_max_bytes:
        raise ScenarioError(
            f"message.size_min {config.message_size_min_bytes} exceeds "
            f"message.size_max {config.message_size_max_bytes}"
        )
    if config.message_size_min_bytes <= 0:
        raise ScenarioError("message sizes must be positive")
    if config.world_width_m <= 0 or config.world_height_m <= 0:
        raise ScenarioError("world dimensions must be positive")
    if config.router.snw_initial_copies < 1:
        raise ScenarioError(
            f"router.snw_copies must be >= 1, got {config.router.snw_initial_copies}"
        )
    if config.router.maxprop_hop_threshold < 0:
        raise ScenarioError("router.maxprop_hop_threshold must be >= 0")
    if config.router.ttl_s is not None and config.router.ttl_s <= 0:
        raise ScenarioError("router.ttl must be positive when set")

    if not any(g.role == "source" for g in config.groups):
        raise ScenarioError("no source group: at least one group needs role = source")
    if not any(g.role == "destination" for g in config.groups):
        raise ScenarioError("no destination group: at least one group needs role = destination")

    for i, g in enumerate(config.groups, start=1):
        where = f"Group{i} ({g.name})"
        if g.count < 1:
            raise ScenarioError(f"{where}: count must be >= 1")
        if g.speed_min_mps > g.speed_max_mps:
            raise ScenarioError(
                f"{where}: speed_min {g.speed_min_mps} exceeds speed_max {g.speed_max_mps}"
            )
        if g.wait_min_s > g.wait_max_s or g.wait_min_s < 0:
            raise ScenarioError(f"{where}: invalid wait range [{g.wait_min_s}, {g.wait_max_s}]")
        if g.interface.range_m <= 0:
            raise ScenarioError(f"{where}: interface range must be > 0")
        if g.interface.bandwidth_bytes_per_s <= 0:
            raise ScenarioError(f"{where}: interface bandwidth must be > 0")
        if g.buffer_capacity_bytes <= 0:
            raise ScenarioError(f"{where}: buffer_capacity must be > 0")
        if g.movement == "stationary":
            if g.speed_min_mps != 0 or g.speed_max_mps != 0:
                raise ScenarioError(f"{where}: stationary groups must have speed 0")
            if len(g.points) != g.count:
                raise ScenarioError(
                    f"{where}: stationary group needs exactly {g.count} points, "
                    f"got {len(g.points)}"
                )
        else:
            if g.speed_min_mps <= 0:
                raise ScenarioError(f"{where}: map-based groups need speed_min > 0")
            if not g.overlay_file:
                raise ScenarioError(f"{where}: map-based groups need an overlay file")


def load_scenario(text: str, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    """Parse scenario text into a fully-defaulted, validated config.

    `overrides` (from --set key=value) are applied on top of the parsed
    key=value layer before assembly, and are checked like file keys.
    """
    values = parse_keyvalues(text)
    if overrides:
        for key, value in overrides.items():
            _check_key(key, 0)
            values[key] = value
    return build_scenario(values)


# ---------------------------------------------------------------------------
# Serialization (round-trips through load_scenario)


def dump_scenario(config: ScenarioConfig) -> str:
    """Serialize with every key explicit; reloading yields an equal config."""
    out = [
        f"duration = {config.duration_s!r}",
        f"time_step = {config.time_step_s!r}",
        f"seed = {config.rng_seed}",
        f"message.interval = {config.message_interval_s!r}",
        f"message.per_source = {str(config.message_per_source).lower()}",
        f"message.size_min = {config.message_size_min_bytes}",
        f"message.size_max = {config.message_size_max_bytes}",
        f"world.width = {config.world_width_m!r}",
        f"world.height = {config.world_height_m!r}",
        f"map.file = {config.map_file}",
        f"map.snap_tolerance = {config.map_snap_tolerance_m!r}",
        f"radio.contact_rule = {config.contact_rule}",
        f"router.protocol = {config.router.protocol}",
        f"router.snw_copies = {config.router.snw_initial_copies}",
        f"router.snw_mode = {config.router.snw_mode}",
        f"router.maxprop_hop_threshold = {config.router.maxprop_hop_threshold}",
    ]
    if config.router.ttl_s is not None:
        out.append(f"router.ttl = {config.router.ttl_s!r}")
    out.append(f"groups = {len(config.groups)}")
    for i, g in enumerate(config.groups, start=1):
        p = f"Group{i}."
        out.append("")
        out.append(f"{p}name = {g.name}")
        out.append(f"{p}count = {g.count}")
        out.append(f"{p}role = {g.role}")
        out.append(f"{p}movement = {g.movement}")
        if g.movement == "stationary":
            pts = " ; ".join(f"{x!r},{y!r}" for x, y in g.points)
            out.append(f"{p}points = {pts}")
        else:
            out.append(f"{p}overlay = {g.overlay_file}")
            out.append(f"{p}speed_min = {g.speed_min_mps!r}")
            out.append(f"{p}speed_max = {g.speed_max_mps!r}")
        out.append(f"{p}wait_min = {g.wait_min_s!r}")
        out.append(f"{p}wait_max = {g.wait_max_s!r}")
        out.append(f"{p}range = {g.interface.range_m!r}")
        out.append(f"{p}bandwidth = {g.interface.bandwidth_bytes_per_s!r}")
        out.append(f"{p}buffer_capacity = {g.buffer_capacity_bytes!r}")
    return "\n".join(out) + "\n"


def scale_carrier_groups(config: ScenarioConfig, factor: float) -> ScenarioConfig:
    """Scale carrier-group node counts by `factor`, rounding half up.
    Source and destination groups are untouched."""
    groups = []
    for g in config.groups:
        if g.role == "carrier":
            count = max(1, int(g.count * factor + 0.5))
            groups.append(replace(g, count=count))
        else:
            groups.append(g)
    return replace(config, groups=tuple(groups))

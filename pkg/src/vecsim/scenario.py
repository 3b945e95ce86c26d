"""Synthetic highway scenario generation.

Vehicles cross a single RSU coverage chord at constant speed; each vehicle
carries one image-processing task whose deadline is the time left inside
coverage when the task becomes ready to offload.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, IntegrityError


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class RadioParams:
    """Uplink/downlink channel constants shared by every task."""

    max_bandwidth_hz: float = 20e6
    guard_band_fraction: float = 0.046  # 20 MHz nominal -> 19.08 MHz usable
    transmit_power_w: float = 0.2
    channel_gain: float = 1e-8
    noise_power_w: float = 1e-13  # -100 dBm

    def __post_init__(self) -> None:
        if self.max_bandwidth_hz <= 0:
            raise ConfigError(f"max_bandwidth_hz must be > 0, got {self.max_bandwidth_hz}")
        if not 0.0 <= self.guard_band_fraction < 1.0:
            raise ConfigError(f"guard_band_fraction must be in [0,1), got {self.guard_band_fraction}")
        if self.transmit_power_w <= 0 or self.channel_gain <= 0 or self.noise_power_w <= 0:
            raise ConfigError("transmit_power_w, channel_gain and noise_power_w must be > 0")

    @property
    def effective_bandwidth_hz(self) -> float:
        return self.max_bandwidth_hz * (1.0 - self.guard_band_fraction)

    @property
    def snr(self) -> float:
        return self.transmit_power_w * self.channel_gain / self.noise_power_w

    @classmethod
    def from_dict(cls, d: dict) -> "RadioParams":
        d = dict(d)
        if "noise_power_dbm" in d:
            if "noise_power_w" in d:
                raise ConfigError("give noise_power_dbm or noise_power_w, not both")
            d["noise_power_w"] = dbm_to_watts(float(d.pop("noise_power_dbm")))
        try:
            return cls(**{k: float(v) for k, v in d.items()})
        except TypeError as exc:
            raise ConfigError(f"bad radio config: {exc}") from None


@dataclass(frozen=True)
class Vehicle:
    """One vehicle crossing the coverage chord at constant speed."""

    id: int
    speed_mps: float
    entry_time_s: float
    exit_time_s: float
    entry_position_m: float = 0.0  # 1-D coordinate at entry; RSU chord is [pos, pos + span]

    def __post_init__(self) -> None:
        if self.speed_mps <= 0:
            raise ConfigError(f"vehicle {self.id}: speed must be > 0")
        if self.exit_time_s <= self.entry_time_s:
            raise ConfigError(f"vehicle {self.id}: exit must come after entry")

    @property
    def dwell_s(self) -> float:
        return self.exit_time_s - self.entry_time_s

    def position_at(self, t: float) -> float:
        return self.entry_position_m + self.speed_mps * (t - self.entry_time_s)


@dataclass(frozen=True)
class Task:
    """One offloadable unit of work."""

    id: int
    vehicle_id: int
    size_bits: float
    generation_time_s: float
    ready_time_s: float          # max(generation time, vehicle entry)
    range_deadline_s: float      # coverage time left at the ready instant
    remote_proc_time_s: float
    local_proc_time_s: float

    def __post_init__(self) -> None:
        if self.size_bits <= 0:
            raise ConfigError(f"task {self.id}: size must be > 0")
        if self.ready_time_s < self.generation_time_s:
            raise ConfigError(f"task {self.id}: ready before generation")
        if self.range_deadline_s <= 0:
            raise ConfigError(f"task {self.id}: deadline must be > 0")
        if self.local_proc_time_s < self.remote_proc_time_s:
            raise ConfigError(f"task {self.id}: local processing must not beat the edge server")

    @property
    def absolute_deadline_s(self) -> float:
        return self.ready_time_s + self.range_deadline_s


@dataclass(eq=False)
class Scenario:
    """A generated task set plus the geometry and radio constants behind it."""

    radio: RadioParams
    vehicles: list[Vehicle]
    tasks: list[Task]
    num_servers: int = 2
    rng_seed: int = 0
    _vehicle_index: dict[int, Vehicle] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.num_servers < 1:
            raise ConfigError("num_servers must be >= 1")
        self._vehicle_index = {v.id: v for v in self.vehicles}
        self.tasks = sorted(self.tasks, key=lambda t: (t.ready_time_s, t.id))

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def vehicle_of(self, task: Task) -> Vehicle:
        try:
            return self._vehicle_index[task.vehicle_id]
        except KeyError:
            raise IntegrityError(f"task {task.id} references unknown vehicle {task.vehicle_id}") from None

    def remaining_range_time(self, task: Task, at: float) -> float:
        """Coverage time the task's vehicle has left at instant `at`, floored at 0."""
        return max(0.0, self.vehicle_of(task).exit_time_s - at)


@dataclass(frozen=True)
class ResolutionSpec:
    """Image resolution entry: task size plus its remote/local inference times."""

    name: str
    width: int
    height: int
    bits_per_pixel: int
    remote_proc_s: float
    local_proc_s: float

    @property
    def size_bits(self) -> int:
        return self.width * self.height * self.bits_per_pixel


# Remote/local inference times are configurable stand-ins; only remote < local matters.
DEFAULT_RESOLUTIONS: tuple[ResolutionSpec, ...] = (
    ResolutionSpec("640x480", 640, 480, 24, 0.5, 1.5),
    ResolutionSpec("1280x720", 1280, 720, 24, 1.0, 3.0),
    ResolutionSpec("1920x1080", 1920, 1080, 24, 2.0, 6.0),
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for the synthetic highway generator.

    Arrivals follow a Poisson process. The rate comes either from
    `arrival_rate_per_s` directly or from `horizon_s` (rate = vehicles/horizon,
    so a bigger fleet over the same window means denser traffic). Entry times
    are floored to `entry_quantum_s` when it is > 0, mimicking the discrete
    time step of a road-traffic simulator; that is what makes simultaneous
    arrivals (and hence bandwidth sharing) possible at all.
    """

    num_vehicles: int = 200
    arrival_rate_per_s: float | None = None
    horizon_s: float | None = 120.0
    coverage_m: float = 600.0
    speed_range_mps: tuple[float, float] = (25.0, 35.0)
    pre_range_window_s: float = 30.0
    entry_quantum_s: float = 1.0
    num_servers: int = 2
    resolutions: tuple[ResolutionSpec, ...] = DEFAULT_RESOLUTIONS

    def __post_init__(self) -> None:
        if self.num_vehicles < 1:
            raise ConfigError("num_vehicles must be >= 1")
        if (self.arrival_rate_per_s is None) == (self.horizon_s is None):
            raise ConfigError("set exactly one of arrival_rate_per_s / horizon_s")
        if self.arrival_rate_per_s is not None and self.arrival_rate_per_s <= 0:
            raise ConfigError("arrival_rate_per_s must be > 0")
        if self.horizon_s is not None and self.horizon_s <= 0:
            raise ConfigError("horizon_s must be > 0")
        if self.coverage_m <= 0:
            raise ConfigError("coverage_m must be > 0")
        lo, hi = self.speed_range_mps
        if lo <= 0 or hi < lo:
            raise ConfigError(f"bad speed range {self.speed_range_mps}")
        if self.pre_range_window_s < 0 or self.entry_quantum_s < 0:
            raise ConfigError("pre_range_window_s and entry_quantum_s must be >= 0")
        if not self.resolutions:
            raise ConfigError("resolution table must not be empty")
        for r in self.resolutions:
            if r.size_bits <= 0 or r.remote_proc_s <= 0 or r.local_proc_s < r.remote_proc_s:
                raise ConfigError(f"bad resolution entry {r.name}")

    @property
    def arrival_rate(self) -> float:
        if self.arrival_rate_per_s is not None:
            return self.arrival_rate_per_s
        return self.num_vehicles / self.horizon_s

    def with_vehicles(self, n: int) -> "ScenarioConfig":
        return replace(self, num_vehicles=n)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "resolutions" in d:
            rows = []
            for row in d["resolutions"]:
                try:
                    rows.append(ResolutionSpec(
                        name=str(row.get("name", f"{row['width']}x{row['height']}")),
                        width=int(row["width"]),
                        height=int(row["height"]),
                        bits_per_pixel=int(row.get("bits_per_pixel", 24)),
                        remote_proc_s=float(row["remote_proc_s"]),
                        local_proc_s=float(row["local_proc_s"]),
                    ))
                except KeyError as exc:
                    raise ConfigError(f"resolution entry missing {exc}") from None
            d["resolutions"] = tuple(rows)
        if "speed_range_mps" in d:
            lo, hi = d["speed_range_mps"]
            d["speed_range_mps"] = (float(lo), float(hi))
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad scenario config: {exc}") from None


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw a reproducible scenario: same (config, seed) gives bit-identical output.

    Entry times come from a Poisson process (exponential inter-arrivals), one
    task per vehicle, generated uniformly between `pre_range_window_s` before
    entry and the coverage exit; sizes and processing times are looked up from
    the resolution table.
    """
    rng = np.random.default_rng(seed)
    rate = config.arrival_rate
    lo, hi = config.speed_range_mps
    quantum = config.entry_quantum_s

    vehicles: list[Vehicle] = []
    tasks: list[Task] = []
    entry_raw = 0.0
    for i in range(config.num_vehicles):
        entry_raw += rng.exponential(1.0 / rate)
        entry = math.floor(entry_raw / quantum) * quantum if quantum > 0 else entry_raw
        speed = rng.uniform(lo, hi)
        exit_ = entry + config.coverage_m / speed
        vehicles.append(Vehicle(
            id=i, speed_mps=speed, entry_time_s=entry, exit_time_s=exit_,
            entry_position_m=-config.coverage_m / 2.0,
        ))

        gen = rng.uniform(entry - config.pre_range_window_s, exit_)
        while gen >= exit_:  # uniform() is half-open but guard the rounding edge
            gen = rng.uniform(entry - config.pre_range_window_s, exit_)
        ready = max(gen, entry)
        res = config.resolutions[int(rng.integers(len(config.resolutions)))]
        tasks.append(Task(
            id=i, vehicle_id=i, size_bits=float(res.size_bits),
            generation_time_s=gen, ready_time_s=ready,
            range_deadline_s=exit_ - ready,
            remote_proc_time_s=res.remote_proc_s, local_proc_time_s=res.local_proc_s,
        ))

    return Scenario(radio=RadioParams(), vehicles=vehicles, tasks=tasks,
                    num_servers=config.num_servers, rng_seed=seed)


TRACE_COLUMNS = (
    "task_id", "vehicle_id", "size_bits", "generation_time_s", "ready_time_s",
    "range_deadline_s", "remote_proc_time_s", "local_proc_time_s",
    "entry_time_s", "exit_time_s", "speed_mps",
)


def write_trace(scenario: Scenario, path) -> None:
    """One task per line; floats use repr so a read-back is bit-exact."""
    r = scenario.radio
    lines = [
        "# vecsim-trace v1",
        f"# radio max_bandwidth_hz={r.max_bandwidth_hz!r} guard_band_fraction={r.guard_band_fraction!r} "
        f"transmit_power_w={r.transmit_power_w!r} channel_gain={r.channel_gain!r} noise_power_w={r.noise_power_w!r}",
        f"# num_servers={scenario.num_servers} rng_seed={scenario.rng_seed}",
        ",".join(TRACE_COLUMNS),
    ]
    for t in scenario.tasks:
        v = scenario.vehicle_of(t)
        lines.append(",".join(repr(x) for x in (
            t.id, t.vehicle_id, t.size_bits, t.generation_time_s, t.ready_time_s,
            t.range_deadline_s, t.remote_proc_time_s, t.local_proc_time_s,
            v.entry_time_s, v.exit_time_s, v.speed_mps,
        )))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace(path) -> Scenario:
    radio_kwargs: dict[str, float] = {}
    num_servers = 2
    rng_seed = 0
    vehicles: dict[int, Vehicle] = {}
    tasks: list[Task] = []
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    for ln in rows:
        if ln.startswith("#"):
            for token in ln[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    if k == "num_servers":
                        num_servers = int(v)
                    elif k == "rng_seed":
                        rng_seed = int(v)
                    else:
                        radio_kwargs[k] = float(v)
            continue
        if ln.startswith(TRACE_COLUMNS[0]):
            continue
        vals = ln.split(",")
        if len(vals) != len(TRACE_COLUMNS):
            raise ConfigError(f"malformed trace row: {ln!r}")
        tid, vid = int(vals[0]), int(vals[1])
        (size, gen, ready, deadline, remote, local, entry, exit_, speed) = map(float, vals[2:])
        if vid not in vehicles:
            vehicles[vid] = Vehicle(id=vid, speed_mps=speed, entry_time_s=entry, exit_time_s=exit_)
        tasks.append(Task(
            id=tid, vehicle_id=vid, size_bits=size, generation_time_s=gen,
            ready_time_s=ready, range_deadline_s=deadline,
            remote_proc_time_s=remote, local_proc_time_s=local,
        ))
    if not tasks:
        raise ConfigError(f"trace {path} holds no tasks")
    return Scenario(radio=RadioParams(**radio_kwargs) if radio_kwargs else RadioParams(),
                    vehicles=list(vehicles.values()), tasks=tasks,
                    num_servers=num_servers, rng_seed=rng_seed)

"""Vehicle trajectories: synthetic trip generation and trace file ingestion.

Trips are edge sequences with per-edge speeds; trajectories are timestamped
samples on the beacon lattice. Trace files round-trip bit-identically through
export and ingest.
"""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from typing import Iterable, TextIO

from .errors import OffNetwork, SynthesisFailed, TraceOrderError
from .roads import RoadGraph, point_along

# invented fleet mix: one common and two rare lengths so length classification
# has discriminating power
DEFAULT_LENGTH_TABLE_M = ((4.5, 0.80), (7.5, 0.12), (12.0, 0.08))
SPEED_FACTOR_RANGE = (0.6, 1.0)
VEHICLE_LENGTH_MIN_M = 3.0
VEHICLE_LENGTH_MAX_M = 18.0
# displacement between consecutive samples may exceed speed*dt (turns, edge
# changes mid-step) but never by more than this factor
KINEMATIC_SLACK = 1.5
TRACE_HEADER = ("time", "vehicle", "x", "y", "speed", "heading")


@dataclass(frozen=True)
class Trip:
    """One vehicle's route: departure time, edge sequence, per-edge speeds."""

    vehicle_id: str
    departure_s: float
    edge_ids: tuple[str, ...]
    speeds_mps: tuple[float, ...]
    length_m: float

    def __post_init__(self) -> None:
        if not self.edge_ids:
            raise ValueError("trip needs at least one edge")
        if len(self.speeds_mps) != len(self.edge_ids):
            raise ValueError("one speed per edge required")
        if any(s <= 0 for s in self.speeds_mps):
            raise ValueError("speeds must be positive")
        if not (VEHICLE_LENGTH_MIN_M <= self.length_m <= VEHICLE_LENGTH_MAX_M):
            raise ValueError(f"vehicle length {self.length_m} outside [3.0, 18.0] m")
        if abs(self.length_m * 10 - round(self.length_m * 10)) > 1e-9:
            raise ValueError("vehicle length must be a 0.1 m multiple")


@dataclass(frozen=True)
class TraceSample:
    """One timestamped observation of a vehicle."""

    time_s: float
    vehicle_id: str
    x: float
    y: float
    speed_mps: float
    heading_rad: float


@dataclass
class Trajectory:
    """Per-vehicle samples sorted by time, with edge attribution."""

    vehicle_id: str
    samples: tuple[TraceSample, ...]
    edge_offsets: tuple[tuple[str, float], ...]

    def time_span(self) -> tuple[float, float]:
        return self.samples[0].time_s, self.samples[-1].time_s

    def position_at(self, t: float) -> tuple[float, float]:
        """Linearly interpolated position; t must lie within the time span."""
        first, last = self.time_span()
        if not (first <= t <= last):
            raise ValueError(f"t={t} outside trajectory span [{first}, {last}]")
        lo, hi = 0, len(self.samples) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.samples[mid].time_s < t:
                lo = mid + 1
            else:
                hi = mid
        b = self.samples[lo]
        if b.time_s == t or lo == 0:
            return b.x, b.y
        a = self.samples[lo - 1]
        f = (t - a.time_s) / (b.time_s - a.time_s)
        return a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)


def validate_trip(g: RoadGraph, trip: Trip) -> None:
    """Check the route is a connected directed path within speed limits."""
    prev_head: str | None = None
    for eid, speed in zip(trip.edge_ids, trip.speeds_mps):
        e = g.edges[eid]
        if prev_head is not None and e.tail != prev_head:
            raise ValueError(f"edges do not chain at {eid}")
        if speed > e.speed_limit + 1e-9:
            raise ValueError(f"speed {speed} exceeds limit on {eid}")
        prev_head = e.head


def _draw_length(rng: random.Random, table: tuple[tuple[float, float], ...]) -> float:
    r = rng.random()
    acc = 0.0
    for length, weight in table:
        acc += weight
        if r < acc:
            return length
    return table[-1][0]


def synthesize_trips(
    g: RoadGraph,
    n_vehicles: int,
    arrival_rate_per_s: float,
    rng_seed: int,
    length_table: tuple[tuple[float, float], ...] = DEFAULT_LENGTH_TABLE_M,
) -> list[Trip]:
    """Generate shortest-path trips between uniform random junction pairs.

    Departures are Poisson-spaced at arrival_rate_per_s. A disconnected or
    degenerate pair is resampled up to 100 times before SynthesisFailed.
    Deterministic for a fixed seed.
    """
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    if arrival_rate_per_s <= 0:
        raise ValueError("arrival_rate_per_s must be positive")
    rng = random.Random(rng_seed)
    junction_ids = sorted(g.junctions)
    trips: list[Trip] = []
    clock = 0.0
    lo_f, hi_f = SPEED_FACTOR_RANGE
    for i in range(n_vehicles):
        clock += rng.expovariate(arrival_rate_per_s)
        path: list[str] | None = None
        for _ in range(100):
            a = rng.choice(junction_ids)
            b = rng.choice(junction_ids)
            if a == b:
                continue
            path = g.shortest_path(a, b)
            if path:
                break
            path = None
        if path is None:
            raise SynthesisFailed(
                f"no routable junction pair found in 100 draws (vehicle {i})"
            )
        speeds = tuple(
            g.edges[eid].speed_limit * rng.uniform(lo_f, hi_f) for eid in path
        )
        length = _draw_length(rng, length_table)
        trip = Trip(f"v{i:04d}", clock, tuple(path), speeds, length)
        validate_trip(g, trip)
        trips.append(trip)
    return trips


def trip_samples_with_edges(
    g: RoadGraph, trip: Trip, step_s: float
) -> list[tuple[TraceSample, str]]:
    """Evaluate a trip on the global step lattice (integer deciseconds),
    keeping the edge each sample falls on.

    The vehicle advances along each edge polyline at that edge's speed; the
    last sample falls strictly before arrival.
    """
    step_ds = round(step_s * 10)
    if step_ds < 1 or abs(step_ds - step_s * 10) > 1e-9:
        raise ValueError("step must be a positive decisecond multiple")
    # cumulative (start_elapsed, edge, speed) schedule
    schedule: list[tuple[float, str, float]] = []
    elapsed = 0.0
    for eid, speed in zip(trip.edge_ids, trip.speeds_mps):
        schedule.append((elapsed, eid, speed))
        elapsed += g.edges[eid].length / speed
    total = elapsed
    samples: list[tuple[TraceSample, str]] = []
    tick = math.ceil(trip.departure_s * 10 / step_ds) * step_ds
    seg = 0
    while True:
        t = tick / 10.0
        dt = t - trip.departure_s
        if dt >= total:
            break
        while seg + 1 < len(schedule) and schedule[seg + 1][0] <= dt:
            seg += 1
        start, eid, speed = schedule[seg]
        off = (dt - start) * speed
        x, y, heading = point_along(g.edges[eid].shape, off)
        samples.append((TraceSample(t, trip.vehicle_id, x, y, speed, heading), eid))
        tick += step_ds
    return samples


def trip_to_samples(g: RoadGraph, trip: Trip, step_s: float) -> list[TraceSample]:
    """Trip samples on the step lattice, without edge attribution."""
    return [s for s, _ in trip_samples_with_edges(g, trip, step_s)]


def merge_samples(per_vehicle: Iterable[Iterable[TraceSample]]) -> list[TraceSample]:
    """Interleave per-vehicle samples into one chronological trace."""
    rows = [s for veh in per_vehicle for s in veh]
    rows.sort(key=lambda s: (s.time_s, s.vehicle_id))
    return rows


def export_trace(samples: Iterable[TraceSample], fh: TextIO) -> None:
    """Write the canonical CSV trace: fixed decimals, stable byte-for-byte."""
    fh.write(",".join(TRACE_HEADER) + "\n")
    for s in samples:
        fh.write(
            f"{s.time_s:.1f},{s.vehicle_id},{s.x:.3f},{s.y:.3f},"
            f"{s.speed_mps:.3f},{s.heading_rad:.6f}\n"
        )


def ingest_trace(fh: TextIO, g: RoadGraph) -> dict[str, Trajectory]:
    """Parse a CSV trace into per-vehicle trajectories.

    Each position must snap to the graph within 5 m (heading picks the lane);
    per-vehicle times must strictly increase; displacement between consecutive
    samples is bounded by max(speeds) * dt * 1.5. Parsed coordinates are kept
    verbatim so export(ingest(x)) reproduces x.
    """
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(header) != TRACE_HEADER:
        raise ValueError(f"expected header {','.join(TRACE_HEADER)}")
    per_vehicle: dict[str, list[TraceSample]] = {}
    attributions: dict[str, list[tuple[str, float]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(row)}")
        t, veh = float(row[0]), row[1]
        x, y = float(row[2]), float(row[3])
        speed, heading = float(row[4]), float(row[5])
        sample = TraceSample(t, veh, x, y, speed, heading)
        bucket = per_vehicle.setdefault(veh, [])
        if bucket:
            prev = bucket[-1]
            if t <= prev.time_s:
                raise TraceOrderError(
                    f"line {lineno}: vehicle {veh} time {t} after {prev.time_s}"
                )
            dt = t - prev.time_s
            disp = math.hypot(x - prev.x, y - prev.y)
            bound = max(speed, prev.speed_mps) * dt * KINEMATIC_SLACK
            if disp > bound + 1e-9:
                raise ValueError(
                    f"line {lineno}: vehicle {veh} moved {disp:.3f} m in {dt:.1f} s"
                    f" at speed {max(speed, prev.speed_mps):.3f} m/s"
                )
        edge, off = g.snap((x, y), heading=heading)
        bucket.append(sample)
        attributions.setdefault(veh, []).append((edge, off))
    return {
        veh: Trajectory(veh, tuple(rows), tuple(attributions[veh]))
        for veh, rows in per_vehicle.items()
    }

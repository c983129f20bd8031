"""Interval meter data: CSV ingestion, validation, slicing, and synthesis.

Every reading is the energy (kWh) of its interval, so period integrals are
sums over intervals.  Timestamps are normalized to UTC at ingestion; a
constant-step, gap-free grid shared by every household is enforced before a
dataset reaches the billing engine.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, TextIO

import numpy as np

from .errors import (
    AlignmentError,
    MalformedRow,
    MixedResolution,
    NegativeEnergy,
    PeriodOutOfRange,
    UnalignedBoundary,
    UnknownHousehold,
)

DEFAULT_RESOLUTION = timedelta(minutes=15)


class MeterInterval(NamedTuple):
    start: datetime
    consumption: float
    generation: float


@dataclass(frozen=True)
class TimeGrid:
    """Uniform interval grid: ``length`` intervals of ``resolution`` from ``start``."""

    start: datetime
    resolution: timedelta
    length: int

    def __post_init__(self):
        if self.start.tzinfo is None:
            raise ValueError("grid start must be timezone-aware")
        if self.resolution <= timedelta(0):
            raise ValueError("grid resolution must be positive")
        if self.length < 1:
            raise ValueError("grid must contain at least one interval")

    @property
    def end(self) -> datetime:
        return self.start + self.length * self.resolution

    def timestamps(self) -> list[datetime]:
        return [self.start + k * self.resolution for k in range(self.length)]

    def index_of(self, ts: datetime, *, allow_end: bool = False) -> int:
        """Grid index of a boundary timestamp.

        Raises UnalignedBoundary when ``ts`` is not on the grid and
        PeriodOutOfRange when it falls outside the span.
        """
        delta = ts - self.start
        if delta % self.resolution != timedelta(0):
            raise UnalignedBoundary(f"{ts.isoformat()} is not on the {self.resolution} grid")
        k = delta // self.resolution
        hi = self.length if allow_end else self.length - 1
        if k < 0 or k > hi:
            raise PeriodOutOfRange(f"{ts.isoformat()} is outside the dataset span")
        return k


@dataclass(frozen=True)
class MeterSeries:
    """One household's consumption/generation energies on a uniform grid."""

    household_id: str
    grid: TimeGrid
    consumption: np.ndarray
    generation: np.ndarray

    def __post_init__(self):
        cons = np.asarray(self.consumption, dtype=np.float64)
        gen = np.asarray(self.generation, dtype=np.float64)
        if cons.shape != (self.grid.length,) or gen.shape != (self.grid.length,):
            raise ValueError(
                f"household {self.household_id!r}: expected {self.grid.length} readings, "
                f"got {cons.shape} consumption / {gen.shape} generation"
            )
        if not (np.isfinite(cons).all() and np.isfinite(gen).all()):
            raise MalformedRow(f"household {self.household_id!r}: non-finite energy value")
        if (cons < 0).any() or (gen < 0).any():
            raise NegativeEnergy(f"household {self.household_id!r}: negative energy value")
        cons.flags.writeable = False
        gen.flags.writeable = False
        object.__setattr__(self, "consumption", cons)
        object.__setattr__(self, "generation", gen)

    @property
    def resolution(self) -> timedelta:
        return self.grid.resolution

    def __len__(self) -> int:
        return self.grid.length

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeterSeries):
            return NotImplemented
        return (
            self.household_id == other.household_id
            and self.grid == other.grid
            and np.array_equal(self.consumption, other.consumption)
            and np.array_equal(self.generation, other.generation)
        )

    def intervals(self) -> Iterator[MeterInterval]:
        for ts, q, g in zip(self.grid.timestamps(), self.consumption, self.generation):
            yield MeterInterval(ts, float(q), float(g))

    def slice(self, period: BillingPeriod) -> MeterSeries:
        i0 = self.grid.index_of(period.t0, allow_end=True)
        i1 = self.grid.index_of(period.tf, allow_end=True)
        sub = TimeGrid(period.t0, self.grid.resolution, i1 - i0)
        return MeterSeries(self.household_id, sub, self.consumption[i0:i1], self.generation[i0:i1])


@dataclass(frozen=True)
class BillingPeriod:
    """Half-open billing window [t0, tf)."""

    t0: datetime
    tf: datetime

    def __post_init__(self):
        if self.t0.tzinfo is None or self.tf.tzinfo is None:
            raise ValueError("billing period boundaries must be timezone-aware")
        if self.t0 >= self.tf:
            raise PeriodOutOfRange(f"empty billing period: {self.t0} >= {self.tf}")


@dataclass(frozen=True)
class AlignmentViolation:
    household_id: str
    kind: str  # start-mismatch | resolution-mismatch | length-mismatch
    detail: str

    def __str__(self) -> str:
        return f"{self.household_id}: {self.kind} ({self.detail})"


@dataclass(frozen=True)
class CommunityDataset:
    """A set of households assumed to share one time grid.

    The raw constructor checks ids and per-series invariants only; grid
    alignment across households is reported by :func:`validate_alignment`
    and enforced by :func:`community_dataset` (used by every ingestion path).
    """

    households: tuple[MeterSeries, ...]
    grid: TimeGrid

    def __post_init__(self):
        object.__setattr__(self, "households", tuple(self.households))
        ids = [s.household_id for s in self.households]
        if len(set(ids)) != len(ids):
            dupes = sorted({h for h in ids if ids.count(h) > 1})
            raise ValueError(f"duplicate household ids: {dupes}")
        if not self.households:
            raise ValueError("dataset must contain at least one household")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.household_id for s in self.households)

    def series(self, household_id: str) -> MeterSeries:
        for s in self.households:
            if s.household_id == household_id:
                return s
        raise UnknownHousehold(f"no household {household_id!r} in dataset")

    def __eq__(self, other) -> bool:
        if not isinstance(other, CommunityDataset):
            return NotImplemented
        return self.grid == other.grid and self.households == other.households

    def span(self) -> BillingPeriod:
        return BillingPeriod(self.grid.start, self.grid.end)


def community_dataset(series: Iterable[MeterSeries]) -> CommunityDataset:
    """Build a dataset from series, enforcing the shared-grid invariant."""
    series = tuple(series)
    if not series:
        raise ValueError("dataset must contain at least one household")
    dataset = CommunityDataset(series, series[0].grid)
    violations = validate_alignment(dataset)
    if violations:
        raise AlignmentError(violations)
    return dataset


def validate_alignment(dataset: CommunityDataset) -> list[AlignmentViolation]:
    """One violation record per household whose grid differs from the dataset grid."""
    out: list[AlignmentViolation] = []
    ref = dataset.grid
    for s in dataset.households:
        g = s.grid
        if g.start != ref.start:
            out.append(AlignmentViolation(s.household_id, "start-mismatch",
                                          f"{g.start.isoformat()} != {ref.start.isoformat()}"))
        elif g.resolution != ref.resolution:
            out.append(AlignmentViolation(s.household_id, "resolution-mismatch",
                                          f"{g.resolution} != {ref.resolution}"))
        elif g.length != ref.length:
            out.append(AlignmentViolation(s.household_id, "length-mismatch",
                                          f"{g.length} != {ref.length}"))
    return out


def slice_period(dataset: CommunityDataset, period: BillingPeriod) -> CommunityDataset:
    """Dataset restricted to intervals with t0 <= start < tf, for every household."""
    return community_dataset(s.slice(period) for s in dataset.households)


# --- CSV ingestion -----------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for interval CSV files.

    Defaults match 15-minute smart-meter exports: ISO-8601 ``localminute``,
    ``dataid`` household key, ``use``/``gen`` energies in kWh.  A file without
    the generation column is read as generation 0.
    """

    timestamp: str = "localminute"
    household: str = "dataid"
    consumption: str = "use"
    generation: str = "gen"


DEFAULT_SCHEMA = CsvSchema()


def _parse_timestamp(raw: str, cache: dict[str, datetime]) -> datetime:
    ts = cache.get(raw)
    if ts is not None:
        return ts
    text = raw.strip()
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError:
        # tolerate a bare "+HH"/"-HH" UTC offset, which fromisoformat only
        # accepts from Python 3.11 on
        if len(text) >= 3 and text[-3] in "+-" and text[-2:].isdigit():
            parsed = datetime.fromisoformat(text + ":00")
        else:
            raise
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    else:
        parsed = parsed.astimezone(timezone.utc)
    cache[raw] = parsed
    return parsed


def _open_source(source) -> TextIO:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    return source


def parse_csv(
    source,
    schema: CsvSchema = DEFAULT_SCHEMA,
    *,
    fill_gaps: bool = False,
) -> CommunityDataset:
    """Read an interval CSV into a validated CommunityDataset.

    Rows are grouped by household (first-appearance order preserved) and
    sorted by timestamp.  The grid step is the smallest timestamp step seen;
    larger steps are gaps, rejected unless ``fill_gaps`` inserts zero-energy
    intervals for them.  Steps that are not whole multiples of the grid step
    raise MixedResolution either way.
    """
    stream = _open_source(source)
    close = isinstance(source, (str, Path))
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow("empty input: no header row")
        header = [h.strip() for h in header]
        try:
            c_ts = header.index(schema.timestamp)
            c_id = header.index(schema.household)
            c_q = header.index(schema.consumption)
        except ValueError as exc:
            raise MalformedRow(f"missing required column in header {header}: {exc}")
        c_g = header.index(schema.generation) if schema.generation in header else None

        ts_cache: dict[str, datetime] = {}
        rows: dict[str, list[tuple[datetime, float, float]]] = {}
        needed = max(c_ts, c_id, c_q, c_g if c_g is not None else 0)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) <= needed:
                raise MalformedRow(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = _parse_timestamp(row[c_ts], ts_cache)
                q = float(row[c_q]) if row[c_q].strip() else 0.0
                g = float(row[c_g]) if c_g is not None and row[c_g].strip() else 0.0
            except ValueError as exc:
                raise MalformedRow(f"line {lineno}: {exc}")
            if not (math.isfinite(q) and math.isfinite(g)):
                raise MalformedRow(f"line {lineno}: non-finite energy value")
            if q < 0 or g < 0:
                raise NegativeEnergy(f"line {lineno}: negative energy (use={q}, gen={g})")
            rows.setdefault(row[c_id].strip(), []).append((ts, q, g))
    finally:
        if close:
            stream.close()

    if not rows:
        raise MalformedRow("no data rows in input")

    resolution = _infer_resolution(rows)
    series = [
        _build_series(hid, sorted(recs), resolution, fill_gaps=fill_gaps)
        for hid, recs in rows.items()
    ]
    return community_dataset(series)


def _infer_resolution(rows: dict[str, list[tuple[datetime, float, float]]]) -> timedelta:
    best: timedelta | None = None
    for recs in rows.values():
        stamps = sorted(ts for ts, _, _ in recs)
        for a, b in zip(stamps, stamps[1:]):
            step = b - a
            if best is None or step < best:
                best = step
    return best if best is not None else DEFAULT_RESOLUTION


def _build_series(
    household_id: str,
    records: list[tuple[datetime, float, float]],
    resolution: timedelta,
    *,
    fill_gaps: bool,
) -> MeterSeries:
    stamps = [r[0] for r in records]
    for a, b in zip(stamps, stamps[1:]):
        if a == b:
            raise MixedResolution(f"household {household_id!r}: duplicate timestamp {a.isoformat()}")
    start, end = stamps[0], stamps[-1]
    span = end - start
    if span % resolution != timedelta(0):
        raise MixedResolution(
            f"household {household_id!r}: timestamps are not multiples of the {resolution} grid step"
        )
    length = span // resolution + 1
    if length != len(records):
        if not fill_gaps:
            raise MixedResolution(
                f"household {household_id!r}: gap in series "
                f"({len(records)} readings over {length} grid slots); "
                "pass fill_gaps=True to zero-fill"
            )
    cons = np.zeros(length)
    gen = np.zeros(length)
    for ts, q, g in records:
        offset = ts - start
        if offset % resolution != timedelta(0):
            raise MixedResolution(
                f"household {household_id!r}: {ts.isoformat()} is off the {resolution} grid"
            )
        k = offset // resolution
        cons[k] = q
        gen[k] = g
    grid = TimeGrid(start, resolution, length)
    return MeterSeries(household_id, grid, cons, gen)


def render_csv(dataset: CommunityDataset, schema: CsvSchema = DEFAULT_SCHEMA) -> str:
    """Inverse of parse_csv: full-precision values, household blocks in dataset order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow([schema.timestamp, schema.household, schema.consumption, schema.generation])
    for s in dataset.households:
        for iv in s.intervals():
            writer.writerow([iv.start.isoformat(), s.household_id,
                             repr(iv.consumption), repr(iv.generation)])
    return buf.getvalue()


# --- synthetic communities ----------------------------------------------------

@dataclass(frozen=True)
class SynthProfile:
    """Shape parameters for synthetic meter data.

    ``envelope`` (values in [0, 1], tiled over the horizon) scales raw PV
    draws; when absent and ``day_night_pv`` is set, a half-sine daylight
    envelope over ``intervals_per_day`` is used, zero at night.
    """

    consumption_mean: float = 0.5
    generation_mean: float = 0.4
    day_night_pv: bool = True
    intervals_per_day: int = 96
    envelope: tuple[float, ...] | None = None


DEFAULT_PROFILE = SynthProfile()


def _pv_envelope(t: int, profile: SynthProfile) -> np.ndarray:
    if profile.envelope is not None:
        pattern = np.asarray(profile.envelope, dtype=np.float64)
        reps = -(-t // len(pattern))
        return np.tile(pattern, reps)[:t]
    if not profile.day_night_pv:
        return np.ones(t)
    ipd = profile.intervals_per_day
    phase = np.arange(t) % ipd
    day = np.sin(np.pi * (phase - ipd / 4) / (ipd / 2))
    return np.clip(day, 0.0, None)


def synth_community(
    n: int,
    t: int,
    profile: SynthProfile = DEFAULT_PROFILE,
    seed: int = 0,
    *,
    start: datetime = datetime(2016, 1, 1, tzinfo=timezone.utc),
    resolution: timedelta = DEFAULT_RESOLUTION,
) -> CommunityDataset:
    """Deterministic synthetic community: pure function of its arguments."""
    if n < 1 or t < 1:
        raise ValueError("need at least one household and one interval")
    rng = np.random.default_rng(seed)
    env = _pv_envelope(t, profile)
    grid = TimeGrid(start, resolution, t)
    width = len(str(n))
    series = []
    for k in range(n):
        cons = rng.gamma(2.0, profile.consumption_mean / 2.0, size=t)
        gen = rng.gamma(2.0, profile.generation_mean / 2.0, size=t) * env
        hid = f"h{k + 1:0{width}d}"
        series.append(MeterSeries(hid, grid, cons, gen))
    return community_dataset(series)


# --- billing calendar ---------------------------------------------------------

def month_periods(dataset: CommunityDataset) -> list[tuple[str, BillingPeriod]]:
    """Calendar months (UTC) intersecting the dataset span, clamped to it."""
    start, end = dataset.grid.start, dataset.grid.end
    out = []
    cursor = start.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    while cursor < end:
        nxt = _next_month(cursor)
        t0 = max(cursor, start)
        tf = min(nxt, end)
        if t0 < tf:
            out.append((f"{cursor.year:04d}-{cursor.month:02d}", BillingPeriod(t0, tf)))
        cursor = nxt
    return out


def window_periods(dataset: CommunityDataset, intervals: int) -> list[tuple[str, BillingPeriod]]:
    """Fixed-length billing windows of ``intervals`` grid steps."""
    if intervals < 1:
        raise ValueError("window must cover at least one interval")
    grid = dataset.grid
    out = []
    for w, i0 in enumerate(range(0, grid.length, intervals)):
        i1 = min(i0 + intervals, grid.length)
        t0 = grid.start + i0 * grid.resolution
        tf = grid.start + i1 * grid.resolution
        out.append((f"w{w + 1:03d}", BillingPeriod(t0, tf)))
    return out


def _next_month(month_start: datetime) -> datetime:
    if month_start.month == 12:
        return month_start.replace(year=month_start.year + 1, month=1)
    return month_start.replace(month=month_start.month + 1)

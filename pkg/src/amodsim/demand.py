"""Trip demand: CSV ingestion with cleaning, and a seeded synthetic generator.

Request times are seconds relative to the earliest kept row. Every discarded
row is counted under exactly one rejection reason so the cleaning report
balances against rows read.
"""

import csv
import math
import random
from dataclasses import dataclass, field
from datetime import datetime

from .geo import GeoPoint

# lon_min, lat_min, lon_max, lat_max
NYC_BBOX = (-74.30, 40.45, -73.65, 41.00)

PATIENCE_MIN_S = 60.0
PATIENCE_MAX_S = 3600.0

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"

# Canonical column names; the dataset spells longitude as "log".
DEFAULT_COLUMNS = {
    "medallion": "medallion",
    "pickup_time": "pickup time",
    "dropoff_time": "dropoff time",
    "passenger_count": "passenger count",
    "pickup_lon": "pickup log",
    "pickup_lat": "pickup lat",
    "dropoff_lon": "dropoff log",
    "dropoff_lat": "dropoff lat",
}

REJECT_UNPARSEABLE = "unparseable"
REJECT_BAD_COORDINATES = "bad-coordinates"
REJECT_OUT_OF_BOUNDS = "out-of-bounds"
REJECT_NON_POSITIVE_DURATION = "non-positive-duration"
REJECT_OVERSIZE_PARTY = "oversize-party"
REJECTION_REASONS = (REJECT_UNPARSEABLE, REJECT_BAD_COORDINATES, REJECT_OUT_OF_BOUNDS,
                     REJECT_NON_POSITIVE_DURATION, REJECT_OVERSIZE_PARTY)


class DemandFormatError(ValueError):
    pass


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class TripRequest:
    id: int
    medallion: str
    request_time_s: float
    pickup: GeoPoint
    dropoff: GeoPoint
    party_size: int
    patience_s: float

    def __post_init__(self):
        if self.request_time_s < 0:
            raise ValueError(f"request {self.id}: negative request time")
        if self.party_size < 1:
            raise ValueError(f"request {self.id}: party size {self.party_size} < 1")
        if not (PATIENCE_MIN_S <= self.patience_s <= PATIENCE_MAX_S):
            raise ValueError(
                f"request {self.id}: patience {self.patience_s} outside "
                f"[{PATIENCE_MIN_S}, {PATIENCE_MAX_S}]")


@dataclass
class CleaningReport:
    rows_read: int = 0
    rows_kept: int = 0
    rejections: dict[str, int] = field(default_factory=lambda: {r: 0 for r in REJECTION_REASONS})
    epoch_iso: str | None = None

    def balances(self) -> bool:
        return self.rows_read == self.rows_kept + sum(self.rejections.values())

    def as_text(self) -> str:
        lines = [f"rows_read {self.rows_read}", f"rows_kept {self.rows_kept}"]
        for reason in REJECTION_REASONS:
            lines.append(f"rejected[{reason}] {self.rejections[reason]}")
        if self.epoch_iso:
            lines.append(f"epoch {self.epoch_iso}")
        return "\n".join(lines) + "\n"


def _coords_invalid(lat: float, lon: float) -> bool:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return True
    if lat == 0.0 and lon == 0.0:  # null island rows are sensor dropouts
        return True
    return not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0)


def parse_trips(csv_path: str, bbox: tuple[float, float, float, float] = NYC_BBOX,
                capacity: int = 4, rng_seed: int = 0,
                columns: dict[str, str] | None = None,
                ) -> tuple[list[TripRequest], CleaningReport]:
    """Read trip rows, keep the clean ones, attach seeded patience values.

    Returns requests sorted by (request_time_s, id); ids count kept rows in
    file order. One rejection reason per bad row, checked in a fixed order
    (parse errors, coordinates, bounds, duration, party size).
    """
    cols = dict(DEFAULT_COLUMNS)
    if columns:
        cols.update(columns)
    report = CleaningReport()
    kept: list[tuple[datetime, str, GeoPoint, GeoPoint, int]] = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [v for v in cols.values() if v not in header]
        if missing:
            raise DemandFormatError(f"{csv_path}: missing columns {missing}; header {header}")
        for row in reader:
            report.rows_read += 1
            try:
                pickup_dt = datetime.strptime(row[cols["pickup_time"]].strip(), TIMESTAMP_FORMAT)
                dropoff_dt = datetime.strptime(row[cols["dropoff_time"]].strip(), TIMESTAMP_FORMAT)
                party = int(row[cols["passenger_count"]].strip())
                plat = float(row[cols["pickup_lat"]].strip())
                plon = float(row[cols["pickup_lon"]].strip())
                dlat = float(row[cols["dropoff_lat"]].strip())
                dlon = float(row[cols["dropoff_lon"]].strip())
                medallion = (row[cols["medallion"]] or "").strip()
                if party < 1:
                    raise ValueError("party below 1")
            except (ValueError, TypeError, AttributeError):
                report.rejections[REJECT_UNPARSEABLE] += 1
                continue
            if _coords_invalid(plat, plon) or _coords_invalid(dlat, dlon):
                report.rejections[REJECT_BAD_COORDINATES] += 1
                continue
            lon_min, lat_min, lon_max, lat_max = bbox
            if not (lon_min <= plon <= lon_max and lat_min <= plat <= lat_max and
                    lon_min <= dlon <= lon_max and lat_min <= dlat <= lat_max):
                report.rejections[REJECT_OUT_OF_BOUNDS] += 1
                continue
            if dropoff_dt <= pickup_dt:
                report.rejections[REJECT_NON_POSITIVE_DURATION] += 1
                continue
            if party > capacity:
                report.rejections[REJECT_OVERSIZE_PARTY] += 1
                continue
            kept.append((pickup_dt, medallion, GeoPoint(plat, plon), GeoPoint(dlat, dlon), party))
    report.rows_kept = len(kept)
    if not kept:
        return [], report
    epoch = min(item[0] for item in kept)
    report.epoch_iso = epoch.strftime(TIMESTAMP_FORMAT)
    order = sorted(range(len(kept)), key=lambda i: ((kept[i][0] - epoch).total_seconds(), i))
    rng = random.Random(rng_seed)
    requests = []
    for idx in order:
        pickup_dt, medallion, pickup, dropoff, party = kept[idx]
        t_s = (pickup_dt - epoch).total_seconds()
        patience = rng.uniform(PATIENCE_MIN_S, PATIENCE_MAX_S)
        requests.append(TripRequest(idx, medallion, t_s, pickup, dropoff, party, patience))
    return requests, report


def generate_demand(rate_per_hour: float, duration_s: float, *,
                    bbox: tuple[float, float, float, float] | None = None,
                    zone_map=None,
                    party_probs: tuple[float, ...] = (0.7, 0.15, 0.1, 0.05),
                    seed: int = 0,
                    patience_range: tuple[float, float] = (PATIENCE_MIN_S, PATIENCE_MAX_S),
                    ) -> list[TripRequest]:
    """Poisson arrivals with uniform pickup/dropoff locations.

    Region is either a bbox or the union of a ZoneMap's polygons (points are
    rejection-sampled from the covering box). Same seed, same output.
    """
    if rate_per_hour < 0:
        raise GenerationError(f"negative rate {rate_per_hour}")
    if zone_map is None and bbox is None:
        raise GenerationError("either bbox or zone_map is required")
    if zone_map is not None and len(zone_map) == 0:
        raise GenerationError("zone_map has no zones")
    if bbox is not None:
        lon_min, lat_min, lon_max, lat_max = bbox
        if not (lon_max > lon_min and lat_max > lat_min):
            raise GenerationError(f"degenerate bbox {bbox}")
    if zone_map is not None:
        boxes = [z.boundary.bbox for z in zone_map.zones]
        lon_min = min(b[0] for b in boxes)
        lat_min = min(b[1] for b in boxes)
        lon_max = max(b[2] for b in boxes)
        lat_max = max(b[3] for b in boxes)
        if not (lon_max > lon_min and lat_max > lat_min):
            raise GenerationError("zones cover a degenerate region")
    if rate_per_hour == 0.0 or duration_s <= 0.0:
        return []
    if abs(sum(party_probs) - 1.0) > 1e-9 or any(p < 0 for p in party_probs):
        raise GenerationError(f"party_probs must be a distribution, got {party_probs}")
    lo_p, hi_p = patience_range
    if not (PATIENCE_MIN_S <= lo_p <= hi_p <= PATIENCE_MAX_S):
        raise GenerationError(f"patience range {patience_range} outside "
                              f"[{PATIENCE_MIN_S}, {PATIENCE_MAX_S}]")

    rng = random.Random(seed)
    rate_per_s = rate_per_hour / 3600.0

    def draw_point() -> GeoPoint:
        for _ in range(100_000):
            p = GeoPoint(rng.uniform(lat_min, lat_max), rng.uniform(lon_min, lon_max))
            if zone_map is None or zone_map.locate(p) is not None:
                return p
        raise GenerationError("rejection sampling failed; zones cover too little of their box")

    requests = []
    t = rng.expovariate(rate_per_s)
    rid = 0
    while t <= duration_s:
        pickup = draw_point()
        dropoff = draw_point()
        party = rng.choices(range(1, len(party_probs) + 1), weights=party_probs)[0]
        patience = rng.uniform(lo_p, hi_p)
        requests.append(TripRequest(rid, f"syn-{rid}", t, pickup, dropoff, party, patience))
        rid += 1
        t += rng.expovariate(rate_per_s)
    return requests

"""Great-circle error metrics: Acc@161, mean and median error in km."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import GeoPoint

EARTH_RADIUS_KM = 6371.0
ACC_THRESHOLD_KM = 161.0


class EvalError(ValueError):
    pass


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class Metrics:
    acc161: float
    mean_km: float
    median_km: float
    per_user_km: dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return len(self.per_user_km)

    def to_json(self, per_user: bool = False) -> dict:
        obj = {"acc161": self.acc161, "mean_km": self.mean_km,
               "median_km": self.median_km, "n": self.n}
        if per_user:
            obj["per_user_km"] = dict(sorted(self.per_user_km.items()))
        return obj


def evaluate(preds: Mapping[str, GeoPoint], gold: Mapping[str, GeoPoint]) -> Metrics:
    missing_pred = sorted(set(gold) - set(preds))
    missing_gold = sorted(set(preds) - set(gold))
    if missing_pred or missing_gold:
        raise EvalError(
            f"user sets differ: no prediction for {missing_pred[:10]}, "
            f"no gold for {missing_gold[:10]}")
    if not gold:
        raise EvalError("nothing to evaluate")
    return metrics_from_errors({u: haversine_km(preds[u], gold[u]) for u in sorted(gold)})


def metrics_from_errors(errors: Mapping[str, float]) -> Metrics:
    """Summarise per-user errors (km); Acc@161 is inclusive, even-count median is lower-middle."""
    if not errors:
        raise EvalError("nothing to evaluate")
    errors = dict(errors)
    values = sorted(errors.values())
    n = len(values)
    return Metrics(
        acc161=sum(1 for e in values if e <= ACC_THRESHOLD_KM) / n,
        # math.fsum keeps the mean independent of summation order
        mean_km=math.fsum(values) / n,
        median_km=values[(n - 1) // 2],
        per_user_km=errors,
    )


def format_table(rows: Sequence[tuple[str, Metrics]]) -> str:
    """Plain-text table, one variant per row: Acc@161 (%), Mean and Median (km)."""
    width = max([len("Variant")] + [len(name) for name, _ in rows])
    lines = [f"{'Variant':<{width}}  {'Acc@161':>7}  {'Mean':>7}  {'Median':>7}"]
    for name, m in rows:
        lines.append(f"{name:<{width}}  {100 * m.acc161:>7.1f}  {m.mean_km:>7.0f}  {m.median_km:>7.0f}")
    return "\n".join(lines) + "\n"


def metrics_json(rows: Sequence[tuple[str, Metrics]]) -> str:
    return json.dumps({name: m.to_json() for name, m in rows}, indent=2) + "\n"

"""User records, dataset files and @-mention extraction.

A dataset is an ordered list of users, each represented by one
meta-document (all of their messages concatenated) and a gold home
location.  Two on-disk layouts are supported:

* TSV, no header, columns ``user_id  lat  lon  split  text``
* JSONL, one object per line with the same five keys
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

SPLITS = ("train", "dev", "test")
FORMATS = ("tsv", "jsonl")

# '@' must not be preceded by a word character, so e-mail addresses are skipped.
_MENTION_RE = re.compile(r"(?<![A-Za-z0-9_])@([A-Za-z0-9_]+)")


class DataError(ValueError):
    """Raised for unreadable or invalid dataset input."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise DataError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise DataError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    location: GeoPoint
    text: str
    split: str

    def __post_init__(self):
        if not self.user_id:
            raise DataError("empty user_id")
        if self.split not in SPLITS:
            raise DataError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass(frozen=True)
class Dataset:
    records: tuple[UserRecord, ...]
    map_center: GeoPoint

    @classmethod
    def from_records(cls, records: Iterable[UserRecord]) -> "Dataset":
        """Validate records and derive the map center (bounding-box midpoint)."""
        records = tuple(records)
        seen = set()
        for r in records:
            if r.user_id in seen:
                raise DataError(f"duplicate user_id {r.user_id!r}")
            seen.add(r.user_id)
        if not any(r.split == "train" for r in records):
            raise DataError("dataset has no train records")
        lats = [r.location.lat for r in records]
        lons = [r.location.lon for r in records]
        center = GeoPoint((min(lats) + max(lats)) / 2.0, (min(lons) + max(lons)) / 2.0)
        return cls(records, center)

    def split(self, name: str) -> list[UserRecord]:
        return [r for r in self.records if r.split == name]

    def by_id(self) -> dict[str, UserRecord]:
        return {r.user_id: r for r in self.records}

    def __len__(self):
        return len(self.records)


def extract_mentions(text: str) -> list[str]:
    """Return lowercased @-handles in order, keeping duplicates.

    >>> extract_mentions("hi @Bob see @carol and @bob")
    ['bob', 'carol', 'bob']
    >>> extract_mentions("email me at x@y.com")
    []
    """
    return [m.lower() for m in _MENTION_RE.findall(text)]


def _make_record(line_no, user_id, lat, lon, split, text) -> UserRecord:
    try:
        lat, lon = float(lat), float(lon)
    except (TypeError, ValueError):
        raise DataError(f"line {line_no}: bad coordinate ({lat!r}, {lon!r})") from None
    if not isinstance(user_id, str) or not isinstance(text, str):
        raise DataError(f"line {line_no}: user_id and text must be strings")
    try:
        return UserRecord(user_id.lower(), GeoPoint(lat, lon), text, split)
    except DataError as exc:
        raise DataError(f"line {line_no}: {exc}") from None


def _parse_tsv(lines) -> list[UserRecord]:
    records = []
    for line_no, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise DataError(f"line {line_no}: expected 5 tab-separated columns, got {len(cols)}")
        records.append(_make_record(line_no, *cols))
    return records


def _parse_jsonl(lines) -> list[UserRecord]:
    records = []
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            fields = [obj[k] for k in ("user_id", "lat", "lon", "split", "text")]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"line {line_no}: {exc}") from None
        records.append(_make_record(line_no, *fields))
    return records


def guess_format(path) -> str:
    return "jsonl" if str(path).endswith((".jsonl", ".json")) else "tsv"


def load_dataset(path, format: str | None = None) -> Dataset:
    format = format or guess_format(path)
    if format not in FORMATS:
        raise DataError(f"unknown dataset format {format!r}")
    try:
        with open(path, encoding="utf-8", newline="\n") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(str(exc)) from None
    records = _parse_tsv(lines) if format == "tsv" else _parse_jsonl(lines)
    return Dataset.from_records(records)


def dumps_dataset(dataset: Dataset, format: str = "tsv") -> str:
    out = []
    for r in dataset.records:
        if format == "tsv":
            if "\t" in r.text or "\n" in r.text or "\r" in r.text:
                raise DataError(f"text of {r.user_id!r} contains a tab or newline")
            out.append(f"{r.user_id}\t{r.location.lat!r}\t{r.location.lon!r}\t{r.split}\t{r.text}\n")
        elif format == "jsonl":
            obj = {"user_id": r.user_id, "lat": r.location.lat, "lon": r.location.lon,
                   "split": r.split, "text": r.text}
            out.append(json.dumps(obj, ensure_ascii=False) + "\n")
        else:
            raise DataError(f"unknown dataset format {format!r}")
    return "".join(out)


def write_dataset(dataset: Dataset, path, format: str | None = None) -> None:
    atomic_write_text(path, dumps_dataset(dataset, format or guess_format(path)))


def atomic_write_text(path, content: str) -> None:
    """Write to a sibling temp file and rename over ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)
    os.replace(tmp, path)


def mention_table(records: Sequence[UserRecord]) -> dict[str, list[str]]:
    """Raw mention multiset for each of ``records``."""
    return {r.user_id: extract_mentions(r.text) for r in records}

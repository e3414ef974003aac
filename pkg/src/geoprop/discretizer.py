"""Adaptive k-d tree grid over training coordinates.

Leaves of the tree are the class labels ("cells").  Each internal node
splits its points at the lower-middle median of the wider side of their
bounding box, with ties going left.  Splitting stops once a node holds at
most ``bucket_size`` points or all of its points coincide.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import GeoPoint, atomic_write_text


class DiscretizerError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    members: tuple[int, ...]  # indices into Discretizer.points
    bbox: tuple[float, float, float, float]  # lat_min, lon_min, lat_max, lon_max
    median_point: GeoPoint


def lower_median(values) -> float:
    s = np.sort(np.asarray(values, dtype=float))
    return float(s[(len(s) - 1) // 2])


@dataclass(frozen=True)
class Discretizer:
    points: np.ndarray  # (N, 2) lat/lon, training points in input order
    bucket_size: int
    nodes: tuple  # ("split", dim, value, left, right) or ("leaf", cell_id)
    cells: tuple[Cell, ...]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def point_cells(self) -> np.ndarray:
        """Cell id of every training point, by leaf membership."""
        out = np.empty(len(self.points), dtype=np.int64)
        for cid, cell in enumerate(self.cells):
            out[list(cell.members)] = cid
        return out

    def assign_cell(self, p: GeoPoint) -> int:
        return assign_cell(self, p)

    def cell_to_point(self, cell_id: int) -> GeoPoint:
        return cell_to_point(self, cell_id)

    def to_json(self) -> dict:
        return {
            "bucket_size": self.bucket_size,
            "points": self.points.tolist(),
            "nodes": [list(n) for n in self.nodes],
            "cells": [
                {"members": list(c.members), "bbox": list(c.bbox),
                 "median": [c.median_point.lat, c.median_point.lon]}
                for c in self.cells
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Discretizer":
        cells = tuple(
            Cell(tuple(c["members"]), tuple(c["bbox"]), GeoPoint(*c["median"]))
            for c in obj["cells"]
        )
        nodes = tuple(tuple(n) for n in obj["nodes"])
        points = np.asarray(obj["points"], dtype=float).reshape(-1, 2)
        return cls(points, int(obj["bucket_size"]), nodes, cells)

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "Discretizer":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _as_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=float).reshape(-1, 2)
    return np.array([[p.lat, p.lon] for p in points], dtype=float).reshape(-1, 2)


def build_kdtree(points: Sequence[GeoPoint] | np.ndarray, bucket_size: int) -> Discretizer:
    pts = _as_array(points)
    if len(pts) == 0:
        raise DiscretizerError("cannot build a k-d tree over zero points")
    if bucket_size < 1:
        raise DiscretizerError("bucket_size must be >= 1")

    nodes: list = []
    cells: list[Cell] = []

    def build(idx: np.ndarray) -> int:
        node_id = len(nodes)
        nodes.append(None)
        sub = pts[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        if len(idx) <= bucket_size or np.all(lo == hi):
            nodes[node_id] = ("leaf", len(cells))
            cells.append(Cell(
                members=tuple(int(i) for i in idx),
                bbox=(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])),
                median_point=GeoPoint(lower_median(sub[:, 0]), lower_median(sub[:, 1])),
            ))
            return node_id
        width = hi - lo
        dim = 0 if width[0] >= width[1] else 1
        vals = sub[:, dim]
        ordered = np.sort(vals)
        split = ordered[(len(ordered) - 1) // 2]
        if split >= ordered[-1]:
            # median tied with the maximum: split just below it so both sides are non-empty
            split = ordered[ordered < ordered[-1]][-1]
        mask = vals <= split
        left = build(idx[mask])
        right = build(idx[~mask])
        nodes[node_id] = ("split", dim, float(split), left, right)
        return node_id

    build(np.arange(len(pts)))
    return Discretizer(pts, int(bucket_size), tuple(nodes), tuple(cells))


def assign_cell(d: Discretizer, p: GeoPoint) -> int:
    coord = (p.lat, p.lon)
    node = d.nodes[0]
    while node[0] == "split":
        _, dim, split, left, right = node
        node = d.nodes[left if coord[dim] <= split else right]
    return int(node[1])


def cell_to_point(d: Discretizer, cell_id: int) -> GeoPoint:
    if not 0 <= cell_id < d.n_cells:
        raise DiscretizerError(f"cell id {cell_id} outside [0, {d.n_cells})")
    return d.cells[cell_id].median_point

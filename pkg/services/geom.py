"""
Conteos por región y distancias a conjuntos de puntos, segmentos y arcos.
"""
from __future__ import annotations

import math
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist

from models.geometry import Arc, PointPattern, Region, Segment, SegmentSet
from utils.errors import DomainError, EmptyTargetError

Target = Union[SegmentSet, PointPattern]


def points_in_region(pattern: PointPattern, region: Region) -> np.ndarray:
    if len(pattern) == 0:
        return np.zeros(0, dtype=bool)
    return region.contains(pattern.points)


def count_in_region(pattern: PointPattern, region: Region) -> int:
    """|{s en el patrón : s en la región}| con la convención semiabierta."""
    if len(pattern) and not np.all(region.window.contains(pattern.points)):
        raise DomainError("El patrón tiene puntos fuera de la ventana de la región")
    return int(np.count_nonzero(points_in_region(pattern, region)))


def _segment_distances(xy: np.ndarray, seg: Segment) -> np.ndarray:
    a = np.array([seg.x0, seg.y0])
    d = np.array([seg.x1 - seg.x0, seg.y1 - seg.y0])
    length2 = float(d @ d)
    if length2 == 0.0:
        return np.hypot(xy[:, 0] - a[0], xy[:, 1] - a[1])
    t = np.clip(((xy - a) @ d) / length2, 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.hypot(xy[:, 0] - proj[:, 0], xy[:, 1] - proj[:, 1])


def _arc_distances(xy: np.ndarray, arc: Arc) -> np.ndarray:
    dx = xy[:, 0] - arc.cx
    dy = xy[:, 1] - arc.cy
    r = np.hypot(dx, dy)
    # proyección angular recortada: dentro del barrido la distancia es radial
    theta = np.mod(np.arctan2(dy, dx) - arc.start_angle, 2 * math.pi)
    inside = theta <= arc.span
    (ex0, ey0), (ex1, ey1) = arc.endpoints()
    to_ends = np.minimum(np.hypot(xy[:, 0] - ex0, xy[:, 1] - ey0), np.hypot(xy[:, 0] - ex1, xy[:, 1] - ey1))
    radial = np.abs(r - arc.radius)
    # en el centro todos los puntos del arco están a distancia radius
    return np.where(inside | (r == 0.0), radial, to_ends)


def distances_to_set(xy: np.ndarray, target: Target) -> np.ndarray:
    """Distancia euclídea mínima de cada fila de xy al conjunto objetivo."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float)).reshape(-1, 2)
    if isinstance(target, PointPattern):
        if len(target) == 0:
            raise EmptyTargetError("Patrón objetivo vacío: aplicar la convención de historia vacía")
        if len(xy) == 0:
            return np.zeros(0)
        return cdist(xy, target.points).min(axis=1)

    if len(target) == 0:
        raise EmptyTargetError("Red de segmentos vacía")
    best = np.full(len(xy), np.inf)
    for seg in target.segments:
        if isinstance(seg, Segment):
            best = np.minimum(best, _segment_distances(xy, seg))
        else:
            best = np.minimum(best, _arc_distances(xy, seg))
    return best


def distance_to_set(point, target: Target) -> float:
    return float(distances_to_set(np.asarray(point, dtype=float).reshape(1, 2), target)[0])

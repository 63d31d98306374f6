"""
Geometría plana: ventana de observación, regiones rectangulares, patrones
puntuales y redes de segmentos/arcos.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from utils.errors import DomainError

Point = Tuple[float, float]


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise DomainError(f"Rectángulo degenerado: {self.to_list()}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def contains_rect(self, other: "Rect") -> bool:
        return (
            other.x0 >= self.x0 and other.x1 <= self.x1
            and other.y0 >= self.y0 and other.y1 <= self.y1
        )

    def overlaps(self, other: "Rect") -> bool:
        """Solapamiento con área positiva (compartir borde no cuenta)."""
        return (
            min(self.x1, other.x1) > max(self.x0, other.x0)
            and min(self.y1, other.y1) > max(self.y0, other.y0)
        )

    def to_list(self) -> List[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class Window:
    bounds: Rect

    @classmethod
    def unit_square(cls) -> "Window":
        return cls(Rect(0.0, 0.0, 1.0, 1.0))

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Window":
        if len(values) != 4:
            raise DomainError("La ventana se declara como [x0, y0, x1, y1]")
        return cls(Rect(*(float(v) for v in values)))

    @property
    def area(self) -> float:
        return self.bounds.area

    @property
    def width(self) -> float:
        return self.bounds.x1 - self.bounds.x0

    @property
    def height(self) -> float:
        return self.bounds.y1 - self.bounds.y0

    def contains(self, xy: np.ndarray) -> np.ndarray:
        """Pertenencia cerrada a la ventana, vectorizada sobre filas (x, y)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        b = self.bounds
        return (
            (xy[:, 0] >= b.x0) & (xy[:, 0] <= b.x1)
            & (xy[:, 1] >= b.y0) & (xy[:, 1] <= b.y1)
        )

    def to_dict(self):
        return {'bounds': self.bounds.to_list()}


def _half_open_mask(xy: np.ndarray, rect: Rect, window: Window) -> np.ndarray:
    # [x0,x1) x [y0,y1), cerrado sobre los bordes máximos de la ventana
    b = window.bounds
    x, y = xy[:, 0], xy[:, 1]
    in_x = (x >= rect.x0) & ((x < rect.x1) | ((rect.x1 == b.x1) & (x == b.x1)))
    in_y = (y >= rect.y0) & ((y < rect.y1) | ((rect.y1 == b.y1) & (y == b.y1)))
    return in_x & in_y


@dataclass(frozen=True)
class Region:
    """Unión de rectángulos disjuntos contenidos en la ventana."""

    window: Window
    parts: Tuple[Rect, ...]
    label: str = ""

    def __post_init__(self):
        if not self.parts:
            raise DomainError("La región necesita al menos un rectángulo")
        for part in self.parts:
            if not self.window.bounds.contains_rect(part):
                raise DomainError(f"Rectángulo {part.to_list()} fuera de la ventana")
        for i, a in enumerate(self.parts):
            for b in self.parts[i + 1:]:
                if a.overlaps(b):
                    raise DomainError("Las partes de la región deben ser disjuntas")

    @classmethod
    def whole(cls, window: Window, label: str = "window") -> "Region":
        return cls(window, (window.bounds,), label)

    @property
    def area(self) -> float:
        return float(sum(p.area for p in self.parts))

    def contains(self, xy: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float)).reshape(-1, 2)
        mask = np.zeros(len(xy), dtype=bool)
        for part in self.parts:
            mask |= _half_open_mask(xy, part, self.window)
        return mask

    def complement(self, label: str = "") -> "Region":
        """Complemento dentro de la ventana, vía subdivisión."""
        b = self.window.bounds
        xs = sorted({b.x0, b.x1, *(p.x0 for p in self.parts), *(p.x1 for p in self.parts)})
        ys = sorted({b.y0, b.y1, *(p.y0 for p in self.parts), *(p.y1 for p in self.parts)})
        cells = []
        for xa, xb in zip(xs[:-1], xs[1:]):
            for ya, yb in zip(ys[:-1], ys[1:]):
                cell = Rect(xa, ya, xb, yb)
                if not any(p.contains_rect(cell) for p in self.parts):
                    cells.append(cell)
        if not cells:
            raise DomainError("La región cubre toda la ventana; su complemento es vacío")
        return Region(self.window, _merge_rows(cells), label or f"not {self.label}".strip())

    def to_dict(self):
        return {'label': self.label, 'parts': [p.to_list() for p in self.parts], 'area': self.area}


def _merge_rows(cells: List[Rect]) -> Tuple[Rect, ...]:
    """Une celdas contiguas de la misma franja horizontal."""
    by_row = {}
    for c in cells:
        by_row.setdefault((c.y0, c.y1), []).append(c)
    merged = []
    for (y0, y1), row in sorted(by_row.items()):
        row.sort(key=lambda c: c.x0)
        current = row[0]
        for c in row[1:]:
            if c.x0 == current.x1:
                current = Rect(current.x0, y0, c.x1, y1)
            else:
                merged.append(current)
                current = c
        merged.append(current)
    return tuple(merged)


def region_from_rects(rects: Iterable[Union[Rect, Sequence[float]]], window: Window, label: str = "") -> Region:
    """Normaliza rectángulos (posiblemente solapados) a partes disjuntas."""
    parts = [r if isinstance(r, Rect) else Rect(*(float(v) for v in r)) for r in rects]
    if not parts:
        raise DomainError("La región necesita al menos un rectángulo")
    for part in parts:
        if not window.bounds.contains_rect(part):
            raise DomainError(f"Rectángulo {part.to_list()} fuera de la ventana")
    if not any(a.overlaps(b) for i, a in enumerate(parts) for b in parts[i + 1:]):
        return Region(window, tuple(parts), label)

    xs = sorted({v for p in parts for v in (p.x0, p.x1)})
    ys = sorted({v for p in parts for v in (p.y0, p.y1)})
    cells = []
    for xa, xb in zip(xs[:-1], xs[1:]):
        for ya, yb in zip(ys[:-1], ys[1:]):
            cell = Rect(xa, ya, xb, yb)
            if any(p.contains_rect(cell) for p in parts):
                cells.append(cell)
    return Region(window, _merge_rows(cells), label)


@dataclass(frozen=True)
class PointPattern:
    """Realización de un proceso puntual en un período (S_{W_t} o S_{Y_t})."""

    points: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = np.empty((0, 2), dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DomainError("Los puntos deben tener forma (n, 2)")
        if not np.all(np.isfinite(pts)):
            raise DomainError("Coordenadas no finitas en el patrón")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, 'points', pts)

    @classmethod
    def empty(cls, timestamp: int = 0) -> "PointPattern":
        return cls(np.empty((0, 2)), timestamp)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def validate_in(self, window: Window) -> "PointPattern":
        if len(self) and not np.all(window.contains(self.points)):
            outside = self.points[~window.contains(self.points)][0]
            raise DomainError(f"Punto ({outside[0]:.6g}, {outside[1]:.6g}) fuera de la ventana")
        return self

    def with_timestamp(self, timestamp: int) -> "PointPattern":
        return PointPattern(self.points, timestamp)

    def to_dict(self):
        return {'t': self.timestamp, 'points': self.points.tolist()}


@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float


@dataclass(frozen=True)
class Arc:
    """Arco de circunferencia recorrido en sentido antihorario de start a end."""

    cx: float
    cy: float
    radius: float
    start_angle: float
    end_angle: float

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("El radio del arco debe ser positivo")

    @property
    def span(self) -> float:
        span = (self.end_angle - self.start_angle) % (2 * math.pi)
        return span if span > 0 else 2 * math.pi

    def endpoints(self) -> Tuple[Point, Point]:
        return (
            (self.cx + self.radius * math.cos(self.start_angle), self.cy + self.radius * math.sin(self.start_angle)),
            (self.cx + self.radius * math.cos(self.end_angle), self.cy + self.radius * math.sin(self.end_angle)),
        )


@dataclass(frozen=True)
class SegmentSet:
    """Red de líneas y arcos (análogo de la red de caminos simulada)."""

    segments: Tuple[Union[Segment, Arc], ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.segments)

    def validate_in(self, window: Window) -> "SegmentSet":
        for seg in self.segments:
            if isinstance(seg, Segment):
                ends = [(seg.x0, seg.y0), (seg.x1, seg.y1)]
            else:
                ends = list(seg.endpoints())
            if not np.all(window.contains(np.round(np.array(ends), 12))):
                raise DomainError(f"Extremo fuera de la ventana en {seg}")
        return self

    @classmethod
    def from_dict(cls, data) -> "SegmentSet":
        items = []
        for line in data.get('lines', []):
            items.append(Segment(*(float(v) for v in line)))
        for arc in data.get('arcs', []):
            items.append(Arc(*(float(v) for v in arc)))
        return cls(tuple(items))

    def to_dict(self):
        return {
            'lines': [[s.x0, s.y0, s.x1, s.y1] for s in self.segments if isinstance(s, Segment)],
            'arcs': [[a.cx, a.cy, a.radius, a.start_angle, a.end_angle] for a in self.segments if isinstance(a, Arc)],
        }

"""
Lectura de series de patrones puntuales desde CSV (`t,x,y[,type]`).

Las filas se agrupan por t (entero positivo, no hace falta que vengan
ordenadas); los períodos sin filas quedan como patrones vacíos. Los errores
nombran la fila del archivo (la cabecera es la fila 1).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.geometry import PointPattern, Window
from utils.errors import DataError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ('t', 'x', 'y')


@dataclass(frozen=True)
class DataQuality:
    rows: int
    duplicate_rows: Tuple[int, ...]
    empty_periods: Tuple[int, ...]
    type_counts: Dict[str, int] = field(default_factory=dict)
    selected_types: Tuple[str, ...] = ()
    selected_rows: int = 0

    def to_dict(self):
        return {
            'rows': self.rows,
            'duplicate_rows': list(self.duplicate_rows),
            'empty_periods': list(self.empty_periods),
            'type_counts': dict(self.type_counts),
            'selected_types': list(self.selected_types),
            'selected_rows': self.selected_rows,
        }


@dataclass(frozen=True, eq=False)
class PatternSeries:
    """Patrones de los períodos 1..n; patterns[i] corresponde a t = i + 1."""

    patterns: Tuple[PointPattern, ...]
    quality: DataQuality
    source: str = ""

    def __len__(self) -> int:
        return len(self.patterns)

    def counts(self) -> List[int]:
        return [len(p) for p in self.patterns]


def _row(index: int) -> int:
    return int(index) + 2


def read_events(path: str) -> pd.DataFrame:
    """CSV crudo validado: t entero positivo, x/y numéricos y type opcional."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise DataError(f"No existe el archivo {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"CSV ilegible {path}: {exc}")

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"Faltan columnas {', '.join(missing)} en {path} (cabecera esperada: t,x,y[,type])", row=1)
    extra = [c for c in frame.columns if c not in (*REQUIRED_COLUMNS, 'type')]
    if extra:
        raise DataError(f"Columnas desconocidas {', '.join(extra)} en {path}", row=1)

    for column in REQUIRED_COLUMNS:
        blank = frame[column].isna() | (frame[column].str.strip() == '')
        if blank.any():
            raise DataError(f"Falta el valor de '{column}'", row=_row(frame.index[blank][0]))

    t = pd.to_numeric(frame['t'], errors='coerce')
    bad_t = t.isna() | (t != np.floor(t)) | (t < 1)
    if bad_t.any():
        i = frame.index[bad_t][0]
        raise DataError(f"t debe ser un entero positivo (recibido {frame.at[i, 't']!r})", row=_row(i))

    out = pd.DataFrame({'t': t.astype(int)})
    for column in ('x', 'y'):
        values = pd.to_numeric(frame[column], errors='coerce')
        bad = ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            i = frame.index[bad][0]
            raise DataError(f"{column} debe ser numérico (recibido {frame.at[i, column]!r})", row=_row(i))
        out[column] = values.astype(float)
    out['type'] = frame['type'].str.strip() if 'type' in frame.columns else ''
    return out


def ingest_patterns(path: str, window: Window, types: Optional[Sequence[str]] = None,
                    n_periods: Optional[int] = None) -> PatternSeries:
    """
    Agrupa los eventos por período. `types` filtra por la columna type;
    `n_periods` extiende la serie con períodos vacíos hasta ese largo.
    """
    events = read_events(path)

    outside = ~window.contains(events[['x', 'y']].to_numpy())
    if outside.any():
        i = events.index[outside][0]
        raise DataError(
            f"Punto ({events.at[i, 'x']:.6g}, {events.at[i, 'y']:.6g}) fuera de la ventana {window.bounds.to_list()}",
            row=_row(i),
        )

    duplicated = events.duplicated(keep='first')
    duplicate_rows = tuple(_row(i) for i in events.index[duplicated])
    if duplicate_rows:
        logger.warning("%s: %d filas duplicadas (se conservan como puntos distintos)", path, len(duplicate_rows))

    type_counts = {str(k): int(v) for k, v in events['type'].value_counts(sort=False).sort_index().items()}
    selected = events
    if types is not None:
        selected = events[events['type'].isin(list(types))]
        for name in types:
            if name not in type_counts:
                logger.warning("%s: el tipo '%s' no aparece en el archivo; sus períodos quedan vacíos", path, name)

    last = int(events['t'].max()) if len(events) else 0
    if n_periods is not None:
        if n_periods < last:
            raise DataError(f"El archivo tiene eventos en t={last} pero la serie se declaró de {n_periods} períodos")
        last = n_periods

    grouped = {int(t): g[['x', 'y']].to_numpy() for t, g in selected.groupby('t', sort=True)}
    patterns = tuple(
        PointPattern(grouped[t], timestamp=t) if t in grouped else PointPattern.empty(t)
        for t in range(1, last + 1)
    )
    empty = tuple(t for t in range(1, last + 1) if t not in grouped)

    quality = DataQuality(
        rows=len(events),
        duplicate_rows=duplicate_rows,
        empty_periods=empty,
        type_counts=type_counts,
        selected_types=tuple(types or ()),
        selected_rows=len(selected),
    )
    logger.info("%s: %d eventos en %d períodos (%d vacíos)", path, len(selected), last, len(empty))
    return PatternSeries(patterns, quality, source=path)


def ingest_typed(path: str, window: Window, types: Sequence[str]) -> Dict[str, PatternSeries]:
    """Una serie por tipo, todas con el mismo largo."""
    events = read_events(path)
    last = int(events['t'].max()) if len(events) else 0
    return {name: ingest_patterns(path, window, [name], n_periods=last) for name in types}

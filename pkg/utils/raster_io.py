"""
Rasters CSV `ix,iy,value` con un sidecar JSON `{nx, ny, window}`.

ix recorre el eje x y iy el eje y, ambos desde 0 en el borde mínimo de la
ventana; cada valor corresponde al centro de su celda.
"""
import json
import logging
import os
from typing import Tuple

import numpy as np
import pandas as pd

from utils.errors import DataError

logger = logging.getLogger(__name__)


def sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return f"{root}.json"


def write_grid(values: np.ndarray, bounds, path: str) -> str:
    """Escribe una matriz (ny, nx) y su sidecar; devuelve la ruta del CSV."""
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    iy, ix = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    frame = pd.DataFrame({'ix': ix.ravel(), 'iy': iy.ravel(), 'value': values.ravel()})

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump({'nx': int(nx), 'ny': int(ny), 'window': [float(b) for b in bounds]}, fh, indent=2)
    logger.debug("Raster %dx%d escrito en %s", nx, ny, path)
    return path


def read_grid(path: str) -> Tuple[np.ndarray, list]:
    """Lee un raster y devuelve (valores (ny, nx), bounds de la ventana)."""
    meta_path = sidecar_path(path)
    if not os.path.exists(meta_path):
        raise DataError(f"Falta el sidecar {meta_path} del raster {path}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    try:
        nx, ny, bounds = int(meta['nx']), int(meta['ny']), list(meta['window'])
    except (KeyError, TypeError, ValueError):
        raise DataError(f"Sidecar {meta_path} inválido: se esperan nx, ny y window")

    frame = pd.read_csv(path)
    missing = {'ix', 'iy', 'value'} - set(frame.columns)
    if missing:
        raise DataError(f"Columnas faltantes en {path}: {', '.join(sorted(missing))}")
    bad = frame[['ix', 'iy', 'value']].isna().any(axis=1)
    if bad.any():
        # +2: encabezado y numeración desde 1
        raise DataError("Valor faltante en el raster", row=int(np.flatnonzero(bad.to_numpy())[0]) + 2)

    values = np.full((ny, nx), np.nan)
    ix = frame['ix'].to_numpy(dtype=int)
    iy = frame['iy'].to_numpy(dtype=int)
    if ix.min(initial=0) < 0 or iy.min(initial=0) < 0 or ix.max(initial=0) >= nx or iy.max(initial=0) >= ny:
        raise DataError(f"Índices fuera de la retícula {nx}x{ny} en {path}")
    values[iy, ix] = frame['value'].to_numpy(dtype=float)
    if np.isnan(values).any():
        raise DataError(f"El raster {path} no cubre todas las celdas {nx}x{ny}")
    return values, bounds

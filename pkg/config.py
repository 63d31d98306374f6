import os
from dotenv import load_dotenv

load_dotenv()


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} debe ser un entero (recibido {raw!r})")


class Config:
    # INFO: etapas y resultados; DEBUG: detalle por período
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

    # Paralelismo por defecto: todos los núcleos; THREADS=1 fuerza el camino serie
    THREADS = _int_env('THREADS', os.cpu_count() or 1)
    PROFILE = os.getenv('PROFILE', 'desk').lower()
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'out')

    # Retículas de cuadratura (nodos por eje). La de ajuste es más gruesa porque el
    # ajuste guarda la matriz de diseño de todos los períodos en memoria.
    QUADRATURE_N = _int_env('QUADRATURE_N', 128)
    FIT_GRID_N = _int_env('FIT_GRID_N', 64)
    ORACLE_GRID_N = _int_env('ORACLE_GRID_N', 48)

    DEFAULT_DGP_SPEC = os.getenv(
        'DEFAULT_DGP_SPEC',
        os.path.join(os.path.dirname(os.path.abspath(__file__)), 'scenarios', 'default_dgp.toml'),
    )

    if PROFILE not in ('desk', 'full'):
        raise ValueError("PROFILE debe ser 'desk' o 'full'")
    if THREADS < 1:
        raise ValueError("THREADS debe ser >= 1")
    for _name, _value in (('QUADRATURE_N', QUADRATURE_N), ('FIT_GRID_N', FIT_GRID_N), ('ORACLE_GRID_N', ORACLE_GRID_N)):
        if _value < 4:
            raise ValueError(f"{_name} debe ser >= 4")

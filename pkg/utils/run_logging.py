"""
Logging de ejecuciones de la CLI y errores no capturados (stdout, formato único).
"""
import logging
import sys
import time
from contextlib import contextmanager

from utils.errors import EngineError

logger = logging.getLogger("runs")


def configure_logging(level_name: str = "INFO") -> None:
    """Nivel global, formato y menos ruido de librerías de terceros."""
    level = getattr(logging, str(level_name).upper(), logging.INFO)

    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stdout,
        force=True,
    )
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("numba").setLevel(logging.WARNING)


@contextmanager
def log_run(mode: str, source: str):
    """Registra cada ejecución (modo, config, estado, duración) y sus excepciones."""
    started = time.perf_counter()
    status = "ok"
    try:
        yield
    except EngineError as exc:
        status = f"exit {exc.exit_code}"
        logger.warning("%s %s -> %s: %s", mode, source, type(exc).__name__, exc)
        raise
    except Exception:
        status = "error"
        logger.exception("%s %s -> excepción no controlada", mode, source)
        raise
    finally:
        duration_ms = (time.perf_counter() - started) * 1000
        logger.info("%s %s %s %.1fms", mode, source, status, duration_ms)

"""
Reparto de tareas independientes (datasets, celdas) en un Pool de procesos.
Cada tarea lleva su propia semilla, así el resultado no depende del número de
procesos ni del orden de ejecución.
"""
import logging
from multiprocessing import Pool
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_tasks(func: Callable[[T], R], tasks: Iterable[T], threads: int = 1) -> List[R]:
    """Como map(); con threads > 1 usa un Pool y conserva el orden de las tareas."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    processes = min(threads, len(tasks))
    logger.info("Repartiendo %d tareas en %d procesos", len(tasks), processes)
    with Pool(processes=processes) as pool:
        return list(pool.map(func, tasks, chunksize=1))

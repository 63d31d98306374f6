"""
Lectura validada de secciones de configuración (diccionarios salidos de TOML).
Cada error nombra la clave completa, p.ej. `estimate.level`.
"""
from typing import Any, Iterable, List, Mapping, Optional

from utils.errors import ConfigError

MISSING = object()


def _key(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def check_keys(data: Mapping[str, Any], allowed: Iterable[str], prefix: str = "") -> None:
    if not isinstance(data, Mapping):
        raise ConfigError("Se esperaba una tabla", key=prefix or "<raíz>")
    allowed = set(allowed)
    for key in data:
        if key not in allowed:
            raise ConfigError(f"Clave desconocida (válidas: {', '.join(sorted(allowed))})", key=_key(prefix, key))


def section(data: Mapping[str, Any], key: str, prefix: str = "", required: bool = False) -> Mapping[str, Any]:
    value = data.get(key)
    if value is None:
        if required:
            raise ConfigError("Sección requerida", key=_key(prefix, key))
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError("Se esperaba una tabla", key=_key(prefix, key))
    return value


def get_number(data: Mapping[str, Any], key: str, prefix: str = "", default: Any = MISSING,
               minimum: Optional[float] = None, maximum: Optional[float] = None,
               positive: bool = False, integer: bool = False):
    full = _key(prefix, key)
    if key not in data:
        if default is MISSING:
            raise ConfigError("Valor requerido", key=full)
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"Se esperaba un número (recibido {value!r})", key=full)
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"Se esperaba un entero (recibido {value!r})", key=full)
        value = int(value)
    else:
        value = float(value)
    if positive and not value > 0:
        raise ConfigError(f"Debe ser positivo (recibido {value})", key=full)
    if minimum is not None and value < minimum:
        raise ConfigError(f"Debe ser >= {minimum} (recibido {value})", key=full)
    if maximum is not None and value > maximum:
        raise ConfigError(f"Debe ser <= {maximum} (recibido {value})", key=full)
    return value


def get_numbers(data: Mapping[str, Any], key: str, prefix: str = "", default: Any = MISSING,
                length: Optional[int] = None, integer: bool = False, positive: bool = False) -> List:
    full = _key(prefix, key)
    if key not in data:
        if default is MISSING:
            raise ConfigError("Valor requerido", key=full)
        return list(default)
    value = data[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list):
        raise ConfigError(f"Se esperaba una lista de números (recibido {value!r})", key=full)
    if length is not None and len(value) != length:
        raise ConfigError(f"Se esperaban {length} valores (recibidos {len(value)})", key=full)
    if not value:
        raise ConfigError("La lista no puede estar vacía", key=full)
    wrapped = {str(i): v for i, v in enumerate(value)}
    return [get_number(wrapped, str(i), full, integer=integer, positive=positive) for i in range(len(value))]


def get_str(data: Mapping[str, Any], key: str, prefix: str = "", default: Any = MISSING,
            choices: Optional[Iterable[str]] = None) -> str:
    full = _key(prefix, key)
    if key not in data:
        if default is MISSING:
            raise ConfigError("Valor requerido", key=full)
        return default
    value = data[key]
    if not isinstance(value, str):
        raise ConfigError(f"Se esperaba texto (recibido {value!r})", key=full)
    if choices is not None and value not in choices:
        raise ConfigError(f"Valor '{value}' inválido (opciones: {', '.join(choices)})", key=full)
    return value


def get_bool(data: Mapping[str, Any], key: str, prefix: str = "", default: Any = MISSING) -> bool:
    full = _key(prefix, key)
    if key not in data:
        if default is MISSING:
            raise ConfigError("Valor requerido", key=full)
        return default
    value = data[key]
    if not isinstance(value, bool):
        raise ConfigError(f"Se esperaba true/false (recibido {value!r})", key=full)
    return value

# Tipos de dominio (dataclasses inmutables con to_dict)

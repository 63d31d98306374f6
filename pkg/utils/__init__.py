# Utilidades: errores, logging, semillas, paralelismo, rasters y validación de config

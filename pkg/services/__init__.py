# Módulos de cálculo del motor

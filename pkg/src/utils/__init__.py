# Utilidades: configuración, logging y formato de tensores

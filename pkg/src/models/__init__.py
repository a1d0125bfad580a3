# Modelos de datos

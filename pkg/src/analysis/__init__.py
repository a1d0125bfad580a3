# Métricas, volcados de atención y estudio de componentes

# Dataset sintético, E/S en disco y aumento de datos

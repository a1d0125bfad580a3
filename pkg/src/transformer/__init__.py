# Bloque transformer: GRPE, pérdidas SSA y poda adaptativa

# Red de segmentación, pérdidas, checkpoints y entrenamiento

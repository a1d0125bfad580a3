# Paquete principal del proyecto APFormer Toy

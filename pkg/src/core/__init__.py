# Motor de diferenciación automática sobre numpy

# Paquete de servicios (operaciones de cada etapa)

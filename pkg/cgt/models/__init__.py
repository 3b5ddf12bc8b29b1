# Paquete de modelos (entidades del dominio)

# Paquete de configuración

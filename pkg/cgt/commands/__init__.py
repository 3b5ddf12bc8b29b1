# Paquete de comandos (una etapa del pipeline por comando)

# Este archivo hace que Python trate esta carpeta como un paquete de tests

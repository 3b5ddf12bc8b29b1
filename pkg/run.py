"""
Punto de entrada principal de la aplicación
Uso: python run.py <comando> [opciones]
"""

from cgt.app import create_app

app = create_app()

if __name__ == "__main__":
    app()

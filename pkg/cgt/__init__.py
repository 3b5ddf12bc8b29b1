"""
CGT - detección de anomalías en series multivariadas guiada por un grafo causal
"""

__version__ = "1.0.0"

"""
Excepciones del pipeline
Cada etapa tiene su propia clase y su código de salida para la CLI
"""


class CGTError(Exception):
    """Error base del pipeline"""

    stage = "general"
    exit_code = 1

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        return f"[{self.stage}] {super().__str__()}"


class ConfigError(CGTError):
    stage = "config"
    exit_code = 2


class IngestionError(CGTError):
    """CSV mal formado, filas irregulares o valores no finitos"""

    stage = "data"
    exit_code = 3


class DimensionError(CGTError, ValueError):
    stage = "data"
    exit_code = 3


class GraphError(CGTError):
    stage = "graph"
    exit_code = 4


class ModelError(CGTError, ValueError):
    stage = "model"
    exit_code = 5


class TrainingError(CGTError):
    stage = "train"
    exit_code = 6


class ScoringError(CGTError):
    stage = "score"
    exit_code = 7


class SafetyError(CGTError):
    stage = "safety"
    exit_code = 8


class ThresholdError(CGTError):
    stage = "threshold"
    exit_code = 9


class DegenerateFitError(ThresholdError):
    """Menos de dos picos distintos: la cola GPD no se puede ajustar"""


class LevelTooHighError(ThresholdError):
    """Ningun valor supera el cuantil inicial"""


class AttributionError(CGTError):
    stage = "attribute"
    exit_code = 10


class EvaluationError(CGTError):
    stage = "evaluate"
    exit_code = 11


class ArtifactError(CGTError):
    """Falta un artefacto requerido por el comando"""

    stage = "artifacts"
    exit_code = 12


class CheckpointError(CGTError):
    stage = "checkpoint"
    exit_code = 13


class ScenarioError(CGTError):
    """Escenario sintético inválido (SCM inestable, eventos solapados)"""

    stage = "synth"
    exit_code = 14

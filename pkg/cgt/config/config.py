"""
Configuración de la aplicación
Archivo de texto `sección.clave=valor` + variables de entorno CGT_<SECCION>_<CLAVE>
"""

import os
from dataclasses import asdict, dataclass, field
from typing import List

from dotenv import dotenv_values, load_dotenv
from marshmallow import (
    RAISE,
    Schema,
    ValidationError,
    fields,
    post_load,
    validate,
    validates_schema,
)

from cgt.errors import ConfigError

# Cargar variables de entorno desde .env
load_dotenv()


class Config:
    """Configuración de proceso (no depende del archivo del pipeline)"""

    LOG_LEVEL = os.getenv("CGT_LOG_LEVEL", "INFO")
    ARTIFACTS_DIR = os.getenv("CGT_ARTIFACTS_DIR", "artifacts")
    CONFIG_PATH = os.getenv("CGT_CONFIG")
    WORKERS = int(os.getenv("CGT_WORKERS", "1"))
    ENV_PREFIX = "CGT_"


# ---------------------------------------------------------------------------
# Secciones (dataclasses inmutables)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathsConfig:
    artifacts_dir: str = "artifacts"


@dataclass(frozen=True)
class DataConfig:
    train_path: str = "data/synthetic/train.csv"
    val_path: str = "data/synthetic/val.csv"
    test_path: str = "data/synthetic/test.csv"
    labels_path: str = "data/synthetic/labels.csv"
    gt_causes_path: str = "data/synthetic/gt_causes.csv"
    gt_graph_path: str = "data/synthetic/graph.csv"
    has_header: bool = True
    val_fraction: float = 0.3
    epsilon: float = 1e-8


@dataclass(frozen=True)
class GraphConfig:
    graph_path: str = ""
    alpha_level: float = 0.01
    max_cond: int = 3


@dataclass(frozen=True)
class ModelConfig:
    W: int = 30
    tau_max: int = 7
    D: int = 0
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    d_ff: int = 128
    d_z: int = 8
    S: int = 4
    logvar_lo: float = -8.0
    logvar_hi: float = 8.0
    positional_encoding: str = "none"
    dtype: str = "float32"

    @property
    def P(self):
        return self.D * self.tau_max

    @property
    def logvar_bounds(self):
        return (self.logvar_lo, self.logvar_hi)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    E_warm: int = 5
    gamma: float = 0.0206
    beta: float = 0.1
    lambda_res: float = 0.01
    lambda_prior: float = 0.1
    lambda_other: float = 0.05
    lambda_push: float = 0.05
    lambda_m: float = 0.1
    margin: float = 0.1
    lambda_grp: float = 0.01
    parent_bce_weight: float = 5.0
    learning_rate: float = 3.90e-4
    clip_norm: float = 0.823
    batch_size: int = 16
    seed: int = 0


@dataclass(frozen=True)
class ScoringConfig:
    aggregation: str = "mean"
    topk: int = 3
    batch_size: int = 256
    seed: int = 0


@dataclass(frozen=True)
class SafetyConfig:
    tau_rel: float = 0.08
    tau_alpha: float = 0.01
    epsilon: float = 1e-8
    mode: str = "soft"
    calib_frac: float = 0.2
    calib_min: int = 500


@dataclass(frozen=True)
class SpotConfig:
    q: float = 1.53e-3
    level: float = 0.98
    lambda_thr: float = 1.0
    burn_frac: float = 0.1
    burn_min: int = 500


@dataclass(frozen=True)
class AttributionConfig:
    method: str = "clamp"
    gate_threshold: float = 0.1
    epsilon: float = 1e-8
    percentages: List[int] = field(default_factory=lambda: [100, 150])
    min_baseline: int = 30


@dataclass(frozen=True)
class SynthConfig:
    D: int = 5
    tau_max: int = 2
    n_train: int = 4000
    n_val: int = 800
    n_test: int = 1200
    n_events: int = 3
    event_length: int = 20
    magnitude: float = 8.0
    event_type: str = "spike"
    seed: int = 0
    out_dir: str = "data/synthetic"


@dataclass(frozen=True)
class RunConfig:
    workers: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Todas las secciones juntas (lo que recibe cada comando)"""

    paths: PathsConfig = field(default_factory=PathsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    spot: SpotConfig = field(default_factory=SpotConfig)
    attribution: AttributionConfig = field(default_factory=AttributionConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Esquemas de validación (marshmallow)
# ---------------------------------------------------------------------------

_NON_NEG = validate.Range(min=0)
_POS_INT = validate.Range(min=1)
_UNIT = validate.Range(min=0, max=1)
_OPEN_UNIT = validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False)


class _SectionSchema(Schema):
    """Base: rechaza claves desconocidas y construye el dataclass de la sección"""

    section_class = None

    class Meta:
        unknown = RAISE

    @post_load
    def make_section(self, data, **kwargs):
        return self.section_class(**data)


class PathsSchema(_SectionSchema):
    section_class = PathsConfig
    artifacts_dir = fields.String(load_default=Config.ARTIFACTS_DIR)


class DataSchema(_SectionSchema):
    section_class = DataConfig
    train_path = fields.String(load_default=DataConfig.train_path)
    val_path = fields.String(load_default=DataConfig.val_path)
    test_path = fields.String(load_default=DataConfig.test_path)
    labels_path = fields.String(load_default=DataConfig.labels_path)
    gt_causes_path = fields.String(load_default=DataConfig.gt_causes_path)
    gt_graph_path = fields.String(load_default=DataConfig.gt_graph_path)
    has_header = fields.Boolean(load_default=True)
    val_fraction = fields.Float(load_default=0.3, validate=_OPEN_UNIT)
    epsilon = fields.Float(load_default=1e-8, validate=validate.Range(min=0, min_inclusive=False))


class GraphSchema(_SectionSchema):
    section_class = GraphConfig
    graph_path = fields.String(load_default="")
    alpha_level = fields.Float(load_default=0.01, validate=_UNIT)
    max_cond = fields.Integer(load_default=3, validate=_NON_NEG)


class ModelSchema(_SectionSchema):
    section_class = ModelConfig
    W = fields.Integer(load_default=30, validate=_POS_INT)
    tau_max = fields.Integer(load_default=7, validate=_POS_INT)
    D = fields.Integer(load_default=0, validate=_NON_NEG)
    d_model = fields.Integer(load_default=64, validate=_POS_INT)
    n_heads = fields.Integer(load_default=2, validate=_POS_INT)
    n_layers = fields.Integer(load_default=2, validate=_POS_INT)
    d_ff = fields.Integer(load_default=128, validate=_POS_INT)
    d_z = fields.Integer(load_default=8, validate=_POS_INT)
    S = fields.Integer(load_default=4, validate=_POS_INT)
    logvar_lo = fields.Float(load_default=-8.0)
    logvar_hi = fields.Float(load_default=8.0)
    positional_encoding = fields.String(
        load_default="none", validate=validate.OneOf(["none", "sinusoidal"])
    )
    dtype = fields.String(load_default="float32", validate=validate.OneOf(["float32", "float64"]))

    @validates_schema
    def check_shapes(self, data, **kwargs):
        if data.get("d_model", 64) % data.get("n_heads", 2) != 0:
            raise ValidationError("d_model debe ser divisible por n_heads", "d_model")
        if data.get("logvar_lo", -8.0) >= data.get("logvar_hi", 8.0):
            raise ValidationError("logvar_lo debe ser menor que logvar_hi", "logvar_lo")


class TrainSchema(_SectionSchema):
    section_class = TrainConfig
    epochs = fields.Integer(load_default=15, validate=_POS_INT)
    E_warm = fields.Integer(load_default=5, validate=_POS_INT)
    gamma = fields.Float(load_default=0.0206, validate=_UNIT)
    beta = fields.Float(load_default=0.1, validate=_NON_NEG)
    lambda_res = fields.Float(load_default=0.01, validate=_NON_NEG)
    lambda_prior = fields.Float(load_default=0.1, validate=_NON_NEG)
    lambda_other = fields.Float(load_default=0.05, validate=_NON_NEG)
    lambda_push = fields.Float(load_default=0.05, validate=_NON_NEG)
    lambda_m = fields.Float(load_default=0.1, validate=_NON_NEG)
    margin = fields.Float(load_default=0.1, validate=_NON_NEG)
    lambda_grp = fields.Float(load_default=0.01, validate=_NON_NEG)
    parent_bce_weight = fields.Float(load_default=5.0, validate=_NON_NEG)
    learning_rate = fields.Float(load_default=3.90e-4, validate=validate.Range(min=0, min_inclusive=False))
    clip_norm = fields.Float(load_default=0.823, validate=validate.Range(min=0, min_inclusive=False))
    batch_size = fields.Integer(load_default=16, validate=_POS_INT)
    seed = fields.Integer(load_default=0, validate=_NON_NEG)


class ScoringSchema(_SectionSchema):
    section_class = ScoringConfig
    aggregation = fields.String(load_default="mean", validate=validate.OneOf(["mean", "max", "topk"]))
    topk = fields.Integer(load_default=3, validate=_POS_INT)
    batch_size = fields.Integer(load_default=256, validate=_POS_INT)
    seed = fields.Integer(load_default=0, validate=_NON_NEG)


class SafetySchema(_SectionSchema):
    section_class = SafetyConfig
    tau_rel = fields.Float(load_default=0.08, validate=_NON_NEG)
    tau_alpha = fields.Float(load_default=0.01, validate=validate.Range(min=-1, max=1, max_inclusive=False))
    epsilon = fields.Float(load_default=1e-8, validate=_NON_NEG)
    mode = fields.String(load_default="soft", validate=validate.OneOf(["hard", "soft"]))
    calib_frac = fields.Float(load_default=0.2, validate=_OPEN_UNIT)
    calib_min = fields.Integer(load_default=500, validate=_POS_INT)


class SpotSchema(_SectionSchema):
    section_class = SpotConfig
    q = fields.Float(load_default=1.53e-3, validate=_OPEN_UNIT)
    level = fields.Float(load_default=0.98, validate=_OPEN_UNIT)
    lambda_thr = fields.Float(load_default=1.0, validate=validate.Range(min=0, min_inclusive=False))
    burn_frac = fields.Float(load_default=0.1, validate=_OPEN_UNIT)
    burn_min = fields.Integer(load_default=500, validate=_POS_INT)


class AttributionSchema(_SectionSchema):
    section_class = AttributionConfig
    method = fields.String(load_default="clamp", validate=validate.OneOf(["zscore", "clamp"]))
    gate_threshold = fields.Float(load_default=0.1, validate=_UNIT)
    epsilon = fields.Float(load_default=1e-8, validate=_NON_NEG)
    percentages = fields.Method(deserialize="load_percentages", load_default=lambda: [100, 150])
    min_baseline = fields.Integer(load_default=30, validate=validate.Range(min=2))

    def load_percentages(self, value):
        try:
            parsed = [int(p) for p in str(value).split(",") if p.strip()]
        except ValueError:
            raise ValidationError("percentages debe ser una lista de enteros separada por comas")
        if not parsed or any(p <= 0 for p in parsed):
            raise ValidationError("percentages debe contener enteros positivos")
        return parsed


class SynthSchema(_SectionSchema):
    section_class = SynthConfig
    D = fields.Integer(load_default=5, validate=validate.Range(min=5))
    tau_max = fields.Integer(load_default=2, validate=validate.Range(min=2))
    n_train = fields.Integer(load_default=4000, validate=_POS_INT)
    n_val = fields.Integer(load_default=800, validate=_POS_INT)
    n_test = fields.Integer(load_default=1200, validate=_POS_INT)
    n_events = fields.Integer(load_default=3, validate=_NON_NEG)
    event_length = fields.Integer(load_default=20, validate=_POS_INT)
    magnitude = fields.Float(load_default=8.0, validate=_NON_NEG)
    event_type = fields.String(
        load_default="spike", validate=validate.OneOf(["spike", "level-shift", "mechanism-break"])
    )
    seed = fields.Integer(load_default=0, validate=_NON_NEG)
    out_dir = fields.String(load_default="data/synthetic")


class RunSchema(_SectionSchema):
    section_class = RunConfig
    workers = fields.Integer(load_default=Config.WORKERS, validate=_POS_INT)


SECTION_SCHEMAS = {
    "paths": PathsSchema,
    "data": DataSchema,
    "graph": GraphSchema,
    "model": ModelSchema,
    "train": TrainSchema,
    "scoring": ScoringSchema,
    "safety": SafetySchema,
    "spot": SpotSchema,
    "attribution": AttributionSchema,
    "synth": SynthSchema,
    "run": RunSchema,
}


def _env_overrides(environ):
    """CGT_<SECCION>_<CLAVE>=valor -> {"sección.clave": valor}; ignora prefijos desconocidos"""
    overrides = {}
    for name, value in environ.items():
        if not name.startswith(Config.ENV_PREFIX):
            continue
        rest = name[len(Config.ENV_PREFIX):]
        for section in SECTION_SCHEMAS:
            prefix = section.upper() + "_"
            if rest.startswith(prefix):
                key = rest[len(prefix):]
                schema_fields = SECTION_SCHEMAS[section]().fields
                # las claves pueden estar en mayusculas (W, D, E_warm)
                match = next((k for k in schema_fields if k.upper() == key.upper()), key.lower())
                overrides[f"{section}.{match}"] = value
                break
    return overrides


def load_config(path=None, overrides=None, environ=None):
    """
    Cargar y validar la configuración del pipeline
    Orden de precedencia: archivo < variables de entorno < overrides explicitos
    """
    raw = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"No existe el archivo de configuración: {path}")
        raw.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    raw.update(_env_overrides(os.environ if environ is None else environ))
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = str(value)

    grouped = {section: {} for section in SECTION_SCHEMAS}
    for key, value in raw.items():
        section, _, name = key.partition(".")
        if section not in SECTION_SCHEMAS or not name:
            raise ConfigError(f"Clave de configuración desconocida: {key}")
        grouped[section][name] = value

    sections = {}
    for section, schema_cls in SECTION_SCHEMAS.items():
        try:
            sections[section] = schema_cls().load(grouped[section])
        except ValidationError as e:
            raise ConfigError(f"Sección '{section}' inválida: {e.messages}")

    cfg = PipelineConfig(**sections)
    validate_consistency(cfg)
    return cfg


def validate_consistency(cfg):
    """Chequeos entre secciones"""
    if cfg.model.D and cfg.scoring.aggregation == "topk" and cfg.scoring.topk > cfg.model.D:
        raise ConfigError(f"scoring.topk={cfg.scoring.topk} mayor que model.D={cfg.model.D}")
    if cfg.synth.n_test <= cfg.model.W + cfg.model.tau_max:
        raise ConfigError("synth.n_test no alcanza para una ventana valida (W + tau_max)")


def dump_config(cfg, path=None):
    """Escribir la configuración en formato `sección.clave=valor` (recargable)"""
    lines = []
    for section, values in cfg.to_dict().items():
        for key, value in values.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{section}.{key}={value}")
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def model_config_from_mapping(mapping):
    """Reconstruir ModelConfig desde claves `model.<campo>` (manifest del checkpoint)"""
    try:
        return ModelSchema().load(mapping)
    except ValidationError as e:
        raise ConfigError(f"Configuración de modelo inválida en el checkpoint: {e.messages}")

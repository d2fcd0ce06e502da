from enum import Enum
from typing import Any, Dict, Literal, Optional, Set

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.common.config import Config
from src.common.errors import ConfigError
from src.common.utils import canonical_json, compute_sha256, get_logger
from src.corpus.synth import SynthSettings
from src.corpus.types import Unit
from src.latent.types import AugmentConfig
from src.neural.config import ModelConfig, TrainConfig

logger = get_logger(__name__)


class Stage(str, Enum):
    """Pipeline stages whose artifacts record a config hash."""
    DA = "da"
    AUGMENT = "augment"
    MT = "mt"


# settings a stage's artifacts do not depend on
STAGE_EXCLUDES: Dict[Stage, Dict[str, Set[str]]] = {
    Stage.DA: {"augment": {"num_samples", "beam_size", "direction", "resample_latents"}, "train": {"drop_gold"}},
    Stage.AUGMENT: {"train": {"drop_gold"}},
    Stage.MT: {},
}


class CorpusSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train: str
    dev: Optional[str] = None
    test: Optional[str] = None
    multiref: Optional[str] = None
    unit: Unit = Unit.SENTENCE
    max_len: int = Field(512, ge=1)
    min_freq: int = Field(1, ge=1)
    vocab_side: Literal["separate", "joint"] = "separate"


class PplSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    samples: int = Field(100, ge=1)


class RunSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    output_dir: str = "runs/default"
    seed: int = 1
    threads: int = Field(1, ge=1)


class RunConfig(BaseModel):
    """Fully resolved settings of one run. Every stage seed comes from run.seed."""
    model_config = ConfigDict(extra="forbid")

    corpus: CorpusSettings
    model: ModelConfig = Field(default_factory=ModelConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    ppl: PplSettings = Field(default_factory=PplSettings)
    synth: SynthSettings = Field(default_factory=SynthSettings)
    run: RunSettings = Field(default_factory=RunSettings)

    @model_validator(mode="after")
    def propagate_seed(self):
        self.augment.seed = self.run.seed
        self.train.seed = self.run.seed
        return self

    def hashed_view(self) -> Dict[str, Any]:
        """Settings that determine artifact contents: no worker count, no file locations."""
        return self.model_dump(mode="json", exclude={
            "run": {"threads", "output_dir"},
            "corpus": {"train", "dev", "test", "multiref"},
        })

    def config_sha256(self) -> str:
        return compute_sha256(canonical_json(self.hashed_view()))

    def stage_view(self, stage: Stage) -> Dict[str, Any]:
        """The hashed view narrowed to what one stage's artifacts depend on; ppl and synth never count."""
        view = self.hashed_view()
        view.pop("ppl", None)
        view.pop("synth", None)
        for section, keys in STAGE_EXCLUDES[Stage(stage)].items():
            for key in keys:
                view[section].pop(key, None)
        return view

    def stage_sha256(self, stage: Stage) -> str:
        return compute_sha256(canonical_json(self.stage_view(stage)))


def set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def resolve_run_config(config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                       environment: Optional[str] = None) -> RunConfig:
    """
    Packaged defaults, then the run config file, then flag overrides (dotted keys).
    All violations are reported in one ConfigError.
    """
    packaged = Config(environment=environment)
    if config_path:
        data = packaged.merged_with(config_path)
    else:
        data = {k: v for k, v in packaged.config.items() if k != "environments"}
    data.pop("system", None)
    for key, value in (overrides or {}).items():
        if value is not None:
            set_dotted(data, key, value)

    try:
        resolved = RunConfig.model_validate(data)
    except ValidationError as e:
        errors = [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
        for error in errors:
            logger.error(f"config: {error}")
        raise ConfigError(f"invalid run configuration ({len(errors)} problem(s)): " + "; ".join(errors),
                          errors) from e
    logger.debug(f"Resolved run config {resolved.config_sha256()[:12]} (environment={packaged.environment})")
    return resolved

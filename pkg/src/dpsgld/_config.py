"""
The JSON run configuration. The pydantic model is the schema; everything past loading works on the resolved
frozen dataclasses of the other modules.
"""

import typing as t
from pathlib import Path

import pydantic
import typing_extensions as te
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ._errors import ConfigurationError
from ._util import config_hash

#: Privacy budget used when the configuration names neither a target nor a δ.
DEFAULT_EPSILON = 1.0
DEFAULT_DELTA = 1e-5


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScheduleSpec(_Strict):
    """`constant` (η defaults to 1/(2β)), `decreasing` (η_k = 1/(2β + λk/2)) or `explicit` (the listed steps)."""

    kind: t.Literal["constant", "decreasing", "explicit"] = "constant"
    eta: t.Optional[float] = Field(default=None, gt=0)
    etas: t.Optional[t.List[float]] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "ScheduleSpec":
        if self.kind == "explicit" and not self.etas:
            raise ValueError("an explicit schedule needs a non-empty 'etas' list")
        if self.kind != "explicit" and self.etas is not None:
            raise ValueError(f"'etas' is only valid for explicit schedules, not {self.kind!r}")
        if self.kind != "constant" and self.eta is not None:
            raise ValueError(f"'eta' is only valid for constant schedules, not {self.kind!r}")
        return self


class TargetSpec(_Strict):
    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0)
    delta: float = Field(default=DEFAULT_DELTA, gt=0, lt=1)


class BlobsSpec(_Strict):
    """Synthetic Gaussian blobs, see #make_blobs()."""

    n: int = Field(default=1000, ge=10)
    p: int = Field(default=10, ge=2)
    classes: int = Field(default=2, ge=2)
    separation: float = Field(default=4.0, ge=0)
    seed: int = Field(default=0, ge=0)


class RunConfigFile(_Strict):
    """
    A complete run. Exactly one of #sigma2 and #target is set, and exactly one of #dataset and #blobs.
    """

    #: Training CSV (header row, feature columns, integer label column).
    dataset: t.Optional[str] = None

    #: Optional held-out CSV in the same format.
    test_dataset: t.Optional[str] = None

    blobs: t.Optional[BlobsSpec] = None
    label_column: str = "label"
    loss: t.Literal["logistic", "quadratic"] = "logistic"

    #: Regularisation weight of the logistic loss, λ_reg‖W‖².
    reg: float = Field(default=0.01, gt=0)

    #: Bound B on the L2 norm of every row. Larger rows are rescaled.
    norm_bound: float = Field(default=1.0, gt=0)

    #: Projection radius R. Defaults to a radius containing the unconstrained optimum.
    radius: t.Optional[float] = Field(default=None, gt=0)

    batch_size: int = Field(default=64, ge=1)
    schedule: ScheduleSpec = ScheduleSpec()
    sigma2: t.Optional[float] = Field(default=None, ge=0)
    target: t.Optional[TargetSpec] = None

    #: δ used to report (ε, δ) when the run sets #sigma2 directly.
    delta: float = Field(default=DEFAULT_DELTA, gt=0, lt=1)

    iterations: t.Optional[int] = Field(default=None, ge=0)
    epochs: t.Optional[int] = Field(default=None, ge=0)
    method: t.Literal["sgld", "sgd-dp", "sgd"] = "sgld"

    #: Per-example clipping norm of the DP-SGD baseline.
    clip_norm: float = Field(default=1.0, gt=0)

    seed: int = Field(default=0, ge=0, lt=2**64)
    snapshot_stride: int = Field(default=0, ge=0)
    out: str = "out"

    #: Rényi orders to search. Defaults to 1.25, 1.5, 2, 3, …, 64 plus the closed-form order of the target.
    alphas: t.Optional[t.List[te.Annotated[float, Field(gt=1)]]] = None

    @model_validator(mode="after")
    def _check_exclusive(self) -> "RunConfigFile":
        if (self.sigma2 is None) == (self.target is None):
            raise ValueError("exactly one of 'sigma2' and 'target' must be set")
        if (self.dataset is None) == (self.blobs is None):
            raise ValueError("exactly one of 'dataset' and 'blobs' must be set")
        if self.iterations is not None and self.epochs is not None:
            raise ValueError("'iterations' and 'epochs' are mutually exclusive")
        if self.test_dataset is not None and self.dataset is None:
            raise ValueError("'test_dataset' needs 'dataset'")
        return self

    def override(self, **changes: t.Any) -> "RunConfigFile":
        """Apply command-line overrides, skipping `None` values, and validate the result again."""

        update = {key: value for key, value in changes.items() if value is not None}
        return load_config_dict({**self.model_dump(), **update})

    def digest(self) -> str:
        return config_hash(self.model_dump(mode="json"))


def load_config_dict(payload: t.Dict[str, t.Any]) -> RunConfigFile:
    try:
        return RunConfigFile.model_validate(payload)
    except pydantic.ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path: t.Union[str, Path]) -> RunConfigFile:
    """
    Read and validate a JSON configuration file. Relative dataset paths are resolved against the directory of
    the file.

    @raises ConfigurationError: If the file is missing, not UTF-8, not JSON or fails validation.
    """

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid UTF-8 at byte {exc.start}") from exc
    try:
        config = RunConfigFile.model_validate_json(text)
    except pydantic.ValidationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    base = path.parent
    resolved = {
        key: str(base / value)
        for key in ("dataset", "test_dataset")
        if (value := getattr(config, key)) is not None and not Path(value).is_absolute()
    }
    return config.model_copy(update=resolved) if resolved else config


def config_schema() -> t.Dict[str, t.Any]:
    return RunConfigFile.model_json_schema()

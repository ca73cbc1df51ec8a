"""Validated experiment configuration merged from defaults, environment, config file and flags."""

from __future__ import annotations

import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, Field, model_validator

from varsmooth.errors import InvalidInputError
from varsmooth.norms import BesovParams, HardyBranch
from varsmooth.workers import THREADS_ENV

logger = logging.getLogger(__name__)

# largest grid level per dimension for generated families
DESK_LEVELS = {1: 10, 2: 7, 3: 5}


class Command(str, Enum):
    norm = "norm"
    equiv = "equiv"
    decompose = "decompose"
    reconstruct = "reconstruct"
    snumbers = "snumbers"
    weightclass = "weightclass"
    deltas = "deltas"
    hardy = "hardy"
    embed = "embed"
    trace = "trace"
    extend = "extend"
    sobolev_ext = "sobolev-ext"
    suite = "suite"


class ExperimentConfig(BaseModel):
    """Everything one subcommand needs; unknown keys are rejected."""

    model_config = {"extra": "forbid"}

    command: Command = Field(..., description="Subcommand to execute.")
    input: Optional[Path] = Field(None, description="Input VSGF1 or VSSS1 file.")
    output: Optional[Path] = Field(None, description="Output file; CSV goes to stdout when omitted.")
    space1: Optional[Path] = Field(None, description="Source VSQS1 space for `embed`.")
    space2: Optional[Path] = Field(None, description="Target VSQS1 space for `embed`.")
    l: int = Field(2, ge=1, le=6, description="Difference order.")
    p: float = Field(2.0, gt=0, description="Inner exponent.")
    q: float = Field(2.0, gt=0, description="Level exponent.")
    r: float = Field(2.0, gt=0, description="Local L_r exponent.")
    c: float = Field(2.0, gt=1, description="Cube dilation for the dilated variants.")
    weights: str = Field("const:s=1", description="Weight spec: const:, power:, generated: or file:.")
    seed: int = Field(0, ge=0, description="Root seed for families and random trials.")
    family: str = Field("smooth20", description="Function family such as smooth20 or bump8.")
    n: int = Field(1, ge=1, le=3, description="Dimension of generated families.")
    k_max: int = Field(6, ge=1, description="Grid level of generated families.")
    k_work: Optional[int] = Field(None, ge=0, description="Finest level used by the norms.")
    j: Optional[int] = Field(None, ge=0, description="Partial-sum level for `reconstruct`.")
    nprime: int = Field(1, ge=1, le=2, description="Dimension of the trace plane.")
    trials: int = Field(1000, ge=1, le=100_000, description="Random trials for the Hardy and embedding oracles.")
    threads: Optional[int] = Field(None, ge=1, le=256, description="Worker pool bound.")
    beta: float = Field(1.0, description="Hardy damping exponent.")
    mu: float = Field(1.0, gt=0, description="Hardy inner exponent.")
    lam: Optional[float] = Field(None, description="Hardy head exponent lambda.")
    branch: HardyBranch = Field(HardyBranch.tail, description="Hardy branch.")
    ky: Optional[int] = Field(None, ge=1, description="Normal level of the slab grid.")
    levels: int = Field(3, ge=1, description="Number of averaging levels in the slab extension.")
    scale: str = Field("reduced", description="Suite scale: reduced or desk.")

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        for name in ("input", "space1", "space2"):
            path = getattr(self, name)
            if path is not None and not path.is_file():
                raise ValueError(f"{name} file {path} does not exist")
        needs_input = {Command.norm, Command.decompose, Command.reconstruct, Command.snumbers,
                       Command.trace, Command.extend, Command.sobolev_ext}
        if self.command in needs_input and self.input is None:
            raise ValueError(f"`{self.command.value}` needs --in")
        if self.command is Command.embed and (self.space1 is None or self.space2 is None):
            raise ValueError("`embed` needs --space1 and --space2")
        if self.k_max > DESK_LEVELS[self.n]:
            raise ValueError(f"k_max={self.k_max} exceeds the desk level {DESK_LEVELS[self.n]} for n={self.n}")
        if self.scale not in ("reduced", "desk"):
            raise ValueError("scale must be 'reduced' or 'desk'")
        return self

    @property
    def besov(self) -> BesovParams:
        return BesovParams(self.l, self.p, self.q, self.r, self.c)


def _normalise_key(key: str) -> str:
    key = key.strip().replace("-", "_").lower()
    return "input" if key == "in" else key


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """YAML for ``.yaml``/``.yml`` files, otherwise ``key=value`` lines with ``#`` comments."""

    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        loaded = yaml.safe_load(text) or {}
        if not isinstance(loaded, dict):
            raise InvalidInputError(f"config file {path} must hold a mapping")
        return {_normalise_key(str(k)): v for k, v in loaded.items()}
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidInputError(f"{path}:{lineno}: expected key=value")
        values[_normalise_key(key)] = value.strip()
    return values


def environment_defaults() -> Dict[str, Any]:
    load_dotenv(find_dotenv(usecwd=True))
    values: Dict[str, Any] = {}
    raw = os.getenv(THREADS_ENV)
    if raw:
        values["threads"] = raw
    return values


def load_config(flags: Mapping[str, Any], config_file: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Merge sources; later ones win: environment, then ``config_file``, then non-``None`` flags."""

    merged: Dict[str, Any] = environment_defaults()
    if config_file is not None:
        merged.update(read_config_file(config_file))
    merged.update({_normalise_key(k): v for k, v in flags.items() if v is not None})
    logger.debug("Resolved configuration keys: %s", sorted(merged))
    return ExperimentConfig(**merged)

"""Scenario configuration: TOML schema, validation and the bundled catalog.

A config file holds an optional global ``seed`` and ``out`` plus one or more
``[[scenario]]`` tables. Unknown keys are rejected so that typos cannot
silently change a run. See ``scenarios.toml`` in this package for the
catalog and README for the schema.
"""

from __future__ import annotations

import hashlib
import sys
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .scene import SPEED_OF_LIGHT, TargetScene, make_scene
from .waveform import K_MAX, WaveformSpec

CATALOG_RESOURCE = "scenarios.toml"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WaveformConfig(_Strict):
    family: Literal["chirp", "tone", "gaussian", "sampled"]
    duration: Optional[float] = Field(None, gt=0)
    amplitude: float = Field(1.0, gt=0)
    chirp_rate: Optional[float] = None
    carrier: float = 0.0
    width: Optional[float] = Field(None, gt=0)
    csv: Optional[str] = None

    @model_validator(mode="after")
    def _family_fields(self):
        need = {"chirp": ("chirp_rate", "duration"), "tone": ("duration",), "gaussian": ("width", "duration"), "sampled": ("csv",)}
        missing = [f for f in need[self.family] if getattr(self, f) is None]
        if missing:
            raise ValueError(f"family {self.family!r} requires {', '.join(missing)}")
        return self

    def build(self, base_dir: Path | None = None, **override) -> WaveformSpec:
        d = self.model_dump()
        d.update(override)
        fam = d["family"]
        if fam == "chirp":
            return WaveformSpec.chirp(d["chirp_rate"], d["duration"], d["amplitude"])
        if fam == "tone":
            return WaveformSpec.tone(d["carrier"], d["duration"], d["amplitude"])
        if fam == "gaussian":
            return WaveformSpec.gaussian(d["width"], d["duration"], amplitude=d["amplitude"], carrier=d["carrier"])
        path = Path(d["csv"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return WaveformSpec.from_csv(path, amplitude=d["amplitude"])


Coefficients = Union[Literal["ones"], list[float], list[tuple[float, float]]]


class SceneConfig(_Strict):
    tau: float = Field(ge=0)
    gamma: float = Field(gt=0)
    delta: float = Field(gt=0)
    P: int = Field(1, ge=1)
    x: Coefficients = "ones"
    n_samples: Optional[int] = Field(None, ge=1)
    c: float = Field(SPEED_OF_LIGHT, gt=0)

    @model_validator(mode="after")
    def _x_length(self):
        if self.x != "ones" and len(self.x) != self.P:
            raise ValueError(f"x has {len(self.x)} entries but P={self.P}")
        return self

    def coefficients(self, P: int | None = None) -> np.ndarray:
        P = self.P if P is None else P
        if self.x == "ones":
            return np.ones(P, dtype=complex)
        if P != self.P:
            raise ValueError("explicit x cannot be resized by a P sweep")
        v = np.asarray(self.x, dtype=float)
        return v[:, 0] + 1j * v[:, 1] if v.ndim == 2 else v.astype(complex)

    def build(self, spec: WaveformSpec, P: int | None = None) -> TargetScene:
        return make_scene(spec, self.tau, self.gamma, self.delta, self.coefficients(P), self.n_samples, self.c)


class Range(_Strict):
    start: float
    stop: float
    step: Optional[float] = Field(None, gt=0)
    num: Optional[int] = Field(None, ge=2)
    log: bool = False

    @model_validator(mode="after")
    def _shape(self):
        if (self.step is None) == (self.num is None):
            raise ValueError("give exactly one of step or num")
        if not self.stop > self.start:
            raise ValueError("stop must exceed start")
        if self.log and (self.start <= 0 or self.step is not None):
            raise ValueError("log ranges need a positive start and num")
        return self

    def values(self) -> list[float]:
        if self.step is not None:
            n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
            return [float(self.start + i * self.step) for i in range(n)]
        if self.log:
            return [float(v) for v in np.geomspace(self.start, self.stop, self.num)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.num)]


ValueList = Union[list[float], Range]


def _values(v) -> list[float]:
    return v.values() if isinstance(v, Range) else [float(x) for x in v]


class SweepConfig(_Strict):
    parameter: Literal["P", "chirp_rate", "duration", "amplitude"]
    values: ValueList
    hold: Literal["snr", "n0"] = "snr"
    aT2: Optional[float] = Field(None, gt=0)

    @field_validator("values")
    @classmethod
    def _increasing(cls, v):
        vals = _values(v)
        if len(vals) < 2 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing with at least two entries")
        if any(x <= 0 for x in vals):
            raise ValueError("sweep values must be positive")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        if self.aT2 is not None and self.parameter != "duration":
            raise ValueError("aT2 only applies to a duration sweep")
        if self.parameter == "P" and any(int(v) != v for v in _values(self.values)):
            raise ValueError("P values must be integers")
        return self


class ScenarioConfig(_Strict):
    name: str = Field(pattern=r"^[a-z0-9][a-z0-9-]*$")
    kind: Literal["crlb", "mse", "series", "sweep"]
    description: str = ""
    waveform: WaveformConfig
    scene: SceneConfig
    snr_db: ValueList
    trials: int = Field(100, ge=1)
    K: list[int] = Field(default_factory=lambda: [4])
    exact_f33: bool = True
    sweep: Optional[SweepConfig] = None
    seed: Optional[int] = Field(None, ge=0, lt=2**64)

    @field_validator("K")
    @classmethod
    def _k_range(cls, v):
        if not v or any(k < 0 or k > K_MAX for k in v):
            raise ValueError(f"K values must lie in [0, {K_MAX}]")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("K values must be strictly increasing")
        return v

    @field_validator("snr_db")
    @classmethod
    def _snr_sorted(cls, v):
        vals = _values(v)
        if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("snr_db must be a nonempty increasing list")
        return v

    @model_validator(mode="after")
    def _kind_fields(self):
        if (self.kind == "sweep") != (self.sweep is not None):
            raise ValueError("a sweep block is required for kind='sweep' and only allowed there")
        return self

    @property
    def snr_values(self) -> list[float]:
        return _values(self.snr_db)

    def sweep_values(self) -> list[float]:
        return _values(self.sweep.values) if self.sweep else []


class RunConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    out: Optional[str] = None
    scenario: list[ScenarioConfig] = Field(min_length=1)

    @field_validator("scenario")
    @classmethod
    def _unique(cls, v):
        names = [s.name for s in v]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ValueError(f"duplicate scenario names: {', '.join(dup)}")
        return v


def parse_config(text: str) -> RunConfig:
    return RunConfig.model_validate(tomllib.loads(text))


def load_config(path) -> tuple[RunConfig, str]:
    """Parsed config and the SHA-256 of its bytes."""
    raw = Path(path).read_bytes()
    return parse_config(raw.decode("utf-8")), hashlib.sha256(raw).hexdigest()


def catalog_text() -> str:
    return resources.files(__package__).joinpath(CATALOG_RESOURCE).read_text(encoding="utf-8")


def catalog() -> RunConfig:
    return parse_config(catalog_text())


def scenario_scenes(sc: ScenarioConfig, base_dir: Path | None = None):
    """Every (label, waveform, scene) the scenario will touch; builds fail fast."""
    spec = sc.waveform.build(base_dir)
    if sc.kind != "sweep":
        return [(None, spec, sc.scene.build(spec))]
    out = []
    for v in sc.sweep_values():
        s, P = _swept_waveform(sc, v, base_dir), None
        if sc.sweep.parameter == "P":
            s, P = spec, int(v)
        out.append((v, s, sc.scene.build(s, P)))
    return out


def _swept_waveform(sc: ScenarioConfig, v: float, base_dir) -> WaveformSpec:
    p = sc.sweep.parameter
    if p == "chirp_rate":
        return sc.waveform.build(base_dir, chirp_rate=v)
    if p == "amplitude":
        return sc.waveform.build(base_dir, amplitude=sc.waveform.amplitude * v)
    if p == "duration":
        over = {"duration": v}
        if sc.sweep.aT2 is not None:
            over["chirp_rate"] = sc.sweep.aT2 / v**2
        return sc.waveform.build(base_dir, **over)
    return sc.waveform.build(base_dir)

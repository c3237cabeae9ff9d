"""Declarative experiment configuration.

Configs are INI-style text with sections [space], [model], [constraint],
[control] (optional), [experiment] and [output] (optional). Numeric values
round-trip exactly: floats are serialized with shortest round-trip decimals
(at most 17 significant digits), which is what makes replay byte-exact.

Value syntax: scalars, vectors ("1.0 2.0" or comma separated), matrices
(rows joined with ';'), and lists of matrices (joined with '|') for the
linear-family operator blocks.
"""

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraint_sets import make_constraint
from .errors import ConfigError
from .spectral_core import SpectralSpace
from .system_model import ControlSet, make_model, singleton_control

EXPERIMENT_KINDS = ("tangency", "nagumo", "approx", "viability", "galerkin",
                    "linear-equiv")

_MODEL_META_KEYS = ("family", "c", "gamma")


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return v
    arr = np.asarray(v)
    if arr.ndim == 0:
        return repr(float(arr))
    if arr.ndim == 1:
        return " ".join(repr(float(x)) for x in arr)
    if arr.ndim == 2:
        return "; ".join(" ".join(repr(float(x)) for x in row) for row in arr)
    if arr.ndim == 3:
        return " | ".join(_fmt_value(m) for m in arr)
    raise ConfigError(f"cannot serialize value of shape {arr.shape}")


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        i = int(t)
        return i
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_value(text: str):
    """Parse scalar / vector / matrix / matrix-list syntax."""
    t = text.strip()
    if "|" in t:
        return [parse_value(part) for part in t.split("|")]
    if ";" in t:
        rows = [parse_value(r) for r in t.split(";")]
        return np.asarray(rows, dtype=float)
    parts = t.replace(",", " ").split()
    if len(parts) > 1:
        return np.asarray([float(p) for p in parts], dtype=float)
    return _parse_scalar(t)


def _vector(value, length, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,) and length > 1:
        arr = np.full(length, float(arr[0]))
    if arr.shape != (length,):
        raise ConfigError(f"{name} must have {length} entries, got {arr.shape}")
    return arr


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    space: dict
    model: dict
    constraint: dict
    control: dict
    experiment: dict
    output: dict
    source_text: str = field(repr=False, default="")

    @property
    def kind(self) -> str:
        return self.experiment["kind"]

    @property
    def seed(self) -> int:
        return int(self.experiment["seed"])

    # -- constructors -------------------------------------------------

    def build_space(self) -> SpectralSpace:
        n = int(self.space["n"])
        mu = _vector(self.space.get("mu", 0.0), n, "mu")
        return SpectralSpace(n=n, mu=mu, m=int(self.space["m"]),
                             d=int(self.space.get("d", 1)))

    def build_model(self, space: SpectralSpace):
        params = {k: v for k, v in self.model.items()
                  if k not in _MODEL_META_KEYS}
        return make_model(space, str(self.model["family"]),
                          c=self.model.get("c"),
                          gamma=self.model.get("gamma", 0.0), **params)

    def build_constraint(self, space: SpectralSpace):
        params = {k: v for k, v in self.constraint.items() if k != "variant"}
        return make_constraint(str(self.constraint["variant"]), space.n,
                               **params)

    def build_control_set(self, space: SpectralSpace) -> ControlSet:
        if not self.control:
            return singleton_control(space.d)
        shape = str(self.control.get("shape", "ball"))
        center = _vector(self.control.get("center", 0.0), space.d,
                         "control center")
        if shape == "box":
            extent = _vector(self.control.get("halfwidths", 1.0), space.d,
                             "halfwidths")
        else:
            extent = np.atleast_1d(np.asarray(
                self.control.get("radius", 0.0), dtype=float))
        return ControlSet(shape=shape, center=center,
                          radius_or_halfwidths=extent,
                          grid_resolution=int(self.control.get("resolution", 1)))

    def xi(self, space: SpectralSpace) -> np.ndarray:
        return _vector(self.experiment.get("xi", 0.0), space.n, "xi")

    # -- serialization ------------------------------------------------

    def canonical_text(self) -> str:
        """Deterministic round-trip serialization (17 significant digits)."""
        buf = io.StringIO()
        for name, section in (("space", self.space), ("model", self.model),
                              ("constraint", self.constraint),
                              ("control", self.control),
                              ("experiment", self.experiment),
                              ("output", self.output)):
            if not section:
                continue
            buf.write(f"[{name}]\n")
            for key in sorted(section):
                buf.write(f"{key} = {_fmt_value(section[key])}\n")
            buf.write("\n")
        return buf.getvalue()


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for section in ("space", "model", "constraint", "experiment"):
        if not getattr(cfg, section):
            raise ConfigError(f"missing required config section [{section}]")
    kind = cfg.experiment.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind '{kind}'; expected one "
                          f"of {', '.join(EXPERIMENT_KINDS)}")
    if "seed" not in cfg.experiment:
        raise ConfigError("experiment.seed is mandatory")
    gamma = cfg.model.get("gamma", 0.0)
    if not (0.0 <= float(gamma) < 0.5):
        raise ConfigError(
            f"gamma={gamma} outside the admissible range [0, 0.5)")
    # constructing the pieces surfaces registry and dimension errors early
    space = cfg.build_space()
    cfg.build_model(space)
    cfg.build_constraint(space)
    cfg.build_control_set(space)
    return cfg


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    sections = {}
    for name in ("space", "model", "constraint", "control", "experiment",
                 "output"):
        if parser.has_section(name):
            sections[name] = {k: parse_value(v)
                              for k, v in parser.items(name)}
        else:
            sections[name] = {}
    cfg = ExperimentConfig(space=sections["space"], model=sections["model"],
                           constraint=sections["constraint"],
                           control=sections["control"],
                           experiment=sections["experiment"],
                           output=sections["output"], source_text=text)
    return _validate(cfg)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())

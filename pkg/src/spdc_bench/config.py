"""Run configuration: strict JSON schema, validation and digests."""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

from .design import DesignParams, layout_from_design
from .geometry import LayoutError, OpticalLayout
from .montecarlo import ExperimentConfig, run_digest, validation_layout

LAYOUT_KEYS = {
    "wavelength": True, "phi0": True, "source_width": True, "crystal_thickness": True,
    "slit_distance": True, "slit_separation": True, "slit_width": False,
    "idler_distance": False, "detector_angular_radius": False, "screen_distance": False,
}
DESIGN_KEYS = {
    "wavelength": True, "phi0": True, "f": True, "g": True, "h": True, "slit_distance": True,
    "crystal_thickness": False, "slit_width": False, "idler_distance": False,
    "detector_angular_radius": False, "screen_distance": False,
}
TOP_KEYS = {"layout", "design", "n_pairs", "seed", "workers", "output_dir", "mode"}
MODE_KEYS = {"incoherent_check", "two_axis"}
PLUMBING = ("slit_width", "idler_distance", "detector_angular_radius", "screen_distance")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DesignInputs:
    wavelength: float
    phi0: float
    f: float
    g: float
    h: float
    slit_distance: float
    crystal_thickness: float | None = None
    slit_width: float | None = None
    idler_distance: float | None = None
    detector_angular_radius: float | None = None
    screen_distance: float | None = None

    @property
    def params(self) -> DesignParams:
        return DesignParams(self.f, self.g, self.h)

    def layout(self) -> OpticalLayout:
        plumbing = {k: getattr(self, k) for k in PLUMBING if getattr(self, k) is not None}
        return layout_from_design(self.wavelength, self.phi0, self.params, self.slit_distance,
                                  crystal_thickness=self.crystal_thickness, **plumbing)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in DESIGN_KEYS if getattr(self, k) is not None}


@dataclass(frozen=True)
class RunConfig:
    layout: OpticalLayout | None = None
    design: DesignInputs | None = None
    n_pairs: int = 1_000_000
    seed: int = 0
    workers: int = 1
    output_dir: str = "."
    incoherent_check: bool = False
    two_axis: bool = False
    _resolved: OpticalLayout | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if (self.layout is None) == (self.design is None):
            raise ConfigError("$: exactly one of 'layout' and 'design' must be given")
        if self.n_pairs < 1:
            raise ConfigError(f"$.n_pairs: must be >= 1, got {self.n_pairs}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"$.seed: must be a 64-bit unsigned integer, got {self.seed}")
        if self.workers < 0:
            raise ConfigError(f"$.workers: must be >= 0, got {self.workers}")
        lay = self.layout
        if lay is None:
            try:
                lay = self.design.layout()
            except (LayoutError, ValueError) as exc:
                raise ConfigError(f"$.design: {exc}") from exc
        object.__setattr__(self, "_resolved", lay)

    @property
    def resolved_layout(self) -> OpticalLayout:
        return self._resolved

    def experiment(self) -> ExperimentConfig:
        if self.incoherent_check:
            return ExperimentConfig(validation_layout(self._resolved), force_both=True,
                                    two_axis=self.two_axis)
        return ExperimentConfig(self._resolved, two_axis=self.two_axis)

    @property
    def digest(self) -> str:
        """Digest of everything that affects simulated output (not workers or paths)."""
        return run_digest(self.experiment(), self.n_pairs, self.seed)

    @property
    def layout_digest(self) -> str:
        return layout_digest(self.experiment().layout)

    def to_dict(self) -> dict:
        out = {}
        if self.layout is not None:
            out["layout"] = self.layout.to_dict()
        else:
            out["design"] = self.design.to_dict()
        out.update(n_pairs=self.n_pairs, seed=self.seed, workers=self.workers,
                   output_dir=self.output_dir,
                   mode={"incoherent_check": self.incoherent_check, "two_axis": self.two_axis})
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **changes) -> "RunConfig":
        kw = {k: getattr(self, k) for k in (
            "layout", "design", "n_pairs", "seed", "workers", "output_dir",
            "incoherent_check", "two_axis")}
        kw.update(changes)
        return RunConfig(**kw)


def layout_digest(layout: OpticalLayout) -> str:
    text = json.dumps(layout.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _check_keys(obj, allowed, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")
    if isinstance(allowed, dict):
        for key, required in allowed.items():
            if required and key not in obj:
                raise ConfigError(f"{path}.{key}: missing required key")


def _number(obj, key, path):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}.{key}: expected a finite number, got {value!r}")
    return float(value)


def _integer(obj, key, path, default):
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    return value


def parse_config(data: bytes | str) -> RunConfig:
    """Parse and fully validate a JSON run configuration."""
    try:
        doc = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"$: malformed JSON: {exc}") from exc
    _check_keys(doc, TOP_KEYS, "$")
    if "layout" in doc and "design" in doc:
        raise ConfigError("$: 'layout' and 'design' are mutually exclusive; give one")

    layout = design = None
    if "layout" in doc:
        section = doc["layout"]
        _check_keys(section, LAYOUT_KEYS, "$.layout")
        values = {k: _number(section, k, "$.layout") for k in section}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                layout = OpticalLayout(**values)
        except (LayoutError, Warning) as exc:
            raise ConfigError(f"$.layout: {exc}") from exc
    elif "design" in doc:
        section = doc["design"]
        _check_keys(section, DESIGN_KEYS, "$.design")
        values = {k: _number(section, k, "$.design") for k in section}
        for k, v in values.items():
            if v <= 0:
                raise ConfigError(f"$.design.{k}: must be strictly positive, got {v!r}")
        design = DesignInputs(**values)
    else:
        raise ConfigError("$: one of 'layout' or 'design' is required")

    mode = doc.get("mode", {})
    _check_keys(mode, MODE_KEYS, "$.mode")
    for k, v in mode.items():
        if not isinstance(v, bool):
            raise ConfigError(f"$.mode.{k}: expected a boolean, got {v!r}")
    output_dir = doc.get("output_dir", ".")
    if not isinstance(output_dir, str):
        raise ConfigError(f"$.output_dir: expected a string, got {output_dir!r}")
    return RunConfig(
        layout=layout, design=design,
        n_pairs=_integer(doc, "n_pairs", "$", 1_000_000),
        seed=_integer(doc, "seed", "$", 0),
        workers=_integer(doc, "workers", "$", 1),
        output_dir=output_dir,
        incoherent_check=mode.get("incoherent_check", False),
        two_axis=mode.get("two_axis", False),
    )


def load_preset(name: str) -> RunConfig:
    """Shipped configurations: ``paper`` and ``threshold``."""
    path = resources.files("spdc_bench") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return parse_config(path.read_bytes())

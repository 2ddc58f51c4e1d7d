import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from config.settings import EXPERIMENTS_DIR, LatticeConfig
from src.exceptions import ExperimentConfigError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

SUBCOMMANDS = ("flow", "retract", "scan-lambda", "pillowcase", "kuranishi", "loja", "selftest")

_NUMBER = (int, float)

# key -> accepted JSON/YAML types
SCHEMA: Dict[str, Tuple[type, ...]] = {
    "name": (str,),
    "description": (str,),
    "subcommand": (str,),
    "grid": (int,),
    "base": (str, list),
    "init": (str,),
    "seed": (int,),
    "integrator": (str,),
    "t_max": _NUMBER,
    "grad_tol": _NUMBER,
    "rtol": _NUMBER,
    "dt0": _NUMBER,
    "dt_max": _NUMBER,
    "record_stride": (int,),
    "sample_times": (list,),
    "track_holonomy": (bool,),
    "out": (str,),
    "ray": (str,),
    "t_grid": (str, list),
    "p": (int, float, str, list),
    "batch": (int,),
    "refine": (bool,),
    "mu": _NUMBER,
    "radius": _NUMBER,
    "samples": (int,),
    "tol": _NUMBER,
    "functions": (list,),
    "sample_radius": _NUMBER,
}
REQUIRED = ("subcommand",)

_ANGLE = re.compile(
    r"^\s*(?P<sign>[+-]?)\s*(?P<coeff>\d+(?:\.\d*)?|\.\d+)?\s*\*?\s*pi\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?\s*$"
)


def parse_angle(value: Union[str, float, int], key: str = "base") -> float:
    """
    Angle in radians from a number or a pi expression.

    Accepts decimals and 'pi', '-pi/2', '2pi/3', '3*pi/4'.
    """
    if isinstance(value, bool):
        raise ExperimentConfigError(f"expected an angle, got {value!r}", key=key)
    if isinstance(value, _NUMBER):
        return float(value)
    text = str(value).strip().lower()
    match = _ANGLE.match(text)
    if match:
        coeff = float(match.group("coeff")) if match.group("coeff") else 1.0
        den = float(match.group("den")) if match.group("den") else 1.0
        sign = -1.0 if match.group("sign") == "-" else 1.0
        return sign * coeff * np.pi / den
    try:
        return float(text)
    except ValueError as e:
        raise ExperimentConfigError(f"cannot parse angle {value!r}", key=key) from e


def parse_base(value: Union[str, List, Tuple]) -> Tuple[float, float]:
    """'alpha,beta' or a two-element list of angles"""
    parts = value.split(",") if isinstance(value, str) else list(value)
    if len(parts) != 2:
        raise ExperimentConfigError(f"expected two angles 'alpha,beta', got {value!r}", key="base")
    return parse_angle(parts[0]), parse_angle(parts[1])


def parse_grid_spec(value: Union[str, List], key: str = "t_grid") -> List[float]:
    """
    Parameter grid from a list of numbers or 'logspace:LO:HI:NUM' / 'linspace:START:STOP:NUM'
    (logspace bounds are base-10 exponents).
    """
    if isinstance(value, list):
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError) as e:
            raise ExperimentConfigError(f"non-numeric entry in {value!r}", key=key) from e
    parts = str(value).split(":")
    if len(parts) != 4 or parts[0] not in ("logspace", "linspace"):
        raise ExperimentConfigError(f"expected 'logspace:LO:HI:NUM' or 'linspace:A:B:NUM', got {value!r}", key=key)
    try:
        lo, hi, num = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as e:
        raise ExperimentConfigError(f"malformed grid {value!r}", key=key) from e
    grid = np.logspace(lo, hi, num) if parts[0] == "logspace" else np.linspace(lo, hi, num)
    return [float(v) for v in grid]


@dataclass
class ExperimentConfig:
    """Validated experiment configuration; None means 'use the engine default'"""
    subcommand: str
    name: Optional[str] = None
    description: str = ""
    grid: int = LatticeConfig.DEFAULT_GRID
    base: Tuple[float, float] = (0.0, 0.0)
    init: str = "flat"
    seed: int = 0
    integrator: str = "etd2"
    t_max: Optional[float] = None
    grad_tol: Optional[float] = None
    rtol: Optional[float] = None
    dt0: Optional[float] = None
    dt_max: Optional[float] = None
    record_stride: int = 1
    sample_times: List[float] = field(default_factory=list)
    track_holonomy: bool = False
    out: Optional[str] = None
    ray: str = "product"
    t_grid: List[float] = field(default_factory=lambda: parse_grid_spec("logspace:-3:-1:20"))
    p: List[float] = field(default_factory=lambda: [2.0])
    batch: int = 1
    refine: bool = False
    mu: Optional[float] = None
    radius: float = 0.1
    samples: int = 100
    tol: Optional[float] = None
    functions: List[str] = field(default_factory=list)
    sample_radius: float = 0.1

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ExperimentConfig":
        """
        Validate a raw mapping against the schema and convert it.

        Raises:
            ExperimentConfigError: unknown key, missing required key or wrong type (key named)
        """
        if not isinstance(raw, dict):
            raise ExperimentConfigError(f"configuration must be a mapping, got {type(raw).__name__}")
        for key, value in raw.items():
            if key not in SCHEMA:
                raise ExperimentConfigError("unknown configuration key", key=str(key))
            allowed = SCHEMA[key]
            if isinstance(value, bool) and bool not in allowed:
                raise ExperimentConfigError(f"expected {_type_names(allowed)}, got a boolean", key=key)
            if not isinstance(value, allowed):
                raise ExperimentConfigError(f"expected {_type_names(allowed)}, got {type(value).__name__}", key=key)
        for key in REQUIRED:
            if key not in raw:
                raise ExperimentConfigError("missing required key", key=key)

        values = dict(raw)
        if values["subcommand"] not in SUBCOMMANDS:
            raise ExperimentConfigError(f"unknown subcommand {values['subcommand']!r}; "
                                        f"expected one of {SUBCOMMANDS}", key="subcommand")
        if "base" in values:
            values["base"] = parse_base(values["base"])
        if "t_grid" in values:
            values["t_grid"] = parse_grid_spec(values["t_grid"])
        if "sample_times" in values:
            values["sample_times"] = parse_grid_spec(values["sample_times"], key="sample_times")
        if "p" in values:
            p = values["p"] if isinstance(values["p"], list) else [values["p"]]
            values["p"] = [_p_value(v) for v in p]
        if "functions" in values and not all(isinstance(f, str) for f in values["functions"]):
            raise ExperimentConfigError("expected a list of function names", key="functions")
        for key in ("t_max", "grad_tol", "rtol", "dt0", "dt_max", "mu", "radius", "tol", "sample_radius"):
            if key in values:
                values[key] = float(values[key])
        if "grid" in values and (values["grid"] < LatticeConfig.MIN_GRID or values["grid"] % 2):
            raise ExperimentConfigError(f"grid must be an even integer >= {LatticeConfig.MIN_GRID}", key="grid")
        if values.get("seed", 0) < 0 or values.get("seed", 0) >= 2 ** 64:
            raise ExperimentConfigError("seed must be a 64-bit unsigned integer", key="seed")
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _type_names(types: Tuple[type, ...]) -> str:
    return " or ".join(t.__name__ for t in types)


def _p_value(value: Any) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return float("inf")
    if isinstance(value, bool) or not isinstance(value, _NUMBER):
        raise ExperimentConfigError(f"expected a number or 'inf', got {value!r}", key="p")
    if value < 1:
        raise ExperimentConfigError(f"Sobolev exponent must be >= 1, got {value}", key="p")
    return float(value)


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a raw configuration mapping from a .json, .yaml or .yml file"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            if path.suffix.lower() == ".json":
                data = json.load(f)
            else:
                data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ExperimentConfigError(f"configuration file not found: {path}", key="config") from e
    except json.JSONDecodeError as e:
        raise ExperimentConfigError(f"malformed JSON in {path}: {e}", key="config") from e
    except yaml.YAMLError as e:
        raise ExperimentConfigError(f"malformed YAML in {path}: {e}", key="config") from e
    if not isinstance(data, dict):
        raise ExperimentConfigError(f"{path} does not contain a mapping", key="config")
    return data


class ExperimentManager:
    """Named experiment presets loaded from YAML files"""

    def __init__(self, experiments_dir: Optional[Path] = None):
        self.experiments_dir = Path(experiments_dir) if experiments_dir is not None else EXPERIMENTS_DIR
        self._presets_cache: Dict[str, Dict[str, Any]] = {}
        self._load_all_presets()

        logger.debug(f"Experiment manager initialized with {len(self._presets_cache)} presets "
                     f"from {self.experiments_dir}")

    def _load_all_presets(self):
        if not self.experiments_dir.exists():
            logger.warning(f"Experiments directory does not exist: {self.experiments_dir}")
            return

        for preset_file in sorted(self.experiments_dir.glob("*.yaml")):
            try:
                self._load_preset_file(preset_file)
            except ExperimentConfigError as e:
                logger.error(f"Failed to load preset file {preset_file}: {str(e)}")

    def _load_preset_file(self, file_path: Path):
        raw = load_config_file(file_path)
        if "name" not in raw:
            raise ExperimentConfigError(f"preset {file_path.name} has no name", key="name")
        # validate now so a broken preset is reported at load time
        ExperimentConfig.from_dict(raw)
        self._presets_cache[raw["name"]] = raw
        logger.debug(f"Loaded preset: {raw['name']} from {file_path.name}")

    def get_preset(self, name: str) -> Dict[str, Any]:
        if name not in self._presets_cache:
            raise ExperimentConfigError(f"preset {name!r} not found; available: "
                                        f"{self.list_presets()}", key="preset")
        return dict(self._presets_cache[name])

    def list_presets(self) -> List[str]:
        return sorted(self._presets_cache)

    def get_preset_info(self, name: str) -> Dict[str, Any]:
        raw = self.get_preset(name)
        return {
            "name": raw["name"],
            "subcommand": raw["subcommand"],
            "description": raw.get("description", "No description"),
        }

    def reload_presets(self):
        logger.info("Reloading experiment presets from disk")
        self._presets_cache.clear()
        self._load_all_presets()

    def build_config(self, preset: Optional[str] = None, config_path: Optional[Union[str, Path]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        """Merge preset, then config file, then command-line overrides (None values skipped)"""
        raw: Dict[str, Any] = {}
        sources = []
        if preset:
            sources.append((f"preset {preset!r}", self.get_preset(preset)))
        if config_path:
            sources.append((str(config_path), load_config_file(config_path)))
        wanted = (overrides or {}).get("subcommand")
        for label, values in sources:
            if wanted and values.get("subcommand", wanted) != wanted:
                raise ExperimentConfigError(f"{label} is a {values['subcommand']!r} configuration, "
                                            f"not {wanted!r}", key="subcommand")
            raw.update(values)
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        return ExperimentConfig.from_dict(raw)


_experiment_manager = None


def get_experiment_manager() -> ExperimentManager:
    """Get the global experiment manager instance"""
    global _experiment_manager
    if _experiment_manager is None:
        _experiment_manager = ExperimentManager()
    return _experiment_manager

"""Configuration management for tagcal."""

from __future__ import annotations

import logging
import sys
from collections.abc import Mapping
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Type

import platformdirs

from .calibration import TrainConfig
from .core import AnchorLayout, Area, GeometryError, Scenario, Technology
from .evaluation import EvaluationConfig
from .simulator import NoiseProfile
from .tracking import TrackerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

BLE_TRUTH_SOURCES = ("trajectory", "uwb")
AOA_FILTER_MODES = ("per_slot", "pooled")

NOISE_KEYS = tuple(f.name for f in fields(NoiseProfile) if f.name != "rng_seed")
TRAINING_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name != "seed")
TRACKING_KEYS = {
    "kalman_q": "q",
    "kalman_r": "r",
    "gate": "gate",
    "half_angle": "half_angle",
    "cluster_radius": "cluster_radius",
}
TRACKING_OPTIONS = ("reacquire_after", "lag_compensation")

DEFAULTS: Dict[str, object] = {
    "technology": Technology.UWB.value,
    "output_dir": str(Path.cwd() / "output"),
    "seed": 0,
    "verbose": False,
    "scenarios": [Scenario.WALKING.value, Scenario.TROLLEY.value],
    "sessions_per_scenario": 5,
    "session_duration": None,
    "area_width": 5.0,
    "area_height": 5.0,
    "anchor_height": 2.0,
    "target_height": 1.0,
    "ble_truth": "trajectory",
    "aoa_filter_mode": "per_slot",
    "smoothing_window": 5,
    "workers": 1,
    "per_scenario": False,
    **{key: getattr(NoiseProfile(), key) for key in NOISE_KEYS},
    **{key: getattr(TrainConfig(), key) for key in TRAINING_KEYS},
    **{key: getattr(TrackerConfig(), attr) for key, attr in TRACKING_KEYS.items()},
    **{key: getattr(TrackerConfig(), key) for key in TRACKING_OPTIONS},
}

SECTIONS: Dict[str, Tuple[str, ...]] = {
    "general": ("technology", "output_dir", "seed", "verbose"),
    "simulation": (
        "scenarios",
        "sessions_per_scenario",
        "session_duration",
        "area_width",
        "area_height",
        "anchor_height",
        "target_height",
        "ble_truth",
        "aoa_filter_mode",
        *TRACKING_KEYS,
        *TRACKING_OPTIONS,
    ),
    "noise": NOISE_KEYS,
    "training": TRAINING_KEYS,
    "evaluation": ("smoothing_window", "workers", "per_scenario"),
}

_ALIASES: Dict[str, str] = {
    "tech": "technology",
    "epochs": "max_epochs",
    "sessions": "sessions_per_scenario",
    "duration": "session_duration",
    "window": "smoothing_window",
}


class ConfigError(ValueError):
    """Raised when a configuration value is missing or invalid."""


def _coerce_bool(value: object, default: bool) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in {"1", "true", "yes", "on"}:
            return True
        if lowered in {"0", "false", "no", "off"}:
            return False
    return default


def _coerce_int(value: object, default: int) -> int:
    if value is None:
        return default
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise ConfigError(f"Invalid integer value: {value!r}")


def _coerce_float(value: object, default: float) -> float:
    if value is None:
        return default
    if isinstance(value, bool):
        raise ConfigError(f"Invalid number: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError:
            pass
    raise ConfigError(f"Invalid number: {value!r}")


def _coerce_optional_float(value: object) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() in {"", "none"}):
        return None
    return _coerce_float(value, 0.0)


def _coerce_str(value: object, default: str) -> str:
    if value is None:
        return default
    return str(value)


def _coerce_choice(value: object, default: str, choices: Sequence[str], name: str) -> str:
    text = _coerce_str(value, default).strip().lower().replace("-", "_")
    if text not in choices:
        raise ConfigError(f"{name} must be one of {', '.join(choices)}; got {value!r}")
    return text


def _coerce_scenarios(value: object) -> Tuple[Scenario, ...]:
    if isinstance(value, str):
        items: Sequence[object] = [part for part in value.split(",") if part.strip()]
    elif isinstance(value, (list, tuple)):
        items = value
    else:
        raise ConfigError(f"Invalid scenario list: {value!r}")
    scenarios = []
    for item in items:
        name = item.value if isinstance(item, Scenario) else str(item).strip().lower()
        try:
            scenario = Scenario(name)
        except ValueError:
            raise ConfigError(f"Unknown scenario: {item!r}") from None
        if scenario not in scenarios:
            scenarios.append(scenario)
    if not scenarios:
        raise ConfigError("At least one scenario is required")
    return tuple(scenarios)


@dataclass(frozen=True, slots=True)
class RunConfig:
    technology: Technology
    scenarios: Tuple[Scenario, ...]
    sessions_per_scenario: int
    session_duration: Optional[float]
    seed: int
    output_dir: str
    area_width: float
    area_height: float
    anchor_height: float
    target_height: float
    noise: NoiseProfile
    train: TrainConfig
    tracker: TrackerConfig
    smoothing_window: int
    workers: int
    per_scenario: bool
    ble_truth: str
    aoa_filter_mode: str
    verbose: bool

    @classmethod
    def from_sources(
        cls,
        defaults: Dict[str, object],
        config_file: Dict[str, object],
        cli_args: Dict[str, object],
    ) -> "RunConfig":
        return _build_run_config(cls, defaults, config_file, cli_args)

    @classmethod
    def from_manifest(cls, path: Path) -> "RunConfig":
        try:
            with open(path, "rb") as f:
                parsed = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"Cannot read manifest {path}: {exc}") from exc
        return cls.from_sources(DEFAULTS, _normalize_config_data(parsed), {})

    @property
    def area(self) -> Area:
        return Area.of_size(self.area_width, self.area_height)

    def layout(self) -> AnchorLayout:
        return AnchorLayout.corners(self.technology, self.area, self.anchor_height)

    def evaluation(self) -> EvaluationConfig:
        return EvaluationConfig(
            train=self.train, smoothing_window=self.smoothing_window, workers=self.workers
        )

    def flat(self) -> Dict[str, object]:
        """Every setting under its config-file key."""

        values: Dict[str, object] = {
            "technology": self.technology.value,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "verbose": self.verbose,
            "scenarios": [s.value for s in self.scenarios],
            "sessions_per_scenario": self.sessions_per_scenario,
            "session_duration": self.session_duration,
            "area_width": self.area_width,
            "area_height": self.area_height,
            "anchor_height": self.anchor_height,
            "target_height": self.target_height,
            "ble_truth": self.ble_truth,
            "aoa_filter_mode": self.aoa_filter_mode,
            "smoothing_window": self.smoothing_window,
            "workers": self.workers,
            "per_scenario": self.per_scenario,
        }
        values.update({key: getattr(self.noise, key) for key in NOISE_KEYS})
        values.update({key: getattr(self.train, key) for key in TRAINING_KEYS})
        values.update({key: getattr(self.tracker, a) for key, a in TRACKING_KEYS.items()})
        values.update({key: getattr(self.tracker, key) for key in TRACKING_OPTIONS})
        return values


def _build_run_config(
    cls: Type[RunConfig],
    defaults: Dict[str, object],
    config_file: Dict[str, object],
    cli_args: Dict[str, object],
) -> RunConfig:
    merged: Dict[str, object] = defaults.copy()
    merged.update(config_file)
    for key, value in cli_args.items():
        if value is None:
            continue
        merged[key] = value

    def _float(key: str) -> float:
        return _coerce_float(merged.get(key), float(defaults[key]))  # type: ignore[arg-type]

    def _int(key: str) -> int:
        return _coerce_int(merged.get(key), int(defaults[key]))  # type: ignore[call-overload]

    technology = Technology(
        _coerce_choice(
            merged.get("technology"),
            str(defaults["technology"]),
            [t.value for t in Technology],
            "technology",
        )
    )
    sessions = _int("sessions_per_scenario")
    if sessions < 2:
        raise ConfigError("sessions_per_scenario must be at least 2")
    duration = _coerce_optional_float(merged.get("session_duration"))
    if duration is not None and duration <= 0:
        raise ConfigError("session_duration must be positive")
    smoothing = _int("smoothing_window")
    if smoothing < 1:
        raise ConfigError("smoothing_window must be >= 1")
    workers = _int("workers")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    seed = _int("seed")
    if seed < 0:
        raise ConfigError("seed must be non-negative")

    try:
        Area.of_size(_float("area_width"), _float("area_height"))
        noise = NoiseProfile(
            **{key: _float(key) for key in NOISE_KEYS}, rng_seed=seed
        )
        train = TrainConfig(
            max_epochs=_int("max_epochs"),
            hidden_nodes=_int("hidden_nodes"),
            mu=_float("mu"),
            mu_mult=_float("mu_mult"),
            mu_max=_float("mu_max"),
            grad_min=_float("grad_min"),
            min_improvement=_float("min_improvement"),
            patience=_int("patience"),
            seed=seed,
        )
        tracker = TrackerConfig(
            **{attr: _float(key) for key, attr in TRACKING_KEYS.items()},
            reacquire_after=_int("reacquire_after"),
            lag_compensation=_coerce_bool(
                merged.get("lag_compensation"), bool(defaults["lag_compensation"])
            ),
        )
        runtime = cls(
            technology=technology,
            scenarios=_coerce_scenarios(merged.get("scenarios", defaults["scenarios"])),
            sessions_per_scenario=sessions,
            session_duration=duration,
            seed=seed,
            output_dir=str(
                Path(_coerce_str(merged.get("output_dir"), str(defaults["output_dir"])))
                .expanduser()
            ),
            area_width=_float("area_width"),
            area_height=_float("area_height"),
            anchor_height=_float("anchor_height"),
            target_height=_float("target_height"),
            noise=noise,
            train=train,
            tracker=tracker,
            smoothing_window=smoothing,
            workers=workers,
            per_scenario=_coerce_bool(merged.get("per_scenario"), False),
            ble_truth=_coerce_choice(
                merged.get("ble_truth"), "trajectory", BLE_TRUTH_SOURCES, "ble_truth"
            ),
            aoa_filter_mode=_coerce_choice(
                merged.get("aoa_filter_mode"), "per_slot", AOA_FILTER_MODES, "aoa_filter_mode"
            ),
            verbose=_coerce_bool(merged.get("verbose"), bool(defaults["verbose"])),
        )
    except ConfigError:
        raise
    except (GeometryError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return runtime


def get_config_path() -> Path:
    """Return the platform-specific path of the user config file."""

    return Path(platformdirs.user_config_path("tagcal")) / "config.toml"


def _normalize_config_data(data: Dict[str, Any]) -> Dict[str, Any]:
    """Flatten the known TOML sections into config keys."""

    flat: Dict[str, Any] = {}
    for key, value in data.items():
        if not isinstance(value, Mapping):
            flat[_ALIASES.get(key, key)] = value

    for section, keys in SECTIONS.items():
        section_values = data.get(section)
        if not isinstance(section_values, Mapping):
            continue
        for key, value in section_values.items():
            target = _ALIASES.get(key, key)
            if target in keys:
                flat[target] = value
            else:
                logger.warning("Ignoring unknown config key [%s] %s", section, key)
    return flat


def load_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load configuration, returning an empty mapping on failure."""

    config_path = path or get_config_path()
    if not config_path.exists():
        return {}

    try:
        with open(config_path, "rb") as f:
            parsed: Dict[str, Any] = tomllib.load(f)
    except FileNotFoundError:
        logger.debug("Config file %s disappeared before it could be read", config_path)
        return {}
    except tomllib.TOMLDecodeError as exc:
        logger.warning("Failed to parse config %s: %s", config_path, exc)
        return {}
    except OSError as exc:
        logger.warning("Unable to read config %s: %s", config_path, exc)
        return {}

    return _normalize_config_data(parsed)


def merge_configs(
    defaults: Dict[str, Any],
    config_file: Dict[str, Any],
    cli_args: Dict[str, Any],
) -> RunConfig:
    """Return a validated config using precedence CLI > file > defaults."""

    return RunConfig.from_sources(defaults, config_file, cli_args)


def _toml_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    s = str(value)
    s = s.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{s}"'


def dump_toml(sections: Mapping[str, Mapping[str, object]]) -> str:
    """Serialise ``{section: {key: value}}``; ``None`` values are left out."""

    lines: list[str] = []
    for section, values in sections.items():
        filtered = {k: v for k, v in values.items() if v is not None}
        if not filtered:
            continue
        lines.append(f"[{section}]")
        for key, value in filtered.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines).strip() + "\n"


def config_sections(values: Mapping[str, object]) -> Dict[str, Dict[str, object]]:
    """Group flat config keys back into their TOML sections."""

    return {
        section: {key: values[key] for key in keys if key in values}
        for section, keys in SECTIONS.items()
    }


def manifest_sections(
    runtime: RunConfig, session_ids: Sequence[str]
) -> Dict[str, Dict[str, object]]:
    flat = runtime.flat()
    # a manifest describes the dataset, not where it was written
    flat.pop("output_dir", None)
    flat.pop("verbose", None)
    sections: Dict[str, Dict[str, object]] = {
        "dataset": {
            "technology": runtime.technology.value,
            "root_seed": runtime.seed,
            "sessions": list(session_ids),
        }
    }
    sections.update(config_sections(flat))
    return sections

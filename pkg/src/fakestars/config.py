"""Pipeline configuration: one YAML file drives every subcommand."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import yaml

from .campaigns import CampaignThresholds
from .events import Window
from .lockstep import LockstepParams
from .lowactivity import DEFAULT_MIN_FAKE
from .synth import ScenarioConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeasureConfig:
    k_min: int = 2
    k_max: int = 8
    seeds: tuple[int, ...] = tuple(range(10))
    collapse: bool = False
    popular_threshold: int = 50


@dataclass(frozen=True)
class RegressionConfig:
    orders: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    controls: bool = False


@dataclass(frozen=True)
class EnrichConfig:
    existence_fixture: str | None = None  # CSV entity_id,status
    live: bool = False  # query the GitHub API instead of the fixture
    baseline_repos: str | None = None  # one id per line
    baseline_accounts: str | None = None
    trending: str | None = None  # CSV repo_id,month
    packages: str | None = None  # CSV package,registry,repo_id
    workers: int = 4


@dataclass(frozen=True)
class PipelineConfig:
    input_paths: tuple[str, ...] = ()
    window: tuple[str, str] | None = None
    lockstep: LockstepParams = LockstepParams()
    chunked: bool = True
    low_activity_min_fake: int = DEFAULT_MIN_FAKE
    campaigns: CampaignThresholds = CampaignThresholds()
    scenario: ScenarioConfig | None = None
    measure: MeasureConfig = MeasureConfig()
    regression: RegressionConfig = RegressionConfig()
    enrich: EnrichConfig = EnrichConfig()
    output_dir: str = "out"
    threads: int = 1

    def observation_window(self) -> Window | None:
        if self.window is not None:
            return Window.parse(*self.window)
        if self.scenario is not None:
            return self.scenario.window
        return None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.scenario is not None:
            d["scenario"] = self.scenario.to_dict()
        return _plain(d)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "lockstep": LockstepParams,
    "campaigns": CampaignThresholds,
    "measure": MeasureConfig,
    "regression": RegressionConfig,
    "enrich": EnrichConfig,
}
_TUPLE_FIELDS = {"seeds", "orders"}
_ENRICH_PATHS = ("existence_fixture", "baseline_repos", "baseline_accounts", "trending", "packages")


def _resolve(path: str, base_dir: Path) -> str:
    return str((base_dir / path).resolve())


def _section(cls, data: dict | None, name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    data = {k: tuple(v) if k in _TUPLE_FIELDS else v for k, v in data.items()}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r}: {exc}") from exc


def config_from_dict(data: dict | None, base_dir: Path | None = None) -> PipelineConfig:
    data = dict(data or {})
    known = {f.name for f in fields(PipelineConfig)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _section(cls, data.pop(name, None), name)
    if data.get("scenario") is not None:
        try:
            kwargs["scenario"] = ScenarioConfig.from_dict(data.pop("scenario"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid 'scenario': {exc}") from exc
    else:
        data.pop("scenario", None)
    if "input_paths" in data:
        paths = data.pop("input_paths") or []
        if base_dir is not None:
            paths = [_resolve(p, base_dir) for p in paths]
        kwargs["input_paths"] = tuple(paths)
    if data.get("window") is not None:
        w = data.pop("window")
        if isinstance(w, dict):
            w = (w.get("start"), w.get("end"))
        try:
            Window.parse(str(w[0]), str(w[1]))
        except (TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"invalid window {w!r}: {exc}") from exc
        kwargs["window"] = (str(w[0]), str(w[1]))
    else:
        data.pop("window", None)
    if base_dir is not None:
        e = kwargs["enrich"]
        kwargs["enrich"] = EnrichConfig(**{
            **asdict(e),
            **{name: _resolve(getattr(e, name), base_dir) for name in _ENRICH_PATHS if getattr(e, name)},
        })
    kwargs.update(data)
    try:
        return PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(data, base_dir=path.parent)

"""Single JSON configuration document shared by all CLI subcommands.

Top-level sections (each optional, with defaults):
  workload  - simulator parameters
  faults    - injected latency faults for the simulator
  pipeline  - live monitoring: request specs, detector, ring, cooldown
  analyzer  - detailed-report vocabulary and sizes

Precedence is flags > config > defaults; flags are applied by the CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .analyzer import (
    DEFAULT_HIST_BASE_NS,
    DEFAULT_HIST_BUCKETS,
    DEFAULT_TOP_N,
    AnalyzerConfig,
)
from .events import DEFAULT_MAX_SKEW_NS
from .light import DetectorConfig, RequestSpec
from .ring import DEFAULT_YIELD_RATIO
from .simulator import DEFAULT_LAYERS, FaultSpec, LayerConfig, WorkloadConfig


class ConfigError(ValueError):
    """Configuration document is invalid; the message names the offending key."""


DEFAULT_SPECS = (
    RequestSpec(
        label="apache",
        start_name="apache_request_received",
        end_name="apache_request_handled",
        correlation_key="req_id",
        threshold_ns=1_000_000_000,
    ),
)


@dataclass(frozen=True)
class PipelineConfig:
    specs: tuple[RequestSpec, ...] = DEFAULT_SPECS
    detector: DetectorConfig = DetectorConfig()
    ring_capacity: int = 1_000_000
    cooldown_ns: int = 1_000_000_000
    max_skew_ns: int = DEFAULT_MAX_SKEW_NS
    bucket_width_ns: int = 1_000_000_000
    on_anomaly_exec: str | None = None
    flush_yield_ratio: float = DEFAULT_YIELD_RATIO

    def __post_init__(self) -> None:
        if not self.specs:
            raise ConfigError("pipeline.specs must contain at least one spec")
        if self.ring_capacity < 1:
            raise ConfigError("pipeline.ring_capacity must be >= 1")
        if self.cooldown_ns < 0:
            raise ConfigError("pipeline.cooldown_ns must be >= 0")
        if self.max_skew_ns < 0:
            raise ConfigError("pipeline.max_skew_ns must be >= 0")
        if self.bucket_width_ns < 1:
            raise ConfigError("pipeline.bucket_width_ns must be >= 1")


@dataclass(frozen=True)
class Config:
    workload: WorkloadConfig = WorkloadConfig()
    faults: tuple[FaultSpec, ...] = ()
    pipeline: PipelineConfig = PipelineConfig()
    analyzer: AnalyzerConfig = AnalyzerConfig()
    raw: dict = field(default_factory=dict, compare=False)


def _require(d: dict, key: str, kind, context: str):
    value = d.get(key)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"{context}.{key} must be a {kind.__name__}")
    return value


def _spec_from_json(d: dict, context: str) -> RequestSpec:
    try:
        return RequestSpec(
            label=_require(d, "label", str, context),
            start_name=_require(d, "start", str, context),
            end_name=_require(d, "end", str, context),
            correlation_key=d.get("key"),
            threshold_ns=d.get("threshold_ns", 1_000_000_000),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from None


def _layer_from_json(d: dict, context: str) -> LayerConfig:
    try:
        return LayerConfig(
            label=_require(d, "label", str, context),
            start_name=_require(d, "start", str, context),
            end_name=_require(d, "end", str, context),
            base_latency_ns=_require(d, "base_latency_ns", int, context),
            jitter=d.get("jitter", 0.2),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from None


def _workload_from_json(d: dict) -> WorkloadConfig:
    layers = DEFAULT_LAYERS
    if "layers" in d:
        layers = tuple(
            _layer_from_json(entry, f"workload.layers[{i}]")
            for i, entry in enumerate(d["layers"])
        )
    try:
        return WorkloadConfig(
            duration_s=d.get("duration_s", 60.0),
            request_rate=d.get("request_rate", 4.0),
            kernel_noise=d.get("kernel_noise", 1_500.0),
            seed=d.get("seed", 1),
            layers=layers,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"workload: {exc}") from None


def _fault_from_json(d: dict, context: str) -> FaultSpec:
    try:
        return FaultSpec(
            at_ns=_require(d, "at_ns", int, context),
            layer=_require(d, "layer", str, context),
            extra_latency_ns=_require(d, "extra_latency_ns", int, context),
            count=d.get("count", 1),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from None


def _detector_from_json(d: dict) -> DetectorConfig:
    try:
        return DetectorConfig(
            enabled=d.get("enabled", True),
            statistical=d.get("statistical", False),
            k=d.get("k", 3.0),
            window=d.get("window", 100),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"pipeline.detector: {exc}") from None


def _pipeline_from_json(d: dict) -> PipelineConfig:
    specs = DEFAULT_SPECS
    if "specs" in d:
        specs = tuple(
            _spec_from_json(entry, f"pipeline.specs[{i}]")
            for i, entry in enumerate(d["specs"])
        )
    try:
        return PipelineConfig(
            specs=specs,
            detector=_detector_from_json(d.get("detector", {})),
            ring_capacity=d.get("ring_capacity", 1_000_000),
            cooldown_ns=d.get("cooldown_ns", 1_000_000_000),
            max_skew_ns=d.get("max_skew_ns", DEFAULT_MAX_SKEW_NS),
            bucket_width_ns=d.get("bucket_width_ns", 1_000_000_000),
            on_anomaly_exec=d.get("on_anomaly_exec"),
            flush_yield_ratio=d.get("flush_yield_ratio", DEFAULT_YIELD_RATIO),
        )
    except TypeError as exc:
        raise ConfigError(f"pipeline: {exc}") from None


def _analyzer_from_json(d: dict) -> AnalyzerConfig:
    defaults = AnalyzerConfig()
    request_layers = defaults.request_layers
    if "request_layers" in d:
        request_layers = tuple(
            _spec_from_json(entry, f"analyzer.request_layers[{i}]")
            for i, entry in enumerate(d["request_layers"])
        )
    query_spec = defaults.query_spec
    statement_field = defaults.statement_field
    if "query" in d:
        query_spec = _spec_from_json(d["query"], "analyzer.query")
        statement_field = d["query"].get("statement_field", "statement")
    try:
        return AnalyzerConfig(
            request_layers=request_layers,
            func_entry=d.get("func_entry", defaults.func_entry),
            func_exit=d.get("func_exit", defaults.func_exit),
            query_spec=query_spec,
            statement_field=statement_field,
            top_n=d.get("top_n", DEFAULT_TOP_N),
            histogram_base_ns=d.get("histogram_base_ns", DEFAULT_HIST_BASE_NS),
            histogram_buckets=d.get("histogram_buckets", DEFAULT_HIST_BUCKETS),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"analyzer: {exc}") from None


_SECTIONS = ("workload", "faults", "pipeline", "analyzer")


def config_from_json(doc: dict) -> Config:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    for key in doc:
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
    faults = tuple(
        _fault_from_json(entry, f"faults[{i}]")
        for i, entry in enumerate(doc.get("faults", []))
    )
    return Config(
        workload=_workload_from_json(doc.get("workload", {})),
        faults=faults,
        pipeline=_pipeline_from_json(doc.get("pipeline", {})),
        analyzer=_analyzer_from_json(doc.get("analyzer", {})),
        raw=doc,
    )


def load_config(path: str | Path | None) -> Config:
    """Load and validate a config document; None yields all defaults."""
    if path is None:
        return Config()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_json(doc)

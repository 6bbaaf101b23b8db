from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

from typing_extensions import Self

from dbar_lab.internal.util.multiformat import MultiformatModelMixin
from dbar_lab.internal.util.toml import load_toml_file, load_toml_resource, overlay_tables
from dbar_lab.model.options import ConfigError, QuadratureOptions, SolverOptions
from dbar_lab.model.regions import ModelConstants, PlanarRegion, ProductDomain, RegionSpecError

DEFAULT_CONFIG_RESOURCE = "default.toml"


class ExperimentKind(Enum):
    DISC_EXAMPLE = "disc-example"
    SHRINK_STUDY = "shrink-study"
    MKH_SUITE = "mkh-suite"
    PROBE = "probe"
    ANCHORS = "anchors"

    @property
    def section(self) -> str:
        return self.value.replace("-", "_")


def _float_list(raw: Any, key: str) -> tuple[float, ...]:
    if not isinstance(raw, Sequence) or isinstance(raw, str):
        raise ConfigError(f"{key} must be a list", key=key)
    if not raw:
        raise ConfigError(f"{key} must not be empty", key=key)
    try:
        return tuple(float(v) for v in raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must hold numbers", key=key)


def _h_list(raw: Any, key: str) -> tuple[float, ...]:
    values = _float_list(raw, key)
    if any(not h > 0.0 for h in values):
        raise ConfigError("h must be positive", key=key)
    return values


def _j_list(raw: Any, key: str) -> tuple[int, ...]:
    values = _float_list(raw, key)
    if any(v != int(v) or v < 2 for v in values):
        raise ConfigError(f"{key} entries must be integers >= 2", key=key)
    return tuple(int(v) for v in values)


def _positive(mapping: Mapping[str, Any], key: str, default: float, section: str) -> float:
    try:
        value = float(mapping.get(key, default))
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number", key=f"{section}.{key}")
    if not value > 0.0:
        raise ConfigError(f"{key} must be positive", key=f"{section}.{key}")
    return value


def _known(mapping: Mapping[str, Any], section: str, keys: set[str]) -> None:
    for key in mapping:
        if key not in keys:
            raise ConfigError(f"unknown key {key!r} in [{section}]", key=f"{section}.{key}")


@dataclass(frozen=True, slots=True, kw_only=True)
class DiscExampleSettings(MultiformatModelMixin):
    """
    Witness sequence of the analytic-disc model.

    The grid-sampled witness uses alpha = grid_alpha_scale / j; the certified
    shifts underflow long before the lattice could resolve them. The grid
    cross-check runs at h = 1 / (cross_check_cells * j), and λ_h(V_j) may not
    exceed the z1-disc limit j0,1^2 by more than lambda_slack * h.
    """

    j: tuple[int, ...] = (2, 3, 4, 5, 6)
    grid_alpha_scale: float = 0.5
    cross_check_cells: int = 64
    cross_check_tol: float = 0.15
    lambda_slack: float = 8.0
    certificates: str | None = None

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "j": list(self.j),
            "grid_alpha_scale": self.grid_alpha_scale,
            "cross_check_cells": self.cross_check_cells,
            "cross_check_tol": self.cross_check_tol,
            "lambda_slack": self.lambda_slack,
            "certificates": self.certificates,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        section = "disc_example"
        _known(mapping, section, set(cls.__dataclass_fields__))
        store = mapping.get("certificates")
        cells = int(mapping.get("cross_check_cells", 64))
        if cells < 4:
            raise ConfigError("cross_check_cells must be at least 4", key=f"{section}.cross_check_cells")
        return cls(
            j=_j_list(mapping.get("j", [2, 3, 4, 5, 6]), f"{section}.j"),
            grid_alpha_scale=_positive(mapping, "grid_alpha_scale", 0.5, section),
            cross_check_cells=cells,
            cross_check_tol=_positive(mapping, "cross_check_tol", 0.15, section),
            lambda_slack=_positive(mapping, "lambda_slack", 8.0, section),
            certificates=None if not store else str(store),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class ShrinkSettings(MultiformatModelMixin):
    """
    Polydiscs of shrinking radius around a boundary point of the Siegel model.

    `regression` names a TOML file of growth ratios. The first run writes it;
    later runs with the same radii fail when a ratio moves by more than
    regression_tol relative to the stored value.
    """

    radii: tuple[float, ...] = (0.5, 0.25, 0.125)
    cells_per_radius: int = 4
    half_width: float = 1.0
    regression: str | None = None
    regression_tol: float = 1e-6

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "radii": list(self.radii),
            "cells_per_radius": self.cells_per_radius,
            "half_width": self.half_width,
            "regression": self.regression,
            "regression_tol": self.regression_tol,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        section = "shrink_study"
        _known(mapping, section, set(cls.__dataclass_fields__))
        radii = _float_list(mapping.get("radii", [0.5, 0.25, 0.125]), f"{section}.radii")
        if any(not r > 0.0 for r in radii):
            raise ConfigError("radii must be positive", key=f"{section}.radii")
        cells = int(mapping.get("cells_per_radius", 4))
        if cells < 2:
            raise ConfigError("cells_per_radius must be at least 2", key=f"{section}.cells_per_radius")
        return cls(
            radii=radii,
            cells_per_radius=cells,
            half_width=_positive(mapping, "half_width", 1.0, section),
            regression=None if not mapping.get("regression") else str(mapping["regression"]),
            regression_tol=_positive(mapping, "regression_tol", 1e-6, section),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class MkhSettings(MultiformatModelMixin):
    h: tuple[float, ...] = (0.25, 1.0 / 6.0, 0.125)
    weight: str = "quadratic"
    radius_sq: float = 5.0
    delta: float = 0.5
    count: int = 100
    slack_constant: float = 1.0
    window: float = 0.75
    erosion: int = 1

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "h": list(self.h),
            "weight": self.weight,
            "radius_sq": self.radius_sq,
            "delta": self.delta,
            "count": self.count,
            "slack_constant": self.slack_constant,
            "window": self.window,
            "erosion": self.erosion,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        section = "mkh_suite"
        _known(mapping, section, set(cls.__dataclass_fields__))
        weight = str(mapping.get("weight", "quadratic"))
        if weight not in ("zero", "quadratic", "scaled"):
            raise ConfigError(f"unknown weight {weight!r}", key=f"{section}.weight")
        count = int(mapping.get("count", 100))
        if count <= 0:
            raise ConfigError("count must be positive", key=f"{section}.count")
        return cls(
            h=_h_list(mapping.get("h", [0.25, 1.0 / 6.0, 0.125]), f"{section}.h"),
            weight=weight,
            radius_sq=_positive(mapping, "radius_sq", 5.0, section),
            delta=_positive(mapping, "delta", 0.5, section),
            count=count,
            slack_constant=_positive(mapping, "slack_constant", 1.0, section),
            window=_positive(mapping, "window", 0.75, section),
            erosion=int(mapping.get("erosion", 1)),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class ProbeSettings(MultiformatModelMixin):
    """ε = epsilon_factor / max_j R_j over the witnesses with alpha = alpha_scale / j."""

    j: tuple[int, ...] = (2, 3, 4)
    epsilon_factor: float = 1.0 / 16.0
    alpha_scale: float = 0.5

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"j": list(self.j), "epsilon_factor": self.epsilon_factor, "alpha_scale": self.alpha_scale}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        section = "probe"
        _known(mapping, section, {"j", "epsilon_factor", "alpha_scale"})
        return cls(
            j=_j_list(mapping.get("j", [2, 3, 4]), f"{section}.j"),
            epsilon_factor=_positive(mapping, "epsilon_factor", 1.0 / 16.0, section),
            alpha_scale=_positive(mapping, "alpha_scale", 0.5, section),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class AnchorSettings(MultiformatModelMixin):
    side: float = 1.0
    h: tuple[float, ...] = (0.125, 0.1, 1.0 / 12.0)
    tolerance: float = 0.2

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"side": self.side, "h": list(self.h), "tolerance": self.tolerance}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        section = "anchors"
        _known(mapping, section, {"side", "h", "tolerance"})
        return cls(
            side=_positive(mapping, "side", 1.0, section),
            h=_h_list(mapping.get("h", [0.125, 0.1, 1.0 / 12.0]), f"{section}.h"),
            tolerance=_positive(mapping, "tolerance", 0.2, section),
        )


@dataclass(frozen=True, slots=True, kw_only=True)
class ExperimentConfig(MultiformatModelMixin):
    """
    Validated configuration of one experiment run.

    `h` is the lattice spacing list shared by the disc example and the probe;
    the MKH suite and the anchors carry their own refinement lists.
    """

    kind: ExperimentKind
    domain: str = "product-model"
    h: tuple[float, ...] = (0.0625, 0.03125)
    out_dir: Path = Path("out")
    threads: int = 1
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    quadrature: QuadratureOptions = field(default_factory=QuadratureOptions)
    model: ModelConstants = field(default_factory=ModelConstants)
    disc_example: DiscExampleSettings = field(default_factory=DiscExampleSettings)
    shrink_study: ShrinkSettings = field(default_factory=ShrinkSettings)
    mkh_suite: MkhSettings = field(default_factory=MkhSettings)
    probe: ProbeSettings = field(default_factory=ProbeSettings)
    anchors: AnchorSettings = field(default_factory=AnchorSettings)
    regions: Mapping[str, PlanarRegion] = field(default_factory=dict)
    domains: Mapping[str, ProductDomain] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.threads < 1:
            raise ConfigError("threads must be at least 1", key="experiment.threads")

    def settings(self) -> MultiformatModelMixin:
        return getattr(self, self.kind.section)

    def with_overrides(self, overrides: Mapping[str, Any]) -> ExperimentConfig:
        """Applies flat command-line overrides; None values are ignored."""
        cfg = self
        opts = {k: v for k, v in overrides.items() if v is not None}
        if "out" in opts:
            cfg = replace(cfg, out_dir=Path(opts["out"]))
        if "seed" in opts:
            cfg = replace(cfg, seed=int(opts["seed"]), solver=replace(cfg.solver, seed=int(opts["seed"])))
        if "threads" in opts:
            cfg = replace(cfg, threads=int(opts["threads"]))
        try:
            if "quad_tol" in opts:
                cfg = replace(cfg, quadrature=replace(cfg.quadrature, tol=float(opts["quad_tol"])))
            if "solver_tol" in opts:
                cfg = replace(cfg, solver=replace(cfg.solver, tol=float(opts["solver_tol"])))
        except ValueError as e:
            raise ConfigError(str(e))
        if "h" in opts:
            match cfg.kind:
                case ExperimentKind.MKH_SUITE:
                    cfg = replace(cfg, mkh_suite=replace(cfg.mkh_suite, h=_h_list(opts["h"], "mkh_suite.h")))
                case ExperimentKind.ANCHORS:
                    cfg = replace(cfg, anchors=replace(cfg.anchors, h=_h_list(opts["h"], "anchors.h")))
                case _:
                    cfg = replace(cfg, h=_h_list(opts["h"], "grid.h"))
        if "j" in opts:
            match cfg.kind:
                case ExperimentKind.PROBE:
                    cfg = replace(cfg, probe=replace(cfg.probe, j=_j_list(opts["j"], "probe.j")))
                case _:
                    cfg = replace(
                        cfg, disc_example=replace(cfg.disc_example, j=_j_list(opts["j"], "disc_example.j"))
                    )
        return cfg

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "experiment": {
                "kind": self.kind.value,
                "domain": self.domain,
                "out": self.out_dir.as_posix(),
                "threads": self.threads,
                "seed": self.seed,
            },
            "grid": {"h": list(self.h)},
            "solver": self.solver.to_mapping(),
            "quadrature": self.quadrature.to_mapping(),
            "model": self.model.to_mapping(),
            "disc_example": self.disc_example.to_mapping(),
            "shrink_study": self.shrink_study.to_mapping(),
            "mkh_suite": self.mkh_suite.to_mapping(),
            "probe": self.probe.to_mapping(),
            "anchors": self.anchors.to_mapping(),
            "regions": {k: v.to_mapping() for k, v in self.regions.items()},
            "domains": {k: v.to_mapping() for k, v in self.domains.items()},
        }

    # :: MechanicalOperation | type=deserialization
    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        """
        Builds a validated configuration from a parsed document.

        Raises:
            ConfigError: Naming the offending key when a section is malformed.
        """
        experiment = mapping.get("experiment", {})
        try:
            kind = ExperimentKind(experiment["kind"])
        except KeyError:
            raise ConfigError("experiment kind is required", key="experiment.kind")
        except ValueError:
            raise ConfigError(f"unknown experiment kind {experiment['kind']!r}", key="experiment.kind")

        regions: dict[str, PlanarRegion] = {}
        try:
            for name, section in mapping.get("regions", {}).items():
                regions[name] = PlanarRegion.from_mapping(section, named=regions)
            domains = {
                name: ProductDomain.from_mapping({"name": name, **section}, named=regions)
                for name, section in mapping.get("domains", {}).items()
            }
            model = ModelConstants.from_mapping(mapping.get("model", {}))
        except RegionSpecError as e:
            raise ConfigError(str(e), key=e.key)

        def section(name: str) -> Mapping[str, Any]:
            value = mapping.get(name, {})
            if not isinstance(value, Mapping):
                raise ConfigError(f"[{name}] must be a table", key=name)
            return value

        try:
            threads = int(experiment.get("threads", 1))
            seed = int(experiment.get("seed", 0))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed [experiment] section: {e}", key="experiment")
        return cls(
            kind=kind,
            domain=str(experiment.get("domain", "product-model")),
            h=_h_list(section("grid").get("h", [0.0625, 0.03125]), "grid.h"),
            out_dir=Path(str(experiment.get("out", "out"))),
            threads=threads,
            seed=seed,
            solver=SolverOptions.from_mapping(section("solver")),
            quadrature=QuadratureOptions.from_mapping(section("quadrature")),
            model=model,
            disc_example=DiscExampleSettings.from_mapping(section("disc_example")),
            shrink_study=ShrinkSettings.from_mapping(section("shrink_study")),
            mkh_suite=MkhSettings.from_mapping(section("mkh_suite")),
            probe=ProbeSettings.from_mapping(section("probe")),
            anchors=AnchorSettings.from_mapping(section("anchors")),
            regions=regions,
            domains=domains,
        )


def load_config(
    kind: ExperimentKind | str,
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """
    Packaged defaults, overlaid by a user file, overlaid by flat overrides.

    Raises:
        ConfigError: If the user file is missing or any value is invalid.
    """
    document = load_toml_resource(DEFAULT_CONFIG_RESOURCE)
    if path is not None:
        try:
            document = overlay_tables(document, load_toml_file(path))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist", key="config")
        except ValueError as e:
            raise ConfigError(f"config file {path} is not valid TOML: {e}", key="config")
    kind = ExperimentKind(kind) if isinstance(kind, str) else kind
    document = overlay_tables(document, {"experiment": {"kind": kind.value}})
    return ExperimentConfig.from_mapping(document).with_overrides(overrides or {})


__all__ = [
    "AnchorSettings",
    "ConfigError",
    "DiscExampleSettings",
    "ExperimentConfig",
    "ExperimentKind",
    "MkhSettings",
    "ProbeSettings",
    "ShrinkSettings",
    "load_config",
]

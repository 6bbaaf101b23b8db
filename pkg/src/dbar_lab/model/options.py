from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, fields
from typing import Any

from typing_extensions import Self

from dbar_lab.internal.util.multiformat import MultiformatModelMixin


class ConfigError(RuntimeError):
    """
    Raised when configuration is malformed.

    Attributes:
        key (str | None): Dotted name of the offending key.
    """

    def __init__(self, message: str, *, key: str | None = None):
        super().__init__(message)
        self.key = key


def _coerce(cls: type, section: str, mapping: Mapping[str, Any]) -> dict[str, Any]:
    known = {f.name: f.type for f in fields(cls)}
    out: dict[str, Any] = {}
    for key, value in mapping.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]", key=f"{section}.{key}")
        out[key] = value
    return out


@dataclass(frozen=True, slots=True, kw_only=True)
class SolverOptions(MultiformatModelMixin):
    """Eigensolver settings."""

    tol: float = 1e-8
    seed: int = 0
    dense_threshold: int = 2000
    max_iterations: int = 5000

    def __post_init__(self) -> None:
        if not self.tol > 0.0:
            raise ConfigError("solver tolerance must be positive", key="solver.tol")
        if self.dense_threshold < 0:
            raise ConfigError("dense_threshold must be nonnegative", key="solver.dense_threshold")
        if self.max_iterations <= 0:
            raise ConfigError("max_iterations must be positive", key="solver.max_iterations")

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {
            "tol": self.tol,
            "seed": self.seed,
            "dense_threshold": self.dense_threshold,
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        raw = _coerce(cls, "solver", mapping)
        try:
            return cls(
                tol=float(raw.get("tol", 1e-8)),
                seed=int(raw.get("seed", 0)),
                dense_threshold=int(raw.get("dense_threshold", 2000)),
                max_iterations=int(raw.get("max_iterations", 5000)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed [solver] section: {e}", key="solver")


@dataclass(frozen=True, slots=True, kw_only=True)
class QuadratureOptions(MultiformatModelMixin):
    tol: float = 1e-8
    max_cells: int = 20_000

    def __post_init__(self) -> None:
        if not 1e-12 < self.tol < 1e-1:
            raise ConfigError("quadrature tolerance must lie in (1e-12, 1e-1)", key="quadrature.tol")
        if self.max_cells <= 0:
            raise ConfigError("max_cells must be positive", key="quadrature.max_cells")

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        return {"tol": self.tol, "max_cells": self.max_cells}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], **_: Any) -> Self:
        raw = _coerce(cls, "quadrature", mapping)
        try:
            return cls(
                tol=float(raw.get("tol", 1e-8)), max_cells=int(raw.get("max_cells", 20_000))
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed [quadrature] section: {e}", key="quadrature")

from __future__ import annotations

import hashlib
import json
from collections.abc import Mapping
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from typing_extensions import Self

from dbar_lab.internal.util.toml import dump_toml_to_str, load_toml_text


# :: MechanicalOperation | type=formatting
def normalize(value: Any) -> Any:
    """
    Converts a value into plain JSON/TOML-compatible data.

    Numeric payloads coming out of numpy are the main concern here: numpy
    scalars become Python scalars, arrays become nested lists, and complex
    numbers become ``[real, imag]`` pairs so that every report can be written
    as TOML as well as JSON.

    Args:
        value (Any): Value to normalize. Mappings are sorted by stringified key;
            sets are sorted; lists and tuples are normalized elementwise.

    Returns:
        Any: The normalized value.
    """
    match value:
        case Path():
            return value.as_posix()
        case Enum():
            return value.value
        case bool() | str() | None:
            return value
        case np.ndarray():
            return normalize(value.tolist())
        case np.generic():
            return normalize(value.item())
        case complex():
            return [float(value.real), float(value.imag)]
        case int() | float():
            return value
        case Mapping():
            return {
                str(k): normalize(v)
                for k, v in sorted(value.items(), key=lambda kv: str(kv[0]))
            }
        case set() | frozenset():
            return sorted(normalize(v) for v in value)
        case list() | tuple():
            return [normalize(v) for v in value]
        case _:
            return value


class MultiformatSerializableMixin:
    """
    Adds JSON, TOML and YAML output to any type that implements `to_mapping`.
    """

    def to_mapping(self, *args: Any, **kwargs: Any) -> Mapping[str, Any]:
        """
        Converts the object into a mapping of plain values.

        Raises:
            NotImplementedError: Subclasses must implement this method.
        """
        raise NotImplementedError(
            f"{self.__class__.__name__} must implement to_mapping() "
            "to use MultiformatSerializableMixin serialization."
        )

    # :: MechanicalOperation | type=serialization
    def mapping_hash(self, *, exclude: tuple[str, ...] = ()) -> str:
        """
        SHA-512 digest of the canonical JSON form of `to_mapping()`.

        Args:
            exclude (tuple[str, ...]): Top-level keys left out of the digest,
                e.g. timestamps when comparing two runs for determinism.

        Returns:
            str: Hex digest.
        """
        mapping = {k: v for k, v in self.to_mapping().items() if k not in exclude}
        payload = json.dumps(
            normalize(mapping), sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        return hashlib.new("sha512", payload).hexdigest()

    # :: MechanicalOperation | type=serialization
    def to_json(self, *, indent: int = 2) -> str:
        return json.dumps(
            normalize(self.to_mapping()), ensure_ascii=False, indent=indent, sort_keys=True
        )

    # :: MechanicalOperation | type=serialization
    def to_toml(self, *, indent: int = 2) -> str:
        return dump_toml_to_str(_drop_none(normalize(self.to_mapping())), indent)

    # :: MechanicalOperation | type=serialization
    def to_yaml(self, *, indent: int = 2) -> str:
        try:
            import yaml
        except ImportError:
            raise RuntimeError("PyYAML not installed")
        return yaml.safe_dump(
            normalize(self.to_mapping()), sort_keys=True, allow_unicode=True, indent=indent
        )

    # :: MechanicalOperation | type=serialization
    def serialize(self, *, fmt: str = "json", indent: int = 2) -> str:
        """
        Serializes the object in the requested format.

        Args:
            fmt (str): One of ``json``, ``toml`` or ``yaml``.
            indent (int): Indentation width.

        Returns:
            str: Serialized text.

        Raises:
            ValueError: If the format is not recognized.
        """
        match fmt:
            case "json":
                return self.to_json(indent=indent)
            case "toml":
                return self.to_toml(indent=indent)
            case "yaml":
                return self.to_yaml(indent=indent)
            case _:
                raise ValueError(f"unrecognized format: {fmt}")


class MultiformatDeserializableMixin:
    """
    Adds JSON, TOML and YAML input to any type that implements `from_mapping`.
    """

    @classmethod
    def from_mapping(cls: type[Self], mapping: Mapping[str, Any], **_: Any) -> Self:
        raise NotImplementedError(
            f"{cls.__name__} must implement from_mapping(mapping, **kwargs) "
            "to use MultiformatDeserializableMixin."
        )

    # :: MechanicalOperation | type=deserialization
    @classmethod
    def deserialize(cls: type[Self], text: str, *, fmt: str = "json", **context: Any) -> Self:
        raw = cls._parse_text(text, fmt=fmt)
        if not isinstance(raw, Mapping):
            raise TypeError(
                f"{cls.__name__} expected top-level mapping, got {type(raw)!r} from {fmt}"
            )
        return cls.from_mapping(raw, **context)

    @classmethod
    def from_json(cls: type[Self], text: str, **context: Any) -> Self:
        return cls.deserialize(text, fmt="json", **context)

    @classmethod
    def from_toml(cls: type[Self], text: str, **context: Any) -> Self:
        return cls.deserialize(text, fmt="toml", **context)

    # :: MechanicalOperation | type=deserialization
    @classmethod
    def from_file(
        cls: type[Self], path: str | Path, fmt: str | None = None, **context: Any
    ) -> Self:
        """
        Reads an instance from a file, inferring the format from the suffix.

        Args:
            path (str | Path): Source file.
            fmt (str | None): Explicit format; inferred when None.
            **context (Any): Passed through to `from_mapping`.

        Returns:
            Self: The deserialized instance.
        """
        p = Path(path)
        return cls.deserialize(
            p.read_text(encoding="utf-8"), fmt=fmt or _infer_format(p), **context
        )

    # :: MechanicalOperation | type=deserialization
    @classmethod
    def _parse_text(cls, text: str, *, fmt: str) -> Any:
        match fmt.lower():
            case "json":
                return json.loads(text or "{}")
            case "toml":
                return load_toml_text(text or "")
            case "yaml":
                try:
                    import yaml
                except ImportError:
                    raise RuntimeError("PyYAML not installed")
                return yaml.safe_load(text or "{}")
            case _:
                raise ValueError(f"unrecognized format: {fmt!r}")


class MultiformatModelMixin(MultiformatSerializableMixin, MultiformatDeserializableMixin):
    """Convenience base for value types that round-trip through text formats."""


# :: UtilityOperation | type=parsing
def _infer_format(path: Path) -> str:
    match path.suffix.lower():
        case ".json":
            return "json"
        case ".toml":
            return "toml"
        case ".yaml" | ".yml":
            return "yaml"
        case suffix:
            raise ValueError(f"Cannot infer format from extension {suffix!r}")


def _drop_none(value: Any) -> Any:
    # TOML has no null
    match value:
        case dict():
            return {k: _drop_none(v) for k, v in value.items() if v is not None}
        case list():
            return [_drop_none(v) for v in value]
        case _:
            return value

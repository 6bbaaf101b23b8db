from __future__ import annotations

from collections.abc import Mapping
from importlib import resources
from pathlib import Path
from typing import Any

import tomli
import tomli_w


# :: MechanicalOperation | type=deserialization
def load_toml_file(path: str | Path) -> dict[str, Any]:
    """
    Loads and parses a TOML file.

    Args:
        path (str | Path): Location of the TOML document.

    Returns:
        dict[str, Any]: The parsed document.

    Raises:
        FileNotFoundError: If the file does not exist.
        tomli.TOMLDecodeError: If the content is not valid TOML.
    """
    with open(path, "rb") as f:
        return tomli.load(f)


# :: MechanicalOperation | type=deserialization
def load_toml_text(text: str) -> dict[str, Any]:
    """Parses a TOML string into a dictionary."""
    return tomli.loads(text)


# :: MechanicalOperation | type=deserialization
def load_toml_resource(name: str, package: str = "dbar_lab.resources") -> dict[str, Any]:
    """
    Loads a TOML document shipped inside the package.

    Args:
        name (str): File name of the resource, e.g. ``default.toml``.
        package (str): Dotted package that owns the resource.

    Returns:
        dict[str, Any]: The parsed document.
    """
    text = resources.files(package).joinpath(name).read_text(encoding="utf-8")
    return load_toml_text(text)


# :: UtilityOperation | type=merging
def overlay_tables(
    base: Mapping[str, Any], override: Mapping[str, Any]
) -> dict[str, Any]:
    """
    Recursively overlays one TOML document on another.

    Tables merge key by key; any other value in `override` replaces the value
    in `base` wholesale (arrays are not concatenated).

    Args:
        base (Mapping[str, Any]): Lower-precedence document.
        override (Mapping[str, Any]): Higher-precedence document.

    Returns:
        dict[str, Any]: A new merged document; neither input is modified.
    """
    merged: dict[str, Any] = dict(base)
    for key, value in override.items():
        current = merged.get(key)
        if isinstance(current, Mapping) and isinstance(value, Mapping):
            merged[key] = overlay_tables(current, value)
        else:
            merged[key] = value
    return merged


# :: MechanicalOperation | type=serialization
def dump_toml_to_str(data: Mapping[str, Any], indent: int = 2) -> str:
    """Serializes a mapping to TOML text."""
    return tomli_w.dumps(data, indent=indent)


# :: MechanicalOperation | type=serialization
def dump_toml_to_file(data: Mapping[str, Any], path: str | Path) -> None:
    """
    Writes a mapping as a UTF-8 TOML file, creating parent directories.

    Args:
        data (Mapping[str, Any]): The document to write.
        path (str | Path): Destination file.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dump_toml_to_str(data), encoding="utf-8")

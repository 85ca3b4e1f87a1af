"""Shipped property files for the surrogate AT plant."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .parser import PropertyFile, load_property_file, parse_property_file

PRESET_SHAPES = tuple(f"phi{i}" for i in range(1, 10))


def preset_names() -> list:
    root = resources.files("rlfalsify") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".stl"))


def preset_text(name: str) -> str:
    f = resources.files("rlfalsify") / "presets" / f"{name}.stl"
    if not f.is_file():
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return f.read_text(encoding="utf-8")


def load_preset(name: str, overrides: dict | None = None) -> PropertyFile:
    return parse_property_file(preset_text(name), overrides)


def load_property(ref: str, overrides: dict | None = None) -> PropertyFile:
    """A path to an existing ``.stl`` file, else a preset name."""
    p = Path(ref)
    if p.is_file():
        return load_property_file(p, overrides)
    return load_preset(p.stem if p.suffix == ".stl" else ref, overrides)

"""Python front end for the TNT core library."""

from ._core import (
    ConfigError,
    DimensionError,
    IntrospectionError,
    IoError,
    Model,
    NumericalError,
    checks,
    complexity,
    evaluate,
    introspect,
    make_subpatch_task,
    preset,
    preset_names,
    train,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "IntrospectionError",
    "IoError",
    "Model",
    "NumericalError",
    "checks",
    "complexity",
    "evaluate",
    "introspect",
    "make_subpatch_task",
    "preset",
    "preset_names",
    "train",
]

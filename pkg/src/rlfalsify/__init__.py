"""Falsification of life-long temporal-logic properties by reward-driven input search."""

from .falsify import FalsificationResult, falsify, replay, reward
from .formula import LifeLongProperty, Schema, future_reach, past_reach, to_past_dependent
from .parser import parse_formula, parse_property_file
from .robustness import Monitor, Trace, eval_bool, eval_rob

__version__ = "0.1.0"

__all__ = [
    "FalsificationResult", "LifeLongProperty", "Monitor", "Schema", "Trace",
    "eval_bool", "eval_rob", "falsify", "future_reach", "parse_formula",
    "parse_property_file", "past_reach", "replay", "reward", "to_past_dependent",
]

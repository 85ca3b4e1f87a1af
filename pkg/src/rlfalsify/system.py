"""Systems under test: the model contract, a surrogate AT plant and an echo model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .formula import Schema, Signal
from .robustness import Trace

log = logging.getLogger(__name__)


@dataclass
class InputSignal:
    """Piecewise-constant input: ``values[k]`` holds on ``[k*dt, (k+1)*dt)``."""

    dt: float
    values: np.ndarray  # (steps, channels)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a (steps, channels) array")

    @classmethod
    def empty(cls, dt: float, channels: int) -> "InputSignal":
        return cls(dt, np.zeros((0, channels)))

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt

    @property
    def steps(self) -> list:
        """``[(time, input-vector), ...]``."""
        return [(k * self.dt, self.values[k]) for k in range(len(self.values))]

    def value_at(self, t: float) -> np.ndarray:
        if not len(self.values) or t < 0:
            raise ValueError(f"signal undefined at t={t}")
        k = min(int(math.floor(t / self.dt + 1e-9)), len(self.values) - 1)
        return self.values[k]

    def prefix(self, k: int) -> "InputSignal":
        return InputSignal(self.dt, self.values[:k])

    def to_rows(self) -> list:
        return [[k * self.dt, *map(float, row)] for k, row in enumerate(self.values)]

    @classmethod
    def from_rows(cls, rows, dt: float | None = None) -> "InputSignal":
        rows = [list(map(float, r)) for r in rows]
        if dt is None:
            if len(rows) < 2:
                raise ValueError("dt must be given for signals shorter than two steps")
            dt = rows[1][0] - rows[0][0]
        return cls(dt, np.array([r[1:] for r in rows], dtype=float).reshape(len(rows), -1))

    def __eq__(self, other):
        return (isinstance(other, InputSignal) and self.dt == other.dt
                and np.array_equal(self.values, other.values))


class SystemModel(Protocol):
    input_schema: Schema
    output_schema: Schema
    input_bounds: Sequence[tuple[float, float]]

    def reset(self) -> np.ndarray: ...

    def step(self, u, dt: float) -> np.ndarray: ...


def clamp_input(u, bounds, warn_source: str = "") -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    b = np.asarray(bounds, dtype=float)
    if len(u) != len(b):
        raise ValueError(f"input has {len(u)} channels, model expects {len(b)}")
    out = np.clip(u, b[:, 0], b[:, 1])
    if not np.array_equal(out, u):
        log.warning("%sinput %s clamped to %s", warn_source, u.tolist(), out.tolist())
    return out


class SurrogateAT:
    """Deterministic stand-in for the automatic-transmission benchmark.

    Inputs are throttle in [0, 100] and brake in [0, 325].  Velocity (km/h)
    obeys ``dv/dt = k_t*throttle*r_g - k_b*brake - k_d*v`` integrated by
    forward Euler with step ``h`` and clamped at 0; engine speed is
    ``40*r_g*v + 800`` RPM.  Gear shifts up above 3500 RPM and down below
    1200 RPM, one gear at a time, at most once per ``dwell`` seconds.

    Outputs: ``v``, ``w``, ``g`` plus gear indicators ``g1``..``g4``.
    """

    input_schema = Schema.of(reals=("throttle", "brake"))
    output_schema = Schema.of(reals=("v", "w", "g"), bools=("g1", "g2", "g3", "g4"))
    input_bounds = ((0.0, 100.0), (0.0, 325.0))
    # Q-learning observation hints: signal index -> (low, high)
    observation_ranges = {0: (0.0, 160.0), 1: (800.0, 6000.0), 2: (1.0, 4.0)}

    def __init__(self, h: float = 0.01, ratios=(4.0, 2.5, 1.5, 1.0),
                 k_throttle: float = 0.04, k_brake: float = 0.10, k_drag: float = 0.02,
                 rpm_gain: float = 40.0, rpm_idle: float = 800.0,
                 upshift_rpm: float = 3500.0, downshift_rpm: float = 1200.0,
                 dwell: float = 0.5):
        if not h > 0:
            raise ValueError("integration step must be positive")
        self.h = float(h)
        self.ratios = tuple(float(r) for r in ratios)
        self.k_throttle, self.k_brake, self.k_drag = k_throttle, k_brake, k_drag
        self.rpm_gain, self.rpm_idle = rpm_gain, rpm_idle
        self.upshift_rpm, self.downshift_rpm = upshift_rpm, downshift_rpm
        self.dwell = dwell
        self.reset()

    def rpm(self) -> float:
        return self.rpm_gain * self.ratios[self.g - 1] * self.v + self.rpm_idle

    def output(self) -> np.ndarray:
        g = self.g
        return np.array([self.v, self.rpm(), float(g),
                         float(g == 1), float(g == 2), float(g == 3), float(g == 4)])

    def reset(self) -> np.ndarray:
        self.v = 0.0
        self.g = 1
        self.since_shift = self.dwell
        return self.output()

    def step(self, u, dt: float) -> np.ndarray:
        if not dt > 0:
            raise ValueError(f"non-positive step {dt}")
        throttle, brake = clamp_input(u, self.input_bounds, "SurrogateAT: ")
        n = max(1, math.ceil(dt / self.h - 1e-9))
        last = dt - (n - 1) * self.h
        v, g, since = self.v, self.g, self.since_shift
        ratios, gain, idle = self.ratios, self.rpm_gain, self.rpm_idle
        kt, kb, kd = self.k_throttle * throttle, self.k_brake * brake, self.k_drag
        up, down, dwell = self.upshift_rpm, self.downshift_rpm, self.dwell
        for i in range(n):
            h = self.h if i < n - 1 else last
            r = ratios[g - 1]
            v += h * (kt * r - kb - kd * v)
            if v < 0.0:
                v = 0.0
            since += h
            if since >= dwell:
                w = gain * r * v + idle
                if w > up and g < 4:
                    g += 1
                    since = 0.0
                elif w < down and g > 1:
                    g -= 1
                    since = 0.0
        self.v, self.g, self.since_shift = v, g, since
        return self.output()


class EchoModel:
    """Output equals the last input; resets to zeros.  A test double."""

    def __init__(self, channels: int = 2, bounds=None):
        self.input_schema = Schema(Signal(f"u{i + 1}") for i in range(channels))
        self.output_schema = Schema(Signal(f"y{i + 1}") for i in range(channels))
        self.input_bounds = tuple(bounds or [(0.0, 1.0)] * channels)
        self.observation_ranges = {i: tuple(b) for i, b in enumerate(self.input_bounds)}
        self.state = np.zeros(channels)

    def reset(self) -> np.ndarray:
        self.state = np.zeros(len(self.input_schema))
        return self.state.copy()

    def step(self, u, dt: float) -> np.ndarray:
        if not dt > 0:
            raise ValueError(f"non-positive step {dt}")
        self.state = np.asarray(u, dtype=float).reshape(-1).copy()
        if len(self.state) != len(self.input_schema):
            raise ValueError("input width does not match schema")
        return self.state.copy()


def run_signal(model: SystemModel, u: InputSignal) -> Trace:
    """Simulate *u* from reset.  Sample 0 is the reset state; sample k+1 follows u_k."""
    states = [np.asarray(model.reset(), dtype=float)]
    for k in range(len(u)):
        states.append(np.asarray(model.step(u.values[k], u.dt), dtype=float))
    times = np.arange(len(states)) * u.dt
    return Trace(times, np.vstack(states), model.output_schema)

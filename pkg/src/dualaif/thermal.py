"""Single-zone thermal plant: the ground-truth process the building agent controls.

One explicit-Euler step of the zone energy balance::

    T' = T + dt * (m c_p (T_sup - T) + OCC q_occ + (U_w + m_ext c_p)(T_amb - T)) / C_b
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STEPS_PER_DAY = 288
PROFILE_HEADER = ("step", "ambient_c", "occupancy", "infiltration_kgps")


@dataclass(frozen=True)
class ThermalParams:
    c_p: float = 1005.0
    C_b: float = 2.0e6
    U_w: float = 50.0
    q_occ: float = 102.0
    dt: float = 300.0

    def __post_init__(self):
        for name in ("c_p", "C_b", "U_w", "q_occ", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"ThermalParams.{name} must be strictly positive, got {value!r}")


@dataclass(frozen=True)
class ZoneTruth:
    temperature: float
    occupancy: float = 0.0
    infiltration: float = 0.0

    def __post_init__(self):
        if self.occupancy < 0.0 or self.infiltration < 0.0:
            raise ValueError("occupancy and infiltration must be non-negative")


@dataclass(frozen=True)
class ExogenousProfile:
    ambient: np.ndarray
    occupancy_schedule: np.ndarray
    infiltration_schedule: np.ndarray

    def __post_init__(self):
        amb = np.asarray(self.ambient, dtype=float)
        occ = np.asarray(self.occupancy_schedule, dtype=float)
        inf = np.asarray(self.infiltration_schedule, dtype=float)
        if not (amb.shape == occ.shape == inf.shape) or amb.ndim != 1:
            raise ValueError(
                f"profile series must be 1-D and equally long, got {amb.shape}, {occ.shape}, {inf.shape}"
            )
        if np.any(occ < 0.0) or np.any(inf < 0.0):
            raise ValueError("occupancy and infiltration schedules must be non-negative")
        object.__setattr__(self, "ambient", amb)
        object.__setattr__(self, "occupancy_schedule", occ)
        object.__setattr__(self, "infiltration_schedule", inf)

    @property
    def steps(self) -> int:
        return len(self.ambient)

    def row(self, t):
        return (
            float(self.ambient[t]),
            float(self.occupancy_schedule[t]),
            float(self.infiltration_schedule[t]),
        )


@dataclass
class SensorModel:
    """Gaussian temperature sensor with its own seeded stream."""

    sigma_z: float = 0.1
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma_z < 0.0:
            raise ValueError("sigma_z must be non-negative")
        self._rng = np.random.default_rng(self.seed)

    def reset(self):
        self._rng = np.random.default_rng(self.seed)


def step_temperature(state: ZoneTruth, action, ambient: float, params: ThermalParams) -> float:
    """Advance the zone temperature by one timestep."""
    T = state.temperature
    heat = (
        action.airflow * params.c_p * (action.supply_temp - T)
        + state.occupancy * params.q_occ
        + (params.U_w + state.infiltration * params.c_p) * (ambient - T)
    )
    return T + params.dt * heat / params.C_b


def advance_world(state: ZoneTruth, action, profile_row, params: ThermalParams) -> ZoneTruth:
    """Step temperature with the current hidden drivers, then load the next ones.

    ``profile_row`` is ``(ambient, next_occupancy, next_infiltration)``: the
    ambient temperature acting over this step and the schedule values that
    take effect at the next step.
    """
    ambient, next_occ, next_inf = profile_row
    temperature = step_temperature(state, action, ambient, params)
    return ZoneTruth(temperature=temperature, occupancy=float(next_occ), infiltration=float(next_inf))


def observe(state: ZoneTruth, sensor: SensorModel) -> float:
    if sensor.sigma_z == 0.0:
        return state.temperature
    return state.temperature + sensor.sigma_z * float(sensor._rng.standard_normal())


# -- built-in summer day -------------------------------------------------------

def _hours(steps=STEPS_PER_DAY):
    return np.arange(steps) * (24.0 / steps)


def piecewise_schedule(breakpoints, steps=STEPS_PER_DAY):
    """Piecewise-constant series from ``[(start_hour, value), ...]`` (sorted, first at 0)."""
    hours = _hours(steps)
    out = np.empty(steps)
    starts = [h for h, _ in breakpoints] + [24.0]
    for (start, value), end in zip(breakpoints, starts[1:]):
        out[(hours >= start) & (hours < end)] = value
    return out


def default_ambient(steps=STEPS_PER_DAY, low=24.0, high=34.0, peak_hour=15.0):
    """Sinusoid between ``low`` and ``high`` peaking at ``peak_hour``."""
    hours = _hours(steps)
    mid, amp = 0.5 * (low + high), 0.5 * (high - low)
    return mid + amp * np.cos(2.0 * np.pi * (hours - peak_hour) / 24.0)


DEFAULT_OCCUPANCY = [(0.0, 0.0), (7.0, 3.0), (9.0, 1.0), (17.0, 4.0), (23.0, 1.0)]
DEFAULT_WINDOW_EVENT = (14.0, 15.5, 0.03)


def default_profile(steps=STEPS_PER_DAY, occupancy=None, window_event=DEFAULT_WINDOW_EVENT):
    occ = piecewise_schedule(occupancy or DEFAULT_OCCUPANCY, steps)
    inf = np.zeros(steps)
    if window_event is not None:
        start, end, rate = window_event
        hours = _hours(steps)
        inf[(hours >= start) & (hours < end)] = rate
    return ExogenousProfile(default_ambient(steps), occ, inf)


# -- profile files ---------------------------------------------------------------

def read_profile(path) -> ExogenousProfile:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in PROFILE_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows = list(reader)
    steps = [int(r["step"]) for r in rows]
    if steps != list(range(len(rows))):
        raise ValueError(f"{path}: step column must run 0..{len(rows) - 1} in order")
    return ExogenousProfile(
        np.array([float(r["ambient_c"]) for r in rows]),
        np.array([float(r["occupancy"]) for r in rows]),
        np.array([float(r["infiltration_kgps"]) for r in rows]),
    )


def write_profile(path, profile: ExogenousProfile):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROFILE_HEADER)
        for t in range(profile.steps):
            amb, occ, inf = profile.row(t)
            writer.writerow([t, repr(amb), repr(occ), repr(inf)])

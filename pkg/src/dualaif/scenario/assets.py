"""Physical side of the community: battery, PV, prices, day-ahead plan, and the
signal discretizers that turn measured power into community observations."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from ..community import BuildingAction, EssAction, Flow, Trend
from ..thermal import piecewise_schedule

MARKET_HEADER = ("step", "spot_price", "pv_forecast_kw", "pv_actual_kw")


@dataclass(frozen=True)
class EssPhysical:
    capacity_kwh: float = 5.0
    max_power_kw: float = 20.0
    soc: float = 0.5
    round_trip_eff: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError(f"soc {self.soc!r} outside [0, 1]")
        if self.capacity_kwh <= 0.0 or self.max_power_kw <= 0.0:
            raise ValueError("capacity and power rating must be positive")
        if not 0.0 < self.round_trip_eff <= 1.0:
            raise ValueError("round_trip_eff must lie in (0, 1]")

    @property
    def energy_kwh(self):
        return self.soc * self.capacity_kwh


def step_ess(ess: EssPhysical, u_ess, dt, block_kw):
    """Run the battery for ``dt`` seconds; returns (new state, grid-side flow in kW, charge positive).

    Charging loses ``1 - round_trip_eff`` of the drawn energy; discharging is lossless
    on the way out, so the whole round-trip loss is booked once.
    """
    u_ess = EssAction(u_ess)
    hours = dt / 3600.0
    power = min(block_kw, ess.max_power_kw)
    if u_ess == EssAction.HOLD or power <= 0.0:
        return ess, 0.0
    if u_ess == EssAction.CHARGE:
        headroom = (1.0 - ess.soc) * ess.capacity_kwh
        flow = min(power, headroom / (ess.round_trip_eff * hours))
        soc = ess.soc + flow * hours * ess.round_trip_eff / ess.capacity_kwh
    else:
        flow = -min(power, ess.energy_kwh / hours)
        soc = ess.soc + flow * hours / ess.capacity_kwh
    return replace(ess, soc=min(max(soc, 0.0), 1.0)), flow


@dataclass(frozen=True)
class SignalDiscretizer:
    power_deadband: float = 0.05
    flow_deadband: float = 0.5

    def __post_init__(self):
        if self.power_deadband < 0.0 or self.flow_deadband < 0.0:
            raise ValueError("deadbands must be non-negative")


def discretize_building_signal(power_now, power_prev, d: SignalDiscretizer) -> Trend:
    if power_prev == 0.0:
        if power_now > d.flow_deadband:
            return Trend.UP
        return Trend.SAME
    if power_now > power_prev * (1.0 + d.power_deadband):
        return Trend.UP
    if power_now < power_prev * (1.0 - d.power_deadband):
        return Trend.DOWN
    return Trend.SAME


def discretize_flow(net_grid_kw, d: SignalDiscretizer) -> Flow:
    if net_grid_kw > d.flow_deadband:
        return Flow.IMPORT
    if net_grid_kw < -d.flow_deadband:
        return Flow.EXPORT
    return Flow.NEUTRAL


def apply_reduction(u_b, base_target, offsets=(0.0, 1.0, 2.0), band=(-np.inf, np.inf)):
    """Cooling-season downlink: a reduction raises the setpoint, clamped to ``band``."""
    target = base_target + offsets[int(BuildingAction(u_b))]
    return min(max(target, band[0]), band[1])


def building_power_kw(airflow, supply_c, zone_c, occupancy, c_p, cop, plug_base_kw, plug_per_occupant_kw):
    """Electrical draw of one building: HVAC thermal duty over COP, plus plug loads."""
    hvac = airflow * c_p * abs(supply_c - zone_c) / cop / 1000.0
    return hvac + plug_base_kw + plug_per_occupant_kw * occupancy


# -- market --------------------------------------------------------------------------------

@dataclass(frozen=True)
class MarketContext:
    spot_price: np.ndarray
    da_plan: np.ndarray
    pv_forecast: np.ndarray
    pv_actual: np.ndarray
    pv_peak_kw: float = 20.0

    def __post_init__(self):
        n = len(self.spot_price)
        for name in ("da_plan", "pv_forecast", "pv_actual"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        if np.any(np.asarray(self.spot_price) < 0.0):
            raise ValueError("prices must be non-negative")

    @property
    def steps(self):
        return len(self.spot_price)


def step_hours(steps):
    return np.arange(steps) * (24.0 / steps)


def price_series(m, steps=None):
    """Spot prices with the configured multipliers applied (peak multiplier inside the peak window)."""
    steps = steps or m["steps"]
    base = piecewise_schedule([tuple(bp) for bp in m["price_schedule"]], steps)
    hours = step_hours(steps)
    lo, hi = m["peak_window"]
    in_peak = (hours >= lo) & (hours < hi)
    return base * np.where(in_peak, m["peak_multiplier"], m["price_multiplier"])


def pv_shape(peak_kw, window, steps):
    """Half-sine irradiance shape between sunrise and sunset hours."""
    hours = step_hours(steps) + 12.0 / steps  # mid-interval
    rise, sets = window
    x = (hours - rise) / (sets - rise)
    return np.where((x > 0.0) & (x < 1.0), peak_kw * np.sin(np.pi * np.clip(x, 0.0, 1.0)), 0.0)


def day_ahead_plan(forecast_load_kw, pv_forecast_kw, error, rng):
    """Net purchase plan from forecast load and PV, scaled by a uniform forecast error."""
    net = np.maximum(forecast_load_kw - pv_forecast_kw, 0.0)
    return net * (1.0 + rng.uniform(-error, error, size=net.shape))


def read_market_profile(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MARKET_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if [int(r["step"]) for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: step column must run 0..{len(rows) - 1} in order")
    cols = {c: np.array([float(r[c]) for r in rows]) for c in MARKET_HEADER[1:]}
    return cols["spot_price"], cols["pv_forecast_kw"], cols["pv_actual_kw"]


def write_market_profile(path, market: MarketContext):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MARKET_HEADER)
        for k in range(market.steps):
            writer.writerow([k, repr(float(market.spot_price[k])), repr(float(market.pv_forecast[k])),
                             repr(float(market.pv_actual[k]))])

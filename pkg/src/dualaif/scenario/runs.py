"""Day-long experiments that wire the thermal world, the building agents, the
community planner and the physical assets together, plus report writing."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .._accel import BACKEND
from ..building import BuildingAgent, ContinuousBelief
from ..community import (
    N_STATES,
    JointObservation,
    belief_update_or_predict,
    marginals,
)
from ..planner import MarketStep, plan
from ..thermal import (
    ExogenousProfile,
    SensorModel,
    ZoneTruth,
    advance_world,
    default_ambient,
    observe,
    piecewise_schedule,
    read_profile,
)
from . import config as C
from .assets import (
    EssPhysical,
    MarketContext,
    SignalDiscretizer,
    apply_reduction,
    building_power_kw,
    day_ahead_plan,
    discretize_building_signal,
    discretize_flow,
    price_series,
    pv_shape,
    read_market_profile,
    step_ess,
    step_hours,
)

BUILDING_COLUMNS = (
    "step", "phi_c", "target_c", "mu_occ", "true_occ", "mu_inf", "true_inf",
    "airflow_kgps", "supply_c", "vfe", "temp_c", "power_kw",
)
COMMUNITY_COLUMNS = (
    "step", "selected_action_index", "u_b", "u_ess", "u_m", "efe", "expected_cost", "ambiguity",
    "candidates", "hour", "spot_price", "da_plan_kw", "building_load_kw", "load_b1_kw", "load_b2_kw",
    "reduction_kw", "pv_available_kw", "pv_used_kw", "pv_curtailed_kw", "battery_flow_kw",
    "battery_charge_kw", "battery_discharge_kw", "spot_buy_kw", "spot_sell_kw", "da_draw_kw",
    "deviation_kw", "balance_residual_kw", "soc", "o_b1", "o_b2", "o_ess",
    "q_b1_high", "q_b1_med", "q_b1_low", "q_b2_high", "q_b2_med", "q_b2_low",
    "q_ess_empty", "q_ess_low", "q_ess_high", "q_ess_full",
    "spot_cost_usd", "deviation_kwh", "pv_curtailed_kwh", "battery_throughput_kwh", "action_label",
)
TOTAL_COLUMNS = {
    "spot_cost_usd": "spot_cost_usd",
    "deviation_kwh": "deviation_kwh",
    "pv_curtailed_kwh": "pv_curtailed_kwh",
    "battery_throughput_kwh": "battery_throughput_kwh",
}


@dataclass
class RunReport:
    config: dict
    building_traces: list = field(default_factory=list)
    community_trace: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def summary_line(self):
        parts = []
        if "spot_cost_usd" in self.totals:
            parts.append(f"total_spot_cost={self.totals['spot_cost_usd']:.4f}$")
        if "comfort_fraction" in self.metrics:
            parts.append(f"comfort={100.0 * self.metrics['comfort_fraction']:.1f}%")
        if "occupancy_correlation" in self.metrics:
            corr = ",".join(f"{c:.3f}" for c in self.metrics["occupancy_correlation"])
            parts.append(f"occ_corr={corr}")
        return " ".join(parts)

    def as_json(self):
        return {
            "metadata": {"package_version": __version__, "backend": BACKEND,
                         "seed": self.config["seeds"]["master"]},
            "config": self.config,
            "totals": self.totals,
            "metrics": self.metrics,
            "extra": self.extra,
        }


# -- building layer -----------------------------------------------------------------------------

@dataclass
class BuildingSetup:
    profile: ExogenousProfile
    prior_schedule: np.ndarray
    sensor_seed: int


def building_setups(cfg):
    w, a = cfg["world"], cfg["agents"]
    steps = w["steps"]
    amb = default_ambient(steps, w["ambient"]["low_c"], w["ambient"]["high_c"], w["ambient"]["peak_hour"])
    out = []
    for n, (b, path) in enumerate(zip(a["buildings"], cfg["profiles"]["buildings"]), start=1):
        if path is not None:
            profile = read_profile(path)
            if profile.steps != steps:
                raise C.ConfigError([f"profiles.buildings.{n - 1}: {profile.steps} rows, expected {steps}"])
        else:
            occ = piecewise_schedule([tuple(bp) for bp in b["occupancy"]], steps)
            inf = np.zeros(steps)
            if b["window_event"] is not None:
                start, end, rate = b["window_event"]
                hours = np.arange(steps) * (24.0 / steps)
                inf[(hours >= start) & (hours < end)] = rate
            profile = ExogenousProfile(amb, occ, inf)
        prior = np.column_stack([piecewise_schedule([tuple(bp) for bp in b["prior_occupancy"]], steps),
                                 np.zeros(steps)])
        out.append(BuildingSetup(profile, prior, C.component_seed(cfg, f"sensor{n}")))
    return out


class BuildingSim:
    """One zone plus its agent, advanced one 5-minute step at a time."""

    def __init__(self, cfg, setup: BuildingSetup):
        self.cfg = cfg
        self.params = C.thermal_params_from(cfg)
        self.profile = setup.profile
        a = cfg["agents"]
        prior = C.prior_model_from(cfg, setup.prior_schedule)
        occ0, inf0 = prior.prior_at(0)
        belief = ContinuousBelief(occ0, inf0, a["sigma_omega_occ"], a["sigma_omega_inf"])
        self.agent = BuildingAgent(prior, C.vfe_config_from(cfg), self.params, belief=belief)
        self.sensor = SensorModel(cfg["world"]["sigma_z"], setup.sensor_seed)
        self.truth = ZoneTruth(cfg["world"]["initial_temp_c"], float(setup.profile.occupancy_schedule[0]),
                               float(setup.profile.infiltration_schedule[0]))
        self._prev_drivers = (self.truth.occupancy, self.truth.infiltration)
        self.rows = []
        self.t = 0

    def step(self, target):
        t = self.t
        e = self.cfg["economics"]
        st = self.truth
        phi = observe(st, self.sensor)
        ambient = float(self.profile.ambient[t])
        belief, action, diag = self.agent.step(phi, ambient, target)
        power = building_power_kw(action.airflow, action.supply_temp, st.temperature, st.occupancy,
                                  self.params.c_p, e["cop"], e["plug_base_kw"], e["plug_per_occupant_kw"])
        # the belief explains the interval that just closed, so compare it with those drivers
        true_occ, true_inf = self._prev_drivers
        self.rows.append({
            "step": t, "phi_c": phi, "target_c": float(target), "mu_occ": belief.mu_occ,
            "true_occ": true_occ, "mu_inf": belief.mu_inf, "true_inf": true_inf,
            "airflow_kgps": action.airflow, "supply_c": action.supply_temp, "vfe": diag.vfe_after,
            "temp_c": st.temperature, "power_kw": power,
        })
        nxt = min(t + 1, self.profile.steps - 1)
        self._prev_drivers = (st.occupancy, st.infiltration)
        self.truth = advance_world(st, action, (ambient, float(self.profile.occupancy_schedule[nxt]),
                                                float(self.profile.infiltration_schedule[nxt])), self.params)
        self.t += 1
        return power


def _pearson(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.std(x) == 0.0 or np.std(y) == 0.0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def building_metrics(rows, base_target, band, warmup):
    temps = np.array([r["temp_c"] for r in rows])
    ok = np.abs(temps[warmup:] - base_target) <= band
    mu = [r["mu_occ"] for r in rows]
    tr = [r["true_occ"] for r in rows]
    return {
        "comfort_fraction": float(np.mean(ok)),
        "occupancy_correlation": _pearson(mu, tr),
        "occupancy_rmse": float(np.sqrt(np.mean((np.asarray(mu) - np.asarray(tr)) ** 2))),
    }


def realized_objective(rows, targets, sigma_rho, final_temp):
    """Sum over steps of (target_t - T_{t+1})^2 / (2 s_rho^2) along a closed-loop trace."""
    temps = [r["temp_c"] for r in rows[1:]] + [final_temp]
    return math.fsum((t - r) ** 2 for t, r in zip(temps, targets)) / (2.0 * sigma_rho**2)


def _aggregate_building_metrics(cfg, sims):
    a = cfg["agents"]
    per = [building_metrics(s.rows, a["target_c"], a["comfort_band_c"], a["warmup_steps"]) for s in sims]
    okays = [m["comfort_fraction"] for m in per]
    return {
        "comfort_fraction": float(np.mean(okays)),
        "comfort_fraction_per_building": okays,
        "comfort_violation_fraction": float(1.0 - np.mean(okays)),
        "occupancy_correlation": [m["occupancy_correlation"] for m in per],
        "occupancy_rmse": [m["occupancy_rmse"] for m in per],
    }


def run_building_day(cfg) -> RunReport:
    """Both buildings in closed loop at the base setpoint for a full day."""
    sims = [BuildingSim(cfg, s) for s in building_setups(cfg)]
    target = cfg["agents"]["target_c"]
    for _ in range(cfg["world"]["steps"]):
        for sim in sims:
            sim.step(target)
    report = RunReport(config=cfg, building_traces=[s.rows for s in sims])
    report.metrics = _aggregate_building_metrics(cfg, sims)
    sigma_rho = cfg["agents"]["vfe"]["sigma_rho"]
    report.metrics["realized_objective"] = [
        realized_objective(s.rows, np.full(len(s.rows), target), sigma_rho, s.truth.temperature) for s in sims
    ]
    return report


# -- market ---------------------------------------------------------------------------------------

def build_market(cfg, setups) -> MarketContext:
    m, e = cfg["market"], cfg["economics"]
    steps = m["steps"]
    ratio = cfg["world"]["steps"] // steps
    if cfg["profiles"]["market"] is not None:
        base_price, pv_fc, pv_act = read_market_profile(cfg["profiles"]["market"])
        if len(base_price) != steps:
            raise C.ConfigError([f"profiles.market: {len(base_price)} rows, expected {steps}"])
        unit = dict(m, price_schedule=[[0.0, 1.0]])
        prices = base_price * price_series(unit, steps)
    else:
        prices = price_series(m, steps)
        pv_fc = pv_shape(m["pv_peak_kw"], m["pv_window"], steps)
        noise = C.stream(cfg, "pv").standard_normal(steps)
        pv_act = np.maximum(pv_fc * (1.0 + m["pv_noise"] * noise), 0.0)
    load = np.zeros(steps)
    for s in setups:
        occ = s.prior_schedule[:, 0].reshape(steps, ratio).mean(axis=1)
        load += e["plug_base_kw"] + e["plug_per_occupant_kw"] * occ + m["da_hvac_allowance_kw"]
    da = day_ahead_plan(load, pv_fc, m["da_error"], C.stream(cfg, "da"))
    return MarketContext(prices, da, pv_fc, pv_act, m["pv_peak_kw"])


def market_window(market: MarketContext, k, horizon):
    last = market.steps - 1
    return [
        MarketStep(float(market.spot_price[j]), float(market.da_plan[j]), float(market.pv_forecast[j]))
        for j in (min(k + d, last) for d in range(horizon))
    ]


# -- community layer --------------------------------------------------------------------------------

def settle(load_kw, reduction_kw, pv_kw, flow_kw, buy_kw, sell_kw, target_kw):
    """Realized dispatch for one community step.

    PV first serves the net load, battery charging and explicit sales; the
    day-ahead contract covers whatever is left (negative when surplus flows back).
    """
    charge = max(flow_kw, 0.0)
    discharge = max(-flow_kw, 0.0)
    pv_used = min(pv_kw, max(load_kw - reduction_kw + charge + sell_kw, 0.0))
    da_draw = load_kw - reduction_kw - pv_used + flow_kw - buy_kw + sell_kw
    supply = pv_used + discharge + buy_kw - sell_kw - charge + da_draw
    return {
        "pv_used_kw": pv_used,
        "pv_curtailed_kw": pv_kw - pv_used,
        "battery_charge_kw": charge,
        "battery_discharge_kw": discharge,
        "da_draw_kw": da_draw,
        "deviation_kw": da_draw - target_kw,
        "balance_residual_kw": (load_kw - reduction_kw) - supply,
        "net_grid_kw": load_kw - reduction_kw - pv_used + flow_kw,
    }


def run_community_day(cfg, alpha=None, probe_alphas=None) -> RunReport:
    """Full two-layer day: 96 planning steps, each driving three building steps.

    With ``probe_alphas`` the planner's cached leaf values are re-scored at each
    of those ambiguity weights, giving the selected-policy ambiguity per weight
    for the same belief context.
    """
    setups = building_setups(cfg)
    sims = [BuildingSim(cfg, s) for s in setups]
    market = build_market(cfg, setups)
    model = C.community_model_from(cfg)
    efe_cfg = C.efe_config_from(cfg, alpha)
    weights = C.cost_weights_from(cfg)
    econ = C.economics_from(cfg)
    a, m, e = cfg["agents"], cfg["market"], cfg["economics"]
    disc = SignalDiscretizer(m["discretizer"]["power_deadband"], m["discretizer"]["flow_deadband"])
    nominal = m["discretizer"].get("building_reference", "nominal") == "nominal"
    ess = EssPhysical(m["ess"]["capacity_kwh"], m["ess"]["max_power_kw"], m["ess"]["initial_soc"],
                      m["ess"]["round_trip_eff"])
    ratio = cfg["world"]["steps"] // m["steps"]
    dt = cfg["world"]["dt"] * ratio
    hours_per_step = dt / 3600.0
    hours = step_hours(m["steps"])
    band = tuple(a["allowable_band_c"])

    q = np.full(N_STATES, 1.0 / N_STATES)
    last_action = None
    last_obs = None
    prev_power = None
    rows = []
    probes = []
    degenerate = 0
    for k in range(m["steps"]):
        if last_action is not None:
            q, flag = belief_update_or_predict(q, last_action, last_obs, model)
            degenerate += int(flag)
        res = plan(q, market_window(market, k, efe_cfg.horizon), model, efe_cfg, weights, econ,
                   keep_leaves=probe_alphas is not None)
        act = res.action
        if probe_alphas is not None:
            probes.append([res.select_for_alpha(al)[2] for al in probe_alphas])

        target = apply_reduction(act.u_b, a["target_c"], a["reduction_offsets_c"], band)
        powers = np.zeros((len(sims), ratio))
        for j in range(ratio):
            for i, sim in enumerate(sims):
                powers[i, j] = sim.step(target)
        shed = econ.reduction_kw[int(act.u_b)]
        per_building = powers.mean(axis=1)
        load = float(per_building.sum())
        reduction = shed * len(sims)

        ess, flow = step_ess(ess, act.u_ess, dt, e["ess_power_kw"])
        buy = e["trade_block_kw"] if act.u_m == 0 else 0.0
        sell = e["trade_block_kw"] if act.u_m == 2 else 0.0
        price = float(market.spot_price[k])
        s = settle(load, reduction, float(market.pv_actual[k]), flow, buy, sell, float(market.da_plan[k]))

        metered = per_building - shed
        if nominal:
            # level signal: pre-shed demand against the Med-load power the model associates with "Same";
            # the cost model subtracts the shed itself, so observing metered draw would count it twice
            signal = per_building
            prev_power = np.full(len(sims), econ.load_kw["Med"])
        else:
            signal = metered
            if prev_power is None:
                prev_power = powers[:, 0] - shed
        trends = [discretize_building_signal(signal[i], prev_power[i], disc) for i in range(len(sims))]
        flow_obs = discretize_flow(s["net_grid_kw"], disc)
        last_obs = JointObservation(trends[0], trends[1], flow_obs)
        prev_power = metered
        last_action = act

        q1, q2, qe = marginals(q)
        ev = res.evaluation
        rows.append({
            "step": k, "selected_action_index": act.index, "u_b": int(act.u_b), "u_ess": int(act.u_ess),
            "u_m": int(act.u_m), "efe": ev.efe, "expected_cost": ev.expected_cost, "ambiguity": ev.ambiguity,
            "candidates": res.candidates_evaluated, "hour": float(hours[k]), "spot_price": price,
            "da_plan_kw": float(market.da_plan[k]), "building_load_kw": load,
            "load_b1_kw": float(per_building[0]), "load_b2_kw": float(per_building[1]),
            "reduction_kw": reduction, "pv_available_kw": float(market.pv_actual[k]),
            "pv_used_kw": s["pv_used_kw"], "pv_curtailed_kw": s["pv_curtailed_kw"],
            "battery_flow_kw": flow, "battery_charge_kw": s["battery_charge_kw"],
            "battery_discharge_kw": s["battery_discharge_kw"], "spot_buy_kw": buy, "spot_sell_kw": sell,
            "da_draw_kw": s["da_draw_kw"], "deviation_kw": s["deviation_kw"],
            "balance_residual_kw": s["balance_residual_kw"], "soc": ess.soc,
            "o_b1": int(trends[0]), "o_b2": int(trends[1]), "o_ess": int(flow_obs),
            "q_b1_high": float(q1[0]), "q_b1_med": float(q1[1]), "q_b1_low": float(q1[2]),
            "q_b2_high": float(q2[0]), "q_b2_med": float(q2[1]), "q_b2_low": float(q2[2]),
            "q_ess_empty": float(qe[0]), "q_ess_low": float(qe[1]), "q_ess_high": float(qe[2]),
            "q_ess_full": float(qe[3]),
            "spot_cost_usd": price * hours_per_step * (buy - weights.sell_ratio * sell),
            "deviation_kwh": abs(s["deviation_kw"]) * hours_per_step,
            "pv_curtailed_kwh": s["pv_curtailed_kw"] * hours_per_step,
            "battery_throughput_kwh": abs(flow) * hours_per_step,
            "action_label": act.label(),
        })

    report = RunReport(config=cfg, building_traces=[s.rows for s in sims], community_trace=rows)
    report.totals = {name: math.fsum(r[col] for r in rows) for name, col in TOTAL_COLUMNS.items()}
    report.metrics = _aggregate_building_metrics(cfg, sims)
    report.metrics.update(dispatch_metrics(rows, m["peak_window"], hours_per_step))
    report.metrics["alpha_amb"] = efe_cfg.alpha_amb
    report.metrics["degenerate_updates"] = degenerate
    report.metrics["max_balance_residual_kw"] = max(abs(r["balance_residual_kw"]) for r in rows)
    if probe_alphas is not None:
        report.extra["probe_alphas"] = list(probe_alphas)
        report.extra["selected_ambiguity_by_alpha"] = probes
    return report


def dispatch_metrics(rows, peak_window, hours_per_step):
    lo, hi = peak_window
    peak = [r for r in rows if lo <= r["hour"] < hi]
    return {
        "peak_battery_discharge_kwh": math.fsum(-r["battery_flow_kw"] * hours_per_step for r in peak),
        "peak_spot_purchase_kwh": math.fsum(r["spot_buy_kw"] * hours_per_step for r in peak),
        "peak_spot_sale_kwh": math.fsum(r["spot_sell_kw"] * hours_per_step for r in peak),
    }


def sweep_ambiguity(cfg, alphas):
    """One community day per ambiguity weight, identical seeds and exogenous inputs."""
    alphas = [float(x) for x in alphas]
    if not alphas or any(x < 0.0 for x in alphas):
        raise ValueError("alphas must be a non-empty list of non-negative values")
    reports = {}
    for al in alphas:
        reports[al] = run_community_day(cfg, alpha=al, probe_alphas=sorted(alphas))
    return reports


def sweep_rows(reports):
    out = []
    for al, rep in reports.items():
        cum_cost = 0.0
        cum_amb = 0.0
        for r in rep.community_trace:
            cum_cost += r["spot_cost_usd"]
            cum_amb += r["ambiguity"]
            out.append({
                "alpha": al, "step": r["step"], "efe": r["efe"], "expected_cost": r["expected_cost"],
                "ambiguity": r["ambiguity"], "ambiguity_contribution": al * r["ambiguity"],
                "cumulative_spot_cost_usd": cum_cost, "cumulative_ambiguity": cum_amb,
            })
    return out


def ambiguity_monotone(probe_matrix, tol=1e-12):
    """True when every row (one planning context) is non-increasing across sorted weights."""
    arr = np.asarray(probe_matrix, dtype=float)
    return bool(np.all(np.diff(arr, axis=1) <= tol))


# -- output -------------------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_report(report: RunReport, out_dir):
    out_dir = Path(out_dir)
    written = []
    for n, rows in enumerate(report.building_traces, start=1):
        p = out_dir / f"building_{n}.csv"
        atomic_write(p, csv_text(rows, BUILDING_COLUMNS))
        written.append(p)
    if report.community_trace:
        p = out_dir / "community.csv"
        atomic_write(p, csv_text(report.community_trace, COMMUNITY_COLUMNS))
        written.append(p)
    p = out_dir / "report.json"
    atomic_write(p, json_text(report.as_json()))
    written.append(p)
    return written


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

"""Continuous active-inference agent for one thermal zone.

The agent keeps point beliefs over two hidden drivers (occupancy and
infiltration), descends the preference-augmented free energy with respect to
those beliefs, then descends it with respect to the HVAC action.

The free energy for one step is::

    F = (phi - T_rec)^2 / (2 s_z^2)          # reconstruct the observation just received
      + (rho - phi_next)^2 / (2 s_rho^2)     # predicted next observation vs target
      + sum_i (mu_i - mu_prior_i)^2 / (2 s_omega_i^2)

``T_rec`` replays the last interval (previous observation, previous action) under
the current beliefs; ``phi_next`` projects the next interval from the current
observation under the candidate action.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .thermal import ThermalParams

AIRFLOW_BOUNDS = (0.0, 0.3)
SUPPLY_BOUNDS = (10.0, 25.0)


class NumericalFailure(RuntimeError):
    def __init__(self, message, iteration=None, step=None, module="building"):
        super().__init__(message)
        self.iteration = iteration
        self.step = step
        self.module = module


@dataclass(frozen=True)
class HvacAction:
    airflow: float = 0.0
    supply_temp: float = 13.0

    def __post_init__(self):
        lo, hi = AIRFLOW_BOUNDS
        if not lo <= self.airflow <= hi:
            raise ValueError(f"airflow {self.airflow!r} outside [{lo}, {hi}] kg/s")
        lo, hi = SUPPLY_BOUNDS
        if not lo <= self.supply_temp <= hi:
            raise ValueError(f"supply_temp {self.supply_temp!r} outside [{lo}, {hi}] C")

    @classmethod
    def clamped(cls, airflow, supply_temp):
        return cls(
            min(max(float(airflow), AIRFLOW_BOUNDS[0]), AIRFLOW_BOUNDS[1]),
            min(max(float(supply_temp), SUPPLY_BOUNDS[0]), SUPPLY_BOUNDS[1]),
        )


@dataclass(frozen=True)
class ContinuousBelief:
    mu_occ: float = 0.0
    mu_inf: float = 0.0
    sigma_omega_occ: float = 2.0
    sigma_omega_inf: float = 0.02

    def __post_init__(self):
        if self.mu_occ < 0.0 or self.mu_inf < 0.0:
            raise ValueError("belief means must be non-negative")
        if not (self.sigma_omega_occ > 0.0 and self.sigma_omega_inf > 0.0):
            raise ValueError("prior standard deviations must be positive")


@dataclass
class PriorModel:
    """Prior means over (occupancy, infiltration) for each step.

    ``schedule`` mode returns the schedule row. ``ar1`` mode blends the previous
    posterior with the schedule: ``c * mu_prev + (1 - c) * schedule``.
    """

    prior_schedule: np.ndarray
    mode: str = "schedule"
    ar1_coeffs: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.prior_schedule = np.asarray(self.prior_schedule, dtype=float)
        if self.prior_schedule.ndim != 2 or self.prior_schedule.shape[1] != 2:
            raise ValueError("prior_schedule must have shape (steps, 2)")
        if self.mode not in ("schedule", "ar1"):
            raise ValueError(f"unknown prior mode {self.mode!r}")
        if any(not 0.0 <= c <= 1.0 for c in self.ar1_coeffs) or len(self.ar1_coeffs) != 2:
            raise ValueError("ar1_coeffs must be two values in [0, 1]")

    @property
    def steps(self):
        return len(self.prior_schedule)

    def prior_at(self, t, previous: ContinuousBelief | None = None):
        occ, inf = self.prior_schedule[t]
        if self.mode == "ar1" and previous is not None:
            c_occ, c_inf = self.ar1_coeffs
            occ = c_occ * previous.mu_occ + (1.0 - c_occ) * occ
            inf = c_inf * previous.mu_inf + (1.0 - c_inf) * inf
        return float(occ), float(inf)


@dataclass
class VfeConfig:
    """``target_rho[t]`` is the temperature wanted at the end of step ``t``."""

    target_rho: np.ndarray = field(default_factory=lambda: np.full(288, 24.0))
    sigma_z: float = 0.1
    sigma_rho: float = 0.5
    eta_occ: float = 0.1
    eta_inf: float = 2e-4
    zeta_airflow: float = 1e-3
    zeta_supply: float = 0.05
    max_iters: int = 50
    grad_tol: float = 1e-6

    def __post_init__(self):
        self.target_rho = np.asarray(self.target_rho, dtype=float)
        if not (self.sigma_z > 0.0 and self.sigma_rho > 0.0):
            raise ValueError("sigma_z and sigma_rho must be positive")
        rates = (self.eta_occ, self.eta_inf, self.zeta_airflow, self.zeta_supply)
        if any(not r > 0.0 for r in rates):
            raise ValueError("learning rates must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class VfeContext:
    """Everything F depends on besides the belief and the candidate action.

    ``recon_*`` describe the interval that produced ``phi``; leave ``recon_base``
    as None on the first step, when there is nothing to reconstruct.
    """

    phi: float
    current_temp: float
    ambient: float
    target: float
    prior: tuple
    recon_base: float | None = None
    recon_action: HvacAction | None = None
    recon_ambient: float | None = None


@dataclass
class StepDiagnostics:
    vfe_before: float
    vfe_after: float
    state_iters: int
    action_iters: int
    state_grad_norm: float
    action_grad_norm: float


# -- free energy and its gradients -------------------------------------------------------

def _predict(base, mu_occ, mu_inf, action, ambient, p: ThermalParams):
    # same balance as thermal.step_temperature, without ZoneTruth's sign checks
    heat = (
        action.airflow * p.c_p * (action.supply_temp - base)
        + mu_occ * p.q_occ
        + (p.U_w + mu_inf * p.c_p) * (ambient - base)
    )
    return base + p.dt * heat / p.C_b


def predict_observation(belief: ContinuousBelief, action: HvacAction, current_temp, ambient, params: ThermalParams):
    """Next observation expected under the belief means."""
    return _predict(current_temp, belief.mu_occ, belief.mu_inf, action, ambient, params)


def _terms(mu_occ, mu_inf, action, ctx: VfeContext, belief: ContinuousBelief, cfg: VfeConfig, p: ThermalParams):
    if ctx.recon_base is None:
        r_obs = 0.0
    else:
        t_rec = _predict(ctx.recon_base, mu_occ, mu_inf, ctx.recon_action, ctx.recon_ambient, p)
        r_obs = ctx.phi - t_rec
    r_pref = ctx.target - _predict(ctx.current_temp, mu_occ, mu_inf, action, ctx.ambient, p)
    r_occ = mu_occ - ctx.prior[0]
    r_inf = mu_inf - ctx.prior[1]
    return r_obs, r_pref, r_occ, r_inf


def _vfe_from_residuals(r_obs, r_pref, r_occ, r_inf, belief, cfg):
    return (
        0.5 * r_obs**2 / cfg.sigma_z**2
        + 0.5 * r_pref**2 / cfg.sigma_rho**2
        + 0.5 * r_occ**2 / belief.sigma_omega_occ**2
        + 0.5 * r_inf**2 / belief.sigma_omega_inf**2
    )


def vfe(belief: ContinuousBelief, action: HvacAction, ctx: VfeContext, cfg: VfeConfig, params: ThermalParams) -> float:
    res = _terms(belief.mu_occ, belief.mu_inf, action, ctx, belief, cfg, params)
    return _vfe_from_residuals(*res, belief, cfg)


def state_gradient(belief: ContinuousBelief, action: HvacAction, ctx: VfeContext, cfg: VfeConfig, params: ThermalParams):
    """dF/d(mu_occ, mu_inf)."""
    p = params
    k = p.dt / p.C_b
    r_obs, r_pref, r_occ, r_inf = _terms(belief.mu_occ, belief.mu_inf, action, ctx, belief, cfg, p)
    w_obs = r_obs / cfg.sigma_z**2
    w_pref = r_pref / cfg.sigma_rho**2
    g_occ = -w_pref * k * p.q_occ + r_occ / belief.sigma_omega_occ**2
    g_inf = -w_pref * k * p.c_p * (ctx.ambient - ctx.current_temp) + r_inf / belief.sigma_omega_inf**2
    if ctx.recon_base is not None:
        g_occ -= w_obs * k * p.q_occ
        g_inf -= w_obs * k * p.c_p * (ctx.recon_ambient - ctx.recon_base)
    return np.array([g_occ, g_inf])


def action_gradient(belief: ContinuousBelief, action: HvacAction, ctx: VfeContext, cfg: VfeConfig, params: ThermalParams):
    """dF/d(airflow, supply_temp); only the preference term depends on the action."""
    p = params
    k = p.dt / p.C_b
    _, r_pref, _, _ = _terms(belief.mu_occ, belief.mu_inf, action, ctx, belief, cfg, p)
    w_pref = r_pref / cfg.sigma_rho**2
    g_air = -w_pref * k * p.c_p * (action.supply_temp - ctx.current_temp)
    g_sup = -w_pref * k * action.airflow * p.c_p
    return np.array([g_air, g_sup])


# -- descent loops -------------------------------------------------------------------------

def _descend(x0, lower, upper, rates, objective, gradient, cfg: VfeConfig, what):
    """Projected gradient descent with fixed per-coordinate rates.

    A step that would raise the objective is retried at half the rate (and the
    reduced rate is kept for the rest of the call), so every accepted iterate is
    no worse than the one before it.
    """
    x = np.array(x0, dtype=float)
    f = objective(x)
    scale = 1.0
    gnorm = 0.0
    it = 0
    for it in range(cfg.max_iters):
        g = gradient(x)
        if not np.all(np.isfinite(g)):
            raise NumericalFailure(f"non-finite {what} gradient", iteration=it)
        pg = np.where(((x <= lower) & (g > 0.0)) | ((x >= upper) & (g < 0.0)), 0.0, g)
        gnorm = float(np.max(np.abs(pg)))
        if gnorm < cfg.grad_tol:
            return x, f, it, gnorm
        while True:
            cand = np.clip(x - scale * rates * g, lower, upper)
            f_cand = objective(cand)
            if f_cand <= f:
                break
            scale *= 0.5
            if scale < 1e-12:
                return x, f, it, gnorm
        x, f = cand, f_cand
    return x, f, it + 1, gnorm


def state_curvature(belief: ContinuousBelief, ctx: VfeContext, cfg: VfeConfig, params: ThermalParams):
    """Diagonal of the Hessian of F in (mu_occ, mu_inf); F is exactly quadratic in the means."""
    p = params
    k = p.dt / p.C_b
    d_occ = k * p.q_occ
    d_inf = k * p.c_p * (ctx.ambient - ctx.current_temp)
    h_occ = d_occ**2 / cfg.sigma_rho**2 + 1.0 / belief.sigma_omega_occ**2
    h_inf = d_inf**2 / cfg.sigma_rho**2 + 1.0 / belief.sigma_omega_inf**2
    if ctx.recon_base is not None:
        d_inf_rec = k * p.c_p * (ctx.recon_ambient - ctx.recon_base)
        h_occ += d_occ**2 / cfg.sigma_z**2
        h_inf += d_inf_rec**2 / cfg.sigma_z**2
    return np.array([h_occ, h_inf])


def _update_states(belief, action, ctx, cfg, params):
    def as_belief(x):
        return replace(belief, mu_occ=float(x[0]), mu_inf=float(x[1]))

    # a configured rate above 1/curvature would overshoot that coordinate's minimum, and the
    # shared backtracking scale would then stall the other coordinate
    rates = np.minimum([cfg.eta_occ, cfg.eta_inf], 1.0 / state_curvature(belief, ctx, cfg, params))
    x, _, iters, gnorm = _descend(
        (belief.mu_occ, belief.mu_inf),
        np.zeros(2),
        np.full(2, np.inf),
        rates,
        lambda x: vfe(as_belief(x), action, ctx, cfg, params),
        lambda x: state_gradient(as_belief(x), action, ctx, cfg, params),
        cfg,
        "state",
    )
    return as_belief(x), iters, gnorm


def update_states(belief: ContinuousBelief, action: HvacAction, ctx: VfeContext, cfg: VfeConfig, params: ThermalParams):
    """Descend F over the hidden-state means; the means are kept non-negative."""
    return _update_states(belief, action, ctx, cfg, params)[0]


def _update_actions(belief, action, ctx, cfg, params):
    def as_action(x):
        return HvacAction.clamped(x[0], x[1])

    x, _, iters, gnorm = _descend(
        (action.airflow, action.supply_temp),
        np.array([AIRFLOW_BOUNDS[0], SUPPLY_BOUNDS[0]]),
        np.array([AIRFLOW_BOUNDS[1], SUPPLY_BOUNDS[1]]),
        np.array([cfg.zeta_airflow, cfg.zeta_supply]),
        lambda x: vfe(belief, as_action(x), ctx, cfg, params),
        lambda x: action_gradient(belief, as_action(x), ctx, cfg, params),
        cfg,
        "action",
    )
    return as_action(x), iters, gnorm


def update_actions(action: HvacAction, belief: ContinuousBelief, ctx: VfeContext, cfg: VfeConfig, params: ThermalParams):
    """Descend F over the HVAC action, clamped to the equipment bounds."""
    return _update_actions(belief, action, ctx, cfg, params)[0]


def agent_step(belief: ContinuousBelief, action: HvacAction, ctx: VfeContext, cfg: VfeConfig, params: ThermalParams):
    """Infer hidden states, then pick the next action. States go first."""
    try:
        f0 = vfe(belief, action, ctx, cfg, params)
        if not math.isfinite(f0):
            raise NumericalFailure("free energy is not finite at the start of the step", iteration=0)
        belief, s_iters, s_norm = _update_states(belief, action, ctx, cfg, params)
        action, a_iters, a_norm = _update_actions(belief, action, ctx, cfg, params)
        f1 = vfe(belief, action, ctx, cfg, params)
    except (OverflowError, ZeroDivisionError) as exc:
        raise NumericalFailure(f"arithmetic failure: {exc}") from exc
    return belief, action, StepDiagnostics(f0, f1, s_iters, a_iters, s_norm, a_norm)


class BuildingAgent:
    """Stateful wrapper that threads beliefs and the last interval between steps."""

    def __init__(self, prior: PriorModel, cfg: VfeConfig, params: ThermalParams,
                 belief: ContinuousBelief | None = None, action: HvacAction | None = None):
        self.prior = prior
        self.cfg = cfg
        self.params = params
        occ0, inf0 = prior.prior_at(0)
        self.belief = belief or ContinuousBelief(mu_occ=occ0, mu_inf=inf0)
        self.action = action or HvacAction()
        self._last = None  # (phi, ambient, action) of the previous step
        self.t = 0

    def step(self, phi, ambient, target):
        mu_prior = self.prior.prior_at(self.t, self.belief if self.t > 0 else None)
        if self._last is None:
            ctx = VfeContext(phi, phi, ambient, target, mu_prior)
        else:
            prev_phi, prev_amb, prev_action = self._last
            ctx = VfeContext(phi, phi, ambient, target, mu_prior, prev_phi, prev_action, prev_amb)
        try:
            belief, action, diag = agent_step(self.belief, self.action, ctx, self.cfg, self.params)
        except NumericalFailure as exc:
            exc.step = self.t
            raise
        self._last = (phi, ambient, action)
        self.belief, self.action = belief, action
        self.t += 1
        return belief, action, diag


# -- perfect-information trajectory optimizer ------------------------------------------------

@dataclass
class HorizonResult:
    airflow: np.ndarray
    supply_temp: np.ndarray
    temperatures: np.ndarray
    objective: float
    iterations: int
    converged: bool

    @property
    def warning(self):
        return not self.converged

    def actions(self):
        return [HvacAction(float(a), float(s)) for a, s in zip(self.airflow, self.supply_temp)]


def horizon_objective(airflow, supply, T0, truth, targets, sigma_rho, params: ThermalParams):
    J, ga, gs, T = _kernels.horizon_grad(
        float(T0), np.asarray(airflow, float), np.asarray(supply, float),
        truth.occupancy_schedule, truth.infiltration_schedule, truth.ambient,
        np.asarray(targets, float), 1.0 / sigma_rho**2,
        params.c_p, params.C_b, params.U_w, params.q_occ, params.dt,
    )
    return J, ga, gs, T


def optimize_full_horizon(initial_temp, cfg: VfeConfig, params: ThermalParams, true_states,
                          max_iters=20000, tol=1e-7, init=None):
    """Jointly optimize every action of the day with known hidden drivers.

    Minimizes the summed preference term ``sum_t (target_rho[t] - T_{t+1})^2 / (2 s_rho^2)``
    by spectral projected gradient (Barzilai-Borwein steps with a non-monotone
    Armijo line search) in box-normalized coordinates.
    """
    n = true_states.steps
    if len(cfg.target_rho) < n:
        raise ValueError(f"need {n} targets, config has {len(cfg.target_rho)}")
    targets = cfg.target_rho[:n]
    lo = np.concatenate([np.full(n, AIRFLOW_BOUNDS[0]), np.full(n, SUPPLY_BOUNDS[0])])
    hi = np.concatenate([np.full(n, AIRFLOW_BOUNDS[1]), np.full(n, SUPPLY_BOUNDS[1])])
    span = hi - lo

    def fg(u):
        x = lo + span * u
        J, ga, gs, T = horizon_objective(x[:n], x[n:], initial_temp, true_states, targets, cfg.sigma_rho, params)
        return J, np.concatenate([ga, gs]) * span, T

    if init is None:
        u = np.concatenate([np.zeros(n), np.full(n, (13.0 - SUPPLY_BOUNDS[0]) / (SUPPLY_BOUNDS[1] - SUPPLY_BOUNDS[0]))])
    else:
        u = (np.concatenate([init[0], init[1]]) - lo) / span
    u = np.clip(u, 0.0, 1.0)

    f, g, T = fg(u)
    history = [f]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        pg = np.clip(u - g, 0.0, 1.0) - u
        if np.max(np.abs(pg)) < tol:
            converged = True
            break
        d = np.clip(u - step * g, 0.0, 1.0) - u
        gd = float(g @ d)
        f_ref = max(history[-10:])
        lam = 1.0
        while True:
            u_new = u + lam * d
            f_new, g_new, T_new = fg(u_new)
            if f_new <= f_ref + 1e-4 * lam * gd or lam < 1e-12:
                break
            lam *= 0.5
        s, y = u_new - u, g_new - g
        sy = float(s @ y)
        step = min(1e6, max(1e-6, float(s @ s) / sy)) if sy > 0.0 else 1e6
        u, f, g, T = u_new, f_new, g_new, T_new
        history.append(f)
        if not math.isfinite(f):
            raise NumericalFailure("horizon objective became non-finite", iteration=it)
    if not converged:
        warnings.warn(f"full-horizon optimizer stopped after {max_iters} iterations without converging")
    x = lo + span * u
    return HorizonResult(x[:n], x[n:], T, float(f), it, converged)

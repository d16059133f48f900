"""Full-information trajectory optimizer used as the reference for the agent.

Deliberately shares no code with ``building.optimize_full_horizon``: gradients
come from forward sensitivities instead of an adjoint sweep, and the search is
multi-start L-BFGS-B instead of spectral projected gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..building import AIRFLOW_BOUNDS, SUPPLY_BOUNDS


@dataclass
class BaselineResult:
    airflow: np.ndarray
    supply_temp: np.ndarray
    temperatures: np.ndarray
    objective: float
    converged: bool
    starts: int


def simulate(T0, airflow, supply, occ, inf, amb, params):
    n = len(airflow)
    T = np.empty(n + 1)
    T[0] = T0
    for t in range(n):
        heat = (airflow[t] * params.c_p * (supply[t] - T[t]) + occ[t] * params.q_occ
                + (params.U_w + inf[t] * params.c_p) * (amb[t] - T[t]))
        T[t + 1] = T[t] + params.dt * heat / params.C_b
    return T


def objective_and_gradient(T0, airflow, supply, occ, inf, amb, targets, sigma_rho, params):
    """Horizon objective and its gradient via forward sensitivities dT_j / du_t."""
    n = len(airflow)
    k = params.dt / params.C_b
    T = simulate(T0, airflow, supply, occ, inf, amb, params)
    decay = 1.0 - k * (airflow * params.c_p + params.U_w + inf * params.c_p)
    direct_air = k * params.c_p * (supply - T[:-1])
    direct_sup = k * params.c_p * airflow
    S_air = np.zeros(n)  # row j of the sensitivity matrices, updated in place as j advances
    S_sup = np.zeros(n)
    resid = T[1:] - targets
    w = resid / sigma_rho**2
    g_air = np.zeros(n)
    g_sup = np.zeros(n)
    for j in range(n):
        # T_{j+1} = decay_j T_j + drive_j; inputs before j act through T_j
        S_air *= decay[j]
        S_sup *= decay[j]
        S_air[j] = direct_air[j]
        S_sup[j] = direct_sup[j]
        g_air += w[j] * S_air
        g_sup += w[j] * S_sup
    J = 0.5 * float(np.sum(resid**2)) / sigma_rho**2
    return J, g_air, g_sup, T


def baseline_full_information(initial_temp, targets, sigma_rho, params, truth, starts=3, seed=0,
                              max_iters=15000):
    """Multi-start L-BFGS-B over all airflow and supply-temperature decisions."""
    n = truth.steps
    targets = np.asarray(targets, dtype=float)[:n]
    lo = np.concatenate([np.full(n, AIRFLOW_BOUNDS[0]), np.full(n, SUPPLY_BOUNDS[0])])
    hi = np.concatenate([np.full(n, AIRFLOW_BOUNDS[1]), np.full(n, SUPPLY_BOUNDS[1])])
    span = hi - lo
    occ, inf, amb = truth.occupancy_schedule, truth.infiltration_schedule, truth.ambient

    def fun(z):
        x = lo + span * z
        J, ga, gs, _ = objective_and_gradient(initial_temp, x[:n], x[n:], occ, inf, amb, targets, sigma_rho, params)
        return J, np.concatenate([ga, gs]) * span

    rng = np.random.default_rng(seed)
    inits = [np.full(2 * n, 0.5), np.concatenate([np.ones(n), np.zeros(n)])]
    while len(inits) < starts:
        inits.append(rng.uniform(0.0, 1.0, 2 * n))
    best = None
    for z0 in inits[:max(starts, 1)]:
        res = minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * (2 * n),
                       options={"maxiter": max_iters, "maxfun": 4 * max_iters, "ftol": 1e-16, "gtol": 1e-11})
        if best is None or res.fun < best.fun:
            best = res
    x = lo + span * best.x
    T = simulate(initial_temp, x[:n], x[n:], occ, inf, amb, params)
    return BaselineResult(x[:n], x[n:], T, float(best.fun), bool(best.success), len(inits[:max(starts, 1)]))

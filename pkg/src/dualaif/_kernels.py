"""Hot loops: thermal trajectory rollout/adjoint and policy-tree leaf sums.

Each kernel has a numba loop form (``*_nb``) and a vectorized numpy form
(``*_np``). The public names are bound according to ``DUALAIF_BACKEND``; both
forms stay importable so tests and the benchmark can compare them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# -- thermal trajectory ------------------------------------------------------------


@njit
def rollout_nb(T0, airflow, supply, occ, inf, amb, c_p, C_b, U_w, q_occ, dt):
    n = airflow.shape[0]
    T = np.empty(n + 1)
    T[0] = T0
    k = dt / C_b
    for t in range(n):
        Tt = T[t]
        T[t + 1] = Tt + k * (
            airflow[t] * c_p * (supply[t] - Tt)
            + occ[t] * q_occ
            + (U_w + inf[t] * c_p) * (amb[t] - Tt)
        )
    return T


@njit
def horizon_grad_nb(T0, airflow, supply, occ, inf, amb, target, inv_var, c_p, C_b, U_w, q_occ, dt):
    """Objective sum_k (T_k - target_k)^2 * inv_var / 2 over k=1..n, and its gradient."""
    n = airflow.shape[0]
    T = rollout_nb(T0, airflow, supply, occ, inf, amb, c_p, C_b, U_w, q_occ, dt)
    k = dt / C_b
    J = 0.0
    for t in range(1, n + 1):
        r = T[t] - target[t - 1]
        J += 0.5 * inv_var * r * r
    g_air = np.empty(n)
    g_sup = np.empty(n)
    lam = 0.0
    for t in range(n - 1, -1, -1):
        lam += inv_var * (T[t + 1] - target[t])
        g_air[t] = lam * k * c_p * (supply[t] - T[t])
        g_sup[t] = lam * k * airflow[t] * c_p
        phi = 1.0 - k * (airflow[t] * c_p + U_w + inf[t] * c_p)
        lam = lam * phi
    return J, g_air, g_sup, T


def _affine_coeffs(airflow, supply, occ, inf, amb, c_p, C_b, U_w, q_occ, dt):
    k = dt / C_b
    cond = airflow * c_p + U_w + inf * c_p
    phi = 1.0 - k * cond
    drive = k * (airflow * c_p * supply + occ * q_occ + (U_w + inf * c_p) * amb)
    return phi, drive


def _prefix_products(phi):
    if np.any(phi <= 0.0):
        raise ValueError("explicit Euler step is unstable (decay factor <= 0) for these inputs")
    logp = np.concatenate(([0.0], np.cumsum(np.log(phi))))
    if logp[-1] < -600.0:
        raise ValueError("horizon too long for the closed-form rollout; use the numba backend")
    return np.exp(logp)


def rollout_np(T0, airflow, supply, occ, inf, amb, c_p, C_b, U_w, q_occ, dt):
    # T_{t+1} = phi_t T_t + drive_t, solved in closed form with prefix products
    phi, drive = _affine_coeffs(airflow, supply, occ, inf, amb, c_p, C_b, U_w, q_occ, dt)
    P = _prefix_products(phi)
    acc = np.concatenate(([T0], drive / P[1:]))
    return P * np.cumsum(acc)


def horizon_grad_np(T0, airflow, supply, occ, inf, amb, target, inv_var, c_p, C_b, U_w, q_occ, dt):
    phi, drive = _affine_coeffs(airflow, supply, occ, inf, amb, c_p, C_b, U_w, q_occ, dt)
    P = _prefix_products(phi)
    T = P * np.cumsum(np.concatenate(([T0], drive / P[1:])))
    resid = T[1:] - target
    J = 0.5 * inv_var * float(np.dot(resid, resid))
    wP = inv_var * resid * P[1:]
    lam_next = np.cumsum(wP[::-1])[::-1] / P[1:]
    k = dt / C_b
    g_air = lam_next * k * c_p * (supply - T[:-1])
    g_sup = lam_next * k * airflow * c_p
    return J, g_air, g_sup, T


# -- policy tree ---------------------------------------------------------------------

N_ACTIONS = 27
N_CLASSES = 9  # actions sharing (building, ESS) sub-actions share a transition matrix


@njit
def leaf_sums_nb(terms, horizon):
    """Sum per-depth step terms along every root-to-leaf path of the 27-ary tree.

    ``terms[d, node, a]`` is the step term for action ``a`` taken at depth ``d``
    from the belief node ``node`` (base-9 index of the transition classes of the
    prefix). Leaves come out in lexicographic policy order.
    """
    n_leaves = N_ACTIONS ** horizon
    out = np.empty(n_leaves)
    digits = np.zeros(horizon, dtype=np.int64)
    partial = np.zeros(horizon + 1)
    nodes = np.zeros(horizon + 1, dtype=np.int64)
    for d in range(horizon):
        a = digits[d]
        partial[d + 1] = partial[d] + terms[d, nodes[d], a]
        nodes[d + 1] = nodes[d] * N_CLASSES + a // 3
    for leaf in range(n_leaves):
        out[leaf] = partial[horizon]
        # odometer increment, then refresh the sums below the changed digit
        d = horizon - 1
        while d >= 0:
            digits[d] += 1
            if digits[d] < N_ACTIONS:
                break
            digits[d] = 0
            d -= 1
        if d < 0:
            break
        for e in range(d, horizon):
            a = digits[e]
            partial[e + 1] = partial[e] + terms[e, nodes[e], a]
            nodes[e + 1] = nodes[e] * N_CLASSES + a // 3
    return out


_CLASS_OF = np.arange(N_ACTIONS) // 3


def leaf_sums_np(terms, horizon):
    total = None
    for d in range(horizon):
        # terms at depth d indexed by the class sequence of the prefix, expanded to actions
        t = terms[d, : N_CLASSES ** d, :].reshape((N_CLASSES,) * d + (N_ACTIONS,))
        for axis in range(d):
            t = np.take(t, _CLASS_OF, axis=axis)
        if total is None:
            total = t
        else:
            total = total[..., None] + t
    return total.reshape(-1)


if USE_NUMBA:
    rollout = rollout_nb
    horizon_grad = horizon_grad_nb
    leaf_sums = leaf_sums_nb
else:
    rollout = rollout_np
    horizon_grad = horizon_grad_np
    leaf_sums = leaf_sums_np

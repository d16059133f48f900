"""Independent reference implementations used to check the library.

Each oracle is written from the defining formula with explicit loops and
shares no code with the package.
"""
import math

import numpy as np


def kron_brute(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    (p, q), (r, s) = a.shape, b.shape
    out = np.zeros((p * r, q * s))
    for i in range(p):
        for j in range(q):
            for k in range(r):
                for l in range(s):
                    out[i * r + k, j * s + l] = a[i, j] * b[k, l]
    return out


def entropy_brute(p):
    return -math.fsum(x * math.log(x) for x in p if x > 0.0)


def euler_step(T, airflow, supply, occ, inf, amb, c_p=1005.0, C_b=2.0e6, U_w=50.0, q_occ=102.0, dt=300.0):
    return T + dt / C_b * (airflow * c_p * (supply - T) + occ * q_occ + (U_w + inf * c_p) * (amb - T))


def bayes_brute(prior, B, A, o):
    """p(s'|o) = sum_s p(o|s') p(s'|s) q(s) / Z by joint enumeration."""
    n = len(prior)
    joint = [0.0] * n
    for s_next in range(n):
        acc = 0.0
        for s in range(n):
            acc += B[s_next][s] * prior[s]
        joint[s_next] = A[o][s_next] * acc
    z = math.fsum(joint)
    return np.array([j / z for j in joint])


def ambiguity_brute(q, A):
    total = 0.0
    n_obs, n_states = len(A), len(A[0])
    for s in range(n_states):
        for o in range(n_obs):
            a = A[o][s]
            if a > 0.0:
                total += -q[s] * a * math.log(a)
    return total


# -- expected cost, written per action from the cost definitions ----------------------------

UB = {0: 0.0, 1: 1.0, 2: 2.0}


def step_cost_brute(q_next, q_prev, u, price, target, pv, weights, load_levels=(9.0, 5.0, 2.0),
                    reduction=(0.0, 1.0, 2.0), block=5.0, ess_block=5.0, hours=0.25):
    """Expected cost of joint action index ``u`` given the belief after the action.

    ``q_prev`` gives the pre-action battery marginal that scales the charge and
    discharge blocks by the chance the battery can move.
    """
    lam_dev, lam_upv, lam_bat, sell_ratio = weights
    u_b, u_ess, u_m = u // 9, (u // 3) % 3, u % 3
    exp_load = 0.0
    for b1 in range(3):
        for b2 in range(3):
            for e in range(4):
                exp_load += q_next[(b1 * 3 + b2) * 4 + e] * (load_levels[b1] + load_levels[b2])
    p_full = sum(q_prev[(b * 4) + 3] for b in range(9))
    p_empty = sum(q_prev[(b * 4) + 0] for b in range(9))
    charge = ess_block * (1.0 - p_full) if u_ess == 0 else 0.0
    discharge = ess_block * (1.0 - p_empty) if u_ess == 2 else 0.0
    buy = block if u_m == 0 else 0.0
    sell = block if u_m == 2 else 0.0
    red = 2.0 * reduction[u_b]
    pv_used = min(pv, max(exp_load - red + charge + sell, 0.0))
    flow = charge - discharge
    p_rt = exp_load - red - pv_used + flow - buy + sell
    resid = p_rt - target
    return (price * hours * (buy - sell_ratio * sell) + lam_dev * abs(resid) * hours
            + lam_upv * (pv - pv_used) * hours + lam_bat * abs(flow) * hours)


def two_step_efe_brute(q0, u1, u2, B, A, alpha, markets, weights):
    """EFE of a two-action policy by expanding s -> s' -> s'' explicitly."""
    n = len(q0)
    q1 = [0.0] * n
    for s1 in range(n):
        for s0 in range(n):
            q1[s1] += B[u1][s1][s0] * q0[s0]
    q2 = [0.0] * n
    for s2 in range(n):
        for s1 in range(n):
            for s0 in range(n):
                q2[s2] += B[u2][s2][s1] * B[u1][s1][s0] * q0[s0]
    cost = step_cost_brute(q1, q0, u1, *markets[0], weights) + step_cost_brute(q2, q1, u2, *markets[1], weights)
    amb = ambiguity_brute(q1, A) + ambiguity_brute(q2, A)
    return cost + alpha * amb, cost, amb


def central_difference(f, x, h=1e-5):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g

"""Receding-horizon policy selection by expected free energy.

A policy is a sequence of joint actions. Its EFE sums, over the look-ahead,
the expected operating cost (or the risk against preferred outcomes) plus
``alpha_amb`` times the ambiguity of the predicted observation. Beliefs are
propagated open-loop through ``B[u]``; no hypothetical observations are
conditioned on during look-ahead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .beliefmath import column_entropies, kl_divergence
from .community import (
    N_ACTIONS,
    N_STATES,
    CommunityModel,
    EssAction,
    JointAction,
    MarketAction,
)

N_CLASSES = 9
_CLASS_OF = np.arange(N_ACTIONS) // 3
_UB_OF = np.arange(N_ACTIONS) // 9
_UESS_OF = (np.arange(N_ACTIONS) // 3) % 3
_UM_OF = np.arange(N_ACTIONS) % 3
# representative action of each transition class (u_m does not affect B[u])
_CLASS_REP = np.arange(N_CLASSES) * 3


@dataclass
class EfeConfig:
    horizon: int = 4
    alpha_amb: float = 0.01
    mode: str = "cost_ambiguity"
    search: str = "exhaustive"
    beam_width: int = 729

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.alpha_amb < 0.0:
            raise ValueError("alpha_amb must be >= 0")
        if self.mode not in ("cost_ambiguity", "risk_ambiguity"):
            raise ValueError(f"unknown EFE mode {self.mode!r}")
        if self.search not in ("exhaustive", "beam"):
            raise ValueError(f"unknown search {self.search!r}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")


@dataclass
class CostWeights:
    lambda_dev: float = 0.05
    lambda_upv: float = 0.02
    lambda_bat: float = 0.01
    sell_ratio: float = 0.9

    def __post_init__(self):
        if min(self.lambda_dev, self.lambda_upv, self.lambda_bat, self.sell_ratio) < 0.0:
            raise ValueError("cost weights must be non-negative")
        if self.sell_ratio > 1.0:
            raise ValueError("sell_ratio must not exceed 1")


@dataclass
class StateEconomics:
    load_kw: dict = field(default_factory=lambda: {"High": 9.0, "Med": 5.0, "Low": 2.0})
    reduction_kw: tuple = (0.0, 1.0, 2.0)
    trade_block_kw: float = 5.0
    ess_power_kw: float = 5.0
    step_hours: float = 0.25

    def __post_init__(self):
        hi, med, lo = (float(self.load_kw[k]) for k in ("High", "Med", "Low"))
        if not hi > med > lo >= 0.0:
            raise ValueError("load levels must satisfy High > Med > Low >= 0")
        if len(self.reduction_kw) != 3 or min(self.reduction_kw) < 0.0:
            raise ValueError("reduction_kw needs three non-negative entries")
        if self.trade_block_kw < 0.0 or self.ess_power_kw < 0.0 or self.step_hours <= 0.0:
            raise ValueError("block sizes must be non-negative and step_hours positive")

    def load_vector(self):
        """Community load (kW) in each of the 36 joint states."""
        per = np.array([self.load_kw["High"], self.load_kw["Med"], self.load_kw["Low"]], dtype=float)
        return (per[:, None, None] + per[None, :, None] + np.zeros((1, 1, 4))).reshape(N_STATES)


@dataclass(frozen=True)
class MarketStep:
    spot_price: float  # $/kWh
    target_kw: float  # day-ahead plan for this step
    pv_kw: float


@dataclass
class CostBreakdown:
    cost_spot: float
    p_dev: float
    p_upv: float
    p_bat: float
    p_rt: float
    residual: float
    pv_used: float
    ess_flow: float
    trade: float

    @property
    def total(self):
        return self.cost_spot + self.p_dev + self.p_upv + self.p_bat


@dataclass
class PolicyEvaluation:
    policy: tuple
    efe: float
    expected_cost: float
    ambiguity: float
    predicted_beliefs: list
    step_costs: list
    step_ambiguities: list


@dataclass
class PlanResult:
    action: JointAction
    evaluation: PolicyEvaluation
    candidates_evaluated: int
    policy_index: int
    leaf_cost: np.ndarray | None = None
    leaf_ambiguity: np.ndarray | None = None

    def select_for_alpha(self, alpha):
        """Argmin over the cached leaves for another ambiguity weight: (index, cost, ambiguity)."""
        if self.leaf_cost is None:
            raise ValueError("leaf values were not kept for this plan")
        idx = int(np.argmin(self.leaf_cost + alpha * self.leaf_ambiguity))
        return idx, float(self.leaf_cost[idx]), float(self.leaf_ambiguity[idx])


# -- per-step cost ---------------------------------------------------------------------------

def _cost_table(exp_load, feas_charge, feas_discharge, step: MarketStep, weights: CostWeights,
                econ: StateEconomics):
    """Cost components for all 27 actions.

    ``exp_load`` has shape (..., 27) (expected community load after each
    action); the feasibility factors broadcast against it.
    """
    dt = econ.step_hours
    red = 2.0 * np.asarray(econ.reduction_kw, dtype=float)[_UB_OF]
    charge = np.where(_UESS_OF == EssAction.CHARGE, econ.ess_power_kw, 0.0) * feas_charge
    discharge = np.where(_UESS_OF == EssAction.DISCHARGE, econ.ess_power_kw, 0.0) * feas_discharge
    ess_flow = charge - discharge
    buy = np.where(_UM_OF == MarketAction.BUY, econ.trade_block_kw, 0.0)
    sell = np.where(_UM_OF == MarketAction.SELL, econ.trade_block_kw, 0.0)
    pv = step.pv_kw
    # PV serves the net load, battery charging and explicit sales; anything left is curtailed
    pv_used = np.minimum(pv, np.maximum(exp_load - red + charge + sell, 0.0))
    p_rt = exp_load - red - pv_used + ess_flow - buy + sell
    residual = p_rt - step.target_kw
    cost_spot = step.spot_price * dt * (buy - weights.sell_ratio * sell)
    p_dev = weights.lambda_dev * np.abs(residual) * dt
    p_upv = weights.lambda_upv * (pv - pv_used) * dt
    p_bat = weights.lambda_bat * np.abs(ess_flow) * dt
    return dict(cost_spot=cost_spot, p_dev=p_dev, p_upv=p_upv, p_bat=p_bat, p_rt=p_rt,
                residual=residual, pv_used=pv_used, ess_flow=ess_flow, trade=buy - sell)


def _total(table):
    return ((table["cost_spot"] + table["p_dev"]) + table["p_upv"]) + table["p_bat"]


def _feasibility(ess_marginal):
    """Probability that a charge (resp. discharge) is not blocked by a full (empty) battery."""
    if ess_marginal is None:
        return 1.0, 1.0
    m = np.asarray(ess_marginal, dtype=float)
    return 1.0 - m[..., 3], 1.0 - m[..., 0]


def expected_cost(belief, action, step: MarketStep, weights: CostWeights, econ: StateEconomics,
                  ess_marginal=None):
    """Expected one-step operating cost of ``action`` when the community is in ``belief``.

    ``ess_marginal`` (the state-of-charge marginal before the action) scales the
    battery block by the probability that the battery can actually move; when
    omitted the full block is assumed.
    """
    u = action.index if isinstance(action, JointAction) else int(action)
    exp_load = _dot(np.asarray(belief, dtype=float), econ.load_vector())
    fc, fd = _feasibility(ess_marginal)
    table = _cost_table(np.full(N_ACTIONS, exp_load), fc, fd, step, weights, econ)
    parts = {k: float(v[u]) for k, v in table.items()}
    br = CostBreakdown(**parts)
    return float(_total(table)[u]), br


# -- belief propagation shared by every search path --------------------------------------------

def _dot(q, v):
    # elementwise product + last-axis sum, so every path reduces rows identically
    return (q * v).sum(axis=-1)


def _propagate(Q, Bm):
    """Rows of ``Q`` pushed through ``Bm`` (36x36): ``(Bm @ q)`` per row."""
    return (Q[..., None, :] * Bm).sum(axis=-1)


def _ess_marginal(Q):
    return Q.reshape(Q.shape[:-1] + (9, 4)).sum(axis=-2)


def _risk(qo, preferred):
    """KL(qo || preferred) along the last axis; infinite where support is violated."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(qo > 0.0, qo * (np.log(qo) - np.log(preferred)), 0.0)
    return terms.sum(axis=-1)


def _step_terms(Q, model: CommunityModel, step: MarketStep, cfg: EfeConfig, weights, econ, H, L):
    """Children of every belief row in ``Q`` and their per-action step terms.

    Returns (children (n, 9, 36), cost terms (n, 27), ambiguity terms (n, 27)).
    """
    n = Q.shape[0]
    children = np.empty((n, N_CLASSES, N_STATES))
    for c in range(N_CLASSES):
        children[:, c, :] = _propagate(Q, model.B[_CLASS_REP[c]])
    amb = _dot(children, H)[:, _CLASS_OF]
    if cfg.mode == "cost_ambiguity":
        exp_load = _dot(children, L)[:, _CLASS_OF]
        fc, fd = _feasibility(_ess_marginal(Q))
        cost = _total(_cost_table(exp_load, fc[:, None], fd[:, None], step, weights, econ))
    else:
        qo = (children[..., None, :] * model.A).sum(axis=-1)
        cost = _risk(qo, model.preferred_obs)[:, _CLASS_OF]
    return children, cost, amb


def step_ambiguity(predicted_belief, model: CommunityModel) -> float:
    """Expected entropy of the observation under the predicted belief."""
    return float(_dot(np.asarray(predicted_belief, dtype=float), column_entropies(model.A)))


def evaluate_policy(belief, policy, market, model: CommunityModel, cfg: EfeConfig,
                    weights: CostWeights, econ: StateEconomics) -> PolicyEvaluation:
    """Roll ``belief`` through ``policy`` and score it.

    ``market`` is a sequence of MarketStep, one per look-ahead step.
    """
    policy = tuple(a.index if isinstance(a, JointAction) else int(a) for a in policy)
    if len(policy) != cfg.horizon:
        raise ValueError(f"policy length {len(policy)} != horizon {cfg.horizon}")
    if len(market) < cfg.horizon:
        raise ValueError("market context shorter than the horizon")
    H = column_entropies(model.A)
    q = np.asarray(belief, dtype=float)
    beliefs, costs, ambs = [], [], []
    for k, u in enumerate(policy):
        q_next = _propagate(q, model.B[u])
        amb = float(_dot(q_next, H))
        if cfg.mode == "cost_ambiguity":
            cost, _ = expected_cost(q_next, u, market[k], weights, econ, ess_marginal=_ess_marginal(q))
        else:
            qo = (q_next[None, :] * model.A).sum(axis=-1)
            cost = kl_divergence(qo, model.preferred_obs)
        beliefs.append(q_next)
        costs.append(cost)
        ambs.append(amb)
        q = q_next
    total_cost = 0.0
    total_amb = 0.0
    for c, a in zip(costs, ambs):
        total_cost += c
        total_amb += a
    return PolicyEvaluation(
        policy=policy,
        efe=total_cost + cfg.alpha_amb * total_amb,
        expected_cost=total_cost,
        ambiguity=total_amb,
        predicted_beliefs=beliefs,
        step_costs=costs,
        step_ambiguities=ambs,
    )


def policy_index(policy):
    idx = 0
    for a in policy:
        idx = idx * N_ACTIONS + int(a)
    return idx


def policy_from_index(idx, horizon):
    out = []
    for _ in range(horizon):
        idx, a = divmod(idx, N_ACTIONS)
        out.append(a)
    return tuple(reversed(out))


# -- search -----------------------------------------------------------------------------------------

def _tree_terms(belief, market, model, cfg, weights, econ):
    """Per-depth step terms over the whole tree, one belief propagation per node class."""
    h = cfg.horizon
    H = column_entropies(model.A)
    L = econ.load_vector()
    width = N_CLASSES ** (h - 1)
    cost_terms = np.zeros((h, width, N_ACTIONS))
    amb_terms = np.zeros((h, width, N_ACTIONS))
    Q = np.asarray(belief, dtype=float)[None, :]
    for d in range(h):
        children, cost, amb = _step_terms(Q, model, market[d], cfg, weights, econ, H, L)
        cost_terms[d, : Q.shape[0]] = cost
        amb_terms[d, : Q.shape[0]] = amb
        Q = children.reshape(-1, N_STATES)
    return cost_terms, amb_terms


def _exhaustive(belief, market, model, cfg, weights, econ):
    cost_terms, amb_terms = _tree_terms(belief, market, model, cfg, weights, econ)
    leaf_cost = _kernels.leaf_sums(cost_terms, cfg.horizon)
    leaf_amb = _kernels.leaf_sums(amb_terms, cfg.horizon)
    idx = int(np.argmin(leaf_cost + cfg.alpha_amb * leaf_amb))
    return idx, leaf_cost.size, leaf_cost, leaf_amb


def _beam(belief, market, model, cfg, weights, econ):
    H = column_entropies(model.A)
    L = econ.load_vector()
    Q = np.asarray(belief, dtype=float)[None, :]
    prefix_idx = np.zeros(1, dtype=np.int64)
    acc_cost = np.zeros(1)
    acc_amb = np.zeros(1)
    evaluated = 0
    for d in range(cfg.horizon):
        children, cost, amb = _step_terms(Q, model, market[d], cfg, weights, econ, H, L)
        n = Q.shape[0]
        new_cost = (acc_cost[:, None] + cost).reshape(-1)
        new_amb = (acc_amb[:, None] + amb).reshape(-1)
        new_idx = (prefix_idx[:, None] * N_ACTIONS + np.arange(N_ACTIONS)[None, :]).reshape(-1)
        new_Q = children[:, _CLASS_OF, :].reshape(n * N_ACTIONS, N_STATES)
        score = new_cost + cfg.alpha_amb * new_amb
        if d == cfg.horizon - 1:
            evaluated = score.size
            order = np.lexsort((new_idx, score))[:1]
        else:
            order = np.lexsort((new_idx, score))[: cfg.beam_width]
        Q, prefix_idx, acc_cost, acc_amb = new_Q[order], new_idx[order], new_cost[order], new_amb[order]
    return int(prefix_idx[0]), evaluated


def plan(belief, market, model: CommunityModel, cfg: EfeConfig, weights: CostWeights,
         econ: StateEconomics, keep_leaves=False) -> PlanResult:
    """Pick the first action of the minimum-EFE policy.

    Ties go to the lowest lexicographic policy index.
    """
    if len(market) < cfg.horizon:
        raise ValueError("market context shorter than the horizon")
    if cfg.search == "exhaustive":
        idx, n_eval, leaf_cost, leaf_amb = _exhaustive(belief, market, model, cfg, weights, econ)
    else:
        idx, n_eval = _beam(belief, market, model, cfg, weights, econ)
        leaf_cost = leaf_amb = None
    policy = policy_from_index(idx, cfg.horizon)
    evaluation = evaluate_policy(belief, policy, market, model, cfg, weights, econ)
    return PlanResult(
        action=JointAction.from_index(policy[0]),
        evaluation=evaluation,
        candidates_evaluated=n_eval,
        policy_index=idx,
        leaf_cost=leaf_cost if keep_leaves else None,
        leaf_ambiguity=leaf_amb if keep_leaves else None,
    )


def flat_plan(belief, market, model, cfg, weights, econ):
    """Reference planner: score every policy independently with evaluate_policy."""
    best = None
    for idx in range(N_ACTIONS ** cfg.horizon):
        ev = evaluate_policy(belief, policy_from_index(idx, cfg.horizon), market, model, cfg, weights, econ)
        if best is None or ev.efe < best[1].efe:
            best = (idx, ev)
    return best


__all__ = [
    "EfeConfig", "CostWeights", "StateEconomics", "MarketStep", "CostBreakdown",
    "PolicyEvaluation", "PlanResult", "expected_cost", "step_ambiguity",
    "evaluate_policy", "plan", "flat_plan", "policy_index", "policy_from_index",
]

"""Discrete generative model of the community: two buildings and a shared battery.

Joint hidden state index: ``(b1 * 3 + b2) * 4 + ess`` (36 states).
Joint observation index: ``(o_b1 * 3 + o_b2) * 3 + o_ess`` (27 outcomes).
Joint action index: ``(u_b * 3 + u_ess) * 3 + u_m`` (27 actions).

The likelihood ``A`` is 27x36 and each transition ``B[u]`` is 36x36, both
column-stochastic and both built as Kronecker products of per-factor blocks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .beliefmath import DegenerateEvidenceError, check_column_stochastic, kron, normalize

log = logging.getLogger(__name__)

N_STATES = 36
N_OBS = 27
N_ACTIONS = 27


class Load(IntEnum):
    HIGH = 0
    MED = 1
    LOW = 2


class Soc(IntEnum):
    EMPTY = 0
    LOW = 1
    HIGH = 2
    FULL = 3


class Trend(IntEnum):
    UP = 0
    SAME = 1
    DOWN = 2


class Flow(IntEnum):
    IMPORT = 0
    NEUTRAL = 1
    EXPORT = 2


class BuildingAction(IntEnum):
    NO_CHANGE = 0
    SMALL_REDUCTION = 1
    BIG_REDUCTION = 2


class EssAction(IntEnum):
    CHARGE = 0
    HOLD = 1
    DISCHARGE = 2


class MarketAction(IntEnum):
    BUY = 0
    NO_TRANSACTION = 1
    SELL = 2


@dataclass(frozen=True)
class JointState:
    b1: Load
    b2: Load
    ess: Soc

    @property
    def index(self) -> int:
        return (int(self.b1) * 3 + int(self.b2)) * 4 + int(self.ess)

    @classmethod
    def from_index(cls, i: int) -> "JointState":
        if not 0 <= i < N_STATES:
            raise ValueError(f"state index {i} out of range")
        b, ess = divmod(i, 4)
        b1, b2 = divmod(b, 3)
        return cls(Load(b1), Load(b2), Soc(ess))


@dataclass(frozen=True)
class JointObservation:
    o_b1: Trend
    o_b2: Trend
    o_ess: Flow

    @property
    def index(self) -> int:
        return (int(self.o_b1) * 3 + int(self.o_b2)) * 3 + int(self.o_ess)

    @classmethod
    def from_index(cls, i: int) -> "JointObservation":
        if not 0 <= i < N_OBS:
            raise ValueError(f"observation index {i} out of range")
        b, o_ess = divmod(i, 3)
        o_b1, o_b2 = divmod(b, 3)
        return cls(Trend(o_b1), Trend(o_b2), Flow(o_ess))


@dataclass(frozen=True)
class JointAction:
    u_b: BuildingAction
    u_ess: EssAction
    u_m: MarketAction

    @property
    def index(self) -> int:
        return (int(self.u_b) * 3 + int(self.u_ess)) * 3 + int(self.u_m)

    @classmethod
    def from_index(cls, i: int) -> "JointAction":
        if not 0 <= i < N_ACTIONS:
            raise ValueError(f"action index {i} out of range")
        b, u_m = divmod(i, 3)
        u_b, u_ess = divmod(b, 3)
        return cls(BuildingAction(u_b), EssAction(u_ess), MarketAction(u_m))

    def label(self):
        return f"{self.u_b.name},{self.u_ess.name},{self.u_m.name}"


DEFAULT_ESS_LIKELIHOOD = np.array(
    [  # columns: Empty, Low, High, Full; rows: Import, Neutral, Export
        [0.80, 0.50, 0.15, 0.05],
        [0.15, 0.35, 0.35, 0.15],
        [0.05, 0.15, 0.50, 0.80],
    ]
)


def default_preferred_obs(weight=0.5):
    """Mass ``weight`` on (Same, Same, Neutral), the rest spread evenly."""
    target = JointObservation(Trend.SAME, Trend.SAME, Flow.NEUTRAL).index
    c = np.full(N_OBS, (1.0 - weight) / (N_OBS - 1))
    c[target] = weight
    return c


@dataclass(frozen=True)
class CommunityModel:
    A: np.ndarray
    B: np.ndarray  # (27, 36, 36)
    preferred_obs: np.ndarray

    def __post_init__(self):
        A = check_column_stochastic(self.A, "A")
        if A.shape != (N_OBS, N_STATES):
            raise ValueError(f"A must be {N_OBS}x{N_STATES}, got {A.shape}")
        B = np.asarray(self.B, dtype=float)
        if B.shape != (N_ACTIONS, N_STATES, N_STATES):
            raise ValueError(f"B must have shape (27, 36, 36), got {B.shape}")
        for u in range(N_ACTIONS):
            check_column_stochastic(B[u], f"B[{u}]")
        C = normalize(self.preferred_obs)
        for arr in (A, B, C):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "preferred_obs", C)


# -- factor blocks ----------------------------------------------------------------------------

def building_likelihood(confusion: float) -> np.ndarray:
    """3x3 block p(trend | load): the matching trend gets ``confusion``.

    High -> Up, Med -> Same, Low -> Down. The middle state splits the rest
    evenly over both neighbours; edge states hand it all to their one neighbour.
    """
    if not 0.5 <= confusion < 1.0:
        raise ValueError(f"confusion must lie in [0.5, 1), got {confusion!r}")
    rest = 1.0 - confusion
    return np.array(
        [
            [confusion, rest / 2, 0.0],
            [rest, confusion, rest],
            [0.0, rest / 2, confusion],
        ]
    )


def build_observation_matrix(confusion=0.8, ess_likelihood=DEFAULT_ESS_LIKELIHOOD, confusion_b2=None):
    ess = check_column_stochastic(ess_likelihood, "ess_likelihood")
    if ess.shape != (3, 4):
        raise ValueError(f"ess_likelihood must be 3x4, got {ess.shape}")
    a_b1 = building_likelihood(confusion)
    a_b2 = building_likelihood(confusion if confusion_b2 is None else confusion_b2)
    return kron(a_b1, a_b2, ess)


_NEIGHBOURS = np.array(
    [  # where a building load state drifts when it does move, absent any pull
        [0.0, 0.5, 0.0],
        [1.0, 0.0, 1.0],
        [0.0, 0.5, 0.0],
    ]
)


def building_transition(persistence: float, pull: float) -> np.ndarray:
    """3x3 block p(load' | load) for one building under one reduction level.

    A state stays put with probability ``persistence``. The moving mass goes to
    Low with probability ``pull`` and otherwise diffuses to adjacent levels.
    """
    if not 0.0 < persistence < 1.0:
        raise ValueError(f"persistence must lie in (0, 1), got {persistence!r}")
    if not 0.0 <= pull <= 1.0:
        raise ValueError(f"pull must lie in [0, 1], got {pull!r}")
    to_low = np.zeros((3, 3))
    to_low[Load.LOW, :] = 1.0
    moving = pull * to_low + (1.0 - pull) * _NEIGHBOURS
    return persistence * np.eye(3) + (1.0 - persistence) * moving


def ess_transition(u_ess: EssAction, efficiency: float) -> np.ndarray:
    """4x4 block p(soc' | soc): charge/discharge move one level with prob ``efficiency``."""
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"ess_efficiency must lie in (0, 1], got {efficiency!r}")
    u_ess = EssAction(u_ess)
    if u_ess == EssAction.HOLD:
        return np.eye(4)
    B = np.zeros((4, 4))
    shift = 1 if u_ess == EssAction.CHARGE else -1
    for s in range(4):
        dest = s + shift
        if 0 <= dest < 4:
            B[dest, s] += efficiency
            B[s, s] += 1.0 - efficiency
        else:
            B[s, s] = 1.0
    return B


def build_transition_matrices(persistence=0.9, reduction_pull=(0.6, 0.9), ess_efficiency=0.9,
                              persistence_b2=None):
    """All 27 joint transition matrices, indexed by joint action."""
    small, big = reduction_pull
    pulls = {BuildingAction.NO_CHANGE: 0.0, BuildingAction.SMALL_REDUCTION: small,
             BuildingAction.BIG_REDUCTION: big}
    p2 = persistence if persistence_b2 is None else persistence_b2
    B = np.empty((N_ACTIONS, N_STATES, N_STATES))
    for u in range(N_ACTIONS):
        act = JointAction.from_index(u)
        pull = pulls[act.u_b]
        B[u] = kron(
            building_transition(persistence, pull),
            building_transition(p2, pull),
            ess_transition(act.u_ess, ess_efficiency),
        )
    return B


def build_model(confusion=0.8, ess_likelihood=DEFAULT_ESS_LIKELIHOOD, persistence=0.9,
                reduction_pull=(0.6, 0.9), ess_efficiency=0.9, preferred_obs=None,
                confusion_b2=None, persistence_b2=None) -> CommunityModel:
    return CommunityModel(
        A=build_observation_matrix(confusion, ess_likelihood, confusion_b2),
        B=build_transition_matrices(persistence, reduction_pull, ess_efficiency, persistence_b2),
        preferred_obs=default_preferred_obs() if preferred_obs is None else np.asarray(preferred_obs, float),
    )


# -- inference ------------------------------------------------------------------------------------

def predict(prior, action, model: CommunityModel):
    u = action.index if isinstance(action, JointAction) else int(action)
    return model.B[u] @ np.asarray(prior, dtype=float)


def belief_update(prior, action, observation, model: CommunityModel):
    """One Bayes filter step: propagate through ``B[u]``, weight by ``A[o, :]``, normalize.

    Raises DegenerateEvidenceError when the observation has zero probability
    under the predicted belief.
    """
    o = observation.index if isinstance(observation, JointObservation) else int(observation)
    predicted = predict(prior, action, model)
    return normalize(predicted * model.A[o])


def belief_update_or_predict(prior, action, observation, model: CommunityModel):
    """Like belief_update, but fall back to the prediction on impossible evidence.

    Returns ``(belief, degenerate_flag)``.
    """
    try:
        return belief_update(prior, action, observation, model), False
    except DegenerateEvidenceError:
        log.warning("observation %s has zero likelihood under the prediction; keeping the prediction",
                    observation)
        return predict(prior, action, model), True


def marginals(belief):
    """Per-factor marginals (b1, b2, ess) of a joint belief."""
    q = np.asarray(belief, dtype=float).reshape(3, 3, 4)
    return q.sum(axis=(1, 2)), q.sum(axis=(0, 2)), q.sum(axis=(0, 1))

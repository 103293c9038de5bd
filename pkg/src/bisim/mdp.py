"""Core MDP types, validation, and value-function solvers.

State and action ids are dense integers starting at 0; labels are cosmetic.
All tables are numpy arrays and instances are treated as immutable after
construction. Value functions are plain float arrays of length num_states.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Union

import numpy as np


@dataclasses.dataclass
class DeterministicMdp:
    """Finite MDP in which every (state, action) has a unique successor.

    next_state[s, a] holds the successor id N(s, a); reward[s, a] the
    immediate reward R(s, a). gamma is the discount in [0, 1).
    """

    num_states: int
    num_actions: int
    next_state: np.ndarray
    reward: np.ndarray
    gamma: float
    labels: list | None = None

    def __post_init__(self):
        self.next_state = np.asarray(self.next_state, dtype=np.int64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.gamma = float(self.gamma)

    @property
    def r_max(self) -> float:
        # Recomputed from the table, never trusted from any serialized field.
        return float(np.abs(self.reward).max()) if self.reward.size else 0.0


@dataclasses.dataclass
class StochasticMdp:
    """Finite MDP with full transition distributions, used for the LP
    validation instances; transition[s, a] is a distribution over states."""

    num_states: int
    num_actions: int
    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    labels: list | None = None

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.gamma = float(self.gamma)

    @property
    def r_max(self) -> float:
        return float(np.abs(self.reward).max()) if self.reward.size else 0.0


Mdp = Union[DeterministicMdp, StochasticMdp]


@dataclasses.dataclass
class DeterministicPolicy:
    """Maps each state to a single action id."""

    action_of: np.ndarray

    def __post_init__(self):
        self.action_of = np.asarray(self.action_of, dtype=np.int64)


def validate(mdp: Mdp) -> list:
    """Check structural invariants; returns [] when well formed.

    Each violation is a human-readable string naming the offending field and,
    where it applies, the (state, action) coordinate.
    """
    problems = []
    s, a = mdp.num_states, mdp.num_actions
    if s <= 0:
        problems.append(f"num_states must be positive, got {s}")
    if a <= 0:
        problems.append(f"num_actions must be positive, got {a}")
    if not (0.0 <= mdp.gamma < 1.0):
        problems.append(f"gamma must lie in [0, 1), got {mdp.gamma}")
    if mdp.reward.shape != (s, a):
        problems.append(
            f"reward table shape {mdp.reward.shape} != ({s}, {a})")
    if not np.all(np.isfinite(mdp.reward)):
        bad = np.argwhere(~np.isfinite(mdp.reward))
        problems.append(
            f"reward has non-finite entry at (state, action) {tuple(bad[0])}")
    if isinstance(mdp, DeterministicMdp):
        if mdp.next_state.shape != (s, a):
            problems.append(
                f"next_state table shape {mdp.next_state.shape} != ({s}, {a})")
        else:
            bad = np.argwhere(
                (mdp.next_state < 0) | (mdp.next_state >= s))
            for coord in bad:
                problems.append(
                    "next_state out of range at (state, action) "
                    f"({coord[0]}, {coord[1]}): {mdp.next_state[tuple(coord)]}")
    else:
        if mdp.transition.shape != (s, a, s):
            problems.append(
                f"transition table shape {mdp.transition.shape} != ({s}, {a}, {s})")
        else:
            if np.any(mdp.transition < 0):
                coord = np.argwhere(mdp.transition < 0)[0]
                problems.append(
                    "transition has negative probability at "
                    f"(state, action, next) {tuple(coord)}")
            sums = mdp.transition.sum(axis=2)
            off = np.argwhere(np.abs(sums - 1.0) > 1e-12)
            for coord in off:
                problems.append(
                    "transition row does not sum to 1 at (state, action) "
                    f"({coord[0]}, {coord[1]}): sum={sums[tuple(coord)]!r}")
    if mdp.labels is not None and len(mdp.labels) != s:
        problems.append(
            f"labels length {len(mdp.labels)} != num_states {s}")
    return problems


def validate_policy(policy: DeterministicPolicy, mdp: Mdp) -> list:
    problems = []
    if policy.action_of.shape != (mdp.num_states,):
        problems.append(
            f"action_of shape {policy.action_of.shape} != ({mdp.num_states},)")
        return problems
    bad = np.argwhere(
        (policy.action_of < 0) | (policy.action_of >= mdp.num_actions))
    for coord in bad:
        problems.append(
            f"action_of out of range at state {coord[0]}: "
            f"{policy.action_of[coord[0]]}")
    return problems


def _sweep_threshold(gamma: float, tol: float) -> float:
    # Standard contraction argument: if one sweep moves V by at most
    # tol*(1-gamma)/gamma in sup norm, V is within tol of the fixed point.
    if gamma == 0.0:
        return math.inf
    return tol * (1.0 - gamma) / gamma


def value_iteration_optimal(mdp: DeterministicMdp, tol: float) -> np.ndarray:
    """Optimal state values via value iteration, accurate to tol in sup norm."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    thresh = _sweep_threshold(mdp.gamma, tol)
    v = np.zeros(mdp.num_states)
    while True:
        q = mdp.reward + mdp.gamma * v[mdp.next_state]
        v_new = q.max(axis=1)
        change = float(np.abs(v_new - v).max())
        v = v_new
        if change <= thresh:
            return v


def value_iteration_policy(mdp: DeterministicMdp,
                           policy: DeterministicPolicy,
                           tol: float) -> np.ndarray:
    """State values of a fixed deterministic policy, accurate to tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    idx = np.arange(mdp.num_states)
    r_pi = mdp.reward[idx, policy.action_of]
    n_pi = mdp.next_state[idx, policy.action_of]
    thresh = _sweep_threshold(mdp.gamma, tol)
    v = np.zeros(mdp.num_states)
    while True:
        v_new = r_pi + mdp.gamma * v[n_pi]
        change = float(np.abs(v_new - v).max())
        v = v_new
        if change <= thresh:
            return v


def greedy_policy(mdp: DeterministicMdp, v: np.ndarray) -> DeterministicPolicy:
    """One-step greedy policy wrt v; ties broken by lowest action id."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mdp.num_states,):
        raise ValueError(
            f"value function shape {v.shape} != ({mdp.num_states},)")
    q = mdp.reward + mdp.gamma * v[mdp.next_state]
    return DeterministicPolicy(action_of=q.argmax(axis=1))


# ---------------------------------------------------------------------------
# JSON serialization. Deterministic MDPs carry "next_state", stochastic ones
# "transition"; the loader dispatches on which key is present.
# ---------------------------------------------------------------------------

def mdp_to_dict(mdp: Mdp) -> dict:
    out = {
        "num_states": int(mdp.num_states),
        "num_actions": int(mdp.num_actions),
        "gamma": float(mdp.gamma),
        "reward": mdp.reward.tolist(),
    }
    if isinstance(mdp, DeterministicMdp):
        out["next_state"] = mdp.next_state.tolist()
    else:
        out["transition"] = mdp.transition.tolist()
    if mdp.labels is not None:
        out["labels"] = list(mdp.labels)
    return out


def mdp_from_dict(data: dict) -> Mdp:
    for key in ("num_states", "num_actions", "gamma", "reward"):
        if key not in data:
            raise ValueError(f"MDP JSON missing required field '{key}'")
    if "next_state" in data and "transition" in data:
        raise ValueError(
            "MDP JSON has both 'next_state' and 'transition'; exactly one "
            "is expected")
    common = dict(
        num_states=int(data["num_states"]),
        num_actions=int(data["num_actions"]),
        reward=np.array(data["reward"], dtype=np.float64),
        gamma=float(data["gamma"]),
        labels=data.get("labels"),
    )
    if "next_state" in data:
        return DeterministicMdp(
            next_state=np.array(data["next_state"], dtype=np.int64), **common)
    if "transition" in data:
        return StochasticMdp(
            transition=np.array(data["transition"], dtype=np.float64),
            **common)
    raise ValueError(
        "MDP JSON missing required field 'next_state' (or 'transition')")


def save_mdp(mdp: Mdp, path) -> None:
    with open(path, "w") as f:
        json.dump(mdp_to_dict(mdp), f, indent=1)
        f.write("\n")


def load_mdp(path) -> Mdp:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"MDP file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("MDP JSON top level must be an object")
    return mdp_from_dict(data)


def save_policy(policy: DeterministicPolicy, path) -> None:
    with open(path, "w") as f:
        json.dump({"action_of": policy.action_of.tolist()}, f)
        f.write("\n")


def load_policy(path) -> DeterministicPolicy:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"policy file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "action_of" not in data:
        raise ValueError("policy JSON missing required field 'action_of'")
    return DeterministicPolicy(
        action_of=np.array(data["action_of"], dtype=np.int64))

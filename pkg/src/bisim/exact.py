"""Fixed-point solvers for behavioral state metrics.

A state metric is a dense symmetric (S, S) float array with a zero diagonal.
Three one-step backups are provided for deterministic MDPs: the action-matched
metric (max over shared actions), the on-policy variant (actions fixed by a
policy), and the lax variant (action labels ignored through a two-sided
sup-inf lift over each state's action set). A fourth backup handles stochastic
MDPs through the transportation LP and exists for validation at small sizes.

All backups shrink sup-norm distances between metrics by a factor of gamma, so
iterating from the zero matrix converges to the unique (least, for the
on-policy case) fixed point; solve_fixed_point stops on the residual rule that
guarantees the returned metric is within tol of that fixed point.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .mdp import DeterministicMdp, DeterministicPolicy, StochasticMdp
from .wasserstein import wasserstein_dual

MODES = ("bisim", "pi-bisim", "lax")


@dataclasses.dataclass
class SolverReport:
    iterations: int
    final_residual: float
    guaranteed_error: float
    apriori_iterations: int

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "guaranteed_error": self.guaranteed_error,
            "apriori_iterations": self.apriori_iterations,
        }


def _symmetrize(out: np.ndarray) -> np.ndarray:
    # The backups are symmetric mathematically; mirroring the strict upper
    # triangle makes the result exactly symmetric despite float noise and
    # pins the diagonal to zero.
    upper = np.triu(out, k=1)
    return upper + upper.T


def bisim_backup(mdp: DeterministicMdp, d: np.ndarray) -> np.ndarray:
    """One sweep of the action-matched backup:
    max over actions of |R(s,a) - R(t,a)| + gamma * d(N(s,a), N(t,a))."""
    out = None
    for a in range(mdp.num_actions):
        r = mdp.reward[:, a]
        n = mdp.next_state[:, a]
        term = np.abs(r[:, None] - r[None, :]) + mdp.gamma * d[np.ix_(n, n)]
        out = term if out is None else np.maximum(out, term)
    return _symmetrize(out)


def policy_bisim_backup(mdp: DeterministicMdp, policy: DeterministicPolicy,
                        d: np.ndarray) -> np.ndarray:
    """One sweep of the on-policy backup, actions taken from the policy."""
    idx = np.arange(mdp.num_states)
    r = mdp.reward[idx, policy.action_of]
    n = mdp.next_state[idx, policy.action_of]
    out = np.abs(r[:, None] - r[None, :]) + mdp.gamma * d[np.ix_(n, n)]
    return _symmetrize(out)


def lax_bisim_backup(mdp: DeterministicMdp, d: np.ndarray) -> np.ndarray:
    """One sweep of the label-free backup.

    Builds the (s,a) x (t,b) ground distance
        delta[s,a,t,b] = |R(s,a) - R(t,b)| + gamma * d(N(s,a), N(t,b))
    and lifts it with the two-sided sup-inf (Hausdorff) construction over
    each state's action set.
    """
    r = mdp.reward
    n = mdp.next_state
    delta = (np.abs(r[:, :, None, None] - r[None, None, :, :])
             + mdp.gamma * d[n[:, :, None, None], n[None, None, :, :]])
    fwd = delta.min(axis=3).max(axis=1)          # sup_a inf_b
    bwd = delta.min(axis=1).max(axis=2)          # sup_b inf_a
    return _symmetrize(np.maximum(fwd, bwd))


def stochastic_bisim_backup(mdp: StochasticMdp, d: np.ndarray) -> np.ndarray:
    """Action-matched backup with the full transportation LP per pair.

    Intended for small validation instances only; cost is one LP per
    (unordered state pair, action).
    """
    s_count = mdp.num_states
    out = np.zeros((s_count, s_count))
    for s in range(s_count):
        for t in range(s + 1, s_count):
            best = 0.0
            for a in range(mdp.num_actions):
                w = wasserstein_dual(
                    mdp.transition[s, a], mdp.transition[t, a], d).objective
                val = abs(mdp.reward[s, a] - mdp.reward[t, a]) + mdp.gamma * w
                if val > best:
                    best = val
            out[s, t] = best
    return out + out.T


def apriori_sweep_bound(gamma: float, tol: float) -> int:
    """Sweep count sufficient a priori: gamma^n below tol (scale-free form)."""
    if gamma <= 0.0 or tol >= 1.0:
        return 1
    return max(1, math.ceil(math.log(tol) / math.log(gamma)))


def solve_fixed_point(mdp, mode: str = "bisim",
                      policy: DeterministicPolicy | None = None,
                      tol: float = 1e-6):
    """Iterate a metric backup from the zero matrix to its fixed point.

    mode is one of "bisim", "pi-bisim", "lax" for deterministic MDPs; a
    StochasticMdp is accepted with mode "bisim" and routed through the LP
    backup. Stops when the sup-norm sweep change is at most
    tol*(1-gamma)/gamma, which bounds the distance to the fixed point by tol.
    Returns (metric, SolverReport).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mode == "pi-bisim":
        if policy is None:
            raise ValueError("pi-bisim mode requires a policy")
        step = lambda d: policy_bisim_backup(mdp, policy, d)
    elif mode == "lax":
        if isinstance(mdp, StochasticMdp):
            raise ValueError("lax mode supports deterministic MDPs only")
        step = lambda d: lax_bisim_backup(mdp, d)
    elif isinstance(mdp, StochasticMdp):
        step = lambda d: stochastic_bisim_backup(mdp, d)
    else:
        step = lambda d: bisim_backup(mdp, d)

    gamma = mdp.gamma
    thresh = math.inf if gamma == 0.0 else tol * (1.0 - gamma) / gamma
    d = np.zeros((mdp.num_states, mdp.num_states))
    iterations = 0
    while True:
        d_new = step(d)
        residual = float(np.abs(d_new - d).max())
        d = d_new
        iterations += 1
        if residual <= thresh:
            guaranteed = (0.0 if gamma == 0.0
                          else residual * gamma / (1.0 - gamma))
            report = SolverReport(
                iterations=iterations,
                final_residual=residual,
                guaranteed_error=guaranteed,
                apriori_iterations=apriori_sweep_bound(gamma, tol))
            return d, report


def metric_violations(d: np.ndarray, tol: float = 1e-7) -> dict:
    """Largest violation of each pseudometric invariant, for checks/reports.

    Keys: diagonal (max |d(s,s)|), asymmetry, negativity (most negative
    entry's magnitude), triangle (max over triples of
    d(s,t) - min_u [d(s,u) + d(u,t)], floored at 0). The tol argument is the
    acceptance line used by ok().
    """
    diag = float(np.abs(np.diag(d)).max())
    asym = float(np.abs(d - d.T).max())
    neg = float(max(0.0, -d.min()))
    # sums[s, t, u] = d(s, u) + d(u, t); a violation is d(s, t) above the
    # best relay point (u = s makes the expression 0 for honest metrics).
    sums = d[:, None, :] + d.T[None, :, :]
    via = sums.min(axis=2)
    tri = float(max(0.0, (d - via).max()))
    return {"diagonal": diag, "asymmetry": asym, "negativity": neg,
            "triangle": tri, "tol": tol,
            "ok": max(diag, asym, neg, tri) <= tol}


def write_metric_csv(d: np.ndarray, path) -> None:
    """Full matrix, comma-delimited, 12 significant digits."""
    with open(path, "w") as f:
        for row in d:
            f.write(",".join(f"{v:.12g}" for v in row))
            f.write("\n")


def read_metric_csv(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    mat = np.array(rows, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(
            f"metric CSV must be square, got shape {mat.shape}")
    return mat

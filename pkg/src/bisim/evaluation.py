"""Error metrics, bound audits, and threshold clustering.

metric_errors compares an approximate pair-distance source against an exact
metric over a pair list; audit_bounds checks the value-difference inequalities
that the exact metrics must dominate; aggregate groups items greedily so that
every within-cluster distance stays below a threshold.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .exact import solve_fixed_point
from .mdp import (
    DeterministicMdp,
    DeterministicPolicy,
    greedy_policy,
    value_iteration_optimal,
    value_iteration_policy,
)


@dataclasses.dataclass
class ErrorReport:
    absolute_error: float
    normalized_error: float | None
    diagonal_residual: float
    asymmetry: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _pair_values(source, pairs, num_states):
    if callable(source):
        return np.array([float(source(s, t)) for (s, t) in pairs])
    mat = np.asarray(source, dtype=np.float64)
    if mat.shape != (num_states, num_states):
        raise ValueError(
            f"approx matrix shape {mat.shape} != ({num_states}, {num_states})")
    idx = np.array(pairs)
    return mat[idx[:, 0], idx[:, 1]]


def metric_errors(oracle: np.ndarray, approx, pairs=None) -> ErrorReport:
    """Sup-norm errors of approx against oracle over a pair list.

    approx is either a square matrix or a callable (s, t) -> float. The pair
    list defaults to all ordered off-diagonal pairs; both norms for the
    normalized error are taken over that same list. The normalized error is
    None when either side has zero norm. The diagonal residual is evaluated
    over all states regardless of the pair list.
    """
    oracle = np.asarray(oracle, dtype=np.float64)
    n = oracle.shape[0]
    if pairs is None:
        pairs = [(s, t) for s in range(n) for t in range(n) if s != t]
    pairs = list(pairs)
    if not pairs:
        raise ValueError("pair list is empty")
    o_vals = _pair_values(oracle, pairs, n)
    a_vals = _pair_values(approx, pairs, n)
    reversed_pairs = [(t, s) for (s, t) in pairs]
    a_rev = _pair_values(approx, reversed_pairs, n)
    diag = _pair_values(approx, [(s, s) for s in range(n)], n)

    absolute = float(np.abs(o_vals - a_vals).max())
    o_norm = float(np.linalg.norm(o_vals))
    a_norm = float(np.linalg.norm(a_vals))
    if o_norm > 0.0 and a_norm > 0.0:
        normalized = float(np.abs(o_vals / o_norm - a_vals / a_norm).max())
    else:
        normalized = None
    return ErrorReport(
        absolute_error=absolute,
        normalized_error=normalized,
        diagonal_residual=float(np.abs(diag).max()),
        asymmetry=float(np.abs(a_vals - a_rev).max()))


@dataclasses.dataclass
class BoundAudit:
    """Worst violation of each inequality; negative numbers mean slack."""

    value_vs_lax: float
    lax_vs_bisim: float
    policy_value_vs_policy_metric: float
    tol: float

    @property
    def max_violation(self) -> float:
        return max(self.value_vs_lax, self.lax_vs_bisim,
                   self.policy_value_vs_policy_metric)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["max_violation"] = self.max_violation
        return out


def audit_bounds(mdp: DeterministicMdp,
                 policy: DeterministicPolicy | None = None,
                 tol: float = 1e-6) -> BoundAudit:
    """Check that optimal-value gaps stay below the lax metric, the lax
    metric below the action-matched metric, and policy-value gaps below the
    on-policy metric.

    Components are solved at tol/2 so the reported violations stay within
    1.5*tol of the true (nonpositive) values.
    """
    half = tol / 2.0
    v_star = value_iteration_optimal(mdp, half)
    d_bisim, _ = solve_fixed_point(mdp, "bisim", tol=half)
    d_lax, _ = solve_fixed_point(mdp, "lax", tol=half)
    if policy is None:
        policy = greedy_policy(mdp, v_star)
    v_pi = value_iteration_policy(mdp, policy, half)
    d_pi, _ = solve_fixed_point(mdp, "pi-bisim", policy=policy, tol=half)

    v_gaps = np.abs(v_star[:, None] - v_star[None, :])
    v_pi_gaps = np.abs(v_pi[:, None] - v_pi[None, :])
    return BoundAudit(
        value_vs_lax=float((v_gaps - d_lax).max()),
        lax_vs_bisim=float((d_lax - d_bisim).max()),
        policy_value_vs_policy_metric=float((v_pi_gaps - d_pi).max()),
        tol=tol)


@dataclasses.dataclass
class Clustering:
    labels: np.ndarray
    epsilon: float

    @property
    def num_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def to_dict(self) -> dict:
        return {"labels": self.labels.tolist(),
                "epsilon": self.epsilon,
                "num_clusters": self.num_clusters}


def aggregate(metric: np.ndarray, epsilon: float) -> Clustering:
    """Greedy clustering in index order: each item joins the first cluster
    whose every member sits within epsilon, else founds a new one."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    metric = np.asarray(metric, dtype=np.float64)
    if metric.ndim != 2 or metric.shape[0] != metric.shape[1]:
        raise ValueError(f"metric must be square, got shape {metric.shape}")
    n = metric.shape[0]
    members: list[list[int]] = []
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        for cid, group in enumerate(members):
            if np.all(metric[i, group] <= epsilon):
                group.append(i)
                labels[i] = cid
                break
        else:
            members.append([i])
            labels[i] = len(members) - 1
    return Clustering(labels=labels, epsilon=float(epsilon))


# ---------------------------------------------------------------------------
# Delimited output helpers shared by the training loop and the CLI.
# ---------------------------------------------------------------------------

def write_training_log_csv(rows, path) -> None:
    with open(path, "w") as f:
        f.write("step,loss,beta\n")
        for step, loss, beta in rows:
            f.write(f"{step},{loss:.12g},{beta:.12g}\n")


def write_error_curve_csv(rows, path) -> None:
    with open(path, "w") as f:
        f.write("step,absolute_error,normalized_error\n")
        for step, absolute, normalized in rows:
            norm_txt = "nan" if normalized is None else f"{normalized:.12g}"
            f.write(f"{step},{absolute:.12g},{norm_txt}\n")


def write_clustering_csv(clustering: Clustering, path) -> None:
    with open(path, "w") as f:
        f.write("state_id,cluster_id\n")
        for state, cluster in enumerate(clustering.labels):
            f.write(f"{state},{cluster}\n")

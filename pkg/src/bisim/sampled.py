"""Online metric estimation from sampled transition pairs.

The estimate starts at zero and each sample applies a max-update: the stored
distance for the sampled state pair either stays put or jumps up to the
one-step backup through the pair's shared (or policy-chosen) actions. Updates
never overshoot the exact metric, so the estimate increases monotonically
toward it; a hard sample budget plus a stall window make runs terminate.

The estimate is a single-writer structure: updates apply sequentially.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .mdp import DeterministicMdp, DeterministicPolicy


@dataclasses.dataclass
class TransitionPair:
    """Two one-step transitions compared by one sampled update."""

    s: int
    t: int
    a_s: int
    a_t: int
    r_s: float
    r_t: float
    ns: int
    nt: int

    @property
    def a(self) -> int:
        if self.a_s != self.a_t:
            raise ValueError(
                f"pair has mismatched actions ({self.a_s}, {self.a_t})")
        return self.a_s

    @classmethod
    def off_policy(cls, mdp: DeterministicMdp, s: int, t: int, a: int):
        return cls(s, t, a, a,
                   float(mdp.reward[s, a]), float(mdp.reward[t, a]),
                   int(mdp.next_state[s, a]), int(mdp.next_state[t, a]))

    @classmethod
    def on_policy(cls, mdp: DeterministicMdp, policy: DeterministicPolicy,
                  s: int, t: int):
        a_s = int(policy.action_of[s])
        a_t = int(policy.action_of[t])
        return cls(s, t, a_s, a_t,
                   float(mdp.reward[s, a_s]), float(mdp.reward[t, a_t]),
                   int(mdp.next_state[s, a_s]), int(mdp.next_state[t, a_t]))

    def consistent_with(self, mdp: DeterministicMdp) -> bool:
        return (self.r_s == mdp.reward[self.s, self.a_s]
                and self.r_t == mdp.reward[self.t, self.a_t]
                and self.ns == mdp.next_state[self.s, self.a_s]
                and self.nt == mdp.next_state[self.t, self.a_t])


@dataclasses.dataclass
class SampledEstimate:
    metric: np.ndarray
    updates_applied: int = 0
    samples_seen: int = 0
    last_improvement_step: int = 0

    @classmethod
    def zeros(cls, num_states: int):
        return cls(metric=np.zeros((num_states, num_states)))


def sampled_update(est: SampledEstimate, pair: TransitionPair,
                   gamma: float) -> SampledEstimate:
    """Apply one max-update in place; returns the same estimate object.

    Only the (s, t)/(t, s) entries may change, and only upward. Identical
    endpoints are rejected: their distance is pinned at zero.
    """
    if pair.s == pair.t:
        raise ValueError("s == t pairs are not updatable (distance is 0)")
    d = est.metric
    backup = abs(pair.r_s - pair.r_t) + gamma * d[pair.ns, pair.nt]
    old = d[pair.s, pair.t]
    est.samples_seen += 1
    if backup > old:
        d[pair.s, pair.t] = backup
        d[pair.t, pair.s] = backup
        est.updates_applied += 1
        est.last_improvement_step = est.samples_seen
    return est


@dataclasses.dataclass
class PairSampler:
    """Source of transition pairs.

    "uniform" draws state pairs (s != t) uniformly, with a uniform shared
    action in off-policy mode or policy actions in on-policy mode; every pair
    in the sampled set has positive probability. "replay" stores transitions
    and draws two stored entries uniformly, rejecting action mismatches in
    off-policy mode.
    """

    mode: str = "uniform"
    seed: int = 0
    transitions: list | None = None

    def __post_init__(self):
        if self.mode not in ("uniform", "replay"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.mode == "replay" and not self.transitions:
            raise ValueError("replay mode needs stored transitions")
        self._rng = np.random.default_rng(self.seed)

    @classmethod
    def replay_from_mdp(cls, mdp: DeterministicMdp, seed: int = 0):
        """Replay buffer holding every (s, a) transition of the MDP once."""
        stored = [
            (s, a, float(mdp.reward[s, a]), int(mdp.next_state[s, a]))
            for s in range(mdp.num_states)
            for a in range(mdp.num_actions)]
        return cls(mode="replay", seed=seed, transitions=stored)

    def _uniform_chunk(self, mdp, policy, count):
        rng = self._rng
        s = rng.integers(0, mdp.num_states, size=count)
        t = rng.integers(0, mdp.num_states, size=count)
        keep = s != t
        s, t = s[keep], t[keep]
        if policy is None:
            a_s = a_t = rng.integers(0, mdp.num_actions, size=s.shape[0])
        else:
            a_s = policy.action_of[s]
            a_t = policy.action_of[t]
        return s, t, a_s, a_t

    def _replay_chunk(self, mdp, policy, count):
        rng = self._rng
        table = self.transitions
        i = rng.integers(0, len(table), size=count)
        j = rng.integers(0, len(table), size=count)
        s = np.array([table[k][0] for k in i])
        t = np.array([table[k][0] for k in j])
        a_s = np.array([table[k][1] for k in i])
        a_t = np.array([table[k][1] for k in j])
        keep = s != t
        if policy is None:
            keep &= a_s == a_t
        return s[keep], t[keep], a_s[keep], a_t[keep]

    def sample_chunk(self, mdp: DeterministicMdp,
                     policy: DeterministicPolicy | None, count: int):
        """Up to count pairs as parallel arrays (s, t, a_s, a_t); fewer when
        rejection filtering drops draws."""
        if self.mode == "uniform":
            return self._uniform_chunk(mdp, policy, count)
        return self._replay_chunk(mdp, policy, count)

    def sample_pair(self, mdp: DeterministicMdp,
                    policy: DeterministicPolicy | None = None) -> TransitionPair:
        while True:
            s, t, a_s, a_t = self.sample_chunk(mdp, policy, 4)
            if s.shape[0]:
                break
        return TransitionPair(
            int(s[0]), int(t[0]), int(a_s[0]), int(a_t[0]),
            float(mdp.reward[s[0], a_s[0]]), float(mdp.reward[t[0], a_t[0]]),
            int(mdp.next_state[s[0], a_s[0]]),
            int(mdp.next_state[t[0], a_t[0]]))


@dataclasses.dataclass
class RunReport:
    samples_drawn: int
    stop_reason: str
    updates_applied: int
    last_improvement_step: int
    budget: int
    stall_window: int
    tol: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_sampled(mdp: DeterministicMdp, sampler: PairSampler,
                policy: DeterministicPolicy | None = None,
                budget: int = 100_000, stall_window: int = 0,
                tol: float = 1e-6,
                initial: SampledEstimate | None = None,
                trace_out: list | None = None,
                mode: str = "off"):
    """Draw pairs and apply max-updates until the budget runs out or no entry
    has improved by more than tol within stall_window consecutive samples
    (stall_window 0 disables the stall stop). Returns (estimate, RunReport).

    Pass initial to resume a previous run; trace_out, when given, collects one
    {"step", "s", "t", "old", "new"} record per strict increase.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if mode not in ("off", "on"):
        raise ValueError(f"unknown mode {mode!r}, expected 'off' or 'on'")
    if mode == "on" and policy is None:
        raise ValueError("on-policy mode requires a policy")
    if mode == "off" and policy is not None:
        raise ValueError("off-policy mode forbids a policy")

    est = initial if initial is not None else SampledEstimate.zeros(
        mdp.num_states)
    d = est.metric
    gamma = mdp.gamma
    reward = mdp.reward
    next_state = mdp.next_state
    drawn = 0
    since_big_improvement = 0
    stop_reason = "budget"
    chunk_size = 8192
    stalled = False
    empty_chunks = 0
    while drawn < budget and not stalled:
        want = min(chunk_size, budget - drawn)
        s_arr, t_arr, as_arr, at_arr = sampler.sample_chunk(mdp, policy, want)
        if s_arr.shape[0] == 0:
            empty_chunks += 1
            if empty_chunks >= 1000:
                raise ValueError(
                    "sampler produced no valid pairs in 1000 consecutive "
                    "chunks; its support appears to be empty")
            continue
        empty_chunks = 0
        r_gap = np.abs(reward[s_arr, as_arr] - reward[t_arr, at_arr])
        ns_arr = next_state[s_arr, as_arr]
        nt_arr = next_state[t_arr, at_arr]
        for k in range(s_arr.shape[0]):
            s = s_arr[k]
            t = t_arr[k]
            backup = r_gap[k] + gamma * d[ns_arr[k], nt_arr[k]]
            old = d[s, t]
            est.samples_seen += 1
            if backup > old:
                d[s, t] = backup
                d[t, s] = backup
                est.updates_applied += 1
                est.last_improvement_step = est.samples_seen
                if trace_out is not None:
                    trace_out.append({
                        "step": est.samples_seen, "s": int(s), "t": int(t),
                        "old": float(old), "new": float(backup)})
                if backup - old > tol:
                    since_big_improvement = 0
                    continue
            since_big_improvement += 1
            if stall_window and since_big_improvement >= stall_window:
                drawn += k + 1
                stalled = True
                stop_reason = "stalled"
                break
        else:
            drawn += s_arr.shape[0]
    report = RunReport(
        samples_drawn=drawn,
        stop_reason=stop_reason,
        updates_applied=est.updates_applied,
        last_improvement_step=est.last_improvement_step,
        budget=budget, stall_window=stall_window, tol=tol)
    return est, report


@dataclasses.dataclass
class CoverageReport:
    num_pairs: int
    per_pair_probability: float
    miss_probability_bound: float
    n_required_per_pair: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def coverage_check(sampler: PairSampler, mdp: DeterministicMdp,
                   n: int, delta: float) -> CoverageReport:
    """Sampling-coverage bound for the uniform sampler.

    For the given n, bounds the probability that some transition pair was
    never drawn (union bound over the pair set), and reports the minimal n
    making the per-pair miss probability at most delta:
    n > ln(delta) / ln(1 - D) for pair probability D.
    """
    if sampler.mode != "uniform":
        raise ValueError("coverage_check applies to the uniform sampler only")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    num_pairs = mdp.num_states * (mdp.num_states - 1) // 2 * mdp.num_actions
    prob = 1.0 / num_pairs
    miss_bound = min(1.0, num_pairs * (1.0 - prob) ** n)
    if delta == 1.0:
        n_required = 0
    elif prob == 1.0:
        n_required = 1
    else:
        n_required = math.ceil(math.log(delta) / math.log(1.0 - prob))
    return CoverageReport(
        num_pairs=num_pairs,
        per_pair_probability=prob,
        miss_probability_bound=miss_bound,
        n_required_per_pair=n_required)

"""Neural approximation of the behavioral metrics.

A small fully connected net psi scores concatenated state-embedding pairs.
Each training step draws b transitions, forms all b^2 ordered pairs, and
regresses psi toward bootstrapped targets computed by a frozen copy of the
net: the reward gap plus the discounted target score of the successor pair,
optionally maxed with the target score of the pair itself. A scalar schedule
beta in [0, 1] ramps the bootstrap weight toward 1 every time the frozen
copy is refreshed, starting from 0 so early targets are pure reward gaps.

Three step implementations share the same math: a reference path that
materializes all b^2 rows (any depth, any embedding), a deduplicated path
for noise-free embeddings that collapses repeated states into counts and
works on the states-squared grid, and a block path for noisy embeddings
that skips pairs whose loss weight is zero. The fast paths apply only to
single-hidden-layer nets; compiled kernels cover 2-wide embeddings.
"""

from __future__ import annotations

import dataclasses
import functools
import json

import numpy as np

from . import _kernels
from .envs import GridLayout, NoiseModel
from .evaluation import metric_errors
from .mdp import DeterministicMdp, DeterministicPolicy

TRAIN_MODES = ("off-policy", "on-policy")
REPRESENTATION_KINDS = ("xy", "xy_noisy", "onehot")


# ---------------------------------------------------------------------------
# State embeddings
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class Representation:
    """Maps state ids to embedding vectors, optionally with fresh noise."""

    kind: str
    table: np.ndarray                 # (S, k) noise-free embedding
    noise: NoiseModel | None = None

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.kind not in REPRESENTATION_KINDS:
            raise ValueError(f"unknown representation kind {self.kind!r}")

    @property
    def num_states(self) -> int:
        return self.table.shape[0]

    @property
    def k(self) -> int:
        return self.table.shape[1]

    @property
    def deterministic(self) -> bool:
        return self.noise is None or self.noise.sigma == 0.0

    def embed_states(self, states, rng: np.random.Generator | None = None):
        """Embed a vector of state ids; each call draws fresh noise."""
        out = self.table[np.asarray(states, dtype=np.int64)]
        if not self.deterministic:
            if rng is None:
                raise ValueError("noisy embedding requires an rng")
            out = out + self.noise.draw(rng, out.shape)
        return out


def make_representation(kind: str,
                        layout: GridLayout | None = None,
                        num_states: int | None = None,
                        noise_sigma: float = 0.1,
                        noise_clip: float = 0.3,
                        noise_mode: str = "truncate") -> Representation:
    if kind in ("xy", "xy_noisy"):
        if layout is None:
            raise ValueError(f"representation {kind!r} requires a grid layout")
        noise = None
        if kind == "xy_noisy":
            noise = NoiseModel(noise_sigma, noise_clip, noise_mode)
        return Representation(kind, layout.xy_table(), noise)
    if kind == "onehot":
        if num_states is None:
            raise ValueError("representation 'onehot' requires num_states")
        return Representation(kind, np.eye(num_states))
    raise ValueError(f"unknown representation kind {kind!r}")


# ---------------------------------------------------------------------------
# The network
# ---------------------------------------------------------------------------

class ApproxNet:
    """Fully connected relu net with a linear scalar head and a frozen twin.

    Parameters live in `online`; `target` holds the frozen copy used for
    bootstrap targets and is refreshed explicitly via sync_target. Layers are
    initialized uniformly in +-1/sqrt(fan_in).
    """

    def __init__(self, layer_sizes, rng: np.random.Generator | None = None):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        if sizes[-1] != 1:
            raise ValueError("output layer must have size 1")
        if any(n < 1 for n in sizes):
            raise ValueError("layer sizes must be positive")
        self.layer_sizes = sizes
        if rng is None:
            rng = np.random.default_rng(0)
        self.online = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            self.online.append((w, b))
        self.target = [(w.copy(), b.copy()) for w, b in self.online]

    def forward(self, x: np.ndarray, params: str = "online") -> np.ndarray:
        """Score a batch of concatenated pair embeddings, shape (n, 2k)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input width {x.shape[1]} != {self.layer_sizes[0]}")
        layers = self.online if params == "online" else self.target
        h = x
        for i, (w, b) in enumerate(layers):
            h = h @ w.T + b
            if i < len(layers) - 1:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def sync_target(self) -> None:
        self.target = [(w.copy(), b.copy()) for w, b in self.online]

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes),
                "weights": [w.tolist() for w, _ in self.online],
                "biases": [b.tolist() for _, b in self.online]}

    @classmethod
    def from_dict(cls, data: dict) -> "ApproxNet":
        net = cls(data["layer_sizes"])
        weights, biases = data["weights"], data["biases"]
        if len(weights) != len(net.online) or len(biases) != len(net.online):
            raise ValueError("layer count mismatch in serialized net")
        loaded = []
        for (w0, b0), w, b in zip(net.online, weights, biases):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != w0.shape or b.shape != b0.shape:
                raise ValueError(
                    f"serialized layer shape {w.shape} != {w0.shape}")
            loaded.append((w, b))
        net.online = loaded
        net.sync_target()
        return net


def save_net(net: ApproxNet, path,
             rep: Representation | None = None,
             layout: GridLayout | None = None) -> None:
    data = net.to_dict()
    if rep is not None:
        data["representation"] = representation_spec(rep)
        data["num_states"] = rep.num_states
    if layout is not None:
        data["layout_rows"] = list(layout.rows)
    with open(path, "w") as f:
        json.dump(data, f, indent=1)
        f.write("\n")


def load_net(path) -> tuple[ApproxNet, dict]:
    """Returns the net plus whatever metadata rode along in the file."""
    with open(path) as f:
        data = json.load(f)
    net = ApproxNet.from_dict(data)
    meta = {k: v for k, v in data.items()
            if k not in ("layer_sizes", "weights", "biases")}
    return net, meta


def representation_spec(rep: Representation) -> dict:
    spec = {"type": rep.kind}
    if rep.kind == "xy_noisy":
        spec["noise_sigma"] = rep.noise.sigma
        spec["noise_clip"] = rep.noise.clip
        if rep.noise.mode != "truncate":
            spec["noise_mode"] = rep.noise.mode
    return spec


# ---------------------------------------------------------------------------
# Squared batches, targets, loss (reference path)
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class TrainBatch:
    """b sampled transitions and their b^2 ordered-pair expansion.

    Row i*b + j pairs sample i with sample j. The expansion fields are
    materialized lazily; the fast training paths never touch them.
    """

    phi: np.ndarray        # (b, k) current-state embeddings
    actions: np.ndarray    # (b,)
    rewards: np.ndarray    # (b,)
    phi_next: np.ndarray   # (b, k) successor embeddings
    mode: str = "off-policy"

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.phi_next = np.asarray(self.phi_next, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)

    @property
    def b(self) -> int:
        return self.phi.shape[0]

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @functools.cached_property
    def _grid(self):
        ii = np.repeat(np.arange(self.b), self.b)
        jj = np.tile(np.arange(self.b), self.b)
        return ii, jj

    @functools.cached_property
    def S2(self) -> np.ndarray:
        """(b^2, 2k) concatenated current-pair embeddings."""
        ii, jj = self._grid
        return np.hstack([self.phi[ii], self.phi[jj]])

    @functools.cached_property
    def R2(self) -> np.ndarray:
        """(b^2,) absolute reward gaps."""
        ii, jj = self._grid
        return np.abs(self.rewards[ii] - self.rewards[jj])

    @functools.cached_property
    def N2(self) -> np.ndarray:
        """(b^2, 2k) concatenated successor-pair embeddings."""
        ii, jj = self._grid
        return np.hstack([self.phi_next[ii], self.phi_next[jj]])

    @functools.cached_property
    def W(self) -> np.ndarray:
        """(b^2,) action-match indicator; the off-policy loss weight."""
        ii, jj = self._grid
        return (self.actions[ii] == self.actions[jj]).astype(np.float64)

    @functools.cached_property
    def diag_mask(self) -> np.ndarray:
        """(b^2,) indicator of self-pair rows i == j."""
        ii, jj = self._grid
        return (ii == jj).astype(np.float64)


def build_batch(states, actions, rewards, next_states,
                rep: Representation, mode: str = "off-policy",
                rng: np.random.Generator | None = None) -> TrainBatch:
    """Embed a transition minibatch; noisy embeddings get independent draws
    for current and successor states."""
    return TrainBatch(
        phi=rep.embed_states(states, rng),
        actions=np.asarray(actions, dtype=np.int64),
        rewards=np.asarray(rewards, dtype=np.float64),
        phi_next=rep.embed_states(next_states, rng),
        mode=mode)


def compute_target(batch: TrainBatch, net: ApproxNet,
                   gamma: float, beta: float) -> np.ndarray:
    """Bootstrapped regression targets for every pair row, from the frozen
    net only. Self-pair rows are forced to zero."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    base = batch.R2 + gamma * beta * net.forward(batch.N2, "target")
    if batch.mode == "off-policy":
        base = np.maximum(base, beta * net.forward(batch.S2, "target"))
    return (1.0 - batch.diag_mask) * base


def _forward_cached(layers, x):
    acts = [x]
    zs = []
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w.T + b
        zs.append(z)
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(h)
    return h[:, 0], acts, zs


def loss_and_gradient(batch: TrainBatch, target: np.ndarray,
                      net: ApproxNet) -> tuple[float, list]:
    """Weighted mean squared error over all b^2 rows plus its gradient in
    the online parameters. Off-policy rows with mismatched actions carry
    zero weight; self-pair rows always count (their target is zero, which
    pins the diagonal of the learned function).
    """
    target = np.asarray(target, dtype=np.float64)
    psi, acts, zs = _forward_cached(net.online, batch.S2)
    mask = batch.W if batch.mode == "off-policy" else 1.0
    resid = psi - target
    weighted = mask * resid
    n = resid.size
    loss = float((weighted * resid).sum() / n)
    coef = (2.0 / n) * weighted
    delta = coef[:, None]
    grads = [None] * len(net.online)
    for layer in range(len(net.online) - 1, -1, -1):
        w, _ = net.online[layer]
        grads[layer] = (delta.T @ acts[layer], delta.sum(axis=0))
        if layer > 0:
            delta = (delta @ w) * (zs[layer - 1] > 0.0)
    return loss, grads


# ---------------------------------------------------------------------------
# Fast single-hidden-layer grid paths
# ---------------------------------------------------------------------------

def _split_layer(layers, k):
    (w1, b1), (w2, b2) = layers
    return w1[:, :k], w1[:, k:], b1, w2[0], float(b2[0])


def _grid_fwd(U, V, b1, w2, b2, fast):
    if fast:
        out = np.empty((U.shape[0], V.shape[0]))
        vt = np.ascontiguousarray(V.T)
        _kernels.grid_forward(U, vt, b1, w2, b2, out)
        return out
    return _kernels.grid_forward_numpy(U, V, b1, w2, b2)


def _grid_bwd_accumulate(U, V, b1, w2, coef, phiL, phiR, acc, fast):
    dW1a, dW1b, db1, dw2 = acc["W1a"], acc["W1b"], acc["b1"], acc["w2"]
    if fast and phiL.shape[1] == 2:
        vt = np.ascontiguousarray(V.T)
        acc["b2"] += _kernels.grid_backward_k2(
            U, vt, b1, w2, np.ascontiguousarray(coef),
            np.ascontiguousarray(phiL), np.ascontiguousarray(phiR),
            dW1a, dW1b, db1, dw2)
    else:
        ga, gb, g1, g2, g2b = _kernels.grid_backward_numpy(
            U, V, b1, w2, coef, phiL, phiR)
        dW1a += ga
        dW1b += gb
        db1 += g1
        dw2 += g2
        acc["b2"] += g2b


def _new_grad_acc(h, k):
    return {"W1a": np.zeros((h, k)), "W1b": np.zeros((h, k)),
            "b1": np.zeros(h), "w2": np.zeros(h), "b2": 0.0}


def _acc_to_grads(acc):
    dw1 = np.hstack([acc["W1a"], acc["W1b"]])
    return [(dw1, acc["b1"]),
            (acc["w2"][None, :], np.array([acc["b2"]]))]


def _step_dedup(net, mdp, policy_actions, phi_table, states, actions,
                gamma, beta, mode, fast):
    """Grid step for noise-free embeddings.

    All pair rows that share (state_i, state_j, action) are identical, so
    the b^2 expansion collapses onto the states-squared grid with integer
    multiplicities. Self-pair rows (same sample index) are the only rows
    whose target differs from their grid cell: they are split out with
    weight = occurrence count and target zero.
    """
    num_states, num_actions = mdp.num_states, mdp.num_actions
    b = states.size
    k = phi_table.shape[1]
    cnt_s = np.bincount(states, minlength=num_states).astype(np.float64)
    w1a, w1b, b1, w2, b2 = _split_layer(net.online, k)
    ta, tb, tb1, tw2, tb2 = _split_layer(net.target, k)
    U = phi_table @ w1a.T
    V = phi_table @ w1b.T
    psi = _grid_fwd(U, V, b1, w2, b2, fast)
    psi_t = _grid_fwd(phi_table @ ta.T, phi_table @ tb.T, tb1, tw2, tb2, fast)

    if mode == "off-policy":
        cnt_sa = np.bincount(states * num_actions + actions,
                             minlength=num_states * num_actions)
        cnt_sa = cnt_sa.reshape(num_states, num_actions).astype(np.float64)
        loss_acc = 0.0
        coef = np.zeros((num_states, num_states))
        for a in range(num_actions):
            ca = cnt_sa[:, a]
            if not ca.any():
                continue
            nxt = mdp.next_state[:, a]
            r = mdp.reward[:, a]
            tgt = np.abs(r[:, None] - r[None, :]) \
                + gamma * beta * psi_t[np.ix_(nxt, nxt)]
            np.maximum(tgt, beta * psi_t, out=tgt)
            mult = ca[:, None] * ca[None, :]
            np.fill_diagonal(mult, mult.diagonal() - ca)
            resid = psi - tgt
            loss_acc += float((mult * resid * resid).sum())
            coef += mult * resid
    else:
        r = mdp.reward[np.arange(num_states), policy_actions]
        nxt = mdp.next_state[np.arange(num_states), policy_actions]
        tgt = np.abs(r[:, None] - r[None, :]) \
            + gamma * beta * psi_t[np.ix_(nxt, nxt)]
        mult = cnt_s[:, None] * cnt_s[None, :]
        np.fill_diagonal(mult, mult.diagonal() - cnt_s)
        resid = psi - tgt
        loss_acc = float((mult * resid * resid).sum())
        coef = mult * resid

    diag = psi.diagonal()
    loss_acc += float((cnt_s * diag * diag).sum())
    coef[np.diag_indices(num_states)] += cnt_s * diag
    bsq = float(b) * float(b)
    coef *= 2.0 / bsq

    acc = _new_grad_acc(b1.size, k)
    _grid_bwd_accumulate(U, V, b1, w2, coef, phi_table, phi_table, acc, fast)
    return loss_acc / bsq, _acc_to_grads(acc)


def _step_blocks(net, phi, actions, rewards, phi_next,
                 gamma, beta, mode, fast):
    """Grid step for noisy embeddings: every sample keeps its own row, but
    zero-weight cross-action cells are skipped by grouping the batch per
    action (off-policy) or taking the whole batch as one block (on-policy).
    """
    b, k = phi.shape
    w1a, w1b, b1, w2, b2 = _split_layer(net.online, k)
    ta, tb, tb1, tw2, tb2 = _split_layer(net.target, k)
    if mode == "off-policy":
        groups = [np.flatnonzero(actions == a)
                  for a in np.unique(actions)]
    else:
        groups = [np.arange(b)]

    bsq = float(b) * float(b)
    loss_acc = 0.0
    acc = _new_grad_acc(b1.size, k)
    for idx in groups:
        ph = phi[idx]
        U = ph @ w1a.T
        V = ph @ w1b.T
        psi = _grid_fwd(U, V, b1, w2, b2, fast)
        pn = phi_next[idx]
        psi_tn = _grid_fwd(pn @ ta.T, pn @ tb.T, tb1, tw2, tb2, fast)
        r = rewards[idx]
        tgt = np.abs(r[:, None] - r[None, :]) + gamma * beta * psi_tn
        if mode == "off-policy":
            psi_ts = _grid_fwd(ph @ ta.T, ph @ tb.T, tb1, tw2, tb2, fast)
            np.maximum(tgt, beta * psi_ts, out=tgt)
        np.fill_diagonal(tgt, 0.0)
        resid = psi - tgt
        loss_acc += float((resid * resid).sum())
        _grid_bwd_accumulate(U, V, b1, w2, (2.0 / bsq) * resid,
                             ph, ph, acc, fast)
    return loss_acc / bsq, _acc_to_grads(acc)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class AdamState:
    """Adam moments for a list of (w, b) layers; updates in place."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, params):
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        self.t = 0

    def apply(self, params, grads, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for (w, b), (dw, db), (mw, mb), (vw, vb) in zip(
                params, grads, self.m, self.v):
            for arr, g, m, v in ((w, dw, mw, vw), (b, db, mb, vb)):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

_REQUIRED_CONFIG_KEYS = (
    "gamma", "batch_size", "target_update_period", "beta_gap_factor",
    "learning_rate", "total_steps", "hidden_layers", "representation",
    "mode", "seed")
_OPTIONAL_CONFIG_KEYS = ("eval_period", "layout", "policy", "oracle_metric")
_REP_REQUIRED_KEYS = ("type",)
_REP_OPTIONAL_KEYS = ("noise_sigma", "noise_clip", "noise_mode")


@dataclasses.dataclass
class TrainConfig:
    gamma: float
    batch_size: int
    target_update_period: int
    beta_gap_factor: float
    learning_rate: float
    total_steps: int
    hidden_layers: tuple
    representation: dict
    mode: str
    seed: int
    eval_period: int | None = None

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("config key 'gamma' must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("config key 'batch_size' must be >= 1")
        if self.target_update_period < 1:
            raise ValueError(
                "config key 'target_update_period' must be >= 1")
        if not 0.0 < self.beta_gap_factor < 1.0:
            raise ValueError(
                "config key 'beta_gap_factor' must lie in (0, 1)")
        if self.learning_rate <= 0.0:
            raise ValueError("config key 'learning_rate' must be positive")
        if self.total_steps < 0:
            raise ValueError("config key 'total_steps' must be >= 0")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError(
                "config key 'hidden_layers' entries must be positive")
        if self.mode not in TRAIN_MODES:
            raise ValueError(
                f"config key 'mode' must be one of {TRAIN_MODES}")
        if self.eval_period is not None and self.eval_period < 1:
            raise ValueError("config key 'eval_period' must be >= 1")


def _validate_rep_spec(spec) -> dict:
    if not isinstance(spec, dict):
        raise ValueError("config key 'representation' must be an object")
    for key in spec:
        if key not in _REP_REQUIRED_KEYS + _REP_OPTIONAL_KEYS:
            raise ValueError(f"unknown config key 'representation.{key}'")
    if "type" not in spec:
        raise ValueError("missing config key 'representation.type'")
    kind = spec["type"]
    if kind not in REPRESENTATION_KINDS:
        raise ValueError(
            f"config key 'representation.type' must be one of "
            f"{REPRESENTATION_KINDS}")
    if kind == "xy_noisy":
        for key in ("noise_sigma", "noise_clip"):
            if key not in spec:
                raise ValueError(
                    f"missing config key 'representation.{key}' "
                    f"(required for type 'xy_noisy')")
    else:
        for key in _REP_OPTIONAL_KEYS:
            if key in spec:
                raise ValueError(
                    f"config key 'representation.{key}' is only valid "
                    f"for type 'xy_noisy'")
    return dict(spec)


def load_train_config(source) -> tuple[TrainConfig, dict]:
    """Parse and validate a training config.

    source is a dict or a JSON file path. Returns the config plus a dict of
    the recognized resource keys (layout, policy, oracle_metric) that name
    companion files and are resolved by the caller.
    """
    if isinstance(source, dict):
        data = dict(source)
    else:
        with open(source) as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ValueError("config root must be a JSON object")
    known = set(_REQUIRED_CONFIG_KEYS) | set(_OPTIONAL_CONFIG_KEYS)
    for key in data:
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
    for key in _REQUIRED_CONFIG_KEYS:
        if key not in data:
            raise ValueError(f"missing config key {key!r}")
    rep_spec = _validate_rep_spec(data["representation"])
    extras = {k: data[k] for k in ("layout", "policy", "oracle_metric")
              if k in data}
    config = TrainConfig(
        gamma=float(data["gamma"]),
        batch_size=int(data["batch_size"]),
        target_update_period=int(data["target_update_period"]),
        beta_gap_factor=float(data["beta_gap_factor"]),
        learning_rate=float(data["learning_rate"]),
        total_steps=int(data["total_steps"]),
        hidden_layers=data["hidden_layers"],
        representation=rep_spec,
        mode=str(data["mode"]),
        seed=int(data["seed"]),
        eval_period=(int(data["eval_period"])
                     if data.get("eval_period") is not None else None))
    return config, extras


def build_representation(spec: dict,
                         layout: GridLayout | None = None,
                         num_states: int | None = None) -> Representation:
    spec = _validate_rep_spec(spec)
    return make_representation(
        spec["type"], layout=layout, num_states=num_states,
        noise_sigma=spec.get("noise_sigma", 0.1),
        noise_clip=spec.get("noise_clip", 0.3),
        noise_mode=spec.get("noise_mode", "truncate"))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class TrainingLog:
    loss_rows: list = dataclasses.field(default_factory=list)
    error_rows: list = dataclasses.field(default_factory=list)


def net_metric_matrix(net: ApproxNet, rep: Representation) -> np.ndarray:
    """Learned scores over all state pairs, using noise-free embeddings."""
    phi = rep.table
    if len(net.online) == 2:
        k = rep.k
        w1a, w1b, b1, w2, b2 = _split_layer(net.online, k)
        return _grid_fwd(phi @ w1a.T, phi @ w1b.T, b1, w2, b2,
                         _kernels.HAVE_NUMBA)
    n = rep.num_states
    ii = np.repeat(np.arange(n), n)
    jj = np.tile(np.arange(n), n)
    rows = np.hstack([phi[ii], phi[jj]])
    return net.forward(rows).reshape(n, n)


def net_distance(net: ApproxNet, rep: Representation,
                 s: int, t: int) -> float:
    """Learned distance between two states on noise-free embeddings."""
    row = np.concatenate([rep.table[s], rep.table[t]])
    return float(net.forward(row[None, :])[0])


def _select_engine(engine: str, rep: Representation, hidden_count: int):
    if engine not in ("auto", "reference", "dedup", "blocks"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "auto":
        if hidden_count != 1:
            return "reference"
        return "dedup" if rep.deterministic else "blocks"
    if engine in ("dedup", "blocks") and hidden_count != 1:
        raise ValueError(f"engine {engine!r} needs exactly one hidden layer")
    if engine == "dedup" and not rep.deterministic:
        raise ValueError("engine 'dedup' needs a noise-free representation")
    return engine


def train(mdp: DeterministicMdp, rep: Representation, config: TrainConfig,
          policy: DeterministicPolicy | None = None,
          oracle_metric: np.ndarray | None = None,
          engine: str = "auto") -> tuple[ApproxNet, TrainingLog]:
    """Fit the pair net on uniformly sampled transitions from the model.

    Off-policy steps sample state and action uniformly; on-policy steps
    sample the state uniformly and follow the supplied policy. The frozen
    copy and the bootstrap weight beta refresh together after every
    target_update_period-th step. When an oracle metric is given, error
    curves are recorded before training, every eval_period steps, and at
    the end, always on noise-free embeddings.
    """
    if rep.num_states != mdp.num_states:
        raise ValueError(
            f"representation covers {rep.num_states} states, "
            f"model has {mdp.num_states}")
    if config.mode == "on-policy":
        if policy is None:
            raise ValueError("on-policy training requires a policy")
        policy_actions = np.asarray(policy.action_of, dtype=np.int64)
    else:
        policy_actions = None
    engine = _select_engine(engine, rep, len(config.hidden_layers))
    fast = _kernels.HAVE_NUMBA

    rng = np.random.default_rng(config.seed)
    net = ApproxNet((2 * rep.k, *config.hidden_layers, 1), rng)
    adam = AdamState(net.online)
    beta = 0.0
    gamma = config.gamma
    log = TrainingLog()
    evaluated_steps = set()

    def record_errors(step):
        if oracle_metric is None or step in evaluated_steps:
            return
        report = metric_errors(oracle_metric, net_metric_matrix(net, rep))
        log.error_rows.append(
            (step, report.absolute_error, report.normalized_error))
        evaluated_steps.add(step)

    record_errors(0)
    num_states, num_actions = mdp.num_states, mdp.num_actions
    for step in range(config.total_steps):
        states = rng.integers(0, num_states, size=config.batch_size)
        if config.mode == "off-policy":
            actions = rng.integers(0, num_actions, size=config.batch_size)
        else:
            actions = policy_actions[states]
        rewards = mdp.reward[states, actions]
        next_states = mdp.next_state[states, actions]

        if engine == "dedup":
            loss, grads = _step_dedup(
                net, mdp, policy_actions, rep.table, states, actions,
                gamma, beta, config.mode, fast)
        else:
            phi = rep.embed_states(states, rng)
            phi_next = rep.embed_states(next_states, rng)
            if engine == "blocks":
                loss, grads = _step_blocks(
                    net, phi, actions, rewards, phi_next,
                    gamma, beta, config.mode, fast)
            else:
                batch = TrainBatch(phi, actions, rewards, phi_next,
                                   mode=config.mode)
                target = compute_target(batch, net, gamma, beta)
                loss, grads = loss_and_gradient(batch, target, net)

        adam.apply(net.online, grads, config.learning_rate)
        log.loss_rows.append((step, loss, beta))
        if (step + 1) % config.target_update_period == 0:
            net.sync_target()
            beta = 1.0 - config.beta_gap_factor * (1.0 - beta)
        if config.eval_period and (step + 1) % config.eval_period == 0:
            record_errors(step + 1)
    record_errors(config.total_steps)
    return net, log

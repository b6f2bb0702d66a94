"""Deep Q-learning scheduler over the reduced action space.

The Q-network is a plain multilayer perceptron (ReLU hidden layers, linear
head) trained with Adam on squared Bellman errors sampled from a replay
buffer. ``TrainConfig.huber`` optionally clips large errors to a linear
penalty, which keeps rare very expensive states from dominating the fit.
``TrainConfig.lr_end`` optionally anneals the Adam step size geometrically
over training. Exploration is epsilon-greedy with a per-step multiplicative
decay.

The reward of a transition ``s -> s'`` is ``-c(s') / N``. Charging the cost of
the state the action leads to, not the one it was taken in, shifts the
discounted return by a constant factor and leaves the optimal policy
unchanged.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .aoi import AoIState, aoi_advance, mode_advance
from .errors import FormatError, NonFiniteLoss, ShapeMismatch, VersionMismatch
from .network import enumerate_reduced_actions, resolve_reduced, sample_transmissions
from .policies import Policy

MODEL_MAGIC = b"WNCSQNET"
MODEL_VERSION = 1


# --------------------------------------------------------------------------- network

class QNetwork:
    """MLP ``x -> (x * in_scale) -> [affine, ReLU]* -> affine``."""

    def __init__(self, sizes, in_scale=None, rng=None, params=None):
        self.sizes = [int(s) for s in sizes]
        self.in_scale = np.ones(self.sizes[0]) if in_scale is None else np.asarray(in_scale, dtype=float)
        if params is not None:
            self.params = [np.array(p, dtype=float) for p in params]
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            self.params = []
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
                self.params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
                self.params.append(np.zeros(fan_out))

    @property
    def weights(self):
        return self.params[0::2]

    @property
    def biases(self):
        return self.params[1::2]

    def copy(self):
        return QNetwork(self.sizes, self.in_scale.copy(), params=self.params)

    def forward(self, X, keep=False):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.sizes[0]:
            raise ShapeMismatch(f"input has {X.shape[-1]} features, network expects {self.sizes[0]}")
        h = X * self.in_scale
        acts = [h]
        n_layers = len(self.weights)
        for li, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if li < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, grad_out):
        """Parameter gradients given ``d loss / d output`` for a forward pass."""
        grads = [None] * len(self.params)
        g = grad_out
        for li in range(len(self.weights) - 1, -1, -1):
            grads[2 * li] = acts[li].T @ g
            grads[2 * li + 1] = g.sum(axis=0)
            if li > 0:
                g = (g @ self.weights[li].T) * (acts[li] > 0)
        return grads

    def all_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.params)


def q_forward(net, x):
    return net.forward(x)


def bellman_loss_and_grads(net, X, actions, targets, huber=0.0):
    """Mean squared error ``mean_j (z_j - Q(x_j, a_j))^2`` and its gradients.

    With ``huber > 0`` the squared error turns linear beyond ``|err| = huber``
    (scaled so both branches share the ``err^2`` convention near zero).
    """
    out, acts = net.forward(X, keep=True)
    B = len(actions)
    rows = np.arange(B)
    err = out[rows, actions] - targets
    g = np.zeros_like(out)
    if huber > 0:
        a = np.abs(err)
        loss = float(np.mean(np.where(a <= huber, err**2, 2 * huber * a - huber**2)))
        g[rows, actions] = 2.0 * np.clip(err, -huber, huber) / B
    else:
        loss = float(np.mean(err**2))
        g[rows, actions] = 2.0 * err / B
    return loss, net.backward(acts, g)


class Adam:
    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        if self.lr == 0:
            return
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --------------------------------------------------------------------------- replay

class ReplayBuffer:
    """Fixed-capacity FIFO ring of ``(s, a, r, s')`` transitions."""

    def __init__(self, capacity, dim):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, dim))
        self.s2 = np.zeros((capacity, dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.size = 0
        self.pos = 0
        self.inserted = 0

    def add(self, s, a, r, s2):
        i = self.pos
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def sample(self, n, rng):
        idx = rng.integers(0, self.size, n)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx]

    def __len__(self):
        return self.size


# --------------------------------------------------------------------------- state encoding

def input_size(vs):
    return sum(2 * v + 2 for v in vs) + len(vs)


def encode_state(ws, cap):
    """Capped ``tau_0..tau_v, eta_0..eta_v`` of every plant, then the link modes."""
    states = getattr(ws, "per_plant", ws)
    vals = []
    for s in states:
        vals += [min(t, cap) for t in s.tau] + [min(e, cap) for e in s.eta]
    vals += [s.mode for s in states]
    return np.array(vals, dtype=float)


def encode_rows(rows, modes, cap):
    """Batched :func:`encode_state` from register rows ``(S, 2v+3)`` and modes ``(S, N)``."""
    parts = []
    for r in rows:
        v = (r.shape[1] - 3) // 2
        parts.append(np.minimum(r[:, : v + 1], cap))
        parts.append(np.minimum(r[:, v + 2:], cap))
    parts.append(np.asarray(modes))
    return np.concatenate(parts, axis=1).astype(float)


def default_in_scale(vs, cap):
    scale = []
    for v in vs:
        scale += [1.0 / cap] * (2 * v + 2)
    return np.array(scale + [1.0] * len(vs))


# --------------------------------------------------------------------------- training

@dataclass
class TrainConfig:
    episodes: int = 1000
    steps: int = 500
    theta: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay: float = 0.999
    batch: int = 32
    capacity: int = 20000
    lr: float = 1e-3
    hidden: tuple = (1024,)
    seed: int = 0
    cap: int = 20
    target_sync: int = 0
    init_high: int = 0  # 0: cap // 2
    huber: float = 0.0  # 0: plain squared error
    lr_end: float = 0.0  # 0: constant step size, else geometric decay to this value

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 < self.eps_decay <= 1:
            raise ValueError("eps_decay must lie in (0, 1]")
        if self.lr_end < 0 or (self.lr_end and self.lr_end > self.lr):
            raise ValueError("lr_end must lie in [0, lr]")
        if self.batch > self.capacity:
            raise ValueError("batch larger than replay capacity")
        self.hidden = tuple(int(h) for h in self.hidden)


def action_checksum(actions):
    return hashlib.sha256(repr(list(actions)).encode()).hexdigest()[:16]


class AgeEnv:
    """Register-level environment: the analytic cost needs nothing else."""

    def __init__(self, system, rng, cap):
        self.sys = system
        self.rng = rng
        self.cap = cap
        self.actions = enumerate_reduced_actions(system.N, system.M)

    def reset_random(self, high):
        rng = self.rng
        states = []
        for p in self.sys.plants:
            draw = rng.integers(1, high + 1, 2 * p.v + 3)
            mode = 1 if rng.random() < 0.5 else -1
            states.append(AoIState(tuple(int(x) for x in draw[: p.v + 1]),
                                   tuple(int(x) for x in draw[p.v + 2:]), mode, int(draw[p.v + 1])))
        self.states = states
        return states

    def step(self, a_idx):
        modes = [s.mode for s in self.states]
        full = resolve_reduced(self.actions[a_idx], modes)
        out = sample_transmissions(full, self.sys.net, self.rng)
        nxt = []
        cost = 0.0
        for i, (s, ev) in enumerate(zip(self.states, self.sys.evaluators)):
            b, g = bool(out.beta[i]), bool(out.gamma[i])
            t = aoi_advance(s, b, g)
            t = AoIState(tuple(min(x, self.cap) for x in t.tau), tuple(min(x, self.cap) for x in t.eta),
                         mode_advance(s.mode, b, g), min(t.tail, self.cap))
            nxt.append(t)
            cost += ev(t)
        self.states = nxt
        return nxt, cost


def step_size(cfg: TrainConfig, step):
    """Adam step size at training step ``step`` (geometric from ``lr`` to ``lr_end``)."""
    if not cfg.lr_end or not cfg.lr:
        return cfg.lr
    frac = min(step / max(cfg.episodes * cfg.steps - 1, 1), 1.0)
    return cfg.lr * (cfg.lr_end / cfg.lr) ** frac


def train(system, cfg: TrainConfig, rng=None, log=None, hook=None):
    """Train a Q-network; returns ``(net, curve)`` with ``curve`` rows
    ``(episode, mean per-step cost, epsilon)``.

    ``hook(episode, net)``, if given, runs after every episode (checkpoints,
    diagnostics). It must not consume ``rng``.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    vs = [p.v for p in system.plants]
    cap = cfg.cap
    env = AgeEnv(system.with_cap(cap) if system.cap != cap else system, rng, cap)
    n_act = len(env.actions)
    dim = input_size(vs)
    net = QNetwork([dim, *cfg.hidden, n_act], default_in_scale(vs, cap), rng)
    net.meta = {"N": system.N, "M": system.M, "vs": vs, "cap": cap,
                "n_actions": n_act, "actions_checksum": action_checksum(env.actions)}
    target = net.copy() if cfg.target_sync else net
    opt = Adam(net.params, cfg.lr)
    buf = ReplayBuffer(cfg.capacity, dim)
    eps = cfg.eps_start
    N = system.N
    high = cfg.init_high or max(cap // 2, 1)
    curve = []
    step_count = 0
    for ep in range(cfg.episodes):
        states = env.reset_random(high)
        x = encode_state(states, cap)
        total = 0.0
        for _ in range(cfg.steps):
            if rng.random() < eps:
                a = int(rng.integers(n_act))
            else:
                a = int(np.argmax(net.forward(x[None, :])[0]))
            states, c = env.step(a)
            x2 = encode_state(states, cap)
            buf.add(x, a, -c / N, x2)
            total += c
            x = x2
            if len(buf) >= cfg.batch:
                S, A_, R, S2 = buf.sample(cfg.batch, rng)
                z = R + cfg.theta * target.forward(S2).max(axis=1)
                loss, grads = bellman_loss_and_grads(net, S, A_, z, cfg.huber)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"loss became {loss} in episode {ep}")
                opt.lr = step_size(cfg, step_count)
                opt.step(net.params, grads)
            step_count += 1
            if cfg.target_sync and step_count % cfg.target_sync == 0:
                target = net.copy()
            eps = max(eps * cfg.eps_decay, cfg.eps_end)
        curve.append((ep, total / cfg.steps, eps))
        if log is not None:
            log(ep, total / cfg.steps, eps)
        if hook is not None:
            hook(ep, net)
    if not net.all_finite():
        raise NonFiniteLoss("parameters became non-finite")
    return net, curve


def act_greedy(net, ws, actions=None):
    """Reduced action with the largest Q-value (ties to the lowest index)."""
    cap = getattr(net, "meta", {}).get("cap", 20)
    q = net.forward(encode_state(ws, cap)[None, :])[0]
    idx = int(np.argmax(q))
    return actions[idx] if actions is not None else idx


class DqnPolicy(Policy):
    kind = "dqn"

    def __init__(self, net, N, M):
        self.net = net
        self.cap = net.meta["cap"]
        self.actions = enumerate_reduced_actions(N, M)
        self._table = np.array(self.actions, dtype=np.int64)

    def act(self, snap, k):
        X = encode_rows(snap.rows, snap.modes, self.cap)
        idx = np.argmax(self.net.forward(X), axis=1)
        red = self._table[idx]  # (S, M) plant numbers
        modes = np.asarray(snap.modes, dtype=np.int64)
        plant = np.maximum(red - 1, 0)
        direction = np.take_along_axis(modes, plant, axis=1)
        return np.where(red > 0, red * direction, 0)


# --------------------------------------------------------------------------- persistence

def save_model(net, path):
    meta = dict(getattr(net, "meta", {}))
    header = {"version": MODEL_VERSION, "sizes": net.sizes, "meta": meta,
              "shapes": [list(p.shape) for p in net.params]}
    hb = json.dumps(header).encode()
    blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in [net.in_scale, *net.params])
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC + struct.pack("<I", len(hb)) + hb + blob)


def load_model(path, expect=None):
    """Read a model; ``expect`` may hold ``sizes`` / meta keys that must match."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:8] != MODEL_MAGIC:
        raise FormatError("not a Q-network file")
    (hl,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + hl:
        raise FormatError("truncated header")
    try:
        header = json.loads(raw[12:12 + hl])
    except ValueError as exc:
        raise FormatError("corrupt header") from exc
    if header.get("version") != MODEL_VERSION:
        raise VersionMismatch(f"file version {header.get('version')} != {MODEL_VERSION}")
    shapes = [tuple(s) for s in header["shapes"]]
    sizes = header["sizes"]
    counts = [sizes[0]] + [int(np.prod(s)) for s in shapes]
    body = raw[12 + hl:]
    if len(body) != 8 * sum(counts):
        raise FormatError("truncated parameter blob")
    flat = np.frombuffer(body, dtype="<f8")
    pieces, off = [], 0
    for c in counts:
        pieces.append(flat[off:off + c].copy())
        off += c
    params = [p.reshape(s) for p, s in zip(pieces[1:], shapes)]
    net = QNetwork(sizes, pieces[0], params=params)
    net.meta = header["meta"]
    if expect:
        for k, want in expect.items():
            have = sizes if k == "sizes" else net.meta.get(k)
            if have != want:
                raise VersionMismatch(f"model {k}={have!r} does not match expected {want!r}")
    return net


def config_dict(cfg: TrainConfig):
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d

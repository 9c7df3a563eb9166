"""Minimal numpy MLP stack: tanh nets, manual backprop, Adam, normalizers.

All policies and regressors in this project are two hidden layers of 64
units. Gradients are hand-written so they can be checked against finite
differences, and everything is deterministic given a Generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

LOG_STD_INIT = -0.5
LOG_STD_FLOOR = -4.0


def orthogonal(shape, rng, gain=1.0):
    a = rng.normal(size=shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[:shape[0], :shape[1]]


class Mlp:
    """Tanh MLP with linear output and accumulated analytic gradients."""

    def __init__(self, sizes, rng, out_gain=0.01):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for i in range(len(sizes) - 1):
            gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
            self.weights.append(orthogonal((sizes[i], sizes[i + 1]), rng,
                                           gain=gain))
            self.biases.append(np.zeros(sizes[i + 1]))
        self._acts = None
        self.zero_grads()

    def zero_grads(self):
        self.w_grads = [np.zeros_like(w) for w in self.weights]
        self.b_grads = [np.zeros_like(b) for b in self.biases]

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if i < len(self.weights) - 1:
                x = np.tanh(x)
            acts.append(x)
        self._acts = acts
        return x

    def backward(self, grad_out):
        """Accumulate parameter gradients for the last forward batch."""
        acts = self._acts
        g = np.asarray(grad_out, dtype=float)
        for i in reversed(range(len(self.weights))):
            self.w_grads[i] += acts[i].T @ g
            self.b_grads[i] += g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        return g

    def params(self):
        return self.weights + self.biases

    def grads(self):
        return self.w_grads + self.b_grads


class RunningNormalizer:
    """Streaming mean/variance normalizer; freezes at deployment."""

    def __init__(self, dim, clip=10.0):
        self.dim = dim
        self.clip = clip
        self.count = 1e-4
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.frozen = False

    def update(self, batch):
        if self.frozen:
            return
        batch = np.atleast_2d(batch)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean = self.mean + delta * b_count / total
        m_a = self.var * self.count
        m_b = b_var * b_count
        m2 = m_a + m_b + delta ** 2 * self.count * b_count / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x):
        z = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip)

    def state_dict(self):
        return {"count": float(self.count), "mean": self.mean.tolist(),
                "var": self.var.tolist(), "clip": self.clip}

    @classmethod
    def from_state(cls, state):
        norm = cls(len(state["mean"]), clip=state.get("clip", 10.0))
        norm.count = state["count"]
        norm.mean = np.asarray(state["mean"], dtype=float)
        norm.var = np.asarray(state["var"], dtype=float)
        norm.frozen = True
        return norm


class Adam:
    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_grad_norm(grads, max_norm):
    total = np.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        grads = [g * scale for g in grads]
    return grads, total


class MlpPolicy:
    """Diagonal-Gaussian policy: [64, 64] tanh trunk, state-independent std.

    Actions are clipped to the declared per-dimension bounds on emission;
    log-probabilities refer to the pre-clip sample.
    """

    def __init__(self, obs_dim, act_dim, rng, *, action_low=-1.0,
                 action_high=1.0, hidden=(64, 64)):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.net = Mlp([obs_dim, *hidden, act_dim], rng, out_gain=0.01)
        self.log_std = np.full(act_dim, LOG_STD_INIT)
        self.log_std_grad = np.zeros(act_dim)
        self.action_low = np.broadcast_to(np.asarray(action_low, dtype=float),
                                          (act_dim,)).copy()
        self.action_high = np.broadcast_to(
            np.asarray(action_high, dtype=float), (act_dim,)).copy()
        self.normalizer = RunningNormalizer(obs_dim)

    def mean_action(self, obs):
        """Deterministic evaluation-mode action."""
        z = self.normalizer.normalize(np.asarray(obs, dtype=float))
        mean = self.net.forward(z)[0]
        return np.clip(mean, self.action_low, self.action_high)

    def sample_action(self, obs, rng):
        z = self.normalizer.normalize(np.asarray(obs, dtype=float))
        mean = self.net.forward(z)[0]
        std = np.exp(self.log_std)
        raw = mean + std * rng.normal(size=self.act_dim)
        logp = self.log_prob_raw(mean, raw)
        action = np.clip(raw, self.action_low, self.action_high)
        return action, raw, float(logp)

    def log_prob_raw(self, mean, raw):
        std = np.exp(self.log_std)
        z = (raw - mean) / std
        return -0.5 * np.sum(z ** 2 + 2.0 * self.log_std
                             + np.log(2.0 * np.pi), axis=-1)

    def params(self):
        return self.net.params() + [self.log_std]

    def grads(self):
        return self.net.grads() + [self.log_std_grad]

    def zero_grads(self):
        self.net.zero_grads()
        self.log_std_grad = np.zeros(self.act_dim)

    def clamp_log_std(self):
        np.clip(self.log_std, LOG_STD_FLOOR, None, out=self.log_std)

    def state_dict(self):
        return {
            "kind": "gaussian_mlp_policy",
            "sizes": self.net.sizes,
            "weights": [w.tolist() for w in self.net.weights],
            "biases": [b.tolist() for b in self.net.biases],
            "log_std": self.log_std.tolist(),
            "action_low": self.action_low.tolist(),
            "action_high": self.action_high.tolist(),
            "normalizer": self.normalizer.state_dict(),
        }

    @classmethod
    def from_state(cls, state):
        sizes = state["sizes"]
        rng = np.random.default_rng(0)
        policy = cls(sizes[0], sizes[-1], rng,
                     action_low=np.asarray(state["action_low"]),
                     action_high=np.asarray(state["action_high"]),
                     hidden=tuple(sizes[1:-1]))
        policy.net.weights = [np.asarray(w, dtype=float)
                              for w in state["weights"]]
        policy.net.biases = [np.asarray(b, dtype=float)
                             for b in state["biases"]]
        policy.log_std = np.asarray(state["log_std"], dtype=float)
        policy.normalizer = RunningNormalizer.from_state(state["normalizer"])
        return policy

    def save(self, path, extra=None):
        data = self.state_dict()
        if extra:
            data["extra"] = extra
        with open(path, "w") as fh:
            json.dump(data, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_state(json.load(fh))


class ValueNet:
    def __init__(self, obs_dim, rng, hidden=(64, 64)):
        self.net = Mlp([obs_dim, *hidden, 1], rng, out_gain=1.0)

    def forward(self, z):
        return self.net.forward(z)[:, 0]


def flat_params(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def set_flat_params(arrays, flat):
    i = 0
    for a in arrays:
        a.flat[:] = flat[i:i + a.size]
        i += a.size


@dataclass
class FitResult:
    model: "MlpRegressor"
    train_loss: float
    val_loss: float
    epochs: int


class MlpRegressor:
    """Deterministic MLP regressor with frozen input standardization."""

    def __init__(self, in_dim, out_dim, rng, hidden=(64, 64)):
        self.net = Mlp([in_dim, *hidden, out_dim], rng, out_gain=1.0)
        self.in_mean = np.zeros(in_dim)
        self.in_std = np.ones(in_dim)

    def predict(self, x):
        z = (np.atleast_2d(np.asarray(x, dtype=float)) - self.in_mean) \
            / self.in_std
        return self.net.forward(z)

    def state_dict(self):
        return {
            "kind": "mlp_regressor",
            "sizes": self.net.sizes,
            "weights": [w.tolist() for w in self.net.weights],
            "biases": [b.tolist() for b in self.net.biases],
            "in_mean": self.in_mean.tolist(),
            "in_std": self.in_std.tolist(),
        }

    @classmethod
    def from_state(cls, state):
        sizes = state["sizes"]
        model = cls(sizes[0], sizes[-1], np.random.default_rng(0),
                    hidden=tuple(sizes[1:-1]))
        model.net.weights = [np.asarray(w, dtype=float)
                             for w in state["weights"]]
        model.net.biases = [np.asarray(b, dtype=float)
                            for b in state["biases"]]
        model.in_mean = np.asarray(state["in_mean"], dtype=float)
        model.in_std = np.asarray(state["in_std"], dtype=float)
        return model


def mlp_supervised_fit(inputs, targets, *, hidden=(64, 64), groups=None,
                       seed=0, lr=1e-3, batch_size=64, max_epochs=500,
                       patience=20, val_fraction=0.1) -> FitResult:
    """MSE regression with early stopping on a held-out validation split.

    The split is by `groups` (e.g. trajectory ids) when given, never by
    shuffled step, so temporally correlated samples stay together.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(x) != len(y):
        raise ValueError("inputs/targets length mismatch")
    if len(x) < 10:
        raise ValueError("need at least 10 samples for a train/val split")
    rng = np.random.default_rng(seed)

    if groups is not None:
        groups = np.asarray(groups)
        uniq = np.unique(groups)
        n_val = max(1, int(round(val_fraction * len(uniq))))
        val_groups = set(rng.permutation(uniq)[:n_val].tolist())
        val_mask = np.array([g in val_groups for g in groups])
        if val_mask.all() or not val_mask.any():
            raise ValueError("group split produced an empty train or val set")
    else:
        n_val = max(1, int(round(val_fraction * len(x))))
        val_mask = np.zeros(len(x), dtype=bool)
        val_mask[-n_val:] = True
    x_tr, y_tr = x[~val_mask], y[~val_mask]
    x_va, y_va = x[val_mask], y[val_mask]

    model = MlpRegressor(x.shape[1], y.shape[1], rng, hidden=hidden)
    model.in_mean = x_tr.mean(axis=0)
    model.in_std = x_tr.std(axis=0) + 1e-8
    opt = Adam(model.net.params(), lr=lr)

    best_val = np.inf
    best_weights = None
    bad_epochs = 0
    epochs_run = 0
    n = len(x_tr)
    for epoch in range(max_epochs):
        epochs_run = epoch + 1
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            z = (x_tr[idx] - model.in_mean) / model.in_std
            pred = model.net.forward(z)
            err = pred - y_tr[idx]
            model.net.zero_grads()
            model.net.backward(2.0 * err / err.size)
            opt.step(model.net.grads())
        val_pred = model.predict(x_va)
        val_loss = float(np.mean((val_pred - y_va) ** 2))
        if not np.isfinite(val_loss):
            raise FloatingPointError("non-finite validation loss")
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_weights = ([w.copy() for w in model.net.weights],
                            [b.copy() for b in model.net.biases])
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= patience:
                break
    if best_weights is not None:
        model.net.weights, model.net.biases = best_weights
    train_pred = model.predict(x_tr)
    train_loss = float(np.mean((train_pred - y_tr) ** 2))
    return FitResult(model=model, train_loss=train_loss, val_loss=best_val,
                     epochs=epochs_run)

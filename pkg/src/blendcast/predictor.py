"""Receiver-side prediction of dynamic coefficients.

One small LSTM per feature, trained offline on the same trace that forms
the shared knowledge base: one-step-ahead regression from a sliding
window of the d most recent values, plain full-batch gradient descent on
mean squared error. At the receiver, untransmitted frames are filled by
an autoregressive rollout seeded from the dequantized received values,
or by last-frame padding for the no-prediction benchmark.

Gate order throughout is [input, forget, output, candidate]; biases start
at zero except the forget gate (1.0), so a zero-input window yields a
zero hidden state and the prediction collapses to the normalization mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import ReceivedChunk
from .errors import DivergenceError, WindowUnderfullError
from .trace import CoefficientTrace

TRAIN_FRACTION = 0.8
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PredictorConfig:
    window: int = 5
    hidden_size: int = 16
    learning_rate: float = 1e-2
    epochs: int = 200
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class FeatureParams:
    """Learnable parameters of one feature's predictor."""

    w_x: np.ndarray  # (4H,) input weights
    w_h: np.ndarray  # (4H, H) recurrent weights
    b: np.ndarray  # (4H,) gate biases
    w_out: np.ndarray  # (H,) output projection
    b_out: float
    mean: float  # normalization offset
    std: float  # normalization scale

    @property
    def hidden_size(self) -> int:
        return self.w_out.shape[0]

    def copy(self) -> "FeatureParams":
        return FeatureParams(
            w_x=self.w_x.copy(),
            w_h=self.w_h.copy(),
            b=self.b.copy(),
            w_out=self.w_out.copy(),
            b_out=float(self.b_out),
            mean=float(self.mean),
            std=float(self.std),
        )


class _Stack:
    """Parameters of F features stacked for vectorized math."""

    __slots__ = ("w_x", "w_h", "b", "w_out", "b_out", "mean", "std")

    def __init__(self, w_x, w_h, b, w_out, b_out, mean, std):
        self.w_x, self.w_h, self.b = w_x, w_h, b
        self.w_out, self.b_out = w_out, b_out
        self.mean, self.std = mean, std

    @classmethod
    def from_features(cls, features: list[FeatureParams]) -> "_Stack":
        return cls(
            w_x=np.stack([p.w_x for p in features]),
            w_h=np.stack([p.w_h for p in features]),
            b=np.stack([p.b for p in features]),
            w_out=np.stack([p.w_out for p in features]),
            b_out=np.array([p.b_out for p in features]),
            mean=np.array([p.mean for p in features]),
            std=np.array([p.std for p in features]),
        )


def _forward(stack: _Stack, x: np.ndarray, keep_cache: bool = False):
    """Run the recurrent cell over windows x of shape (F, B, d).

    Returns predictions (F, B) on the normalized scale, plus the step
    cache when requested by the backward pass.
    """
    f_count, batch, depth = x.shape
    hidden = stack.w_out.shape[1]
    h = np.zeros((f_count, batch, hidden))
    c = np.zeros((f_count, batch, hidden))
    cache = []
    w_h_t = np.ascontiguousarray(stack.w_h.transpose(0, 2, 1))  # (F, H, 4H)
    hs = slice(0, hidden)
    fs = slice(hidden, 2 * hidden)
    os_ = slice(2 * hidden, 3 * hidden)
    gs = slice(3 * hidden, 4 * hidden)
    for t in range(depth):
        x_t = x[:, :, t]
        z = x_t[:, :, None] * stack.w_x[:, None, :]
        z += h @ w_h_t
        z += stack.b[:, None, :]
        gate_i = _sigmoid(z[:, :, hs])
        gate_f = _sigmoid(z[:, :, fs])
        gate_o = _sigmoid(z[:, :, os_])
        gate_g = np.tanh(z[:, :, gs])
        c_new = gate_f * c + gate_i * gate_g
        tanh_c = np.tanh(c_new)
        h_new = gate_o * tanh_c
        if keep_cache:
            cache.append((x_t, h, c, gate_i, gate_f, gate_o, gate_g, tanh_c))
        h, c = h_new, c_new
    y = (h @ stack.w_out[:, :, None])[:, :, 0] + stack.b_out[:, None]
    return (y, h, cache) if keep_cache else (y, h, None)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # exp overflow saturates to the correct 0/1
        return 1.0 / (1.0 + np.exp(-z))


def _loss_and_grads(stack: _Stack, x: np.ndarray, targets: np.ndarray):
    """Per-feature MSE loss and its gradients via backprop through the window.

    x: (F, B, d) normalized windows; targets: (F, B) normalized values.
    Returns (loss (F,), grads dict matching the stacked parameter arrays).
    """
    f_count, batch, depth = x.shape
    hidden = stack.w_out.shape[1]
    y, h_final, cache = _forward(stack, x, keep_cache=True)
    err = y - targets
    loss = np.mean(err**2, axis=1)

    dy = 2.0 * err / batch
    grads = {
        "w_x": np.zeros_like(stack.w_x),
        "w_h": np.zeros_like(stack.w_h),
        "b": np.zeros_like(stack.b),
        "w_out": (h_final.transpose(0, 2, 1) @ dy[:, :, None])[:, :, 0],
        "b_out": np.sum(dy, axis=1),
    }
    dh = dy[:, :, None] * stack.w_out[:, None, :]
    dc_next = np.zeros((f_count, batch, hidden))
    hs = slice(0, hidden)
    fs = slice(hidden, 2 * hidden)
    os_ = slice(2 * hidden, 3 * hidden)
    gs = slice(3 * hidden, 4 * hidden)
    for t in reversed(range(depth)):
        x_t, h_prev, c_prev, gate_i, gate_f, gate_o, gate_g, tanh_c = cache[t]
        do = dh * tanh_c
        dc = dc_next + dh * gate_o * (1.0 - tanh_c**2)
        dz = np.empty((f_count, batch, 4 * hidden))
        dz[:, :, hs] = dc * gate_g * gate_i * (1.0 - gate_i)
        dz[:, :, fs] = dc * c_prev * gate_f * (1.0 - gate_f)
        dz[:, :, os_] = do * gate_o * (1.0 - gate_o)
        dz[:, :, gs] = dc * gate_i * (1.0 - gate_g**2)
        grads["w_x"] += np.sum(dz * x_t[:, :, None], axis=1)
        grads["w_h"] += dz.transpose(0, 2, 1) @ h_prev
        grads["b"] += np.sum(dz, axis=1)
        dh = dz @ stack.w_h
        dc_next = dc * gate_f
    return loss, grads


def loss_and_gradients(params: FeatureParams, windows: np.ndarray, targets: np.ndarray):
    """Single-feature loss/gradient hook (used by gradient verification).

    windows: (B, d) normalized inputs; targets: (B,). Returns the scalar
    MSE loss and a dict of gradients keyed like FeatureParams fields.
    """
    stack = _Stack.from_features([params])
    loss, grads = _loss_and_grads(stack, windows[None, :, :], targets[None, :])
    return float(loss[0]), {
        "w_x": grads["w_x"][0],
        "w_h": grads["w_h"][0],
        "b": grads["b"][0],
        "w_out": grads["w_out"][0],
        "b_out": float(grads["b_out"][0]),
    }


def _init_feature(hidden: int, seed: int, feature: int) -> FeatureParams:
    rng = np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, feature))
    scale = 1.0 / np.sqrt(hidden)
    w_x = rng.uniform(-scale, scale, size=4 * hidden)
    w_h = rng.uniform(-scale, scale, size=(4 * hidden, hidden))
    w_out = rng.uniform(-scale, scale, size=hidden)
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget gate starts open
    return FeatureParams(w_x=w_x, w_h=w_h, b=b, w_out=w_out, b_out=0.0, mean=0.0, std=1.0)


@dataclass
class PredictorModel:
    """Per-feature trained predictors plus shared window configuration."""

    window: int
    hidden_size: int
    normalize: bool
    features: dict[int, FeatureParams]

    @property
    def trained_feature_indices(self) -> tuple[int, ...]:
        return tuple(sorted(self.features))

    def predict_step(self, feature: int, window) -> float:
        """One normalized-forward step for a single feature and window."""
        params = self.features[feature]
        w = np.asarray(window, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != self.window:
            raise ValueError(f"window must hold exactly {self.window} values")
        stack = _Stack.from_features([params])
        x = ((w - params.mean) / params.std)[None, None, :]
        y, _, _ = _forward(stack, x)
        return float(y[0, 0] * params.std + params.mean)

    def save(self, path: str | Path) -> None:
        idx = self.trained_feature_indices
        feats = [self.features[i] for i in idx]
        stack = _Stack.from_features(feats)
        np.savez(
            path,
            format_version=np.array(MODEL_FORMAT_VERSION),
            window=np.array(self.window),
            hidden_size=np.array(self.hidden_size),
            normalize=np.array(int(self.normalize)),
            feature_indices=np.array(idx, dtype=np.int64),
            w_x=stack.w_x,
            w_h=stack.w_h,
            b=stack.b,
            w_out=stack.w_out,
            b_out=stack.b_out,
            mean=stack.mean,
            std=stack.std,
        )

    @classmethod
    def load(cls, path: str | Path) -> "PredictorModel":
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != MODEL_FORMAT_VERSION:
                raise ValueError(f"unsupported model format version {version}")
            idx = data["feature_indices"]
            features = {}
            for k, m in enumerate(idx):
                features[int(m)] = FeatureParams(
                    w_x=data["w_x"][k].copy(),
                    w_h=data["w_h"][k].copy(),
                    b=data["b"][k].copy(),
                    w_out=data["w_out"][k].copy(),
                    b_out=float(data["b_out"][k]),
                    mean=float(data["mean"][k]),
                    std=float(data["std"][k]),
                )
            return cls(
                window=int(data["window"]),
                hidden_size=int(data["hidden_size"]),
                normalize=bool(int(data["normalize"])),
                features=features,
            )


def _windows_from_series(series: np.ndarray, d: int, t_stop: int):
    """(window, target) samples with targets at frames d .. t_stop-1."""
    targets_idx = np.arange(d, t_stop)
    windows = np.stack([series[t - d : t] for t in targets_idx])
    return windows, series[targets_idx]


def train(
    trace: CoefficientTrace, features, config: PredictorConfig
) -> PredictorModel:
    """Fit one predictor per requested feature on the first 80% of the trace.

    Normalization statistics come from the same training region; the
    trailing 20% stays untouched as held-out frames. Deterministic for a
    fixed (trace, features, seed): each feature draws its own init stream
    so a model trained on a subset matches the same features trained in a
    larger set.
    """
    feature_list = sorted(int(m) for m in features)
    if not feature_list:
        raise ValueError("features must be a non-empty index set")
    if max(feature_list) >= trace.n_features or min(feature_list) < 0:
        raise ValueError("feature index out of range")
    d = config.window
    n_train = int(np.floor(TRAIN_FRACTION * trace.n_frames))
    if n_train <= d:
        raise ValueError(
            f"trace too short to train: {trace.n_frames} frames leave no window of {d} in the training split"
        )

    params = [_init_feature(config.hidden_size, config.seed, m) for m in feature_list]
    x_all, y_all = [], []
    for k, m in enumerate(feature_list):
        series = trace.values[:, m].astype(np.float64)
        train_region = series[:n_train]
        if config.normalize:
            mu = float(np.mean(train_region))
            sigma = float(np.std(train_region))
            if sigma < 1e-8:
                sigma = 1.0  # constant channel: avoid blowing up on noise-free data
        else:
            mu, sigma = 0.0, 1.0
        params[k].mean, params[k].std = mu, sigma
        normed = (series - mu) / sigma
        w, t = _windows_from_series(normed, d, n_train)
        x_all.append(w)
        y_all.append(t)

    stack = _Stack.from_features(params)
    x = np.stack(x_all)  # (F, B, d)
    y = np.stack(y_all)  # (F, B)
    lr = config.learning_rate
    for epoch in range(config.epochs):
        loss, grads = _loss_and_grads(stack, x, y)
        if not np.all(np.isfinite(loss)):
            bad = int(np.flatnonzero(~np.isfinite(loss))[0])
            raise DivergenceError(
                f"non-finite loss for feature {feature_list[bad]} at epoch {epoch}", epoch
            )
        stack.w_x -= lr * grads["w_x"]
        stack.w_h -= lr * grads["w_h"]
        stack.b -= lr * grads["b"]
        stack.w_out -= lr * grads["w_out"]
        stack.b_out -= lr * grads["b_out"]

    trained = {}
    for k, m in enumerate(feature_list):
        trained[m] = FeatureParams(
            w_x=stack.w_x[k].copy(),
            w_h=stack.w_h[k].copy(),
            b=stack.b[k].copy(),
            w_out=stack.w_out[k].copy(),
            b_out=float(stack.b_out[k]),
            mean=float(stack.mean[k]),
            std=float(stack.std[k]),
        )
    return PredictorModel(
        window=d,
        hidden_size=config.hidden_size,
        normalize=config.normalize,
        features=trained,
    )


def extend(received: ReceivedChunk, model: PredictorModel, n: int) -> np.ndarray:
    """Autoregressive rollout for frames n_f+1 .. N of the dynamic features.

    Windows start from the dequantized received values and absorb the
    model's own predictions as the rollout advances. Returns an
    (N - n_f) x m_dyn matrix (empty when nothing needs predicting).
    """
    n_f = received.n_f
    if n < n_f:
        raise ValueError(f"N={n} smaller than received n_f={n_f}")
    steps = n - n_f
    if steps == 0 or received.m_dyn == 0:
        return np.zeros((steps, received.m_dyn), dtype=np.float64)
    d = model.window
    if n_f < d:
        raise WindowUnderfullError(
            f"rollout needs a window of {d} received frames, only {n_f} transmitted"
        )
    missing = [m for m in received.dynamic_indices if m not in model.features]
    if missing:
        raise ValueError(f"model lacks trained predictors for features {missing}")

    feats = [model.features[m] for m in received.dynamic_indices]
    stack = _Stack.from_features(feats)
    history = received.dynamic_history().T  # (m_dyn, n_f)
    window = (history[:, -d:] - stack.mean[:, None]) / stack.std[:, None]

    out = np.empty((steps, received.m_dyn), dtype=np.float64)
    for k in range(steps):
        y, _, _ = _forward(stack, window[:, None, :])
        pred = y[:, 0]
        out[k] = pred * stack.std + stack.mean
        window = np.concatenate([window[:, 1:], pred[:, None]], axis=1)
    return out


def pad_last(received: ReceivedChunk, n: int) -> np.ndarray:
    """Benchmark filler: repeat the dequantized frame-n_f row for frames n_f+1 .. N."""
    n_f = received.n_f
    if n < n_f:
        raise ValueError(f"N={n} smaller than received n_f={n_f}")
    steps = n - n_f
    if steps == 0 or received.m_dyn == 0:
        return np.zeros((steps, received.m_dyn), dtype=np.float64)
    last = received.dynamic_history()[-1]
    return np.tile(last[None, :], (steps, 1))

"""From-scratch feed-forward denoising autoencoder.

Architecture: linear input and output layers around rectified-linear
hidden layers (f(x) = max(0, x)), each hidden layer half as wide as the
input by default. Training corrupts the input with additive Gaussian
noise and applies inverted dropout after each hidden activation; the
loss is the mean squared error against the *clean* input. Optimization
is Adam with bias correction, a reduce-on-plateau learning rate, early
stopping on a held-out validation split, and best-weights restoration.

Everything runs in double precision so the analytic gradients can be
checked against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .encoding import EncodedBatch, EncodingLayout, decompose_errors

ARTIFACT_FORMAT = "tracelens-dae"
ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    max_epochs: int = 200
    early_stop_patience: int = 10
    lr: float = 0.001
    lr_plateau_patience: int = 5
    lr_factor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    dropout_rate: float = 0.5
    noise_sigma: float = 0.1
    hidden_size_ratio: float = 0.5
    n_hidden_layers: int = 2
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.noise_sigma < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("invalid training configuration")
        if self.n_hidden_layers < 1 or self.max_epochs < 1:
            raise ValueError("invalid training configuration")


@dataclass
class Network:
    """Weights/biases per layer; weights[i] has shape (fan_in, fan_out)."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def parameters(self) -> list[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def copy_weights(self):
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def set_weights(self, weights, biases):
        self.weights = [w.copy() for w in weights]
        self.biases = [b.copy() for b in biases]


def init_network(layer_sizes, rng: np.random.Generator) -> Network:
    """Glorot-uniform initialization; biases start at zero."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(layer_sizes=tuple(layer_sizes), weights=weights, biases=biases)


def forward(net: Network, x: np.ndarray, mode: str = "infer",
            rng: np.random.Generator | None = None,
            noise_sigma: float = 0.0, dropout_rate: float = 0.0):
    """Run the network on a row or batch.

    Infer mode is deterministic and returns the output. Train mode adds
    Gaussian noise to the input, applies inverted dropout (masks scaled
    by 1/(1-p)) after each hidden activation, and returns (output,
    cache) with everything backward() needs.
    """
    single = x.ndim == 1
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != net.layer_sizes[0]:
        raise ValueError(
            f"input width {a.shape[1]} != network input size {net.layer_sizes[0]}")
    train = mode == "train"
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    if train and rng is None and (noise_sigma > 0 or dropout_rate > 0):
        raise ValueError("train mode needs an RNG when noise or dropout is active")

    if train and noise_sigma > 0:
        a = a + rng.normal(0.0, noise_sigma, size=a.shape)
    cache = {"input": a, "pre": [], "post": [], "masks": []}
    n_layers = len(net.weights)
    for l in range(n_layers):
        z = a @ net.weights[l] + net.biases[l]
        if l < n_layers - 1:
            a = np.maximum(z, 0.0)
            if train and dropout_rate > 0:
                mask = (rng.random(a.shape) >= dropout_rate) / (1.0 - dropout_rate)
                a = a * mask
            else:
                mask = None
            cache["pre"].append(z)
            cache["post"].append(a)
            cache["masks"].append(mask)
        else:
            a = z  # linear output layer
    cache["output"] = a
    out = a[0] if single else a
    if train:
        return out, cache
    return out


def backward(net: Network, cache: dict, target: np.ndarray):
    """Gradients of the mean squared error against the clean target.

    The loss is mean((output - target)^2) over all n*d entries, so the
    output delta is 2*(output - target)/(n*d).
    """
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    output = cache["output"]
    n, d = output.shape
    delta = 2.0 * (output - target) / (n * d)

    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for l in range(len(net.weights) - 1, -1, -1):
        a_prev = cache["post"][l - 1] if l > 0 else cache["input"]
        grads_w[l] = a_prev.T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ net.weights[l].T
            mask = cache["masks"][l - 1]
            if mask is not None:
                delta = delta * mask
            delta = delta * (cache["pre"][l - 1] > 0.0)
    return grads_w, grads_b


def adam_step(params, grads, m, v, t, lr, beta1=0.9, beta2=0.99, epsilon=1e-8):
    """One Adam update with bias correction, in place. t starts at 1."""
    if t < 1:
        raise ValueError("Adam step count starts at 1")
    for p, g, mi, vi in zip(params, grads, m, v):
        mi *= beta1
        mi += (1.0 - beta1) * g
        vi *= beta2
        vi += (1.0 - beta2) * (g * g)
        m_hat = mi / (1.0 - beta1 ** t)
        v_hat = vi / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + epsilon)
    return params


@dataclass
class TrainedNetwork:
    """Frozen network plus everything scoring needs."""

    network: Network
    layout: EncodingLayout
    config: TrainConfig
    mean_errors: dict[str, float]  # training means per resolution
    history: list[dict]            # per-epoch train/val loss and lr
    best_epoch: int

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Inference pass: no noise, no dropout."""
        return forward(self.network, x, mode="infer")

    def save(self, path) -> None:
        header = {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "layer_sizes": list(self.network.layer_sizes),
            "config": asdict(self.config),
            "layout": self.layout.to_json_obj(),
            "mean_errors": self.mean_errors,
            "history": self.history,
            "best_epoch": self.best_epoch,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8"))
            fh.write(b"\n")
            for w, b in zip(self.network.weights, self.network.biases):
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    @staticmethod
    def load(path) -> "TrainedNetwork":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            if header.get("format") != ARTIFACT_FORMAT:
                raise ValueError("not a model artifact")
            if header.get("version") != ARTIFACT_VERSION:
                raise ValueError(
                    f"unsupported artifact version {header.get('version')!r}")
            sizes = tuple(header["layer_sizes"])
            weights, biases = [], []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
                weights.append(w.reshape(fan_in, fan_out).copy())
                b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
                biases.append(b.copy())
            if fh.read(1):
                raise ValueError("trailing bytes in model artifact")
        return TrainedNetwork(
            network=Network(layer_sizes=sizes, weights=weights, biases=biases),
            layout=EncodingLayout.from_json_obj(header["layout"]),
            config=TrainConfig(**header["config"]),
            mean_errors=dict(header["mean_errors"]),
            history=list(header["history"]),
            best_epoch=int(header["best_epoch"]),
        )


def hidden_sizes(input_width: int, cfg: TrainConfig) -> list[int]:
    return [max(1, int(round(input_width * cfg.hidden_size_ratio)))] * cfg.n_hidden_layers


def train(batch: EncodedBatch, cfg: TrainConfig) -> TrainedNetwork:
    """Train the denoising autoencoder on an encoded log.

    The rows are split into a seeded train/validation holdout. Each
    epoch shuffles the training rows and steps Adam once per mini-batch.
    When the validation loss fails to improve for lr_plateau_patience
    epochs the learning rate is scaled by lr_factor; after
    early_stop_patience non-improving epochs training stops and the
    best-validation weights are restored. Finally the training-set mean
    reconstruction errors per resolution are recorded for thresholding.
    """
    X = batch.matrix
    n, d = X.shape
    if n < 2:
        raise ValueError("training needs at least 2 rows")
    rng = np.random.default_rng(cfg.seed)

    n_val = max(1, int(round(n * cfg.validation_fraction)))
    if n_val >= n:
        n_val = n - 1
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    net = init_network([d] + hidden_sizes(d, cfg) + [d], rng)
    params = net.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0
    lr = cfg.lr
    n_plateaus = 0
    best_val = np.inf
    best_state = net.copy_weights()
    best_epoch = 0
    plateau_streak = 0
    stale_streak = 0
    history: list[dict] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(train_idx)
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            clean = X[rows]
            out, cache = forward(net, clean, mode="train", rng=rng,
                                 noise_sigma=cfg.noise_sigma,
                                 dropout_rate=cfg.dropout_rate)
            loss = float(np.mean((out - clean) ** 2))
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch}; "
                    f"lr={lr}, batch rows {rows[:4]}...")
            batch_losses.append(loss)
            grads_w, grads_b = backward(net, cache, clean)
            grads = []
            for gw, gb in zip(grads_w, grads_b):
                grads.extend((gw, gb))
            t += 1
            adam_step(params, grads, m, v, t, lr=lr,
                      beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)

        val_out = forward(net, X[val_idx], mode="infer")
        val_loss = float(np.mean((val_out - X[val_idx]) ** 2))
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(batch_losses)),
            "val_loss": val_loss,
            "lr": lr,
        })
        if val_loss < best_val:
            best_val = val_loss
            best_state = net.copy_weights()
            best_epoch = epoch
            plateau_streak = 0
            stale_streak = 0
        else:
            plateau_streak += 1
            stale_streak += 1
            if plateau_streak >= cfg.lr_plateau_patience:
                n_plateaus += 1
                lr = cfg.lr * cfg.lr_factor ** n_plateaus
                plateau_streak = 0
            if stale_streak >= cfg.early_stop_patience:
                break

    net.set_weights(*best_state)

    recon = forward(net, X, mode="infer")
    slot_mse, event_mse, trace_mse = decompose_errors(X, recon, batch.layout)
    event_mask = _real_event_mask(batch)
    mean_errors = {
        "trace": float(trace_mse.mean()),
        "event": float(event_mse[event_mask].mean()),
        "attribute": float(slot_mse[event_mask].mean()),
    }
    return TrainedNetwork(network=net, layout=batch.layout, config=cfg,
                          mean_errors=mean_errors, history=history,
                          best_epoch=best_epoch)


def _real_event_mask(batch: EncodedBatch) -> np.ndarray:
    """(n, max_len) boolean mask of unpadded event positions."""
    return np.arange(batch.layout.max_len)[None, :] < batch.n_events[:, None]

"""GRU and LSTM regressors in plain numpy with hand-written BPTT.

A single recurrent layer reads an ``n1 × input_dim`` window from a zero
state; a linear head maps the final hidden state to one scalar. Training is
full-batch Adam on mean-squared error in normalized units, with inverted
dropout between the recurrent output and the head.

Weight matrices are stored ``(fan_in, hidden)`` so a pre-activation is
``x @ W + h @ U + b`` (equivalently ``Wᵀx``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import TrainingDivergedError
from .seeding import generator

logger = logging.getLogger(__name__)

CELLS = ("GRU", "LSTM")

GRU_INPUT = ("W_ir", "W_iz", "W_in")
GRU_HIDDEN = ("W_hr", "W_hz", "W_hn")
GRU_BIAS = ("b_ir", "b_iz", "b_in", "b_hr", "b_hz", "b_hn")
LSTM_INPUT = ("W_xi", "W_xf", "W_xo", "W_xg")
LSTM_HIDDEN = ("W_hi", "W_hf", "W_ho", "W_hg")
LSTM_BIAS = ("b_i", "b_f", "b_o", "b_g")
HEAD = ("w_out", "b_out")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CLIP_NORM = 5.0
FD_STEP = 1e-5


@dataclass(frozen=True)
class RnnSpec:
    cell: str = "GRU"
    input_dim: int = 19
    hidden_dim: int = 32
    dropout: float = 0.2
    learning_rate: float = 0.01
    epochs: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {CELLS}, got {self.cell!r}")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.learning_rate >= 0.0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def weight_names(cell: str) -> tuple[str, ...]:
    if cell == "GRU":
        return GRU_INPUT + GRU_HIDDEN + GRU_BIAS + HEAD
    return LSTM_INPUT + LSTM_HIDDEN + LSTM_BIAS + HEAD


def weight_shapes(spec: RnnSpec) -> dict[str, tuple[int, ...]]:
    D, H = spec.input_dim, spec.hidden_dim
    inputs, hidden, biases = (
        (GRU_INPUT, GRU_HIDDEN, GRU_BIAS) if spec.cell == "GRU" else (LSTM_INPUT, LSTM_HIDDEN, LSTM_BIAS)
    )
    shapes: dict[str, tuple[int, ...]] = {}
    shapes.update({n: (D, H) for n in inputs})
    shapes.update({n: (H, H) for n in hidden})
    shapes.update({n: (H,) for n in biases})
    shapes["w_out"] = (H,)
    shapes["b_out"] = (1,)
    return shapes


@dataclass
class RnnWeights:
    cell: str
    params: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def copy(self) -> "RnnWeights":
        return RnnWeights(self.cell, {k: np.array(v, copy=True) for k, v in self.params.items()})

    def check(self, spec: RnnSpec) -> None:
        shapes = weight_shapes(spec)
        if set(shapes) != set(self.params):
            raise ValueError(f"weight names do not match a {spec.cell} cell")
        for name, shape in shapes.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name} has shape {self.params[name].shape}, expected {shape}")
            if not np.all(np.isfinite(self.params[name])):
                raise ValueError(f"{name} has non-finite entries")

    @classmethod
    def zeros(cls, spec: RnnSpec) -> "RnnWeights":
        return cls(spec.cell, {n: np.zeros(s) for n, s in weight_shapes(spec).items()})


def init_weights(spec: RnnSpec, rng: np.random.Generator | None = None) -> RnnWeights:
    """Glorot-uniform matrices, zero biases."""
    rng = generator(spec.seed) if rng is None else rng
    params = {}
    for name, shape in weight_shapes(spec).items():
        if name == "w_out":
            limit = math.sqrt(6.0 / (spec.hidden_dim + 1))
            params[name] = rng.uniform(-limit, limit, size=shape)
        elif len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    return RnnWeights(spec.cell, params)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- single-step cells ----------------------------------------------------------

def _check_step(x, h_prev, weights: RnnWeights, input_names, hidden_names):
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    D, H = weights[input_names[0]].shape
    if x.shape[-1] != D:
        raise ValueError(f"input has {x.shape[-1]} features, cell expects {D}")
    if h_prev.shape[-1] != H:
        raise ValueError(f"hidden state has size {h_prev.shape[-1]}, cell expects {H}")
    return x, h_prev


def gru_cell(x, h_prev, weights: RnnWeights) -> np.ndarray:
    """One GRU step; ``x`` and ``h_prev`` may carry a leading batch axis."""
    x, h_prev = _check_step(x, h_prev, weights, GRU_INPUT, GRU_HIDDEN)
    p = weights.params
    r = sigmoid(x @ p["W_ir"] + p["b_ir"] + h_prev @ p["W_hr"] + p["b_hr"])
    z = sigmoid(x @ p["W_iz"] + p["b_iz"] + h_prev @ p["W_hz"] + p["b_hz"])
    n = np.tanh(x @ p["W_in"] + p["b_in"] + r * (h_prev @ p["W_hn"] + p["b_hn"]))
    return (1.0 - z) * n + z * h_prev


def lstm_cell(x, h_prev, c_prev, weights: RnnWeights) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step returning ``(h, c)``."""
    x, h_prev = _check_step(x, h_prev, weights, LSTM_INPUT, LSTM_HIDDEN)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if c_prev.shape != h_prev.shape:
        raise ValueError("cell state and hidden state shapes differ")
    p = weights.params
    i = sigmoid(x @ p["W_xi"] + h_prev @ p["W_hi"] + p["b_i"])
    f = sigmoid(x @ p["W_xf"] + h_prev @ p["W_hf"] + p["b_f"])
    o = sigmoid(x @ p["W_xo"] + h_prev @ p["W_ho"] + p["b_o"])
    g = np.tanh(x @ p["W_xg"] + h_prev @ p["W_hg"] + p["b_g"])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


# -- sequence forward / backward ------------------------------------------------

def _forward(weights: RnnWeights, X: np.ndarray):
    """Unroll over ``X`` of shape (B, T, D); returns final hidden state and a tape."""
    p = weights.params
    B, T, _ = X.shape
    H = p["w_out"].shape[0]
    h = np.zeros((B, H))
    tape = []
    if weights.cell == "GRU":
        xr = X @ p["W_ir"] + (p["b_ir"] + p["b_hr"])
        xz = X @ p["W_iz"] + (p["b_iz"] + p["b_hz"])
        xn = X @ p["W_in"] + p["b_in"]
        for t in range(T):
            r = sigmoid(xr[:, t] + h @ p["W_hr"])
            z = sigmoid(xz[:, t] + h @ p["W_hz"])
            hn = h @ p["W_hn"] + p["b_hn"]
            n = np.tanh(xn[:, t] + r * hn)
            h_new = (1.0 - z) * n + z * h
            tape.append((h, r, z, hn, n))
            h = h_new
    else:
        c = np.zeros((B, H))
        xi = X @ p["W_xi"] + p["b_i"]
        xf = X @ p["W_xf"] + p["b_f"]
        xo = X @ p["W_xo"] + p["b_o"]
        xg = X @ p["W_xg"] + p["b_g"]
        for t in range(T):
            i = sigmoid(xi[:, t] + h @ p["W_hi"])
            f = sigmoid(xf[:, t] + h @ p["W_hf"])
            o = sigmoid(xo[:, t] + h @ p["W_ho"])
            g = np.tanh(xg[:, t] + h @ p["W_hg"])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            tape.append((h, c, i, f, o, g, tc))
            h, c = o * tc, c_new
    return h, tape


def _backward(weights: RnnWeights, X: np.ndarray, tape, dh: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the recurrent weights given dL/dh_T."""
    p = weights.params
    grads = {n: np.zeros_like(v) for n, v in p.items()}
    B, T, D = X.shape
    if weights.cell == "GRU":
        da_r_all = np.empty((B, T, dh.shape[1]))
        da_z_all = np.empty_like(da_r_all)
        da_n_all = np.empty_like(da_r_all)
        for t in reversed(range(T)):
            h, r, z, hn, n = tape[t]
            dn = dh * (1.0 - z)
            dz = dh * (h - n)
            dh_prev = dh * z
            da_n = dn * (1.0 - n * n)
            dhn = da_n * r
            da_r = da_n * hn * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            grads["W_hn"] += h.T @ dhn
            grads["b_hn"] += dhn.sum(0)
            grads["W_hr"] += h.T @ da_r
            grads["W_hz"] += h.T @ da_z
            dh_prev += dhn @ p["W_hn"].T + da_r @ p["W_hr"].T + da_z @ p["W_hz"].T
            da_r_all[:, t], da_z_all[:, t], da_n_all[:, t] = da_r, da_z, da_n
            dh = dh_prev
        Xf = X.reshape(B * T, D)
        for w_name, b_names, da in (
            ("W_ir", ("b_ir", "b_hr"), da_r_all),
            ("W_iz", ("b_iz", "b_hz"), da_z_all),
            ("W_in", ("b_in",), da_n_all),
        ):
            flat = da.reshape(B * T, -1)
            grads[w_name] += Xf.T @ flat
            s = flat.sum(0)
            for b in b_names:
                grads[b] += s
    else:
        H = dh.shape[1]
        da = {g: np.empty((B, T, H)) for g in "ifog"}
        dc = np.zeros_like(dh)
        for t in reversed(range(T)):
            h, c, i, f, o, g, tc = tape[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            da_i = dc * g * i * (1.0 - i)
            da_f = dc * c * f * (1.0 - f)
            da_o = do * o * (1.0 - o)
            da_g = dc * i * (1.0 - g * g)
            dc = dc * f
            grads["W_hi"] += h.T @ da_i
            grads["W_hf"] += h.T @ da_f
            grads["W_ho"] += h.T @ da_o
            grads["W_hg"] += h.T @ da_g
            dh = da_i @ p["W_hi"].T + da_f @ p["W_hf"].T + da_o @ p["W_ho"].T + da_g @ p["W_hg"].T
            da["i"][:, t], da["f"][:, t], da["o"][:, t], da["g"][:, t] = da_i, da_f, da_o, da_g
        Xf = X.reshape(B * T, D)
        for gate in "ifog":
            flat = da[gate].reshape(B * T, -1)
            grads[f"W_x{gate}"] += Xf.T @ flat
            grads[f"b_{gate}"] += flat.sum(0)
    return grads


def loss_and_grads(
    weights: RnnWeights, X: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, dict[str, np.ndarray]]:
    """MSE of the read-out against ``y`` and its gradient for every tensor.

    ``mask`` is an inverted-dropout multiplier on the final hidden state.
    """
    p = weights.params
    h, tape = _forward(weights, X)
    hd = h if mask is None else h * mask
    pred = hd @ p["w_out"] + p["b_out"]
    err = pred - y
    loss = float(np.mean(err * err))
    dpred = 2.0 * err / err.size
    dhd = np.outer(dpred, p["w_out"])
    dh = dhd if mask is None else dhd * mask
    grads = _backward(weights, X, tape, dh)
    grads["w_out"] = hd.T @ dpred
    grads["b_out"] = np.array([dpred.sum()])
    return loss, grads


def forward_output(weights: RnnWeights, X: np.ndarray) -> np.ndarray:
    p = weights.params
    h, _ = _forward(weights, X)
    return h @ p["w_out"] + p["b_out"]


# -- model -----------------------------------------------------------------------

@dataclass
class RnnModel:
    spec: RnnSpec
    weights: RnnWeights
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: float = 0.0
    y_scale: float = 1.0
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not (np.all(self.x_scale > 0) and self.y_scale > 0):
            raise ValueError("normalization scales must be positive")


def _fit_normalization(X: np.ndarray, y: np.ndarray):
    flat = X.reshape(-1, X.shape[-1])
    x_shift = flat.mean(0)
    x_scale = flat.std(0)
    x_scale[~(x_scale > 0)] = 1.0
    y_shift = float(y.mean())
    y_scale = float(y.std())
    if not y_scale > 0:
        y_scale = 1.0
    return x_shift, x_scale, y_shift, y_scale


def _stack(samples: Sequence[tuple[np.ndarray, float]], input_dim: int) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise ValueError("at least one training sample is required")
    X = np.stack([np.asarray(w, dtype=np.float64) for w, _ in samples])
    y = np.array([float(t) for _, t in samples])
    if X.ndim != 3 or X.shape[2] != input_dim:
        raise ValueError(f"windows must be (n1, {input_dim}); got {X.shape[1:]}")
    return X, y


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale


def train(
    spec: RnnSpec,
    samples: Sequence[tuple[np.ndarray, float]],
    init: RnnWeights | None = None,
) -> RnnModel:
    """Fit a model on ``(window, target)`` pairs.

    Inputs and target are z-scored with statistics of ``samples`` only;
    the statistics are stored on the model. ``init`` warm-starts from
    existing weights instead of the seeded initialization.
    """
    X, y = _stack(samples, spec.input_dim)
    x_shift, x_scale, y_shift, y_scale = _fit_normalization(X, y)
    Xn = (X - x_shift) / x_scale
    yn = (y - y_shift) / y_scale

    rng = generator(spec.seed)
    weights = init_weights(spec, rng) if init is None else init.copy()
    weights.check(spec)
    m = {n: np.zeros_like(v) for n, v in weights.params.items()}
    v = {n: np.zeros_like(w) for n, w in weights.params.items()}
    keep = 1.0 - spec.dropout
    history: list[float] = []
    for epoch in range(1, spec.epochs + 1):
        mask = None
        if spec.dropout > 0:
            mask = (rng.random((Xn.shape[0], spec.hidden_dim)) < keep) / keep
        loss, grads = loss_and_grads(weights, Xn, yn, mask)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        history.append(loss)
        if spec.learning_rate == 0.0:
            continue
        _clip(grads, CLIP_NORM)
        c1 = 1.0 - ADAM_BETA1**epoch
        c2 = 1.0 - ADAM_BETA2**epoch
        for name, w in weights.params.items():
            g = grads[name]
            m[name] = ADAM_BETA1 * m[name] + (1.0 - ADAM_BETA1) * g
            v[name] = ADAM_BETA2 * v[name] + (1.0 - ADAM_BETA2) * g * g
            step = spec.learning_rate * (m[name] / c1) / (np.sqrt(v[name] / c2) + ADAM_EPS)
            w -= step
    for name, w in weights.params.items():
        if not np.all(np.isfinite(w)):
            raise TrainingDivergedError(spec.epochs, float("nan"))
    return RnnModel(spec, weights, x_shift, x_scale, y_shift, y_scale, history)


def training_mse(model: RnnModel, samples: Sequence[tuple[np.ndarray, float]]) -> float:
    """MSE in normalized target units, no dropout."""
    X, y = _stack(samples, model.spec.input_dim)
    out = forward_output(model.weights, (X - model.x_shift) / model.x_scale)
    yn = (y - model.y_shift) / model.y_scale
    return float(np.mean((out - yn) ** 2))


def predict(model: RnnModel, window) -> float:
    """Price-unit prediction for a single ``n1 × input_dim`` window."""
    W = np.asarray(window, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != model.spec.input_dim:
        raise ValueError(f"window must be (n1, {model.spec.input_dim}), got {W.shape}")
    out = forward_output(model.weights, ((W - model.x_shift) / model.x_scale)[None])
    return float(out[0] * model.y_scale + model.y_shift)


# -- gradient check --------------------------------------------------------------

def gradient_check(
    spec: RnnSpec,
    sample: tuple[np.ndarray, float],
    tolerance: float = 1e-4,
    weights: RnnWeights | None = None,
) -> float:
    """Largest relative error between BPTT and central-difference gradients.

    Each tensor's error is ``‖g_bptt − g_fd‖ / (‖g_bptt‖ + ‖g_fd‖)`` (zero
    when both vanish). Every scalar entry of every weight and bias is
    perturbed by ±1e-5. Dropout is not applied. When ``weights`` is omitted
    a seeded point is drawn with small random biases as well.
    """
    if weights is None:
        rng = generator(spec.seed)
        weights = init_weights(spec, rng)
        for name, w in weights.params.items():
            if name.startswith("b"):
                weights.params[name] = np.asarray(w + rng.normal(0.0, 0.1, size=w.shape))
    weights = weights.copy()
    window, target = sample
    X = np.asarray(window, dtype=np.float64)[None]
    y = np.array([float(target)])
    _, analytic = loss_and_grads(weights, X, y)

    worst = 0.0
    for name, w in weights.params.items():
        numeric = np.zeros_like(w)
        flat, nflat = w.reshape(-1), numeric.reshape(-1)
        for idx in range(w.size):
            base = flat[idx]
            flat[idx] = base + FD_STEP
            up = _loss_only(weights, X, y)
            flat[idx] = base - FD_STEP
            down = _loss_only(weights, X, y)
            flat[idx] = base
            nflat[idx] = (up - down) / (2 * FD_STEP)
        a = analytic[name]
        denom = float(np.linalg.norm(a) + np.linalg.norm(numeric))
        err = float(np.linalg.norm(a - numeric)) / denom if denom > 0 else 0.0
        if err > tolerance:
            logger.warning("gradient check: %s relative error %.3e exceeds %.1e", name, err, tolerance)
        worst = max(worst, err)
    return worst


def _loss_only(weights: RnnWeights, X: np.ndarray, y: np.ndarray) -> float:
    out = forward_output(weights, X)
    return float(np.mean((out - y) ** 2))


# -- persistence -----------------------------------------------------------------

def save_model(model: RnnModel, path: str | Path) -> Path:
    """Plain-text model file: one header line, then one line per tensor."""
    s = model.spec
    lines = [
        f"rnn cell={s.cell} input_dim={s.input_dim} hidden_dim={s.hidden_dim} "
        f"dropout={s.dropout!r} learning_rate={s.learning_rate!r} epochs={s.epochs} seed={s.seed}"
    ]

    def row(name, arr):
        arr = np.asarray(arr, dtype=np.float64)
        shape = "x".join(str(d) for d in arr.shape)
        return f"{name} {shape} " + " ".join(repr(float(v)) for v in arr.reshape(-1))

    for name in weight_names(s.cell):
        lines.append(row(name, model.weights[name]))
    lines.append(row("x_shift", model.x_shift))
    lines.append(row("x_scale", model.x_scale))
    lines.append(row("y_norm", [model.y_shift, model.y_scale]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_model(path: str | Path) -> RnnModel:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    head = text[0].split()
    if head[0] != "rnn":
        raise ValueError(f"{path}: not a model file")
    kv = dict(item.split("=", 1) for item in head[1:])
    spec = RnnSpec(
        cell=kv["cell"],
        input_dim=int(kv["input_dim"]),
        hidden_dim=int(kv["hidden_dim"]),
        dropout=float(kv["dropout"]),
        learning_rate=float(kv["learning_rate"]),
        epochs=int(kv["epochs"]),
        seed=int(kv["seed"]),
    )
    tensors = {}
    for line in text[1:]:
        name, shape, *vals = line.split()
        arr = np.array([float(v) for v in vals])
        dims = tuple(int(d) for d in shape.split("x"))
        tensors[name] = arr.reshape(dims)
    weights = RnnWeights(spec.cell, {n: tensors[n] for n in weight_names(spec.cell)})
    weights.check(spec)
    y_shift, y_scale = tensors["y_norm"]
    return RnnModel(spec, weights, tensors["x_shift"], tensors["x_scale"], float(y_shift), float(y_scale))


def with_hyperparameters(spec: RnnSpec, **changes) -> RnnSpec:
    return replace(spec, **changes)

"""Causal convolutional predictor of the next distilled codebook index.

Given the distilled code-vectors of the last seven frames, the model
outputs a distribution over the 256 possible indices of the current
frame: a length-7 temporal convolution (D input channels, H output
channels), two pointwise H-to-H convolutions, a dense H-to-256 layer and
a softmax, with LeakyReLU after each convolution. Training is from
scratch: manual backpropagation, negative log-likelihood loss and Adam,
driven by teacher forcing over ground-truth index sequences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

N_INDICES = 256
WINDOW = 7
NLL_FLOOR = 1e-12

PARAM_ORDER = ("conv_w", "conv_b", "pw1_w", "pw1_b", "pw2_w", "pw2_b", "fc_w", "fc_b")


@dataclass
class PlcModel:
    conv_w: np.ndarray  # (H, WINDOW, D)
    conv_b: np.ndarray  # (H,)
    pw1_w: np.ndarray  # (H, H)
    pw1_b: np.ndarray  # (H,)
    pw2_w: np.ndarray  # (H, H)
    pw2_b: np.ndarray  # (H,)
    fc_w: np.ndarray  # (N_INDICES, H)
    fc_b: np.ndarray  # (N_INDICES,)
    alpha: float = 0.01  # LeakyReLU negative slope

    @property
    def dim(self) -> int:
        return self.conv_w.shape[2]

    @property
    def hidden(self) -> int:
        return self.conv_w.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays in a fixed order."""
        return {name: getattr(self, name) for name in PARAM_ORDER}


def new_model(dim: int, hidden: int, seed: int = 0, alpha: float = 0.01) -> PlcModel:
    """Uniform fan-in initialization, biases zero."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if hidden < 1:
        raise ValueError("hidden width must be >= 1")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return PlcModel(
        conv_w=uniform((hidden, WINDOW, dim), WINDOW * dim),
        conv_b=np.zeros(hidden),
        pw1_w=uniform((hidden, hidden), hidden),
        pw1_b=np.zeros(hidden),
        pw2_w=uniform((hidden, hidden), hidden),
        pw2_b=np.zeros(hidden),
        fc_w=uniform((N_INDICES, hidden), hidden),
        fc_b=np.zeros(N_INDICES),
        alpha=alpha,
    )


def zero_model(dim: int, hidden: int, alpha: float = 0.01) -> PlcModel:
    m = new_model(dim, hidden, seed=0, alpha=alpha)
    for p in m.params().values():
        p[:] = 0.0
    return m


def _check_windows(model: PlcModel, windows: np.ndarray) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    single = windows.ndim == 2
    if single:
        windows = windows[np.newaxis]
    if windows.shape[1:] != (WINDOW, model.dim):
        raise ValueError(
            f"window shape {windows.shape[1:]} does not match ({WINDOW}, {model.dim})"
        )
    return windows


def _leaky(x: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(x > 0.0, x, alpha * x)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(model: PlcModel, windows: np.ndarray) -> dict[str, np.ndarray]:
    h1 = np.tensordot(windows, model.conv_w, axes=([1, 2], [1, 2])) + model.conv_b
    a1 = _leaky(h1, model.alpha)
    h2 = a1 @ model.pw1_w.T + model.pw1_b
    a2 = _leaky(h2, model.alpha)
    h3 = a2 @ model.pw2_w.T + model.pw2_b
    a3 = _leaky(h3, model.alpha)
    logits = a3 @ model.fc_w.T + model.fc_b
    probs = _softmax(logits)
    return {
        "win": windows, "h1": h1, "a1": a1, "h2": h2, "a2": a2,
        "h3": h3, "a3": a3, "probs": probs,
    }


def forward(model: PlcModel, window: np.ndarray) -> np.ndarray:
    """Probability distribution over the 256 indices for one window or a batch."""
    windows = _check_windows(model, window)
    probs = _forward_cached(model, windows)["probs"]
    return probs[0] if np.asarray(window).ndim == 2 else probs


def predict_index(model: PlcModel, window: np.ndarray) -> int:
    """Most likely next index; ties break to the lowest index."""
    return int(np.argmax(forward(model, window)))


def nll_loss(probs: np.ndarray, target: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target < N_INDICES:
        raise ValueError(f"target {target} out of range")
    return float(-np.log(max(probs[target], NLL_FLOOR)))


def batch_nll(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood for a batch of distributions."""
    picked = probs[np.arange(len(targets)), targets]
    return float(np.mean(-np.log(np.maximum(picked, NLL_FLOOR))))


def backward(
    model: PlcModel,
    windows: np.ndarray,
    targets: np.ndarray,
    cache: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Analytic gradients of the mean NLL with respect to every parameter."""
    windows = _check_windows(model, windows)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if cache is None:
        cache = _forward_cached(model, windows)
    b = windows.shape[0]
    alpha = model.alpha

    g = cache["probs"].copy()
    g[np.arange(b), targets] -= 1.0
    g /= b

    grads: dict[str, np.ndarray] = {}
    grads["fc_w"] = g.T @ cache["a3"]
    grads["fc_b"] = g.sum(axis=0)
    da3 = g @ model.fc_w

    dh3 = da3 * np.where(cache["h3"] > 0.0, 1.0, alpha)
    grads["pw2_w"] = dh3.T @ cache["a2"]
    grads["pw2_b"] = dh3.sum(axis=0)
    da2 = dh3 @ model.pw2_w

    dh2 = da2 * np.where(cache["h2"] > 0.0, 1.0, alpha)
    grads["pw1_w"] = dh2.T @ cache["a1"]
    grads["pw1_b"] = dh2.sum(axis=0)
    da1 = dh2 @ model.pw1_w

    dh1 = da1 * np.where(cache["h1"] > 0.0, 1.0, alpha)
    grads["conv_w"] = np.einsum("bh,btc->htc", dh1, windows)
    grads["conv_b"] = dh1.sum(axis=0)
    return grads


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: PlcModel, lr: float = 1e-4) -> "AdamState":
        state = cls(lr=lr)
        for name, p in model.params().items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(model: PlcModel, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Standard Adam update with bias correction, applied in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in {name}, step aborted")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    params = model.params()
    for name, p in params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def windows_from_sequence(vectors: np.ndarray, pad_vector: np.ndarray) -> np.ndarray:
    """All causal 7-frame windows of a sequence, left-padded at the start.

    vectors has shape (L, D); the window for position n holds frames
    n-7..n-1, with positions before the stream start filled by
    pad_vector. Output shape (L, 7, D).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    length, dim = vectors.shape
    padded = np.concatenate([np.tile(pad_vector, (WINDOW, 1)), vectors], axis=0)
    out = np.empty((length, WINDOW, dim), dtype=np.float64)
    for t in range(WINDOW):
        out[:, t, :] = padded[t : t + length]
    return out


def build_training_set(
    sequences: list[np.ndarray],
    codebook_vectors: np.ndarray,
    pad_vector: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forcing pairs (window of true code-vectors, next index).

    Every window is built from ground-truth code-vectors, never from
    model predictions.
    """
    if not sequences:
        raise ValueError("empty corpus")
    dim = codebook_vectors.shape[1]
    if pad_vector is None:
        pad_vector = np.zeros(dim)
    xs, ys = [], []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if len(seq) < WINDOW + 1:
            raise ValueError(f"sequence length {len(seq)} < {WINDOW + 1} frames")
        vecs = codebook_vectors[seq]
        xs.append(windows_from_sequence(vecs, pad_vector))
        ys.append(seq)
    return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)


def train_teacher_forcing(
    model: PlcModel,
    sequences: list[np.ndarray],
    codebook_vectors: np.ndarray,
    iterations: int,
    batch_size: int = 128,
    lr: float = 1e-4,
    seed: int = 0,
    pad_vector: np.ndarray | None = None,
) -> np.ndarray:
    """Train in place on index sequences; returns the per-iteration NLL curve."""
    x, y = build_training_set(sequences, codebook_vectors, pad_vector)
    rng = np.random.default_rng(seed)
    state = AdamState.for_model(model, lr=lr)
    losses = np.empty(iterations, dtype=np.float64)
    for it in range(iterations):
        pick = rng.integers(0, x.shape[0], size=batch_size)
        xb, yb = x[pick], y[pick]
        cache = _forward_cached(model, xb)
        losses[it] = batch_nll(cache["probs"], yb)
        grads = backward(model, xb, yb, cache)
        adam_step(model, grads, state)
    return losses


def evaluate_nll(
    model: PlcModel,
    sequences: list[np.ndarray],
    codebook_vectors: np.ndarray,
    pad_vector: np.ndarray | None = None,
    skip_first: int = 0,
) -> tuple[float, float]:
    """Mean NLL and top-1 accuracy over all windows of the sequences.

    skip_first drops that many leading positions of each sequence, e.g.
    to exclude the cold-start frame that has no causal context.
    """
    dim = codebook_vectors.shape[1]
    pad = np.zeros(dim) if pad_vector is None else pad_vector
    xs, ys = [], []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        windows = windows_from_sequence(codebook_vectors[seq], pad)
        xs.append(windows[skip_first:])
        ys.append(seq[skip_first:])
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(ys, axis=0)
    total_nll = 0.0
    correct = 0
    for start in range(0, x.shape[0], 4096):
        xb = x[start : start + 4096]
        yb = y[start : start + 4096]
        probs = _forward_cached(model, xb)["probs"]
        total_nll += batch_nll(probs, yb) * len(yb)
        correct += int(np.sum(np.argmax(probs, axis=1) == yb))
    n = x.shape[0]
    return total_nll / n, correct / n


@dataclass
class ComplexityReport:
    param_count: int
    flops_per_frame: int
    mflops: float


def complexity_report(model: PlcModel) -> ComplexityReport:
    """Analytic parameter count and per-frame multiply-add cost.

    FLOPs count one multiply-add per weight, reported per 10 ms frame and
    as MFLOPS at 100 frames per second.
    """
    d, h = model.dim, model.hidden
    params = (d * h * WINDOW + h) + 2 * (h * h + h) + (h * N_INDICES + N_INDICES)
    macs = d * h * WINDOW + 2 * h * h + h * N_INDICES
    return ComplexityReport(
        param_count=params,
        flops_per_frame=macs,
        mflops=macs * 100.0 / 1e6,
    )


MODEL_MAGIC = b"PLCN"


def save_model(path, model: PlcModel) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", MODEL_MAGIC, model.dim, model.hidden))
        for p in model.params().values():
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_model(path, alpha: float = 0.01) -> PlcModel:
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) < 12:
            raise ValueError(f"{path}: truncated header")
        magic, dim, hidden = struct.unpack("<4sII", header)
        if magic != MODEL_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        model = zero_model(dim, hidden, alpha=alpha)
        for name, p in model.params().items():
            raw = f.read(4 * p.size)
            if len(raw) < 4 * p.size:
                raise ValueError(f"{path}: truncated data in {name}")
            p[:] = np.frombuffer(raw, dtype="<f4").reshape(p.shape)
    return model

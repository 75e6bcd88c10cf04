"""Residual vector quantization with EMA codebook training and distillation.

A residual quantizer holds up to four ordered codebooks of 256 entries
each; every stage quantizes the residual left by the previous stages and
decoding sums one code-vector per stage. A separate "distilled" codebook
of 256 entries is trained on the sums of the first two stages and serves
as the low-rate unit for both loss concealment and redundancy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

ENTRIES = 256
MAX_STAGES = 4
EMA_EPS = 1e-5
DEAD_CODE_THRESHOLD = 0.01

CODEBOOK_MAGIC = b"LVQ1"
DISTILLED_MAGIC = b"LVQD"
_HEADER = struct.Struct("<4sIII")


def _check_vectors(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != ENTRIES:
        raise ValueError(f"codebook must have {ENTRIES} rows, got shape {vectors.shape}")
    if not np.all(np.isfinite(vectors)):
        raise ValueError("codebook contains non-finite values")
    return vectors


@dataclass
class Codebook:
    """A 256-entry codebook of D-dimensional code-vectors."""

    vectors: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        self.vectors = _check_vectors(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class ResidualVQ:
    """Ordered residual stages sharing one latent dimension."""

    stages: list[Codebook]

    def __post_init__(self) -> None:
        if not 1 <= len(self.stages) <= MAX_STAGES:
            raise ValueError(f"stage count must be 1..{MAX_STAGES}, got {len(self.stages)}")
        dims = {cb.dim for cb in self.stages}
        if len(dims) != 1:
            raise ValueError(f"stages disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.stages[0].dim

    @property
    def n_stages(self) -> int:
        return len(self.stages)


@dataclass
class DistilledCodebook:
    """Single 256-entry codebook trained on two-stage code-vector sums.

    ``class_labels`` is filled by the concealment module: one small int
    per index (0 silence, 1 voiced, 2 unvoiced).
    """

    vectors: np.ndarray
    class_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.vectors = _check_vectors(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class EmaState:
    """Exponential-moving-average statistics backing a trained codebook."""

    cluster_size: np.ndarray
    cluster_sum: np.ndarray
    decay: float = 0.99

    @classmethod
    def for_codebook(cls, codebook: Codebook, decay: float = 0.99) -> "EmaState":
        # Unit counts with sums equal to the rows make the current rows a
        # fixed point of the update.
        return cls(
            cluster_size=np.ones(ENTRIES, dtype=np.float64),
            cluster_sum=codebook.vectors.copy(),
            decay=decay,
        )


def quantize_stage(latent: np.ndarray, codebook: Codebook) -> tuple[int, np.ndarray]:
    """Nearest code-vector by squared distance; ties go to the lowest index."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape != (codebook.dim,):
        raise ValueError(f"latent shape {latent.shape} does not match dim {codebook.dim}")
    idx = int(kernels.nearest_rows(latent[np.newaxis, :], codebook.vectors)[0])
    return idx, codebook.vectors[idx].copy()


def quantize_batch(latents: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Nearest-row indices for a batch of latents, shape (n,)."""
    return kernels.nearest_rows(latents, codebook.vectors)


def rvq_encode(latent: np.ndarray, rvq: ResidualVQ, n_stages: int | None = None) -> list[int]:
    """Encode one latent as one index per stage.

    Each stage quantizes the residual of the previous stages, so encoding
    with fewer stages is a prefix of encoding with more.
    """
    if n_stages is None:
        n_stages = rvq.n_stages
    if not 1 <= n_stages <= rvq.n_stages:
        raise ValueError(f"n_stages must be 1..{rvq.n_stages}, got {n_stages}")
    residual = np.asarray(latent, dtype=np.float64).copy()
    if residual.shape != (rvq.dim,):
        raise ValueError(f"latent shape {residual.shape} does not match dim {rvq.dim}")
    indices = []
    for stage in rvq.stages[:n_stages]:
        idx, vec = quantize_stage(residual, stage)
        indices.append(idx)
        residual -= vec
    return indices


def rvq_encode_batch(latents: np.ndarray, rvq: ResidualVQ, n_stages: int | None = None) -> np.ndarray:
    """Encode a batch of latents, returning indices of shape (n, n_stages)."""
    if n_stages is None:
        n_stages = rvq.n_stages
    if not 1 <= n_stages <= rvq.n_stages:
        raise ValueError(f"n_stages must be 1..{rvq.n_stages}, got {n_stages}")
    residual = np.asarray(latents, dtype=np.float64).copy()
    out = np.empty((residual.shape[0], n_stages), dtype=np.int64)
    for s, stage in enumerate(rvq.stages[:n_stages]):
        idx = quantize_batch(residual, stage)
        out[:, s] = idx
        residual -= stage.vectors[idx]
    return out


def rvq_decode(indices, rvq: ResidualVQ) -> np.ndarray:
    """Sum of one code-vector per stage for the given indices."""
    indices = list(indices)
    if len(indices) > rvq.n_stages:
        raise ValueError(f"{len(indices)} indices for {rvq.n_stages} stages")
    out = np.zeros(rvq.dim, dtype=np.float64)
    for stage, idx in zip(rvq.stages, indices):
        if not 0 <= idx < ENTRIES:
            raise ValueError(f"index {idx} out of range 0..{ENTRIES - 1}")
        out += stage.vectors[idx]
    return out


def rvq_decode_batch(indices: np.ndarray, rvq: ResidualVQ) -> np.ndarray:
    """Decode (n, n_stages) index rows to (n, dim) latents."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.min(initial=0) < 0 or indices.max(initial=0) >= ENTRIES:
        raise ValueError("index out of range")
    out = np.zeros((indices.shape[0], rvq.dim), dtype=np.float64)
    for s in range(indices.shape[1]):
        out += rvq.stages[s].vectors[indices[:, s]]
    return out


def distilled_quantize(latents: np.ndarray, distilled: DistilledCodebook) -> np.ndarray:
    """Quantize latents directly with the distilled codebook, shape (n,)."""
    return kernels.nearest_rows(np.atleast_2d(latents), distilled.vectors)


def two_stage_sum(stage_indices, rvq: ResidualVQ) -> np.ndarray:
    """Sum of the first two stages' code-vectors for one frame."""
    if rvq.n_stages < 2:
        raise ValueError("need at least 2 stages")
    i1, i2 = int(stage_indices[0]), int(stage_indices[1])
    return rvq.stages[0].vectors[i1] + rvq.stages[1].vectors[i2]


def ema_update(
    state: EmaState,
    codebook: Codebook,
    batch: np.ndarray,
    assignments: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """One EMA step over a batch already assigned by ``quantize_batch``.

    Updates state and codebook in place: counts and sums decay toward the
    batch statistics, rows are refreshed as cluster_sum / max(size, eps),
    and rows whose EMA count fell below the dead-code threshold are
    re-seeded from a random batch element. Returns the number of re-seeded
    rows.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    assignments = np.asarray(assignments, dtype=np.int64)
    counts, sums = kernels.scatter_accumulate(batch, assignments, ENTRIES)

    d = state.decay
    state.cluster_size *= d
    state.cluster_size += (1.0 - d) * counts
    state.cluster_sum *= d
    state.cluster_sum += (1.0 - d) * sums

    denom = np.maximum(state.cluster_size, EMA_EPS)
    codebook.vectors[:] = state.cluster_sum / denom[:, np.newaxis]

    dead = np.flatnonzero(state.cluster_size < DEAD_CODE_THRESHOLD)
    for row in dead:
        pick = int(rng.integers(batch.shape[0]))
        codebook.vectors[row] = batch[pick]
        state.cluster_sum[row] = batch[pick]
        state.cluster_size[row] = 1.0
    return len(dead)


def _init_vectors(data: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample 256 distinct training vectors as the initial codebook."""
    unique = np.unique(data, axis=0)
    if unique.shape[0] >= ENTRIES:
        pick = rng.choice(unique.shape[0], size=ENTRIES, replace=False)
        return unique[np.sort(pick)].copy()
    extra = rng.integers(data.shape[0], size=ENTRIES - unique.shape[0])
    return np.concatenate([unique, data[extra]], axis=0)


def train_codebook(
    data: np.ndarray,
    epochs: int,
    decay: float,
    rng: np.random.Generator,
    label: str = "",
    batch_size: int = 1024,
) -> tuple[Codebook, EmaState, list[float]]:
    """EMA-train one 256-entry codebook on shuffled minibatches.

    Minibatch updates keep per-entry EMA counts near their usage rate, so
    entries that stop attracting inputs decay below the dead-code
    threshold and get re-seeded. Returns the codebook, its EMA state and
    the per-epoch MSE curve.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] < ENTRIES:
        raise ValueError(f"need at least {ENTRIES} training vectors, got {data.shape[0]}")
    codebook = Codebook(_init_vectors(data, rng), label=label)
    state = EmaState.for_codebook(codebook, decay)
    n = data.shape[0]
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        err = 0.0
        for start in range(0, n, batch_size):
            mb = data[perm[start : start + batch_size]]
            idx = quantize_batch(mb, codebook)
            err += float(np.sum((mb - codebook.vectors[idx]) ** 2))
            ema_update(state, codebook, mb, idx, rng)
        losses.append(err / n)
    return codebook, state, losses


def train_rvq(
    corpus: np.ndarray,
    n_stages: int = MAX_STAGES,
    epochs: int = 30,
    decay: float = 0.99,
    seed: int = 0,
) -> tuple[ResidualVQ, list[list[float]]]:
    """Train residual stages sequentially, each on the previous residual."""
    if not 1 <= n_stages <= MAX_STAGES:
        raise ValueError(f"n_stages must be 1..{MAX_STAGES}")
    rng = np.random.default_rng(seed)
    residual = np.asarray(corpus, dtype=np.float64).copy()
    stages = []
    curves = []
    for s in range(n_stages):
        cb, _, losses = train_codebook(residual, epochs, decay, rng, label=f"stage{s + 1}")
        stages.append(cb)
        curves.append(losses)
        idx = quantize_batch(residual, cb)
        residual -= cb.vectors[idx]
    return ResidualVQ(stages), curves


def distillation_targets(rvq: ResidualVQ, corpus: np.ndarray) -> np.ndarray:
    """Two-stage reconstruction of every corpus latent, the distillation input."""
    if rvq.n_stages < 2:
        raise ValueError("distillation needs at least 2 stages")
    idx = rvq_encode_batch(corpus, rvq, n_stages=2)
    return rvq.stages[0].vectors[idx[:, 0]] + rvq.stages[1].vectors[idx[:, 1]]


def distill_codebook(
    rvq: ResidualVQ,
    corpus: np.ndarray,
    epochs: int = 30,
    decay: float = 0.99,
    seed: int = 0,
) -> tuple[DistilledCodebook, list[float]]:
    """Train the single distilled codebook on two-stage sums of the corpus."""
    corpus = np.asarray(corpus, dtype=np.float64)
    if corpus.shape[0] < ENTRIES:
        raise ValueError(f"corpus smaller than {ENTRIES} targets")
    targets = distillation_targets(rvq, corpus)
    rng = np.random.default_rng(seed)
    cb, _, losses = train_codebook(targets, epochs, decay, rng, label="distilled")
    return DistilledCodebook(cb.vectors), losses


def save_rvq(path, rvq: ResidualVQ) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CODEBOOK_MAGIC, rvq.n_stages, rvq.dim, ENTRIES))
        for stage in rvq.stages:
            f.write(stage.vectors.astype("<f4").tobytes())


def save_distilled(path, distilled: DistilledCodebook) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DISTILLED_MAGIC, 1, distilled.dim, ENTRIES))
        f.write(distilled.vectors.astype("<f4").tobytes())


def _load_container(path, expect_magic: bytes) -> tuple[int, int, list[np.ndarray]]:
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, n_stages, dim, entries = _HEADER.unpack(header)
        if magic != expect_magic:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {expect_magic!r}")
        if entries != ENTRIES:
            raise ValueError(f"{path}: unsupported entry count {entries}")
        stages = []
        for _ in range(n_stages):
            raw = f.read(4 * entries * dim)
            if len(raw) < 4 * entries * dim:
                raise ValueError(f"{path}: truncated vector data")
            vecs = np.frombuffer(raw, dtype="<f4").reshape(entries, dim).astype(np.float64)
            stages.append(vecs)
    return n_stages, dim, stages


def load_rvq(path) -> ResidualVQ:
    n_stages, _, stage_vecs = _load_container(path, CODEBOOK_MAGIC)
    return ResidualVQ(
        [Codebook(v, label=f"stage{s + 1}") for s, v in enumerate(stage_vecs)]
    )


def load_distilled(path) -> DistilledCodebook:
    n_stages, _, stage_vecs = _load_container(path, DISTILLED_MAGIC)
    if n_stages != 1:
        raise ValueError(f"{path}: distilled container must hold 1 stage, has {n_stages}")
    return DistilledCodebook(stage_vecs[0])

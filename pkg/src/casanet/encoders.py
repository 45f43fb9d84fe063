"""Visual (V-VAD) and audio temporal encoders, embedding replication, concat fusion.

Arrays passed between layers are channel-major ``(B, T, D)``; the public
helpers that produce ``EmbeddingBlock`` objects use the ``T x D x N`` layout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .io import EmbeddingBlock
from .tensor import Adam, Parameter, ShapeError, bce_with_logits, make_rng, sigmoid, xavier_uniform

log = logging.getLogger(__name__)

VVAD_LR = 1e-4


class Linear:
    """Affine map over the last axis."""

    def __init__(self, rng, d_in: int, d_out: int, name: str, bias: bool = True):
        self.W = Parameter(f"{name}.W", xavier_uniform(rng, d_in, d_out))
        self.b = Parameter(f"{name}.b", np.zeros(d_out)) if bias else None

    def params(self) -> list[Parameter]:
        return [self.W] if self.b is None else [self.W, self.b]

    def forward(self, x):
        y = x @ self.W.value
        if self.b is not None:
            y = y + self.b.value
        return y

    def backward(self, x, dy):
        d_in = x.shape[-1]
        self.W.grad += x.reshape(-1, d_in).T @ dy.reshape(-1, dy.shape[-1])
        if self.b is not None:
            self.b.grad += dy.reshape(-1, dy.shape[-1]).sum(axis=0)
        return dy @ self.W.value.T


@dataclass
class SpeakerEmbeddingSet:
    vectors: np.ndarray  # D_I x N, unit-norm columns
    source: str = "oracle-extractor"
    fallback: Sequence[bool] = ()

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=np.float64)
        norms = np.linalg.norm(v, axis=0)
        self.vectors = v / np.where(norms > 0, norms, 1.0)
        if not self.fallback:
            self.fallback = [False] * v.shape[1]


# ------------------------------------------------------------ visual encoder


class VisualEncoder:
    """Per-frame, per-speaker two-layer net: lip features -> visual embedding."""

    def __init__(self, rng, f_lip: int = 32, d_v: int = 64, hidden: int = 64):
        self.f_lip = f_lip
        self.d_v = d_v
        self.l1 = Linear(rng, f_lip, hidden, "vis.l1")
        self.l2 = Linear(rng, hidden, d_v, "vis.l2")
        self.frozen = False

    def params(self) -> list[Parameter]:
        return self.l1.params() + self.l2.params()

    def forward(self, x):
        if x.shape[-1] != self.f_lip:
            raise ShapeError(f"visual encoder expects {self.f_lip} lip features, got {x.shape[-1]}")
        pre = self.l1.forward(x)
        h = np.maximum(pre, 0.0)
        return self.l2.forward(h), (x, pre, h)

    def backward(self, cache, de):
        x, pre, h = cache
        dh = self.l2.backward(h, de)
        return self.l1.backward(x, dh * (pre > 0))


def visual_encode(visual: np.ndarray, encoder: VisualEncoder) -> EmbeddingBlock:
    """T x F_lip x N lip features -> E_V block (T x D_V x N)."""
    x = np.asarray(visual, dtype=np.float64).transpose(2, 0, 1)
    e, _ = encoder.forward(x)
    return EmbeddingBlock(np.ascontiguousarray(e.transpose(1, 2, 0)), kind="visual")


class VvadHead:
    def __init__(self, rng, d_v: int):
        self.lin = Linear(rng, d_v, 1, "vvad.head")

    def params(self) -> list[Parameter]:
        return self.lin.params()


def vvad_logits(encoder: VisualEncoder, head: VvadHead, x):
    e, cache = encoder.forward(x)
    return head.lin.forward(e)[..., 0], (e, cache)


def vvad_predict(encoder: VisualEncoder, head: VvadHead, visual: np.ndarray) -> np.ndarray:
    """Speech probability per frame and speaker, T x N."""
    z, _ = vvad_logits(encoder, head, np.asarray(visual, dtype=np.float64).transpose(0, 2, 1))
    return sigmoid(z)


def train_vvad(
    corpus,
    encoder: VisualEncoder,
    head: VvadHead,
    epochs: int = 10,
    lr: float = VVAD_LR,
    batch_size: int = 64,
    seed: int = 0,
) -> list[float]:
    """Train encoder + sigmoid head on per-frame speech labels, then freeze the encoder.

    Returns the mean training loss per epoch; entry 0 is the loss before any
    update.
    """
    xs, ys = [], []
    for s in corpus:
        xs.append(np.asarray(s.visual).transpose(0, 2, 1).reshape(-1, s.visual.shape[1]))
        ys.append(np.asarray(s.labels, dtype=np.float64).reshape(-1))
    if not xs or sum(len(y) for y in ys) == 0:
        raise ValueError("train_vvad: empty corpus")
    X = np.concatenate(xs)
    Y = np.concatenate(ys)
    rng = make_rng(seed)
    opt = Adam(encoder.params() + head.params(), lr)

    def full_loss() -> float:
        z, _ = vvad_logits(encoder, head, X)
        return bce_with_logits(z, Y)[0]

    history = [full_loss()]
    for epoch in range(epochs):
        order = rng.permutation(len(Y))
        total = 0.0
        for start in range(0, len(Y), batch_size):
            idx = order[start : start + batch_size]
            opt.zero_grad()
            z, (e, cache) = vvad_logits(encoder, head, X[idx])
            loss, dz = bce_with_logits(z, Y[idx])
            de = head.lin.backward(e, dz[:, None])
            encoder.backward(cache, de)
            opt.step()
            total += loss * len(idx)
        history.append(total / len(Y))
        log.info("vvad epoch %d loss %.4f", epoch + 1, history[-1])
    encoder.frozen = True
    opt.zero_grad()
    return history


# ------------------------------------------------------------- audio encoder


class Conv1d:
    """'Same'-padded temporal convolution, kernel size 3, over (B, T, C)."""

    kernel = 3

    def __init__(self, rng, c_in: int, c_out: int, name: str):
        self.c_in = c_in
        self.W = Parameter(f"{name}.W", xavier_uniform(rng, self.kernel * c_in, c_out))
        self.b = Parameter(f"{name}.b", np.zeros(c_out))

    def params(self) -> list[Parameter]:
        return [self.W, self.b]

    def _unfold(self, x):
        pad = np.pad(x, ((0, 0), (1, 1), (0, 0)))
        t = x.shape[1]
        return np.concatenate([pad[:, k : k + t] for k in range(self.kernel)], axis=-1)

    def forward(self, x):
        cols = self._unfold(x)
        return cols @ self.W.value + self.b.value, cols

    def backward(self, cols, dy):
        c = self.c_in
        self.W.grad += cols.reshape(-1, cols.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
        self.b.grad += dy.reshape(-1, dy.shape[-1]).sum(axis=0)
        dcols = dy @ self.W.value.T
        t = dy.shape[1]
        dpad = np.zeros((dy.shape[0], t + 2, c))
        for k in range(self.kernel):
            dpad[:, k : k + t] += dcols[..., k * c : (k + 1) * c]
        return dpad[:, 1:-1]


class AudioEncoder:
    """Standardisation, two ReLU temporal convolutions, linear projection to D_A."""

    def __init__(self, rng, n_in: int = 40, channels: int = 64, d_a: int = 64):
        self.n_in = n_in
        self.d_a = d_a
        self.conv1 = Conv1d(rng, n_in, channels, "aud.conv1")
        self.conv2 = Conv1d(rng, channels, channels, "aud.conv2")
        self.proj = Linear(rng, channels, d_a, "aud.proj")
        self.mean = np.zeros(n_in)
        self.std = np.ones(n_in)

    def params(self) -> list[Parameter]:
        return self.conv1.params() + self.conv2.params() + self.proj.params()

    def fit_standardizer(self, frames: np.ndarray) -> None:
        frames = np.asarray(frames).reshape(-1, self.n_in)
        self.mean = frames.mean(axis=0)
        self.std = np.maximum(frames.std(axis=0), 1e-6)

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"audio encoder expects {self.n_in} features, got {x.shape[-1]}")
        if x.shape[1] < Conv1d.kernel:
            raise ShapeError(f"audio encoder needs at least {Conv1d.kernel} frames, got {x.shape[1]}")
        xs = (x - self.mean) / self.std
        p1, c1 = self.conv1.forward(xs)
        h1 = np.maximum(p1, 0.0)
        p2, c2 = self.conv2.forward(h1)
        h2 = np.maximum(p2, 0.0)
        return self.proj.forward(h2), (c1, p1, c2, p2, h2)

    def backward(self, cache, dy):
        c1, p1, c2, p2, h2 = cache
        dh2 = self.proj.backward(h2, dy)
        dh1 = self.conv2.backward(c2, dh2 * (p2 > 0))
        self.conv1.backward(c1, dh1 * (p1 > 0))


def audio_encode(pooled: np.ndarray, encoder: AudioEncoder) -> np.ndarray:
    """T x 40 pooled features -> T x D_A."""
    y, _ = encoder.forward(np.asarray(pooled, dtype=np.float64)[None])
    return y[0]


# --------------------------------------------------------------- replication


def replicate_audio(e: np.ndarray, n: int) -> EmbeddingBlock:
    e = np.asarray(e, dtype=np.float64)
    return EmbeddingBlock(np.repeat(e[:, :, None], n, axis=2), kind="audio")


def replicate_speaker(s: SpeakerEmbeddingSet | np.ndarray, t: int) -> EmbeddingBlock:
    v = s.vectors if isinstance(s, SpeakerEmbeddingSet) else np.asarray(s, dtype=np.float64)
    return EmbeddingBlock(np.repeat(v[None, :, :], t, axis=0), kind="speaker")


def _data(b) -> np.ndarray:
    return b.data if isinstance(b, EmbeddingBlock) else np.asarray(b, dtype=np.float64)


def baseline_concat_fuse(audio, visual, speaker) -> np.ndarray:
    """Concatenate (audio, visual, speaker) blocks along the feature axis."""
    a, v, i = _data(audio), _data(visual), _data(speaker)
    if not (a.shape[0] == v.shape[0] == i.shape[0] and a.shape[2] == v.shape[2] == i.shape[2]):
        raise ShapeError(f"concat fuse: T/N mismatch among {a.shape}, {v.shape}, {i.shape}")
    return np.concatenate([a, v, i], axis=1)

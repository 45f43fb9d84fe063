"""Cross-attention / self-attention embedding fusion and the decoder head.

Attention runs along time, independently for every speaker channel: the
channel axis is a batch axis. Streams are ``(B, T, D)`` with ``B`` the number
of (block, speaker) channels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .encoders import AudioEncoder, Linear, VisualEncoder, VvadHead, vvad_predict
from .tensor import Parameter, ShapeError, bce_with_logits, make_rng, softmax_rows, softmax_rows_backward, xavier_uniform


@dataclass
class CasaConfig:
    d_a: int = 64
    d_v: int = 64
    d_i: int = 32
    d_model: int = 64
    heads: int = 4
    frames: int = 200
    n_max: int = 4
    dec_hidden: int = 64
    f_lip: int = 32
    vis_hidden: int = 64
    n_mels: int = 40
    aud_channels: int = 64
    fusion: str = "casa"  # or "concat"

    def __post_init__(self) -> None:
        dims = (self.d_a, self.d_v, self.d_i, self.d_model, self.heads, self.frames, self.n_max, self.dec_hidden)
        if min(dims) <= 0:
            raise ValueError("all CASA dimensions must be positive")
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.fusion not in ("casa", "concat"):
            raise ValueError(f"unknown fusion {self.fusion!r}")

    @property
    def fused_width(self) -> int:
        return self.d_a + self.d_v + self.d_i


class MultiHeadAttention:
    """softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated, then W_O."""

    def __init__(self, rng, d_q: int, d_kv: int, d_model: int, heads: int, d_out: int, name: str):
        if d_model % heads:
            raise ShapeError(f"{name}: d_model={d_model} not divisible by heads={heads}")
        self.heads = heads
        self.d_q, self.d_kv, self.d_out = d_q, d_kv, d_out
        self.W_Q = Parameter(f"{name}.W_Q", xavier_uniform(rng, d_q, d_model))
        self.W_K = Parameter(f"{name}.W_K", xavier_uniform(rng, d_kv, d_model))
        self.W_V = Parameter(f"{name}.W_V", xavier_uniform(rng, d_kv, d_model))
        self.W_O = Parameter(f"{name}.W_O", xavier_uniform(rng, d_model, d_out))

    def params(self) -> list[Parameter]:
        return [self.W_Q, self.W_K, self.W_V, self.W_O]

    def _split(self, x):
        b, t, d = x.shape
        return x.reshape(b, t, self.heads, d // self.heads).transpose(0, 2, 1, 3)

    @staticmethod
    def _merge(x):
        b, h, t, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)

    def forward(self, xq, xkv):
        if xq.shape[-1] != self.d_q or xkv.shape[-1] != self.d_kv:
            raise ShapeError(
                f"attention expects query width {self.d_q} and key/value width {self.d_kv}, "
                f"got {xq.shape[-1]} and {xkv.shape[-1]}"
            )
        if xq.shape[:2] != xkv.shape[:2]:
            raise ShapeError(f"query {xq.shape} and key/value {xkv.shape} disagree on channels/frames")
        q = self._split(xq @ self.W_Q.value)
        k = self._split(xkv @ self.W_K.value)
        v = self._split(xkv @ self.W_V.value)
        scale = 1.0 / np.sqrt(q.shape[-1])
        probs = softmax_rows((q @ k.transpose(0, 1, 3, 2)) * scale)
        o = self._merge(probs @ v)
        return o @ self.W_O.value, (xq, xkv, q, k, v, probs, o, scale)

    def backward(self, cache, dy):
        xq, xkv, q, k, v, probs, o, scale = cache
        dq_in, dkv_in = xq.shape[-1], xkv.shape[-1]
        self.W_O.grad += o.reshape(-1, o.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
        do = self._split(dy @ self.W_O.value.T)
        dprobs = do @ v.transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ do
        dscores = softmax_rows_backward(probs, dprobs, scale)
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dq, dk, dv = self._merge(dq), self._merge(dk), self._merge(dv)
        self.W_Q.grad += xq.reshape(-1, dq_in).T @ dq.reshape(-1, dq.shape[-1])
        self.W_K.grad += xkv.reshape(-1, dkv_in).T @ dk.reshape(-1, dk.shape[-1])
        self.W_V.grad += xkv.reshape(-1, dkv_in).T @ dv.reshape(-1, dv.shape[-1])
        dxq = dq @ self.W_Q.value.T
        dxkv = dk @ self.W_K.value.T + dv @ self.W_V.value.T
        return dxq, dxkv


class Decoder:
    """Two feed-forward layers to two logits per (frame, speaker)."""

    def __init__(self, rng, d_in: int, hidden: int):
        self.d_in = d_in
        self.l1 = Linear(rng, d_in, hidden, "dec.l1")
        self.l2 = Linear(rng, hidden, 2, "dec.l2")

    def params(self) -> list[Parameter]:
        return self.l1.params() + self.l2.params()

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"decoder expects width {self.d_in}, got {x.shape[-1]}")
        pre = self.l1.forward(x)
        h = np.maximum(pre, 0.0)
        return self.l2.forward(h), (x, pre, h)

    def backward(self, cache, dlogits):
        x, pre, h = cache
        dh = self.l2.backward(h, dlogits)
        return self.l1.backward(x, dh * (pre > 0))


def build_audio_stream(audio, speaker) -> np.ndarray:
    """Concatenate audio and speaker streams along features: T x (D_A + D_I) x N."""
    a = audio.data if hasattr(audio, "data") else np.asarray(audio)
    i = speaker.data if hasattr(speaker, "data") else np.asarray(speaker)
    if a.shape[0] != i.shape[0] or a.shape[2] != i.shape[2]:
        raise ShapeError(f"audio stream {a.shape} and speaker stream {i.shape} disagree on T/N")
    return np.concatenate([a, i], axis=1)


def _channels(x):
    """T x D x N -> (N, T, D)."""
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).transpose(2, 0, 1))


def _unchannels(x):
    return np.ascontiguousarray(x.transpose(1, 2, 0))


def cross_attend(query_stream, kv_stream, attn: MultiHeadAttention) -> np.ndarray:
    """T x D_q x N query, T x D_kv x N key/value -> T x D_out x N."""
    y, _ = attn.forward(_channels(query_stream), _channels(kv_stream))
    return _unchannels(y)


def self_attend(f_av, f_va, attn: MultiHeadAttention) -> np.ndarray:
    x = _channels(np.concatenate([np.asarray(f_av), np.asarray(f_va)], axis=1))
    y, _ = attn.forward(x, x)
    return _unchannels(x + y)


def decode(fused, decoder: Decoder) -> np.ndarray:
    """T x D x N fused stream -> T x N speech probabilities."""
    logits, _ = decoder.forward(_channels(fused))
    return softmax_rows(logits)[..., 1].T.copy()


class CasaModel:
    """Frozen V-VAD encoder + trainable audio encoder, fusion and decoder."""

    def __init__(self, config: CasaConfig | None = None, seed: int = 0):
        self.config = cfg = config or CasaConfig()
        rng = make_rng(seed)
        self.visual = VisualEncoder(rng, cfg.f_lip, cfg.d_v, cfg.vis_hidden)
        self.vvad_head = VvadHead(rng, cfg.d_v)
        self.audio = AudioEncoder(rng, cfg.n_mels, cfg.aud_channels, cfg.d_a)
        d_av = cfg.d_a + cfg.d_i
        self.ca_av = MultiHeadAttention(rng, cfg.d_v, d_av, cfg.d_model, cfg.heads, cfg.d_v, "ca_av")
        self.ca_va = MultiHeadAttention(rng, d_av, cfg.d_v, cfg.d_model, cfg.heads, d_av, "ca_va")
        w = cfg.fused_width
        self.sa = MultiHeadAttention(rng, w, w, cfg.d_model, cfg.heads, w, "sa")
        self.decoder = Decoder(rng, w, cfg.dec_hidden)

    # parameter bookkeeping -------------------------------------------------

    def frozen_params(self) -> list[Parameter]:
        return self.visual.params() + self.vvad_head.params()

    def trainable_params(self) -> list[Parameter]:
        ps = self.audio.params()
        if self.config.fusion == "casa":
            ps += self.ca_av.params() + self.ca_va.params() + self.sa.params()
        return ps + self.decoder.params()

    def all_params(self) -> list[Parameter]:
        return (
            self.frozen_params()
            + self.audio.params()
            + self.ca_av.params()
            + self.ca_va.params()
            + self.sa.params()
            + self.decoder.params()
        )

    # forward / backward -----------------------------------------------------

    def encode_visual(self, visual):
        """(K, T, F_lip, N) lip features -> (K*N, T, D_V) frozen embeddings."""
        k, t, f, n = visual.shape
        x = np.ascontiguousarray(visual.transpose(0, 3, 1, 2)).reshape(k * n, t, f)
        e, _ = self.visual.forward(x)
        return e

    def forward(self, audio, visual_emb, speaker, n: int):
        """Return decoder logits (K*N, T, 2) plus a cache for :meth:`backward`.

        ``audio`` is (K, T, n_mels) pooled features, ``visual_emb`` is
        (K*N, T, D_V) and ``speaker`` is (K, D_I, N).
        """
        cfg = self.config
        k, t, _ = audio.shape
        e_a, a_cache = self.audio.forward(audio)
        e_a_rep = np.repeat(e_a, n, axis=0)  # (K*N, T, D_A), channel-major within block
        spk = np.ascontiguousarray(speaker.transpose(0, 2, 1)).reshape(k * n, 1, cfg.d_i)
        spk_rep = np.broadcast_to(spk, (k * n, t, cfg.d_i))
        cache = {"a": a_cache, "k": k, "n": n}
        if cfg.fusion == "concat":
            fused = np.concatenate([e_a_rep, visual_emb, spk_rep], axis=-1)
        else:
            f_a = np.concatenate([e_a_rep, spk_rep], axis=-1)
            f_av, cache["ca_av"] = self.ca_av.forward(visual_emb, f_a)
            f_va, cache["ca_va"] = self.ca_va.forward(f_a, visual_emb)
            x = np.concatenate([f_av, f_va], axis=-1)
            y, cache["sa"] = self.sa.forward(x, x)
            fused = x + y
        logits, cache["dec"] = self.decoder.forward(fused)
        return logits, cache

    def backward(self, cache, dlogits) -> None:
        cfg = self.config
        dfused = self.decoder.backward(cache["dec"], dlogits)
        if cfg.fusion == "concat":
            de_a_rep = dfused[..., : cfg.d_a]
        else:
            dq, dkv = self.sa.backward(cache["sa"], dfused)
            dx = dfused + dq + dkv
            df_av, df_va = dx[..., : cfg.d_v], dx[..., cfg.d_v :]
            _, df_a1 = self.ca_av.backward(cache["ca_av"], df_av)
            df_a2, _ = self.ca_va.backward(cache["ca_va"], df_va)
            de_a_rep = (df_a1 + df_a2)[..., : cfg.d_a]
        k, n = cache["k"], cache["n"]
        de_a = de_a_rep.reshape(k, n, *de_a_rep.shape[1:]).sum(axis=1)
        self.audio.backward(cache["a"], de_a)

    def loss_and_grad(self, audio, visual_emb, speaker, labels, mask=None) -> float:
        """BCE on the speech-class probability; accumulates gradients.

        ``labels`` is (K, T, N) in [0, 1]; ``mask`` is (K, N).
        """
        k, t, n = labels.shape
        logits, cache = self.forward(audio, visual_emb, speaker, n)
        z = logits[..., 1] - logits[..., 0]
        y = np.ascontiguousarray(labels.transpose(0, 2, 1)).reshape(k * n, t)
        m = None if mask is None else np.repeat(np.asarray(mask, dtype=np.float64).reshape(k * n, 1), t, axis=1)
        loss, dz = bce_with_logits(z, y, m)
        dlogits = np.stack([-dz, dz], axis=-1)
        self.backward(cache, dlogits)
        return loss

    def predict(self, audio, visual, speaker) -> np.ndarray:
        """Speech probabilities (K, T, N) for K blocks of raw inputs."""
        k, t, _, n = visual.shape
        logits, _ = self.forward(audio, self.encode_visual(visual), speaker, n)
        s = softmax_rows(logits)[..., 1]
        return s.reshape(k, n, t).transpose(0, 2, 1)

    def vvad_probs(self, visual) -> np.ndarray:
        """Frozen V-VAD speech probabilities for a T x F_lip x N stream."""
        return vvad_predict(self.visual, self.vvad_head, visual)

    # checkpoint -------------------------------------------------------------

    def save(self, path) -> None:
        Path(path).write_bytes(encode_checkpoint(self))

    @classmethod
    def load(cls, path) -> "CasaModel":
        return decode_checkpoint(Path(path).read_bytes())


def casa_forward(model: CasaModel, audio, visual, speaker) -> np.ndarray:
    """One block: pooled audio (T x 40), lips (T x F x N), speakers (D_I x N) -> S (T x N)."""
    return model.predict(np.asarray(audio)[None], np.asarray(visual)[None], np.asarray(speaker)[None])[0]


# Checkpoint layout (little-endian):
#   b"CASA" | u32 version | u32 len | config JSON (utf-8, len bytes)
#   | f64[n_mels] audio mean | f64[n_mels] audio std
#   | per parameter in all_params() order: u32 ndim | u32 dims... | f64 data
CHECKPOINT_MAGIC = b"CASA"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(model: CasaModel) -> bytes:
    cfg = json.dumps(asdict(model.config), sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(cfg)), cfg]
    parts.append(np.asarray(model.audio.mean, dtype="<f8").tobytes())
    parts.append(np.asarray(model.audio.std, dtype="<f8").tobytes())
    for p in model.all_params():
        parts.append(struct.pack("<I", p.value.ndim) + struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        parts.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> CasaModel:
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {buf[:4]!r}")
    if len(buf) < 12:
        raise CheckpointError("checkpoint truncated inside the header")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    try:
        raw = json.loads(buf[pos : pos + n].decode())
        model = CasaModel(CasaConfig(**raw))
    except (UnicodeDecodeError, ValueError, TypeError) as exc:
        raise CheckpointError(f"unreadable checkpoint config: {exc}") from exc
    pos += n
    m = model.config.n_mels
    if pos + 16 * m > len(buf):
        raise CheckpointError(f"checkpoint truncated at byte {pos}")
    model.audio.mean = np.frombuffer(buf, "<f8", m, pos).astype(np.float64)
    pos += 8 * m
    model.audio.std = np.frombuffer(buf, "<f8", m, pos).astype(np.float64)
    pos += 8 * m
    for p in model.all_params():
        try:
            (ndim,) = struct.unpack_from("<I", buf, pos)
            shape = struct.unpack_from(f"<{ndim}I", buf, pos + 4)
        except struct.error:
            raise CheckpointError(f"checkpoint truncated at byte {pos}") from None
        pos += 4 + 4 * ndim
        if tuple(shape) != p.value.shape:
            raise CheckpointError(f"{p.name}: stored shape {shape} != expected {p.value.shape}")
        size = int(np.prod(shape))
        if pos + 8 * size > len(buf):
            raise CheckpointError(f"checkpoint truncated at byte {pos}")
        p.value = np.frombuffer(buf, "<f8", size, pos).astype(np.float64).reshape(shape)
        pos += 8 * size
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes in checkpoint")
    model.visual.frozen = True
    return model

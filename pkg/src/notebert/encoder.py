"""Transformer encoder: embeddings, multi-head self-attention, feed-forward blocks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .rng import stream
from .tensor import Tensor
from .tokenizer import TokenSequence, Vocabulary, encode, pad_batch


@dataclass
class EncoderConfig:
    num_layers: int = 4
    num_heads: int = 4
    model_dim: int = 128
    ff_dim: int = 512
    max_seq_len: int = 128
    vocab_size: int = 1000
    dropout_rate: float = 0.1
    activation: str = "gelu"
    pre_norm: bool = False
    layer_norm_eps: float = 1e-12
    init_std: float = 0.02

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    @property
    def num_attention_mechanisms(self) -> int:
        return self.num_layers * self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


ACTIVATIONS = {"gelu": T.gelu, "relu": T.relu, "tanh": T.tanh}


@dataclass
class EncoderOutput:
    hidden_states: list[Tensor]
    attention: list[dict] = field(default_factory=list)

    @property
    def last(self) -> Tensor:
        return self.hidden_states[-1]

    @property
    def h_cls(self) -> Tensor:
        """Final hidden state at position 0, shape ``[B, d_model]``."""
        return self.last[:, 0, :]


def init_params(config: EncoderConfig, seed: int) -> dict[str, Tensor]:
    rng = stream(seed, "encoder-init")
    d, f, std = config.model_dim, config.ff_dim, config.init_std

    def w(*shape):
        return T.parameter(rng.normal(0.0, std, size=shape))

    def zeros(*shape):
        return T.parameter(np.zeros(shape))

    def ones(*shape):
        return T.parameter(np.ones(shape))

    p = {
        "tok_emb": w(config.vocab_size, d),
        "seg_emb": w(2, d),
        "pos_emb": w(config.max_seq_len, d),
        "emb_ln.g": ones(d),
        "emb_ln.b": zeros(d),
    }
    for i in range(config.num_layers):
        pre = f"layer{i}."
        for name in ("q", "k", "v", "o"):
            p[pre + name + ".w"] = w(d, d)
            p[pre + name + ".b"] = zeros(d)
        p[pre + "ln1.g"] = ones(d)
        p[pre + "ln1.b"] = zeros(d)
        p[pre + "ff1.w"] = w(d, f)
        p[pre + "ff1.b"] = zeros(f)
        p[pre + "ff2.w"] = w(f, d)
        p[pre + "ff2.b"] = zeros(d)
        p[pre + "ln2.g"] = ones(d)
        p[pre + "ln2.b"] = zeros(d)
    if config.pre_norm:
        p["final_ln.g"] = ones(d)
        p["final_ln.b"] = zeros(d)
    return p


def embed(ids, segment_ids, params: dict[str, Tensor]) -> Tensor:
    """Sum of token, segment and position embeddings for ``[B, n]`` id arrays."""
    ids = np.asarray(ids)
    segment_ids = np.asarray(segment_ids)
    n = ids.shape[-1]
    if n > params["pos_emb"].shape[0]:
        raise ValueError(f"sequence length {n} exceeds max_seq_len {params['pos_emb'].shape[0]}")
    pos = T.embedding(params["pos_emb"], np.arange(n))
    return T.embedding(params["tok_emb"], ids) + T.embedding(params["seg_emb"], segment_ids) + pos


def attention(q: Tensor, k: Tensor, v: Tensor, mask_add: np.ndarray | None = None):
    """Scaled dot-product attention; returns ``(output, weights)``.

    Works on any leading batch axes. ``mask_add`` is broadcast onto the score
    matrix and holds ``MASK_VALUE`` at padded key columns.
    """
    d = q.shape[-1]
    scores = T.scale(q @ T.swap_last(k), 1.0 / math.sqrt(d))
    if mask_add is not None:
        scores = scores + T.as_tensor(mask_add, scores.dtype)
    weights = T.softmax(scores, axis=-1)
    return weights @ v, weights


def _linear(x: Tensor, params, name: str) -> Tensor:
    return x @ params[name + ".w"] + params[name + ".b"]


def _split_heads(x: Tensor, h: int) -> Tensor:
    b, n, d = x.shape
    return x.reshape(b, n, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def encoder_layer(x: Tensor, params, i: int, config: EncoderConfig, mask_add, train: bool,
                  rng: np.random.Generator | None, capture: list | None = None) -> Tensor:
    """One encoder block: multi-head attention then feed-forward, each with residual and layer norm."""
    pre = f"layer{i}."
    eps = config.layer_norm_eps
    rate = config.dropout_rate
    act = ACTIVATIONS[config.activation]

    def ln(t, name):
        return T.layer_norm(t, params[pre + name + ".g"], params[pre + name + ".b"], eps)

    h_in = ln(x, "ln1") if config.pre_norm else x
    q = _split_heads(_linear(h_in, params, pre + "q"), config.num_heads)
    k = _split_heads(_linear(h_in, params, pre + "k"), config.num_heads)
    v = _split_heads(_linear(h_in, params, pre + "v"), config.num_heads)
    ctx, weights = attention(q, k, v, mask_add)
    if capture is not None:
        capture.append({"q": q.data.copy(), "k": k.data.copy(), "weights": weights.data.copy()})
    attn = T.dropout(_linear(_merge_heads(ctx), params, pre + "o"), rate, rng, train)
    x = x + attn if config.pre_norm else ln(x + attn, "ln1")

    h_in = ln(x, "ln2") if config.pre_norm else x
    ff = _linear(act(_linear(h_in, params, pre + "ff1")), params, pre + "ff2")
    ff = T.dropout(ff, rate, rng, train)
    return x + ff if config.pre_norm else ln(x + ff, "ln2")


def padding_mask(valid: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Additive mask of shape ``[B, 1, 1, n]`` with the sentinel at padded keys."""
    valid = np.asarray(valid, dtype=bool)
    return np.where(valid, 0.0, T.MASK_VALUE).astype(dtype)[:, None, None, :]


def forward(ids, segment_ids, valid, params: dict[str, Tensor], config: EncoderConfig,
            train: bool = False, rng: np.random.Generator | None = None,
            capture_attention: bool = False) -> EncoderOutput:
    """Run the encoder over a padded batch of shape ``[B, n]``."""
    ids = np.atleast_2d(ids)
    segment_ids = np.atleast_2d(segment_ids)
    valid = np.atleast_2d(valid)
    if ids.size and ids.max() >= config.vocab_size:
        raise IndexError(f"token id {ids.max()} outside vocabulary of {config.vocab_size}")
    x = embed(ids, segment_ids, params)
    x = T.layer_norm(x, params["emb_ln.g"], params["emb_ln.b"], config.layer_norm_eps)
    x = T.dropout(x, config.dropout_rate, rng, train)
    mask_add = padding_mask(valid, x.dtype)
    hidden: list[Tensor] = []
    captured: list[dict] | None = [] if capture_attention else None
    for i in range(config.num_layers):
        x = encoder_layer(x, params, i, config, mask_add, train, rng, captured)
        hidden.append(x)
    if config.pre_norm:
        hidden[-1] = T.layer_norm(x, params["final_ln.g"], params["final_ln.b"], config.layer_norm_eps)
    return EncoderOutput(hidden, captured or [])


def forward_sequences(seqs: Sequence[TokenSequence], params, config: EncoderConfig, pad_id: int = 0,
                      train: bool = False, rng=None, capture_attention: bool = False) -> EncoderOutput:
    ids, seg, valid = pad_batch(seqs, pad_id)
    return forward(ids, seg, valid, params, config, train, rng, capture_attention)


def term_embedding(term: str, vocab: Vocabulary, params, config: EncoderConfig, last: int = 4) -> np.ndarray:
    """Average over the term's subword positions of the sum of the last four layer outputs."""
    if not term.strip():
        raise ValueError("empty term")
    if config.num_layers < last:
        raise ValueError(f"term embeddings need at least {last} layers, encoder has {config.num_layers}")
    pieces = encode(term, vocab)
    ids = [vocab.cls_id] + [vocab.id(p) for p in pieces] + [vocab.sep_id]
    ids = ids[: config.max_seq_len - 1] + [vocab.sep_id] if len(ids) > config.max_seq_len else ids
    with T.no_grad():
        out = forward(np.array([ids]), np.zeros((1, len(ids)), dtype=np.int64),
                      np.ones((1, len(ids)), dtype=bool), params, config)
    summed = sum(h.data[0] for h in out.hidden_states[-last:])
    return summed[1:len(ids) - 1].mean(axis=0)

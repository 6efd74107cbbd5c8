import math

import numpy as np
import pytest

from notebert import tensor as T
from notebert.encoder import (EncoderConfig, attention, forward, forward_sequences, init_params, padding_mask,
                              term_embedding)
from notebert.gradcheck import check_gradients
from notebert.rng import stream
from notebert.tokenizer import TokenSequence, build_vocab


def tiny(**kw):
    base = dict(num_layers=2, num_heads=2, model_dim=16, ff_dim=32, max_seq_len=12, vocab_size=30,
                dropout_rate=0.0)
    return EncoderConfig(**{**base, **kw})


def batch(rng, config, b=2, n=7, pad_last=2):
    ids = rng.integers(5, config.vocab_size, size=(b, n))
    seg = np.zeros((b, n), dtype=np.int64)
    seg[:, n // 2:] = 1
    valid = np.ones((b, n), dtype=bool)
    valid[-1, n - pad_last:] = False
    ids[~valid] = 0
    return ids, seg, valid


def test_output_shapes(rng):
    cfg = tiny()
    params = init_params(cfg, 0)
    out = forward(*batch(rng, cfg), params, cfg, capture_attention=True)
    assert len(out.hidden_states) == 2
    assert out.last.shape == (2, 7, 16) and out.h_cls.shape == (2, 16)
    assert out.attention[0]["weights"].shape == (2, 2, 7, 7)


def test_attention_matches_hand_formula(rng):
    q, k, v = (rng.normal(size=(3, 4)) for _ in range(3))
    out, w = attention(T.Tensor(q), T.Tensor(k), T.Tensor(v))
    s = q @ k.T / 2.0
    e = np.exp(s - s.max(axis=1, keepdims=True))
    ref = e / e.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(w.data, ref, atol=1e-14)
    np.testing.assert_allclose(out.data, ref @ v, atol=1e-14)


def test_padding_mask_shape_and_values():
    m = padding_mask(np.array([[True, False]]))
    assert m.shape == (1, 1, 1, 2) and m[0, 0, 0, 0] == 0 and m[0, 0, 0, 1] == T.MASK_VALUE


def test_padding_does_not_change_valid_positions(rng):
    cfg = tiny()
    params = init_params(cfg, 1)
    ids = rng.integers(5, 30, size=(1, 5))
    seg = np.zeros_like(ids)
    short = forward(ids, seg, np.ones_like(ids, dtype=bool), params, cfg).last.data
    padded_ids = np.concatenate([ids, np.zeros((1, 3), dtype=ids.dtype)], axis=1)
    valid = np.concatenate([np.ones((1, 5), bool), np.zeros((1, 3), bool)], axis=1)
    long = forward(padded_ids, np.zeros_like(padded_ids), valid, params, cfg).last.data
    np.testing.assert_allclose(long[:, :5], short, atol=1e-12)


def test_padded_keys_get_no_attention(rng):
    cfg = tiny()
    out = forward(*batch(rng, cfg), init_params(cfg, 0), cfg, capture_attention=True)
    for cap in out.attention:
        assert np.all(cap["weights"][-1, :, :, -2:] == 0.0)


def test_init_is_deterministic_and_seeded():
    a, b, c = init_params(tiny(), 4), init_params(tiny(), 4), init_params(tiny(), 5)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert not np.array_equal(a["tok_emb"].data, c["tok_emb"].data)


def test_parameter_names_and_shapes():
    cfg = tiny()
    p = init_params(cfg, 0)
    assert p["tok_emb"].shape == (30, 16) and p["pos_emb"].shape == (12, 16)
    assert p["layer1.ff1.w"].shape == (16, 32) and p["layer1.ff2.w"].shape == (32, 16)
    assert "final_ln.g" not in p
    assert "final_ln.g" in init_params(tiny(pre_norm=True), 0)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny(model_dim=15)
    with pytest.raises(ValueError):
        tiny(activation="swish")
    assert tiny().head_dim == 8 and tiny().num_attention_mechanisms == 4
    assert EncoderConfig.from_dict(tiny().to_dict()) == tiny()


def test_too_long_sequence_is_rejected(rng):
    cfg = tiny()
    ids = np.full((1, 13), 5)
    with pytest.raises(ValueError):
        forward(ids, np.zeros_like(ids), np.ones_like(ids, bool), init_params(cfg, 0), cfg)


def test_out_of_vocabulary_id_is_rejected():
    cfg = tiny()
    ids = np.array([[30]])
    with pytest.raises(IndexError):
        forward(ids, np.zeros_like(ids), np.ones_like(ids, bool), init_params(cfg, 0), cfg)


def test_dropout_only_in_training(rng):
    cfg = tiny(dropout_rate=0.3)
    params = init_params(cfg, 0)
    b = batch(rng, cfg)
    e1 = forward(*b, params, cfg).last.data
    e2 = forward(*b, params, cfg).last.data
    assert np.array_equal(e1, e2)
    t1 = forward(*b, params, cfg, train=True, rng=stream(0, "d")).last.data
    t2 = forward(*b, params, cfg, train=True, rng=stream(0, "d")).last.data
    assert np.array_equal(t1, t2) and not np.allclose(t1, e1)


@pytest.mark.parametrize("variant", [{}, {"pre_norm": True}, {"activation": "relu"}])
def test_encoder_gradients(variant, rng):
    cfg = tiny(num_layers=1, max_seq_len=6, vocab_size=12, **variant)
    params = init_params(cfg, 2)
    for p in params.values():  # move away from the symmetric init so every path carries signal
        p.data += rng.normal(0, 0.3, size=p.shape)
    ids, seg, valid = batch(rng, cfg, b=2, n=5, pad_last=1)
    w = rng.normal(size=(2, 5, 16))

    def loss():
        return T.sum_(forward(ids, seg, valid, params, cfg).last * T.Tensor(w))

    names = ["layer0.q.w", "layer0.v.b", "layer0.ff1.w", "layer0.ln2.g", "emb_ln.b", "seg_emb"]
    assert check_gradients(loss, [params[n] for n in names]) < 1e-5


def test_forward_sequences_matches_forward(vocab, toy_config, toy_params):
    seqs = [TokenSequence([2, 10, 11, 3]), TokenSequence([2, 12, 3])]
    out = forward_sequences(seqs, toy_params, toy_config)
    ref = forward(np.array([[2, 10, 11, 3]]), np.zeros((1, 4), int), np.ones((1, 4), bool), toy_params, toy_config)
    np.testing.assert_allclose(out.last.data[0], ref.last.data[0], atol=1e-12)


def test_term_embedding_averages_subwords_of_last_four_layers():
    vocab = build_vocab(["acute renal failure and chronic kidney disease"], 60)
    cfg = EncoderConfig(num_layers=4, num_heads=2, model_dim=8, ff_dim=16, max_seq_len=16, vocab_size=len(vocab),
                        dropout_rate=0.0)
    params = init_params(cfg, 0)
    emb = term_embedding("renal failure", vocab, params, cfg)
    from notebert.tokenizer import encode
    pieces = encode("renal failure", vocab)
    ids = [vocab.cls_id, *[vocab.id(p) for p in pieces], vocab.sep_id]
    out = forward(np.array([ids]), np.zeros((1, len(ids)), int), np.ones((1, len(ids)), bool), params, cfg)
    ref = sum(h.data[0] for h in out.hidden_states)[1:-1].mean(axis=0)
    np.testing.assert_allclose(emb, ref, atol=1e-12)
    assert emb.shape == (8,)


def test_term_embedding_needs_four_layers(vocab, toy_config, toy_params):
    with pytest.raises(ValueError):
        term_embedding("fever", vocab, toy_params, toy_config)
    with pytest.raises(ValueError):
        term_embedding("  ", vocab, toy_params, toy_config, last=2)

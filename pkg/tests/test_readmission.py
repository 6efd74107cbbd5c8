from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from notebert.cohort import AdmissionRecord
from notebert.encoder import init_params
from notebert.gradcheck import check_gradients
from notebert import tensor as T
from notebert.preprocess import RawNote
from notebert.readmission import (PatientPrediction, ReadmissionModel, aggregate, build_examples, finetune,
                                  head_logits, init_head, mlp_hidden_dim, predict_patient, read_predictions,
                                  select_notes, split_subsequences, sweep_c, write_predictions)
from notebert.tokenizer import TokenSequence

T0 = datetime(2150, 3, 1, tzinfo=timezone.utc)


def admission(aid="a1", los_hours=100.0, notes=()):
    rec = AdmissionRecord("p", aid, T0, T0 + timedelta(hours=los_hours))
    rec.notes = list(notes)
    return rec


def note(nid, text, hours, cat="note", aid="a1"):
    return RawNote(nid, aid, text, hours, cat)


# -- aggregation -----------------------------------------------------------------

def test_single_subsequence_is_its_own_risk():
    assert aggregate([0.37]) == pytest.approx(0.37, abs=1e-15)


def test_two_subsequences_hand_value():
    # n/c = 1: (0.8 + 0.4) / 2
    assert aggregate([0.8, 0.0], c=2) == pytest.approx(0.6, abs=1e-15)


def test_four_subsequences_hand_value():
    # n/c = 2, mean 0.3: (0.9 + 0.6) / 3
    assert aggregate([0.9, 0.1, 0.1, 0.1], c=2) == pytest.approx(0.5, abs=1e-15)


def test_many_subsequences_approach_the_mean():
    p = np.r_[0.99, np.full(9999, 0.1)]
    assert aggregate(p) == pytest.approx(p.mean(), abs=1e-3)


@pytest.mark.parametrize("probs,c", [([], 2.0), ([0.5], 0.0), ([0.5], -1.0)])
def test_aggregate_rejects(probs, c):
    with pytest.raises(ValueError):
        aggregate(probs, c)


prob_lists = st.lists(st.floats(0, 1), min_size=1, max_size=40)


@given(prob_lists, st.floats(0.1, 10))
def test_aggregate_lies_between_mean_and_max(p, c):
    r = aggregate(p, c)
    assert np.mean(p) - 1e-12 <= r <= max(p) + 1e-12


@given(prob_lists, st.integers(0, 39), st.floats(0, 1))
def test_aggregate_is_monotone_in_each_probability(p, i, bump):
    i %= len(p)
    q = list(p)
    q[i] = max(q[i], bump)
    assert aggregate(q) >= aggregate(p) - 1e-12


@given(prob_lists)
def test_aggregate_ignores_order(p):
    assert aggregate(p) == pytest.approx(aggregate(p[::-1]), abs=1e-12)


# -- subsequences ----------------------------------------------------------------

def test_split_exact_chunks(vocab):
    seqs = split_subsequences(list(range(10, 17)), 5, vocab)
    c, s = vocab.cls_id, vocab.sep_id
    assert [q.ids for q in seqs] == [[c, 10, 11, 12, s], [c, 13, 14, 15, s], [c, 16, s]]
    assert all(q.segment_ids == [0] * len(q.ids) for q in seqs)


@given(n=st.integers(1, 300), max_len=st.integers(3, 40))
def test_split_covers_every_token_once(vocab, n, max_len):
    toks = list(range(5, 5 + n))
    seqs = split_subsequences(toks, max_len, vocab)
    assert len(seqs) == -(-n // (max_len - 2))
    assert all(len(q.ids) <= max_len for q in seqs)
    assert [t for q in seqs for t in q.ids[1:-1]] == toks


def test_split_rejects_empty_and_tiny(vocab):
    with pytest.raises(ValueError):
        split_subsequences([], 8, vocab)
    with pytest.raises(ValueError):
        split_subsequences([5], 2, vocab)


# -- note selection -----------------------------------------------------------

def test_discharge_mode_prefers_summaries():
    notes = [note("n1", "x", 1.0), note("n2", "y", 90.0, "discharge_summary")]
    assert [n.note_id for n in select_notes(admission(notes=notes), "discharge")] == ["n2"]
    assert len(select_notes(admission(notes=notes[:1]), "discharge")) == 1


def test_cutoff_mode_keeps_early_notes():
    notes = [note("n1", "x", 10.0), note("n2", "y", 47.5), note("n3", "z", 60.0)]
    assert [n.note_id for n in select_notes(admission(notes=notes), 48)] == ["n1", "n2"]


def test_short_stay_is_unscorable_only_at_evaluation():
    a = admission(los_hours=40.0, notes=[note("n1", "x", 10.0)])
    assert select_notes(a, 48) is None
    assert [n.note_id for n in select_notes(a, 48, evaluation=False)] == ["n1"]


# -- head and model --------------------------------------------------------------

def test_head_shapes(toy_config):
    lin = init_head(toy_config, "linear", 0)
    assert lin["head.w"].shape == (16, 1)
    mlp = init_head(toy_config, "mlp", 0)
    h = mlp_hidden_dim(16)
    assert mlp["head.w1"].shape == (16, h) and mlp["head.w2"].shape == (h, 16) and mlp["head.w3"].shape == (16, 1)
    assert mlp_hidden_dim(768) == 2048
    with pytest.raises(ValueError):
        init_head(toy_config, "deep", 0)


@pytest.mark.parametrize("mode", ["linear", "mlp"])
def test_head_gradients(mode, toy_config, rng):
    params = init_head(toy_config, mode, 1)
    for p in params.values():
        p.data += rng.normal(0, 0.3, size=p.shape)
    x = T.parameter(rng.normal(size=(3, 16)))
    w = np.array([1.0, -0.5, 2.0])
    loss = lambda: T.sum_(head_logits(x, params) * T.Tensor(w))  # noqa: E731
    assert check_gradients(loss, [x, *params.values()]) < 1e-5


def model_for(toy_config, toy_params, vocab, mode="linear"):
    return ReadmissionModel(toy_config, vocab, {**toy_params, **init_head(toy_config, mode, 0)})


def test_probabilities_do_not_depend_on_batching(toy_config, toy_params, vocab):
    m = model_for(toy_config, toy_params, vocab)
    seqs = split_subsequences(list(range(10, 80)), 12, vocab)
    np.testing.assert_allclose(m.predict_proba(seqs, batch_size=2), m.predict_proba(seqs), atol=1e-12)


def test_predict_patient(toy_config, toy_params, vocab):
    m = model_for(toy_config, toy_params, vocab)
    text = "the patient was admitted with chest pain. " * 20
    p = predict_patient(admission(notes=[note("n1", text, 5.0, "discharge_summary")]), m)
    assert p.scorable and p.n > 1
    assert p.risk == pytest.approx(aggregate(p.probs), abs=1e-15)
    short = predict_patient(admission(los_hours=30.0, notes=[note("n1", text, 5.0)]), m, 48)
    assert not short.scorable and short.risk is None


def test_predictions_round_trip(tmp_path):
    preds = [PatientPrediction("a", [0.2, 0.9]), PatientPrediction("b", [], scorable=False)]
    write_predictions(preds, tmp_path / "p.csv")
    back = read_predictions(tmp_path / "p.csv")
    assert back["b"] is None and back["a"] == pytest.approx(aggregate([0.2, 0.9]), abs=1e-6)


def test_build_examples_label_every_subsequence(vocab):
    text = "the patient was admitted with chest pain. " * 10
    adms = [admission("a1", notes=[note("n1", text, 5.0, aid="a1")]),
            admission("a2", notes=[note("n2", "short note here.", 5.0, aid="a2")]),
            admission("a3", notes=[note("n3", text, 5.0, aid="a3")])]
    ex = build_examples(adms, {"a1": 1, "a2": 0}, vocab, 16)
    assert {lab for _, lab in ex} == {0, 1}
    assert sum(lab for _, lab in ex) > 1
    assert all(len(s.ids) <= 16 for s, _ in ex)


def _toy_task(vocab):
    # label is whether token 20 appears
    rng = np.random.default_rng(0)
    out = []
    for i in range(64):
        toks = list(rng.integers(30, 60, size=6))
        if i % 2:
            toks[rng.integers(6)] = 20
        out.append((TokenSequence([vocab.cls_id, *map(int, toks), vocab.sep_id]), i % 2))
    return out


def test_finetune_learns_and_restores_best_epoch(toy_config, toy_params, vocab):
    data = _toy_task(vocab)
    m = model_for(toy_config, toy_params, vocab, "mlp")
    res = finetune(m, data[:48], data[48:], epochs=6, batch_size=8, lr=3e-3, seed=0)
    vals = [h["validation_loss"] for h in res.history]
    assert res.best_epoch == int(np.argmin(vals))
    assert vals[res.best_epoch] < vals[0] or res.best_epoch == 0
    assert res.history[-1]["train_loss"] < res.history[0]["train_loss"]


def test_planted_keyword_is_learned_in_three_epochs(vocab):
    from notebert.encoder import EncoderConfig
    cfg = EncoderConfig(num_layers=1, num_heads=2, model_dim=16, ff_dim=32, max_seq_len=16, vocab_size=len(vocab),
                        dropout_rate=0.0)
    data = _toy_task(vocab) * 3
    m = ReadmissionModel(cfg, vocab, {**init_params(cfg, 0), **init_head(cfg, "mlp", 0)})
    finetune(m, data, data[:16], epochs=3, batch_size=8, lr=3e-3, seed=0)
    pred = m.predict_proba([s for s, _ in data]) > 0.5
    assert np.mean(pred == np.array([y for _, y in data])) >= 0.95


def test_finetune_needs_both_classes_and_validation(toy_config, toy_params, vocab):
    data = _toy_task(vocab)
    m = model_for(toy_config, toy_params, vocab)
    with pytest.raises(ValueError):
        finetune(m, [d for d in data if d[1] == 1], data[:4])
    with pytest.raises(ValueError):
        finetune(m, data, [])


def test_sweep_c_returns_a_grid_value():
    preds = [PatientPrediction("a", [0.9, 0.1, 0.1]), PatientPrediction("b", [0.5, 0.5]),
             PatientPrediction("c", [0.2])]
    best, scores = sweep_c(preds, {"a": 1, "b": 0, "c": 0})
    assert best in scores and scores[best] == max(scores.values())

import numpy as np
import pytest

from notebert.readmission import aggregate
from notebert.metrics import auroc
from notebert.rng import stream
from notebert.synth import (NEUTRAL_TERMS, RISK_TERMS, gen_synthetic_corpus, misspell, noisy_subsequence_set,
                            slot_sentence, synthetic_sentences)


def test_sentences_are_reproducible_and_styled():
    a = synthetic_sentences(20, seed=4)
    assert a == synthetic_sentences(20, seed=4)
    assert a != synthetic_sentences(20, seed=5)
    general = " ".join(synthetic_sentences(50, seed=4, style="general"))
    assert not set(general.split()) & {"patient", "admitted", "mg"}
    with pytest.raises(KeyError):
        synthetic_sentences(1, 0, style="legal")


def test_misspelling_keeps_the_prefix():
    rng = stream(0)
    for _ in range(200):
        w = misspell("decompensation", rng)
        assert w.startswith("decomp") and w != "" and abs(len(w) - 14) <= 1
    assert misspell("short", rng) == "short"


def test_slot_sentences_draw_from_the_right_list():
    rng = stream(1)
    risky, plain = slot_sentence(rng, "he", True, 0.0), slot_sentence(rng, "she", False, 0.0)
    assert any(t in risky for t in RISK_TERMS) and risky.startswith("he was seen with")
    assert any(t in plain for t in NEUTRAL_TERMS)


@pytest.fixture(scope="module")
def cohort():
    return gen_synthetic_corpus(7, 60)


def test_cohort_is_deterministic(cohort):
    again = gen_synthetic_corpus(7, 60)
    assert [n.text for n in again.notes] == [n.text for n in cohort.notes]
    assert again.labels == cohort.labels


def test_cohort_shape(cohort):
    ids = {a.admission_id for a in cohort.admissions}
    assert {n.admission_id for n in cohort.notes} == ids
    summaries = [n for n in cohort.notes if n.category == "discharge_summary"]
    assert len(summaries) == len(ids)
    assert 0 < sum(cohort.labels.values()) < len(cohort.labels)
    for a in cohort.admissions:
        for n in cohort.notes:
            if n.admission_id == a.admission_id:
                assert 0 <= n.charttime <= a.length_of_stay_hours + 0.1


def test_signal_lives_only_in_readmitted_stays(cohort):
    for n in cohort.notes:
        if any(t[:6] in n.text for t in RISK_TERMS):
            assert cohort.labels.get(n.admission_id) == 1


def test_noisy_subsequences_favor_the_blend():
    probs, y = noisy_subsequence_set(3, n_patients=600)
    assert len(probs) == len(y) == 600 and all(0 < len(p) <= 40 for p in probs)
    blend = auroc([aggregate(p) for p in probs], y)
    assert blend >= auroc([p.mean() for p in probs], y)
    assert np.all(np.concatenate(probs) <= 1)

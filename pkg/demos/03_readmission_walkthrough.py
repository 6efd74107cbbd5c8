"""Synthetic cohort to patient-level readmission scores, the same path the CLI takes.

Run: python demos/03_readmission_walkthrough.py   (a couple of minutes)
"""
# %%
import tempfile
from pathlib import Path

import numpy as np

from notebert import pipeline
from notebert.config import RunConfig
from notebert.encoder import EncoderConfig
from notebert.interpret import attention_maps, export_heatmap, top_attended
from notebert.checkpoint import load_checkpoint
from notebert.metrics import auroc
from notebert.pretrain import Stage
from notebert.readmission import aggregate
from notebert.records import write_admissions, write_notes
from notebert.synth import gen_synthetic_corpus, noisy_subsequence_set

work = Path(tempfile.mkdtemp(prefix="notebert-demo-"))
cohort = gen_synthetic_corpus(seed=7, n_patients=200)
write_notes(cohort.notes, work / "notes.jsonl")
write_admissions(cohort.admissions, work / "admissions.jsonl")
print(len(cohort.admissions), "admissions,", sum(cohort.labels.values()), "readmitted of", len(cohort.labels))
print(cohort.notes[-1].text[:300])

# %% one fold: vocabulary, short pretraining, fine-tuning (a smaller encoder than the default keeps this quick)
cfg = RunConfig(seed=0, encoder=EncoderConfig(num_layers=2, num_heads=2, model_dim=32, ff_dim=128,
                                              max_seq_len=128, vocab_size=600))
cfg.pretrain.stages = [Stage(64, 100, 16)]
cfg.finetune.epochs = 3
cfg.paths = cfg.paths.resolve(work)
pipeline.build_fold_vocab(cfg)
print("pretrain", pipeline.pretrain(cfg))
ft = pipeline.finetune(cfg)
for row in ft.history:
    print(row)

# %% patient-level scores on the test fold, against bag-of-words
preds = pipeline.predict(cfg)
labels = pipeline.load_cohort(cfg).labels
y = [labels[p.admission_id] for p in preds if p.scorable]
print("encoder AUROC", round(auroc([p.risk for p in preds if p.scorable], y), 3))
print("bag-of-words", {k: round(v, 3) for k, v in pipeline.baseline_bow(cfg).items()})

# %% why blend max and mean: a few informative chunks among many noisy ones
probs, yn = noisy_subsequence_set(seed=11)
for name, score in [("mean", np.mean), ("max", np.max), ("blend c=2", lambda p: aggregate(p, 2.0))]:
    print(f"{name:10s} AUROC {auroc([score(p) for p in probs], yn):.3f}")

# %% one head's attention over a sentence
ck = load_checkpoint(cfg.paths.finetuned)
vocab = pipeline.load_vocab_for(ck.vocab_digest, cfg.paths.vocab)
maps = attention_maps("he was seen with decompensation of copd", vocab, ck.params, ck.config)
export_heatmap(maps[0], work / "attention.csv", work / "attention.svg")
print(top_attended(maps[0], 3))
print("artifacts in", work)

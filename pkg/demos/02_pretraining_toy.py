"""Masked-token and next-segment pretraining on a small synthetic corpus.

Run: python demos/02_pretraining_toy.py   (about a minute)
"""
# %%
import numpy as np

from notebert.encoder import EncoderConfig
from notebert.pretrain import PretrainSchedule, Stage, run_pretraining
from notebert.synth import synthetic_sentences
from notebert.tokenizer import build_vocab, encode, encode_ids

sentences = synthetic_sentences(50, seed=1)
print(sentences[0])
vocab = build_vocab(sentences, 600)
print(len(vocab), "tokens;", encode(sentences[0], vocab)[:12])

# %% a small encoder, one stage
config = EncoderConfig(num_layers=2, num_heads=2, model_dim=32, ff_dim=128, max_seq_len=64,
                       vocab_size=len(vocab), dropout_rate=0.0)
schedule = PretrainSchedule([Stage(64, 600, 16)], learning_rate=2e-3, seed=0, eval_interval=100, holdout=0.0)
result = run_pretraining([encode_ids(s, vocab) for s in sentences], vocab, config, schedule)

# %% accuracy on the training segments climbs as the loss falls
for row in result.history:
    print(f"step {row['step']:4d}  loss {row['loss']:.3f}  mlm {row['mlm_accuracy']:.3f}  nsp {row['nsp_accuracy']:.3f}")
losses = np.array(result.step_losses)
print("mean loss, first vs last 50 steps:", round(losses[:50].mean(), 3), round(losses[-50:].mean(), 3))

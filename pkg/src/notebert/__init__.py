"""A small transformer encoder for clinical notes, trained from scratch on numpy.

Covers note cleaning, subword vocabularies, masked-token and next-segment
pretraining, readmission fine-tuning with patient-level risk aggregation,
ranking metrics, attention export and a bag-of-words baseline.
"""
from .encoder import EncoderConfig, forward, init_params
from .metrics import auprc, auroc, pearson, rp80
from .readmission import aggregate
from .tokenizer import Vocabulary, build_vocab

__version__ = "0.1.0"

__all__ = ["EncoderConfig", "Vocabulary", "aggregate", "auprc", "auroc", "build_vocab", "forward",
           "init_params", "pearson", "rp80"]

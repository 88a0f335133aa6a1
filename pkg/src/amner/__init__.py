"""Sequence-labeling toolkit for Amharic named-entity recognition.

Pieces: corpus formats and tagging-scheme conversion (`corpus`), SERA-style
transliteration (`corpus`), SMOTE minority oversampling (`resample`), a
BiLSTM encoder with a linear-chain CRF on top (`model`, `crf`), Adam-based
training with split/CV helpers (`train`), and entity-level evaluation in
CoNLL, MUC and SemEval styles plus Cohen's kappa (`metrics`).
"""

__version__ = "0.1.0"

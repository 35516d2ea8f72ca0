"""spokennlp: processing toolkit for ASR transcripts.

Corpus pipeline (normalization, pseudo-sentence segmentation,
deanonymization, repunctuation), BPE subword tokenizers, an arc-eager
transition parser with joint POS tagging trained under a dynamic oracle,
SLU concept tagging with CER/CVER scoring, and TF-IDF + kernel-SVM
document classification.
"""

from . import bpe, classif, corpus_io, embed, metrics, neural, normalize, parser, slu, transition

__version__ = "0.1.0"

__all__ = [
    "bpe", "classif", "corpus_io", "embed", "metrics", "neural", "normalize",
    "parser", "slu", "transition",
]

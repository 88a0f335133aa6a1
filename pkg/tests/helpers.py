"""Shared test utilities: deterministic synthetic IOB2 corpora."""

import numpy as np

from amner.corpus import Sentence, Tag, Token

ENTITY_TYPES = ("PER", "LOC", "ORG")


def synthetic_corpus(
    n_sentences: int,
    seed: int = 0,
    entity_words_per_type: int = 8,
    filler_words: int = 26,
    min_len: int = 4,
    max_len: int = 9,
) -> list[Sentence]:
    """Random IOB2 sentences over a small closed vocabulary.

    Entity tokens are drawn from per-type word lists and fillers from a
    separate list, so token identity carries the tag signal and a
    correct model can memorize the corpus.  Vocabulary size is
    3 * entity_words_per_type + filler_words; the tagset has 7 tags.
    """
    rng = np.random.default_rng(seed)
    entity_vocab = {
        etype: [f"{etype.lower()}{i}" for i in range(entity_words_per_type)]
        for etype in ENTITY_TYPES
    }
    fillers = [f"w{i}" for i in range(filler_words)]

    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(min_len, max_len))
        tokens = []
        position = 0
        while position < length:
            if position + 1 < length and rng.random() < 0.35:
                etype = ENTITY_TYPES[int(rng.integers(len(ENTITY_TYPES)))]
                span_len = int(rng.integers(1, min(3, length - position) + 1))
                words = entity_vocab[etype]
                tokens.append(Token(words[int(rng.integers(len(words)))], Tag("B", etype)))
                for _ in range(span_len - 1):
                    tokens.append(Token(words[int(rng.integers(len(words)))], Tag("I", etype)))
                position += span_len
            else:
                tokens.append(Token(fillers[int(rng.integers(len(fillers)))], Tag("O")))
                position += 1
        sentences.append(Sentence(tuple(tokens)))
    return sentences

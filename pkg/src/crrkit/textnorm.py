"""Text normalization helpers: tokenizers and content-token extraction.

Content tokens feed both the lexical entailment proxy and the rule-based
faithfulness critic, so the definition is fixed here once: lowercase,
punctuation-stripped, filtered against a built-in stopword list. No
external data, fully deterministic.
"""

from __future__ import annotations

import string

# Small fixed stopword list. Deliberately frozen in-source so that proxy
# scores never drift with an external dependency's word list.
STOPWORDS = frozenset(
    """
    a an the and or but if then else of in on at to from by with for as is
    are was were be been being am do does did have has had will would can
    could shall should may might must this that these those it its he she
    they them his her their i you we me my your our us not no nor so than
    too very s t don now
    """.split()
)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def word_tokenize(text: str) -> list[str]:
    """Split on whitespace. Inverse of ``" ".join`` for the produced tokens."""
    return text.split()


def char_tokenize(text: str) -> list[str]:
    """One token per character, whitespace included."""
    return list(text)


def tokenize(text: str, mode: str) -> list[str]:
    if mode == "word":
        return word_tokenize(text)
    if mode == "char":
        return char_tokenize(text)
    raise ValueError(f"unknown tokenizer mode: {mode!r}")


def detokenize(tokens: list[str], mode: str) -> str:
    if mode == "word":
        return " ".join(tokens)
    if mode == "char":
        return "".join(tokens)
    raise ValueError(f"unknown tokenizer mode: {mode!r}")


def content_tokens(text: str) -> set[str]:
    """Lowercased, punctuation-stripped token types minus stopwords."""
    out: set[str] = set()
    for tok in text.lower().split():
        tok = tok.translate(_PUNCT_TABLE)
        if tok and tok not in STOPWORDS:
            out.add(tok)
    return out

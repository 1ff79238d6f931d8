"""Fixed pretrained word vectors and tokenization.

Vector files use the plain text layout: one token per line followed by its
whitespace-separated components.  Vectors are frozen; they are never
updated by training.  Unknown tokens map to a zero vector.
"""

import re
from dataclasses import dataclass, field

import numpy as np

_WORD_RE = re.compile(r"[a-z0-9]+")


class EmbeddingFormatError(ValueError):
    """Vector file line does not match the expected layout."""


@dataclass
class WordEmbeddings:
    dim: int
    vectors: dict = field(default_factory=dict)
    oov: np.ndarray = None

    def __post_init__(self):
        if self.oov is None:
            self.oov = np.zeros(self.dim)

    def lookup(self, token):
        vec = self.vectors.get(token)
        return self.oov if vec is None else vec

    def __contains__(self, token):
        return token in self.vectors

    def __len__(self):
        return len(self.vectors)


def load_vectors(path, limit=None):
    """Read a text vector file; dimension is inferred from the first line."""
    emb = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if emb is None:
                if not values:
                    raise EmbeddingFormatError(f"{path}:{lineno}: no vector components")
                emb = WordEmbeddings(dim=len(values))
            if len(values) != emb.dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {emb.dim} components, got {len(values)}"
                )
            try:
                emb.vectors[token] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: bad component: {exc}") from exc
            if limit is not None and len(emb.vectors) >= limit:
                break
    if emb is None:
        raise EmbeddingFormatError(f"{path}: empty vector file")
    return emb


def tokenize(text):
    """Lowercase and split on whitespace/punctuation; underscores split too.

    "Return the SALARY!" -> [return, the, salary]; "dept_name" -> [dept, name].
    """
    return _WORD_RE.findall(text.lower())


def embed_sequence(emb, tokens):
    """One vector per token; unknown tokens fall back to the OOV vector."""
    return [emb.lookup(tok) for tok in tokens]


def embed_words_mean(emb, words):
    """Mean of the word vectors; used to squash multi-word units into one slot."""
    if not words:
        return emb.oov.copy()
    acc = np.zeros(emb.dim)
    for w in words:
        acc += emb.lookup(w)
    return acc / len(words)

"""Trainable text encoder: tokens -> pooled vector -> C^d.

Stands in for a pre-trained language model with the same output
contract: any text maps to one d-dimensional complex vector. Tokens
are embedded in 2d reals, pooled by attention against a learned query
(a stand-in for classifier-token pooling), affine-projected, and split
into real/imaginary halves.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algebra import ComplexVec, split_to_complex

CLS, PAD, UNK, SEP = 0, 1, 2, 3
_SPECIALS = ["[cls]", "[pad]", "[unk]", "[sep]"]
_TOKEN_RE = re.compile(r"\[(?:cls|pad|unk|sep)\]|[a-z0-9]+|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    """Lowercased word / digit-run / punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


@dataclass
class TokenVocab:
    tokens: list[str]

    def __post_init__(self):
        if self.tokens[:4] != _SPECIALS:
            raise ValueError("token vocab must start with the special tokens")
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def ids(self, text: str) -> np.ndarray:
        """[cls] followed by the text's token ids; unknowns map to [unk],
        padding tokens contribute nothing."""
        out = [CLS]
        out.extend(i for tok in tokenize(text)
                   if (i := self._ids.get(tok, UNK)) != PAD)
        return np.array(out, dtype=np.int64)

    def pair_ids(self, question: str, choice: str) -> np.ndarray:
        out = [CLS]
        out.extend(i for tok in tokenize(question)
                   if (i := self._ids.get(tok, UNK)) != PAD)
        out.append(SEP)
        out.extend(i for tok in tokenize(choice)
                   if (i := self._ids.get(tok, UNK)) != PAD)
        return np.array(out, dtype=np.int64)


def build_token_vocab(texts) -> TokenVocab:
    """Vocabulary over all texts, specials first then lexicographic."""
    seen = set()
    for text in texts:
        seen.update(tokenize(text))
    seen.difference_update(_SPECIALS)
    return TokenVocab(_SPECIALS + sorted(seen))


def save_token_vocab(vocab: TokenVocab, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, tok in enumerate(vocab.tokens):
            f.write(f"{tok}\t{i}\n")


def load_token_vocab(path: str | Path) -> TokenVocab:
    tokens = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                tokens.append(line.split("\t")[0])
    return TokenVocab(tokens)


@dataclass
class EncoderParams:
    tok_emb: np.ndarray   # (vocab, 2d)
    query: np.ndarray     # (2d,) attention query
    proj_W: np.ndarray    # (2d, 2d)
    proj_b: np.ndarray    # (2d,)

    @property
    def dim(self) -> int:
        return self.proj_b.shape[0] // 2

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {"tok_emb": self.tok_emb, "query": self.query,
                "proj_W": self.proj_W, "proj_b": self.proj_b}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.tok_emb.copy(), self.query.copy(),
                             self.proj_W.copy(), self.proj_b.copy())


def init_encoder(vocab_size: int, dim: int, rng: np.random.Generator,
                 scale: float = 0.1) -> EncoderParams:
    two_d = 2 * dim
    return EncoderParams(
        tok_emb=rng.normal(0.0, scale, (vocab_size, two_d)),
        query=rng.normal(0.0, scale, two_d),
        proj_W=rng.normal(0.0, scale, (two_d, two_d)),
        proj_b=np.zeros(two_d),
    )


def _forward_ids(ids: np.ndarray, params: EncoderParams):
    E = params.tok_emb[ids]
    att = E @ params.query / np.sqrt(params.query.shape[0])
    att = att - att.max()
    alpha = np.exp(att)
    alpha /= alpha.sum()
    pooled = alpha @ E
    out = params.proj_W @ pooled + params.proj_b
    cache = {"ids": ids, "E": E, "alpha": alpha, "pooled": pooled}
    return out, cache


def encode_ids(ids: np.ndarray, params: EncoderParams) -> ComplexVec:
    out, _ = _forward_ids(ids, params)
    return split_to_complex(out)


def encode(text: str, vocab: TokenVocab, params: EncoderParams) -> ComplexVec:
    """Encode one text into C^d."""
    if not text:
        raise ValueError("cannot encode empty text")
    return encode_ids(vocab.ids(text), params)


def encode_pair(question: str, choice: str, vocab: TokenVocab,
                params: EncoderParams) -> ComplexVec:
    """Encode question and choice joined by the separator token."""
    if not question or not choice:
        raise ValueError("question and choice must be non-empty")
    return encode_ids(vocab.pair_ids(question, choice), params)


def encode_answer_token(x: str, vocab: TokenVocab, params: EncoderParams) -> ComplexVec:
    if x not in ("yes", "unknown"):
        raise ValueError(f"answer token must be 'yes' or 'unknown', got {x!r}")
    return encode_ids(vocab.ids(x), params)


def backward_ids(cache: dict, d_out: np.ndarray, params: EncoderParams,
                 grads: dict[str, np.ndarray]) -> None:
    """Accumulate encoder gradients for one encoded text.

    d_out is dL/d(projected 2d output) in the real view.
    """
    E, alpha, pooled = cache["E"], cache["alpha"], cache["pooled"]
    ids = cache["ids"]
    grads["proj_W"] += np.outer(d_out, pooled)
    grads["proj_b"] += d_out
    d_pooled = params.proj_W.T @ d_out
    d_alpha = E @ d_pooled
    dE = np.outer(alpha, d_pooled)
    d_att = alpha * (d_alpha - float(alpha @ d_alpha))
    scale = 1.0 / np.sqrt(params.query.shape[0])
    grads["query"] += (E.T @ d_att) * scale
    dE += np.outer(d_att, params.query) * scale
    np.add.at(grads["tok_emb"], ids, dE)


_MAGIC = b"FQENC1\n"


def save_encoder(params: EncoderParams, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<2q", params.tok_emb.shape[0], params.dim))
        for arr in (params.tok_emb, params.query, params.proj_W, params.proj_b):
            f.write(arr.astype("<f8").tobytes())


def load_encoder(path: str | Path) -> EncoderParams:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an encoder checkpoint")
        vocab_size, dim = struct.unpack("<2q", f.read(16))
        two_d = 2 * dim

        def read(shape):
            n = int(np.prod(shape))
            return np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()

        return EncoderParams(read((vocab_size, two_d)), read((two_d,)),
                             read((two_d, two_d)), read((two_d,)))

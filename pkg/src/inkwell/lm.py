"""Language-model layer: vocabulary, distribution shaping, smoothed n-gram model.

The n-gram model is the desk-scale stand-in for a real paraphrasing model:
char-level tokens, additive smoothing, backoff to shorter contexts.  It is
immutable after training and safe for concurrent reads.  External models
plug in through the provider protocol (see provider module) and expose the
same ``next_logits`` surface.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, NumericError, TokenLookupError, TrainingError

BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"


class Vocabulary:
    """Bijective token-string <-> dense-id mapping with reserved bos/eos.

    Two tokenizers: "char" maps every character, "word" splits on whitespace
    (decode joins with single spaces).
    """

    def __init__(self, tokens: list[str], tokenizer: str = "char"):
        if tokenizer not in ("char", "word"):
            raise InvalidParameterError(f"unknown tokenizer {tokenizer!r}")
        if tokens[:2] != [BOS_TOKEN, EOS_TOKEN]:
            tokens = [BOS_TOKEN, EOS_TOKEN] + [
                t for t in tokens if t not in (BOS_TOKEN, EOS_TOKEN)
            ]
        self.tokens = list(tokens)
        self.tokenizer = tokenizer
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise InvalidParameterError("duplicate tokens in vocabulary")
        self.bos_id = 0
        self.eos_id = 1

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_text(cls, text: str, tokenizer: str = "char") -> "Vocabulary":
        """Vocabulary over every unit (character or word) seen in ``text``."""
        units = set(text) if tokenizer == "char" else set(text.split())
        return cls([BOS_TOKEN, EOS_TOKEN] + sorted(units), tokenizer=tokenizer)

    def _units(self, text: str) -> list[str]:
        return list(text) if self.tokenizer == "char" else text.split()

    def encode(self, text: str) -> list[int]:
        try:
            return [self.index[u] for u in self._units(text)]
        except KeyError as exc:
            raise TokenLookupError(f"token {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise TokenLookupError(f"token id {i} out of range")
            if i >= 2:  # drop structural bos/eos
                out.append(self.tokens[i])
        return ("" if self.tokenizer == "char" else " ").join(out)

    def to_json_dict(self) -> dict:
        return {"tokens": self.tokens, "tokenizer": self.tokenizer}


@dataclass
class TokenDistribution:
    """Probabilities over the vocabulary at one decoding step."""

    probs: np.ndarray
    logits: np.ndarray
    temperature: float = 1.0
    top_p: float = 1.0

    def validate(self) -> "TokenDistribution":
        if self.probs.min() < 0:
            raise NumericError("negative probability")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise NumericError(f"probabilities sum to {self.probs.sum()}")
        if not np.any(self.probs > 0):
            raise NumericError("empty support")
        return self

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


def shape(logits: np.ndarray, temperature: float = 1.0, top_p: float = 1.0) -> TokenDistribution:
    """Temperature-scaled softmax followed by nucleus truncation.

    Keeps the smallest prefix of probability-sorted tokens whose cumulative
    mass reaches top_p, ties broken by lower token id, then renormalizes.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("logits must be finite")
    if temperature <= 0:
        raise InvalidParameterError(f"temperature must be > 0, got {temperature}")
    if not 0.0 < top_p <= 1.0:
        raise InvalidParameterError(f"top_p must be in (0, 1], got {top_p}")

    scaled = logits / temperature
    scaled -= scaled.max()
    probs = np.exp(scaled)
    probs /= probs.sum()

    if top_p < 1.0:
        ids = np.arange(len(probs))
        order = np.lexsort((ids, -probs))  # descending prob, ascending id on ties
        csum = np.cumsum(probs[order])
        # float-safe ">= top_p": treat masses within 1e-12 as reaching the target
        cut = int(np.searchsorted(csum, top_p - 1e-12))
        keep = order[: cut + 1]
        trimmed = np.zeros_like(probs)
        trimmed[keep] = probs[keep]
        probs = trimmed / trimmed.sum()

    return TokenDistribution(probs=probs, logits=logits, temperature=temperature,
                             top_p=top_p).validate()


def entropy(dist: TokenDistribution) -> float:
    """Shannon entropy in nats with 0*log(0) := 0."""
    p = dist.probs[dist.probs > 0]
    return float(-(p * np.log(p)).sum())


class NgramModel:
    """Additively smoothed n-gram model with backoff for unseen contexts.

    P(v | ctx) = (count(ctx, v) + a) / (count(ctx) + a*|V|) at the longest
    context suffix that was observed during training, down to the unigram.
    """

    _CACHE_CAP = 131072

    def __init__(self, order: int, smoothing: float, vocab: Vocabulary,
                 counts: dict[tuple[int, ...], dict[int, int]]):
        self.order = order
        self.smoothing = smoothing
        self.vocab = vocab
        self.counts = counts
        self.totals = {ctx: sum(c.values()) for ctx, c in counts.items()}
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _context_key(self, context) -> tuple[int, ...]:
        """Longest trained suffix of ``context`` that has observations."""
        ctx = tuple(int(t) for t in context[max(0, len(context) - (self.order - 1)):])
        for start in range(len(ctx) + 1):
            sub = ctx[start:]
            if self.totals.get(sub, 0) > 0:
                return sub
        return ()

    def next_probs(self, context) -> np.ndarray:
        for t in context[max(0, len(context) - (self.order - 1)):]:
            if not 0 <= int(t) < self.vocab_size:
                raise TokenLookupError(f"token id {t} out of range")
        sub = self._context_key(context)
        cached = self._cache.get(sub)
        if cached is not None:
            return cached
        nv = self.vocab_size
        vec = np.full(nv, self.smoothing, dtype=np.float64)
        for tok, cnt in self.counts.get(sub, {}).items():
            vec[tok] += cnt
        vec /= self.totals.get(sub, 0) + self.smoothing * nv
        if len(self._cache) >= self._CACHE_CAP:
            self._cache.clear()
        self._cache[sub] = vec
        return vec

    def next_logits(self, context) -> np.ndarray:
        """Log of the smoothed conditional; always finite."""
        return np.log(self.next_probs(context))

    def argmax_next(self, context) -> int:
        """Top-1 prediction; ties resolve to the lowest token id."""
        return int(np.argmax(self.next_probs(context)))

    def save(self, path) -> None:
        counts = {
            ",".join(map(str, ctx)): {str(t): c for t, c in sorted(tok.items())}
            for ctx, tok in sorted(self.counts.items())
        }
        doc = {
            "format": "inkwell-ngram",
            "version": 1,
            "order": self.order,
            "smoothing": self.smoothing,
            "tokenizer": self.vocab.tokenizer,
            "vocab": self.vocab.tokens,
            "counts": counts,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "NgramModel":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != "inkwell-ngram":
            raise TrainingError(f"{path}: not an inkwell-ngram model file")
        counts = {
            tuple(int(x) for x in ctx.split(",") if x != ""): {
                int(t): c for t, c in toks.items()
            }
            for ctx, toks in doc["counts"].items()
        }
        vocab = Vocabulary(doc["vocab"], tokenizer=doc.get("tokenizer", "char"))
        return cls(doc["order"], doc["smoothing"], vocab, counts)


def train_ngram(corpus: list[list[int]], order: int, smoothing: float,
                vocab: Vocabulary) -> NgramModel:
    """Count transitions for every context length 0..order-1 over the corpus.

    Each sequence is padded with order-1 bos tokens and closed with eos, so
    eos mass reflects how often sequences end.
    """
    if order < 1:
        raise InvalidParameterError(f"order must be >= 1, got {order}")
    if smoothing <= 0:
        raise InvalidParameterError(f"smoothing must be > 0, got {smoothing}")
    if not corpus or all(len(seq) == 0 for seq in corpus):
        raise TrainingError("empty corpus")

    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for seq in corpus:
        if not seq:
            continue
        padded = [vocab.bos_id] * (order - 1) + list(seq) + [vocab.eos_id]
        start = order - 1
        for i in range(start, len(padded)):
            tok = padded[i]
            for length in range(order):
                ctx = tuple(padded[i - length:i])
                slot = counts.setdefault(ctx, {})
                slot[tok] = slot.get(tok, 0) + 1
    return NgramModel(order, smoothing, vocab, counts)


def train_from_texts(texts: list[str], order: int, smoothing: float,
                     tokenizer: str = "char") -> NgramModel:
    """Build a vocabulary over the texts and train on them."""
    vocab = Vocabulary.from_text("\n".join(texts), tokenizer=tokenizer)
    return train_ngram([vocab.encode(t) for t in texts], order, smoothing, vocab)


def sequence_cross_entropy(model: NgramModel, tokens, context=()) -> float:
    """Average -log P(token | prefix) in nats per token."""
    if len(tokens) == 0:
        raise InvalidParameterError("tokens must be nonempty")
    prefix = list(context)
    total = 0.0
    for tok in tokens:
        probs = model.next_probs(prefix)
        total -= math.log(float(probs[int(tok)]))
        prefix.append(int(tok))
    return total / len(tokens)

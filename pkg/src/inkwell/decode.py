"""Sequence generation under a watermark scheme.

Three decoders: nucleus sampling, beam search over the watermarked
distribution (biased or unbiased ranking, deterministic or stochastic
expansion), and multi-draft chunk selection that samples unwatermarked
continuations and commits the best-scoring one.

Watermark windows are read from their own token stream, which defaults to
the model context but can be overridden: the chunked pipeline conditions the
model on original text while chaining windows across regenerated output
only, so detection windows line up with generation windows at chunk
boundaries.  Branch randomness (beam expansion, drafts) is split by
explicit seed sequences, so parallel and serial evaluation orders agree.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigurationError, InvalidParameterError
from .lm import TokenDistribution, entropy, shape
from .prf import WatermarkKey, green_mask_at_positions
from .schemes import (
    GumbelMax,
    SchemeConfig,
    SynthID,
    gumbel_select,
    sweet_gate,
    synthid_marginal,
    synthid_tournament,
    watermarked_distribution,
)


@dataclass(frozen=True)
class Sampling:
    temperature: float = 1.0
    top_p: float = 1.0
    seed: int = 0
    stop_at_eos: bool = True

    def __post_init__(self):
        _check_shaping(self.temperature, self.top_p)


@dataclass(frozen=True)
class BeamSearch:
    beams: int = 3
    candidates: int = 3
    scoring: str = "biased"  # rank by watermarked ("biased") or original logprob
    expansion: str = "deterministic"  # or "stochastic"
    temperature: float = 1.0
    top_p: float = 1.0
    seed: int = 0
    stop_at_eos: bool = True

    def __post_init__(self):
        _check_shaping(self.temperature, self.top_p)
        if self.beams < 1 or self.candidates < 1:
            raise InvalidParameterError("beams and candidates must be >= 1")
        if self.scoring not in ("biased", "unbiased"):
            raise InvalidParameterError(f"unknown scoring {self.scoring!r}")
        if self.expansion not in ("deterministic", "stochastic"):
            raise InvalidParameterError(f"unknown expansion {self.expansion!r}")


@dataclass(frozen=True)
class WaterMax:
    chunk_len: int = 8
    drafts: int = 4
    temperature: float = 1.0
    top_p: float = 1.0
    seed: int = 0
    stop_at_eos: bool = True

    def __post_init__(self):
        _check_shaping(self.temperature, self.top_p)
        if self.chunk_len < 1 or self.drafts < 1:
            raise InvalidParameterError("chunk_len and drafts must be >= 1")


DecoderConfig = Sampling | BeamSearch | WaterMax

_DECODER_TAGS = {"sampling": Sampling, "beam": BeamSearch, "watermax": WaterMax}


def _check_shaping(temperature, top_p):
    if temperature <= 0:
        raise InvalidParameterError(f"temperature must be > 0, got {temperature}")
    if not 0.0 < top_p <= 1.0:
        raise InvalidParameterError(f"top_p must be in (0, 1], got {top_p}")


def decoder_tag(cfg: DecoderConfig) -> str:
    for tag, cls in _DECODER_TAGS.items():
        if isinstance(cfg, cls):
            return tag
    raise ConfigurationError(f"unknown decoder {cfg!r}")


def decoder_to_dict(cfg: DecoderConfig) -> dict:
    out = {"decoder": decoder_tag(cfg)}
    for f in fields(cfg):
        out[f.name] = getattr(cfg, f.name)
    return out


def decoder_from_dict(doc: dict) -> DecoderConfig:
    doc = dict(doc)
    tag = doc.pop("decoder", None)
    cls = _DECODER_TAGS.get(tag)
    if cls is None:
        raise ConfigurationError(
            f"unknown decoder {tag!r}; expected one of {sorted(_DECODER_TAGS)}"
        )
    valid = {f.name for f in fields(cls)}
    unknown = set(doc) - valid
    if unknown:
        raise ConfigurationError(f"unknown {tag} parameters: {sorted(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigurationError(f"bad {tag} config: {exc}") from exc


@dataclass
class StepTrace:
    token: int
    p_orig: np.ndarray
    p_wm: np.ndarray | None
    entropy: float
    applied: bool


@dataclass
class ChunkTrace:
    draft_tokens: list[list[int]]
    draft_scores: list[float]
    chosen: int


@dataclass
class GenerationTrace:
    tokens: list[int]
    steps: list[StepTrace]
    chunks: list[ChunkTrace] = field(default_factory=list)

    def __post_init__(self):
        if len(self.tokens) != len(self.steps):
            raise InvalidParameterError("trace length must equal output length")


class _WindowStream:
    """Sliding watermark window over its own token stream, bos-padded."""

    def __init__(self, key: WatermarkKey, initial, bos_id: int = 0):
        self._k = key.k
        self._bos = bos_id
        self._tail = list(initial)[-key.k:]

    def window(self) -> tuple[int, ...]:
        pad = self._k - len(self._tail)
        if pad > 0:
            return tuple([self._bos] * pad + self._tail)
        return tuple(self._tail)

    def push(self, token: int) -> None:
        self._tail.append(token)
        if len(self._tail) > self._k:
            self._tail.pop(0)


def _eos_id(model) -> int | None:
    vocab = getattr(model, "vocab", None)
    return vocab.eos_id if vocab is not None else None


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; explicit so results are stable across numpy versions."""
    edges = np.cumsum(probs)
    return int(min(np.searchsorted(edges, rng.random() * edges[-1], side="right"),
                   len(probs) - 1))


def _branch_rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, *path]))


def generate_sampling(model, scheme: SchemeConfig | None, key: WatermarkKey | None,
                      context, max_len: int, cfg: Sampling,
                      watermark_context=None) -> GenerationTrace:
    """Token-by-token watermarked nucleus sampling.

    ``scheme=None`` generates plain unwatermarked text.  A configured SWEET
    threshold skips the watermark at steps whose shaped entropy is at or
    below it; those steps sample the original distribution and are marked
    unapplied in the trace.
    """
    if scheme is not None and key is None:
        raise ConfigurationError("a watermark scheme needs a key")
    rng = _branch_rng(cfg.seed, 0)
    context = [int(t) for t in context]
    wm_init = context if watermark_context is None else [int(t) for t in watermark_context]
    stream = _WindowStream(key, wm_init) if key is not None else None
    eos = _eos_id(model)
    out: list[int] = []
    steps: list[StepTrace] = []
    for _ in range(max_len):
        logits = model.next_logits(context + out)
        if scheme is None:
            p_orig = shape(logits, cfg.temperature, cfg.top_p)
            token = _sample(p_orig.probs, rng)
            steps.append(StepTrace(token, p_orig.probs, None, entropy(p_orig), False))
        else:
            window = stream.window()
            p_orig, p_wm = watermarked_distribution(
                logits, window, key, scheme, cfg.temperature, cfg.top_p
            )
            step_entropy = entropy(p_orig)
            applied = scheme.sweet_tau is None or sweet_gate(p_orig, scheme.sweet_tau)
            if not applied:
                token = _sample(p_orig.probs, rng)
                wm_probs = p_orig.probs
            elif isinstance(scheme, GumbelMax):
                token = gumbel_select(p_orig, window, key)
                wm_probs = _one_hot(len(p_orig.probs), token)
            elif isinstance(scheme, SynthID):
                token = synthid_tournament(p_orig, window, key, scheme.depth, rng)
                wm_probs = _one_hot(len(p_orig.probs), token)
            else:
                token = _sample(p_wm.probs, rng)
                wm_probs = p_wm.probs
            steps.append(StepTrace(token, p_orig.probs, wm_probs, step_entropy, applied))
        out.append(token)
        if stream is not None:
            stream.push(token)
        if cfg.stop_at_eos and eos is not None and token == eos:
            break
    return GenerationTrace(tokens=out, steps=steps)


def _one_hot(n: int, idx: int) -> np.ndarray:
    v = np.zeros(n)
    v[idx] = 1.0
    return v


@dataclass
class _Beam:
    tokens: tuple[int, ...]
    logp_wm: float
    logp_orig: float
    finished: bool
    steps: list[StepTrace]
    order: int  # construction sequence, breaks exact ties at termination


def _beam_wm_distribution(p_orig: TokenDistribution, window, key: WatermarkKey,
                          scheme: SchemeConfig, logits, cfg: BeamSearch,
                          rng: np.random.Generator) -> TokenDistribution:
    if scheme.sweet_tau is not None and not sweet_gate(p_orig, scheme.sweet_tau):
        return p_orig
    if isinstance(scheme, SynthID):
        return synthid_marginal(p_orig, window, key, scheme.depth, rng)
    _, p_wm = watermarked_distribution(logits, window, key, scheme,
                                       cfg.temperature, cfg.top_p)
    return p_wm


def beam_search(model, scheme: SchemeConfig, key: WatermarkKey, context,
                max_len: int, cfg: BeamSearch,
                watermark_context=None) -> GenerationTrace:
    """Beam search expanding from the watermarked distribution.

    Each live beam proposes ``candidates`` tokens from its watermarked
    one-step distribution (top-V when deterministic, distinct weighted draws
    when stochastic); the pool is ranked by cumulative log-probability under
    the watermarked (biased) or original (unbiased) distribution.  Tournament
    sampling joins through a Monte-Carlo one-step marginal; keyed-argmax
    sampling has no distribution to expand and is rejected.
    """
    if isinstance(scheme, GumbelMax):
        raise ConfigurationError(
            "keyed-argmax sampling is a token selector with no distribution "
            "to expand; use the sampling decoder"
        )
    context = [int(t) for t in context]
    wm_init = context if watermark_context is None else [int(t) for t in watermark_context]
    eos = _eos_id(model)
    order = 0
    beams = [_Beam((), 0.0, 0.0, False, [], order)]
    for step in range(max_len):
        if all(b.finished for b in beams):
            break
        pool: list[_Beam] = []
        for beam_idx, beam in enumerate(beams):
            if beam.finished:
                pool.append(beam)
                continue
            prefix = list(beam.tokens)
            logits = model.next_logits(context + prefix)
            stream = _WindowStream(key, wm_init + prefix)
            window = stream.window()
            rng = _branch_rng(cfg.seed, step, beam_idx)
            p_orig = shape(logits, cfg.temperature, cfg.top_p)
            p_wm = _beam_wm_distribution(p_orig, window, key, scheme, logits, cfg, rng)
            step_entropy = entropy(p_orig)
            if cfg.expansion == "deterministic":
                ids = np.arange(len(p_wm.probs))
                ranked = np.lexsort((ids, -p_wm.probs))
                chosen = [int(t) for t in ranked[: cfg.candidates] if p_wm.probs[t] > 0]
            else:
                chosen = _sample_distinct(p_wm.probs, cfg.candidates, rng)
            with np.errstate(divide="ignore"):
                log_wm = np.log(p_wm.probs)
                log_orig = np.log(p_orig.probs)
            for tok in chosen:
                order += 1
                child_steps = beam.steps + [
                    StepTrace(tok, p_orig.probs, p_wm.probs, step_entropy, True)
                ]
                done = (cfg.stop_at_eos and eos is not None and tok == eos) \
                    or len(beam.tokens) + 1 >= max_len
                pool.append(_Beam(
                    beam.tokens + (tok,),
                    beam.logp_wm + float(log_wm[tok]),
                    beam.logp_orig + float(log_orig[tok]),
                    done,
                    child_steps,
                    order,
                ))
        pool = _merge_duplicates(pool, cfg.scoring)
        pool.sort(key=lambda b: (-_score(b, cfg.scoring), b.tokens))
        beams = pool[: cfg.beams]
    best = min(beams, key=lambda b: (-_score(b, cfg.scoring), b.order))
    return GenerationTrace(tokens=list(best.tokens), steps=best.steps)


def _score(beam: _Beam, scoring: str) -> float:
    return beam.logp_wm if scoring == "biased" else beam.logp_orig


def _merge_duplicates(pool: list[_Beam], scoring: str) -> list[_Beam]:
    best: dict[tuple[int, ...], _Beam] = {}
    for beam in pool:
        cur = best.get(beam.tokens)
        if cur is None or _score(beam, scoring) > _score(cur, scoring):
            best[beam.tokens] = beam
    return list(best.values())


def _sample_distinct(probs: np.ndarray, count: int, rng: np.random.Generator) -> list[int]:
    """Weighted sampling without replacement via the exponential-race trick."""
    support = np.flatnonzero(probs > 0)
    take = min(count, len(support))
    keys = np.log(probs[support]) + rng.gumbel(size=len(support))
    top = support[np.argsort(-keys, kind="stable")[:take]]
    return [int(t) for t in top]


def greencount_chunk_scorer(key: WatermarkKey, gamma: float = 0.5):
    """Chunk score = green count, windows chained through the prefix."""

    def scorer(prefix: list[int], chunk: list[int]) -> float:
        if not chunk:
            return 0.0
        stream = list(prefix) + list(chunk)
        start = len(prefix)
        bos_pad = [0] * max(0, key.k - start)
        windows = []
        for i in range(len(chunk)):
            pos = start + i
            lo = max(0, pos - key.k)
            win = bos_pad[: max(0, key.k - pos)] + stream[lo:pos]
            windows.append(win[-key.k:])
        mask = green_mask_at_positions(
            np.asarray(chunk, dtype=np.uint64),
            np.asarray(windows, dtype=np.uint64),
            key, gamma,
        )
        return float(mask.sum())

    return scorer


def watermax_generate(model, scorer, context, total_len: int,
                      cfg: WaterMax, watermark_context=None) -> GenerationTrace:
    """Chunked multi-draft selection without per-token bias.

    Every chunk draws ``drafts`` unwatermarked continuations of up to
    ``chunk_len`` tokens and commits the draft with the highest watermark
    score (ties to the first).  Selection is the only bias: the per-step
    sampling distribution of the drafts is the model's own.
    """
    context = [int(t) for t in context]
    wm_prefix = (context if watermark_context is None
                 else [int(t) for t in watermark_context])
    wm_prefix = list(wm_prefix)
    eos = _eos_id(model)
    out: list[int] = []
    steps: list[StepTrace] = []
    chunks: list[ChunkTrace] = []
    chunk_idx = 0
    while len(out) < total_len:
        length = min(cfg.chunk_len, total_len - len(out))
        draft_tokens: list[list[int]] = []
        draft_steps: list[list[StepTrace]] = []
        draft_scores: list[float] = []
        for d in range(cfg.drafts):
            rng = _branch_rng(cfg.seed, chunk_idx, d)
            toks: list[int] = []
            trs: list[StepTrace] = []
            for _ in range(length):
                logits = model.next_logits(context + out + toks)
                p_orig = shape(logits, cfg.temperature, cfg.top_p)
                token = _sample(p_orig.probs, rng)
                trs.append(StepTrace(token, p_orig.probs, None, entropy(p_orig), False))
                toks.append(token)
                if cfg.stop_at_eos and eos is not None and token == eos:
                    break
            draft_tokens.append(toks)
            draft_steps.append(trs)
            draft_scores.append(scorer(wm_prefix + out, toks))
        chosen = int(np.argmax(draft_scores))  # first max wins ties
        chunks.append(ChunkTrace(draft_tokens, draft_scores, chosen))
        out.extend(draft_tokens[chosen])
        steps.extend(draft_steps[chosen])
        chunk_idx += 1
        if cfg.stop_at_eos and eos is not None and out and out[-1] == eos:
            break
        if not draft_tokens[chosen]:
            break
    return GenerationTrace(tokens=out, steps=steps, chunks=chunks)

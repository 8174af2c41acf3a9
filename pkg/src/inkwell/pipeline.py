"""Document-level orchestration: chunking, regeneration, aggregate detection.

The desk-scale model cannot paraphrase on instruction, so regeneration is
constrained continuation: each chunk is generated conditioned on (recent
regenerated output, the original chunk), capped at the original chunk's
length.  Watermark windows chain through the regenerated stream only, so a
detector scanning the concatenated output recomputes exactly the windows
generation used, including across chunk boundaries.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decode import (
    BeamSearch,
    DecoderConfig,
    GenerationTrace,
    Sampling,
    WaterMax,
    beam_search,
    generate_sampling,
    greencount_chunk_scorer,
    watermax_generate,
)
from .detect import DetectionReport
from .errors import ConfigurationError, InvalidParameterError, ProviderError, TooShortError
from .prf import WatermarkKey
from .schemes import SchemeConfig, detection_gamma

RATIO_BOUNDS = (0.75, 1.25)

CHUNK_MODES = ("full_context", "context_aware")


@dataclass
class ChunkResult:
    start: int
    end: int
    regenerated: list[int]
    failed: bool = False


@dataclass
class Document:
    doc_id: str
    original_tokens: list[int]
    chunks: list[ChunkResult] = field(default_factory=list)
    mode: str = "context_aware"
    length_ratio: float | None = None
    ratio_ok: bool = False
    failed: bool = False

    @property
    def regenerated_tokens(self) -> list[int]:
        out: list[int] = []
        for chunk in self.chunks:
            out.extend(chunk.regenerated)
        return out


def chunk_plan(n_tokens: int, mode: str, chunk_len: int) -> list[tuple[int, int]]:
    """Token spans partitioning the original document."""
    if mode not in CHUNK_MODES:
        raise InvalidParameterError(f"unknown chunk mode {mode!r}")
    if chunk_len < 1:
        raise InvalidParameterError(f"chunk_len must be >= 1, got {chunk_len}")
    if n_tokens == 0:
        return []
    if mode == "full_context":
        return [(0, n_tokens)]
    return [(lo, min(lo + chunk_len, n_tokens)) for lo in range(0, n_tokens, chunk_len)]


def _fold_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, index]).generate_state(1)[0])


def _strip_trailing_eos(tokens: list[int], eos_id: int | None) -> list[int]:
    if eos_id is not None and tokens and tokens[-1] == eos_id:
        return tokens[:-1]
    return tokens


def _generate_chunk(model, scheme: SchemeConfig, key: WatermarkKey, context,
                    wm_context, max_len: int, decoder: DecoderConfig) -> GenerationTrace:
    if isinstance(decoder, Sampling):
        return generate_sampling(model, scheme, key, context, max_len, decoder,
                                 watermark_context=wm_context)
    if isinstance(decoder, BeamSearch):
        return beam_search(model, scheme, key, context, max_len, decoder,
                           watermark_context=wm_context)
    if isinstance(decoder, WaterMax):
        scorer = greencount_chunk_scorer(key, detection_gamma_or_half(scheme))
        return watermax_generate(model, scorer, context, max_len, decoder,
                                 watermark_context=wm_context)
    raise ConfigurationError(f"unknown decoder {decoder!r}")


def detection_gamma_or_half(scheme: SchemeConfig) -> float:
    try:
        return detection_gamma(scheme)
    except ConfigurationError:
        return 0.5


def rephrase_document(doc_id: str, tokens: list[int], model, scheme: SchemeConfig,
                      key: WatermarkKey, decoder: DecoderConfig,
                      mode: str = "context_aware", chunk_len: int = 500,
                      ctx_len: int = 1000, vocab=None) -> Document:
    """Regenerate a document chunk by chunk under the watermark.

    Context-aware mode prepends up to ctx_len of previously regenerated
    tokens as model conditioning; chunks are strictly sequential because of
    that dependency.  A chunk whose generation raises a provider error is
    retried once, then recorded as failed (empty) without touching its
    neighbours.
    """
    vocab = vocab if vocab is not None else getattr(model, "vocab", None)
    eos_id = vocab.eos_id if vocab is not None else None
    doc = Document(doc_id=doc_id, original_tokens=list(tokens), mode=mode)
    if not tokens:
        doc.failed = True
        return doc
    spans = chunk_plan(len(tokens), mode, chunk_len)
    regen_stream: list[int] = []
    for idx, (lo, hi) in enumerate(spans):
        original_chunk = list(tokens[lo:hi])
        context = regen_stream[-ctx_len:] + original_chunk if mode == "context_aware" \
            else original_chunk
        chunk_decoder = dataclasses.replace(decoder, seed=_fold_seed(decoder.seed, idx))
        result = ChunkResult(start=lo, end=hi, regenerated=[])
        for attempt in (0, 1):
            try:
                trace = _generate_chunk(model, scheme, key, context, regen_stream,
                                        hi - lo, chunk_decoder)
                result.regenerated = _strip_trailing_eos(trace.tokens, eos_id)
                break
            except ProviderError:
                if attempt == 1:
                    result.failed = True
                    doc.failed = True
        doc.chunks.append(result)
        regen_stream.extend(result.regenerated)

    if vocab is not None:
        orig_chars = len(vocab.decode(doc.original_tokens))
        regen_chars = len(vocab.decode(doc.regenerated_tokens))
    else:
        orig_chars = len(doc.original_tokens)
        regen_chars = len(doc.regenerated_tokens)
    if orig_chars > 0:
        doc.length_ratio = regen_chars / orig_chars
        doc.ratio_ok = RATIO_BOUNDS[0] <= doc.length_ratio <= RATIO_BOUNDS[1]
    else:
        doc.failed = True
    return doc


def aggregate_detect(document: Document, detector) -> DetectionReport:
    """One detection over the concatenated regenerated chunks (global dedup)."""
    tokens = document.regenerated_tokens
    if not tokens:
        raise TooShortError(f"document {document.doc_id} has no regenerated tokens")
    return detector(tokens)


# --- corpus I/O -----------------------------------------------------------------

def load_documents(path) -> list[tuple[str, str]]:
    """(id, text) pairs from JSON-lines {"id", "text"} or blank-line-split UTF-8."""
    path = Path(path)
    raw = path.read_text("utf-8")
    if path.suffix == ".jsonl":
        docs = []
        for i, line in enumerate(raw.splitlines()):
            if not line.strip():
                continue
            obj = json.loads(line)
            docs.append((str(obj.get("id", i)), obj["text"]))
        return docs
    blocks = [b.strip() for b in raw.split("\n\n") if b.strip()]
    return [(str(i), b) for i, b in enumerate(blocks)]


def document_to_json_dict(doc: Document, vocab=None, report: DetectionReport | None = None) -> dict:
    out = {
        "id": doc.doc_id,
        "mode": doc.mode,
        "n_chunks": len(doc.chunks),
        "length_ratio": doc.length_ratio,
        "ratio_ok": doc.ratio_ok,
        "failed": doc.failed,
    }
    if vocab is not None:
        out["text"] = vocab.decode(doc.regenerated_tokens)
    else:
        out["tokens"] = doc.regenerated_tokens
    if report is not None:
        out["detection"] = report.to_json_dict()
    return out

"""Experiment harness: power metrics, null calibration reports, grid sweeps.

Emits flat result tables (CSV or JSON) keyed by scheme and decoder
configuration; plotting is left to downstream tools.  Quality has two
slots: cross-entropy under the toy model (computed here) and an optional
externally supplied per-document similarity column (computed by a neural
judge elsewhere, merged by document id).
"""

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .decode import DecoderConfig, Sampling, decoder_tag, decoder_to_dict, generate_sampling
from .detect import detector_for
from .errors import InvalidParameterError, TooShortError
from .lm import NgramModel, sequence_cross_entropy
from .pipeline import aggregate_detect, rephrase_document
from .prf import WatermarkKey
from .schemes import SchemeConfig, scheme_tag, scheme_to_dict

TABLE_COLUMNS = [
    "scheme", "scheme_params", "decoder", "decoder_params",
    "median_log10_p", "median_xent", "ratio_pass_rate", "n_docs", "mean_quality",
]


def tpr_at_fpr(pos_pvalues, alpha: float) -> float:
    """Fraction of watermarked texts flagged at threshold alpha."""
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must be in (0, 1), got {alpha}")
    p = np.asarray(pos_pvalues, dtype=np.float64)
    if len(p) == 0:
        raise InvalidParameterError("empty p-value sample")
    return float((p <= alpha).mean())


def fpr_report(pvalues, alphas=(0.1, 0.01, 0.001), confidence: float = 0.99) -> list[dict]:
    """Empirical false-positive rate per threshold with a binomial band.

    Rows pass when the observed rate sits inside the two-sided confidence
    interval of Binomial(n, alpha)/n around the nominal rate.
    """
    p = np.asarray(pvalues, dtype=np.float64)
    n = len(p)
    if n == 0:
        raise InvalidParameterError("empty p-value sample")
    z = {0.99: 2.5758293035489004, 0.95: 1.959963984540054}.get(confidence)
    if z is None:
        raise InvalidParameterError("confidence must be 0.95 or 0.99")
    rows = []
    for alpha in alphas:
        fpr = float((p <= alpha).mean())
        half = z * math.sqrt(alpha * (1 - alpha) / n)
        rows.append({
            "alpha": alpha,
            "fpr": fpr,
            "ci_low": max(alpha - half, 0.0),
            "ci_high": min(alpha + half, 1.0),
            "pass": abs(fpr - alpha) <= half,
            "n": n,
        })
    return rows


def sample_h0_texts(model: NgramModel, n_texts: int, min_len: int = 150,
                    max_len: int = 250, seed: int = 0) -> list[list[int]]:
    """Unwatermarked toy-model generations with varied target lengths.

    Length variation spreads the discrete p-value lattices of count-based
    detectors across texts, which keeps null p-value distributions smooth.
    Generation starts from the document-start context; draws that hit the
    end token almost immediately are redrawn so every text is scorable.
    """
    rng = np.random.default_rng(seed)
    bos_context = [model.vocab.bos_id] * (model.order - 1)
    floor = max(10, min_len // 3)
    texts = []
    for _ in range(n_texts):
        target = int(rng.integers(min_len, max_len + 1))
        while True:
            trace = generate_sampling(model, None, None, bos_context, target,
                                      Sampling(seed=int(rng.integers(0, 2**31))))
            tokens = trace.tokens
            if tokens and tokens[-1] == model.vocab.eos_id:
                tokens = tokens[:-1]
            if len(tokens) >= floor:
                texts.append(tokens)
                break
    return texts


# --- grid sweep -----------------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(model, key, chunk_mode, chunk_len, ctx_len):
    _WORKER_STATE.update(model=model, key=key, chunk_mode=chunk_mode,
                         chunk_len=chunk_len, ctx_len=ctx_len)


def _run_document(args):
    doc_idx, doc_id, tokens, scheme, decoder = args
    model = _WORKER_STATE["model"]
    key = _WORKER_STATE["key"]
    decoder = dataclasses.replace(
        decoder,
        seed=int(np.random.SeedSequence([decoder.seed & 0xFFFFFFFF, doc_idx]).generate_state(1)[0]),
    )
    doc = rephrase_document(doc_id, tokens, model, scheme, key, decoder,
                            mode=_WORKER_STATE["chunk_mode"],
                            chunk_len=_WORKER_STATE["chunk_len"],
                            ctx_len=_WORKER_STATE["ctx_len"])
    detector = detector_for(scheme, key)
    try:
        report = aggregate_detect(doc, detector)
        log10_p = report.log10_pvalue
    except TooShortError:
        log10_p = None
    regen = doc.regenerated_tokens
    xent = sequence_cross_entropy(model, regen, context=doc.original_tokens) if regen else None
    return doc_id, log10_p, xent, doc.ratio_ok, doc.failed


def sweep(model: NgramModel, key: WatermarkKey,
          grid: list[tuple[SchemeConfig, DecoderConfig]],
          corpus: list[tuple[str, list[int]]],
          chunk_mode: str = "context_aware", chunk_len: int = 500,
          ctx_len: int = 1000, quality_scores: dict | None = None,
          jobs: int = 1) -> list[dict]:
    """One table row per (scheme, decoder) config over the corpus.

    Medians cover ratio-passing documents only (failed ratios stay in the
    counts); detection is the scheme's own detector on the concatenated
    regenerated chunks.  Document seeds derive from the document index, so
    results are identical at any job count.
    """
    rows = []
    for scheme, decoder in grid:
        tasks = [
            (i, doc_id, tokens, scheme, decoder)
            for i, (doc_id, tokens) in enumerate(corpus)
        ]
        if jobs > 1:
            with ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_worker,
                initargs=(model, key, chunk_mode, chunk_len, ctx_len),
            ) as pool:
                results = list(pool.map(_run_document, tasks))
        else:
            _init_worker(model, key, chunk_mode, chunk_len, ctx_len)
            results = [_run_document(t) for t in tasks]

        kept_p = [-p for _, p, _, ok, _ in results if ok and p is not None]
        kept_x = [x for _, _, x, ok, _ in results if ok and x is not None]
        qualities = []
        if quality_scores:
            qualities = [quality_scores[d] for d, *_ in results if d in quality_scores]
        n_ok = sum(ok for _, _, _, ok, _ in results)
        rows.append({
            "scheme": scheme_tag(scheme),
            "scheme_params": json.dumps(
                {k: v for k, v in scheme_to_dict(scheme).items() if k != "scheme"},
                sort_keys=True),
            "decoder": decoder_tag(decoder),
            "decoder_params": json.dumps(
                {k: v for k, v in decoder_to_dict(decoder).items() if k != "decoder"},
                sort_keys=True),
            "median_log10_p": float(np.median(kept_p)) if kept_p else None,
            "median_xent": float(np.median(kept_x)) if kept_x else None,
            "ratio_pass_rate": n_ok / len(results) if results else 0.0,
            "n_docs": len(results),
            "mean_quality": float(np.mean(qualities)) if qualities else None,
        })
    return rows


def load_quality_scores(path) -> dict[str, float]:
    """Per-document similarity file: CSV with header id,similarity."""
    scores = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "similarity"} <= set(reader.fieldnames):
            raise InvalidParameterError(
                f"{path}: expected CSV columns id,similarity, got {reader.fieldnames}"
            )
        for row in reader:
            scores[str(row["id"])] = float(row["similarity"])
    return scores


def table_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({col: _csv_cell(row.get(col)) for col in TABLE_COLUMNS})
    return buf.getvalue()


def _csv_cell(value):
    if value is None:
        return ""
    return value


def table_to_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"

"""Watermark radioactivity: does a suspect model's own behaviour betray
training on watermarked text?

The suspect is teacher-forced through the watermarked corpus and only its
top-1 predictions are scored against the green list, one score per distinct
window across the whole corpus.  A model that never saw the key has no
preference between green and red, so the green count is Binomial(N, gamma)
under the null.
"""

import warnings

import numpy as np

from .detect import DetectionReport, log_binom_tail, LOG10
from .errors import TokenLookupError, TooShortError
from .prf import WatermarkKey, green_mask_at_positions


class ContextHashSuspect:
    """Key-independent deterministic predictor; the canonical null suspect."""

    def __init__(self, vocab_size: int, seed: int = 0, context_width: int = 4):
        self.vocab_size = vocab_size
        self._seed = seed
        self._width = context_width

    def argmax_next(self, context) -> int:
        tail = [int(t) for t in context[-self._width:]]
        rng = np.random.default_rng([self._seed, len(tail), *tail])
        return int(rng.integers(0, self.vocab_size))

    def next_logits(self, context) -> np.ndarray:
        logits = np.full(self.vocab_size, -10.0)
        logits[self.argmax_next(context)] = 0.0
        return logits


def radioactivity_pvalue(suspect_model, watermarked_corpus: list[list[int]],
                         key: WatermarkKey, gamma: float = 0.5,
                         with_trace: bool = False) -> DetectionReport:
    """Binomial test on the green fraction of teacher-forced top-1 predictions.

    Windows are deduplicated globally (window alone, not the pair): a window
    the corpus repeats is scored once however many documents contain it,
    which removes context-copying effects entirely.  Suspect argmax ties go
    to the lowest token id.
    """
    vocab_size = getattr(suspect_model, "vocab_size", None)
    seen: set[tuple[int, ...]] = set()
    windows: list[tuple[int, ...]] = []
    preds: list[int] = []
    positions: list[tuple[int, int]] = []
    skipped = 0
    for doc_idx, tokens in enumerate(watermarked_corpus):
        tokens = [int(t) for t in tokens]
        if len(tokens) <= key.k:
            skipped += 1
            continue
        if vocab_size is not None and max(tokens) >= vocab_size:
            raise TokenLookupError(
                f"document {doc_idx} uses token ids beyond the suspect's "
                f"vocabulary ({max(tokens)} >= {vocab_size})"
            )
        for t in range(key.k, len(tokens)):
            window = tuple(tokens[t - key.k:t])
            if window in seen:
                continue
            seen.add(window)
            windows.append(window)
            preds.append(int(suspect_model.argmax_next(tokens[:t])))
            positions.append((doc_idx, t))
    if skipped:
        warnings.warn(f"skipped {skipped} documents shorter than the window",
                      stacklevel=2)
    if not windows:
        raise TooShortError("no scorable windows in the corpus")

    green = green_mask_at_positions(
        np.asarray(preds, dtype=np.uint64),
        np.asarray(windows, dtype=np.uint64),
        key, gamma,
    )
    n = len(windows)
    k_green = int(green.sum())
    trace = []
    if with_trace:
        trace = [
            {"document": d, "position": t, "window": list(win),
             "token": pred, "score": float(g), "included": True}
            for (d, t), win, pred, g in zip(positions, windows, preds, green)
        ]
    return DetectionReport(
        scheme="radioactivity",
        key_id=key.s,
        n_scored=n,
        statistic=float(k_green),
        log10_pvalue=log_binom_tail(k_green, n, gamma) / LOG10,
        trace=trace,
    )

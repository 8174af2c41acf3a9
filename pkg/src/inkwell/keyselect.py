"""Secret-key validation: pick the key whose null p-values look most uniform.

A fixed key prefers certain (window, token) n-grams; when those align with
natural text statistics the detector's null drifts and false-positive rates
break.  Candidate keys are scored on unwatermarked text by the one-sample
Kolmogorov-Smirnov distance to U(0, 1); the key with the highest KS p-value
wins.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .detect import Detector, detector_for
from .errors import InvalidParameterError, TooShortError
from .prf import WatermarkKey


def kolmogorov_sf(lam: float) -> float:
    """Tail of the Kolmogorov distribution: 2 sum (-1)^(j-1) exp(-2 j^2 lam^2)."""
    if lam < 1e-3:
        return 1.0
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(max(total, 0.0), 1.0)


def ks_statistic(pvalues) -> tuple[float, float]:
    """One-sample KS distance to U(0, 1) and its asymptotic p-value.

    The p-value uses the finite-n corrected argument
    (sqrt(n) + 0.12 + 0.11/sqrt(n)) * D, accurate from n of a few dozen up.
    """
    x = np.sort(np.asarray(pvalues, dtype=np.float64))
    n = len(x)
    if n == 0:
        raise InvalidParameterError("empty sample")
    if x[0] < 0 or x[-1] > 1:
        raise InvalidParameterError("p-values must lie in [0, 1]")
    i = np.arange(1, n + 1, dtype=np.float64)
    d_plus = float((i / n - x).max())
    d_minus = float((x - (i - 1) / n).max())
    d = max(d_plus, d_minus, 0.0)
    lam = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d
    return d, kolmogorov_sf(lam)


@dataclass
class KeyReport:
    key: int
    n_texts: int
    mean_pvalue: float
    ks_d: float
    ks_pvalue: float


@dataclass
class KeySelectionReport:
    per_key: list[KeyReport]
    best_key: int
    avg_pvalue: float  # mean of per-key mean p-values
    sigma_keys: float  # spread of per-key means across candidates

    @property
    def best(self) -> KeyReport:
        return next(r for r in self.per_key if r.key == self.best_key)

    def to_json_dict(self) -> dict:
        return {
            "avg_pvalue": self.avg_pvalue,
            "sigma_keys": self.sigma_keys,
            "best_key": self.best_key,
            "best_avg_pvalue": self.best.mean_pvalue,
            "best_ks_pvalue": self.best.ks_pvalue,
            "per_key": [
                {
                    "key": r.key,
                    "n_texts": r.n_texts,
                    "mean_pvalue": r.mean_pvalue,
                    "ks_d": r.ks_d,
                    "ks_pvalue": r.ks_pvalue,
                }
                for r in self.per_key
            ],
        }


def evaluate_key(detector: Detector, corpus: list[list[int]]) -> list[float]:
    """Detector p-values over unwatermarked texts; too-short texts skipped."""
    pvalues = []
    skipped = 0
    for tokens in corpus:
        try:
            pvalues.append(detector(tokens).pvalue)
        except TooShortError:
            skipped += 1
    if skipped:
        warnings.warn(f"skipped {skipped} texts shorter than the window", stacklevel=2)
    if not pvalues:
        raise InvalidParameterError("every corpus text was too short to score")
    return pvalues


def select_key(candidate_keys, corpus: list[list[int]], scheme,
               detector_factory=None, window_size: int = 2,
               dedup: str = "pair") -> KeySelectionReport:
    """Evaluate candidate secret keys on unwatermarked texts, keep the best.

    ``detector_factory`` maps a WatermarkKey to a detector; by default the
    scheme's own detector is used.  Deterministic given corpus and candidate
    order: exact KS-p ties keep the earlier candidate.
    """
    keys = list(candidate_keys)
    if not keys:
        raise InvalidParameterError("no candidate keys")
    if detector_factory is None:
        def detector_factory(key: WatermarkKey) -> Detector:
            return detector_for(scheme, key, dedup=dedup)

    reports: list[KeyReport] = []
    for s in keys:
        key = s if isinstance(s, WatermarkKey) else WatermarkKey(s=int(s), k=window_size)
        pvalues = evaluate_key(detector_factory(key), corpus)
        d, ks_p = ks_statistic(pvalues)
        reports.append(KeyReport(
            key=key.s,
            n_texts=len(pvalues),
            mean_pvalue=float(np.mean(pvalues)),
            ks_d=d,
            ks_pvalue=ks_p,
        ))

    best = max(range(len(reports)), key=lambda i: (reports[i].ks_pvalue, -i))
    means = [r.mean_pvalue for r in reports]
    return KeySelectionReport(
        per_key=reports,
        best_key=reports[best].key,
        avg_pvalue=float(np.mean(means)),
        sigma_keys=float(np.std(means)),
    )

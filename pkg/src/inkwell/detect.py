"""Detection statistics and exact tail probabilities.

Scores are aggregated only over deduplicated watermark windows, restoring
the independence the null distributions assume.  All p-values are computed
in log space first: long watermarked texts routinely reach -log10 p beyond
300, far past float underflow.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from .errors import InvalidParameterError, TooShortError
from .lm import entropy, shape
from .prf import (
    WatermarkKey,
    green_mask_at_positions,
    layer_values_at_positions,
    uniform_at_positions,
)

LOG10 = math.log(10.0)
_R_CLAMP = 1.0 - 2.0 ** -53  # keeps -log(1 - r) finite

# operation budget for the exact weighted-null convolution; beyond it the
# normal approximation with continuity correction takes over (the exact
# lattice grows like n * 2**depth, far faster than the draw count n*depth)
DP_OP_BUDGET = 2_000_000


@dataclass
class DetectionReport:
    scheme: str
    key_id: int
    n_scored: int
    statistic: float
    log10_pvalue: float
    trace: list[dict] = field(default_factory=list)

    @property
    def pvalue(self) -> float:
        return 10.0 ** max(self.log10_pvalue, -308.0)

    def to_json_dict(self, include_trace: bool = False) -> dict:
        doc = {
            "scheme": self.scheme,
            "key_id": self.key_id,
            "n_scored": self.n_scored,
            "statistic": self.statistic,
            "log10_pvalue": self.log10_pvalue,
        }
        if include_trace:
            doc["trace"] = self.trace
        return doc


# --- deduplication -------------------------------------------------------------

def dedup_windows(tokens, k: int, positions=None, mode: str = "pair") -> list[int]:
    """Scoring positions after removing repeated windows, first occurrence kept.

    mode "pair" keys duplicates on (window, next token); mode "window" on the
    window alone.  ``positions`` restricts the candidate set (an upstream
    entropy filter); default is every position from k to the end.
    """
    tokens = list(tokens)
    if len(tokens) <= k:
        raise TooShortError(f"need more than {k} tokens, got {len(tokens)}")
    if mode not in ("pair", "window"):
        raise InvalidParameterError(f"unknown dedup mode {mode!r}")
    candidates = range(k, len(tokens)) if positions is None else positions
    seen = set()
    out: list[int] = []
    for t in candidates:
        if not k <= t < len(tokens):
            raise InvalidParameterError(f"position {t} outside scorable range")
        win = tuple(tokens[t - k:t])
        sig = (win, tokens[t]) if mode == "pair" else win
        if sig not in seen:
            seen.add(sig)
            out.append(t)
    if not out:
        raise TooShortError("no scorable positions")
    return out


def _windows_at(tokens: np.ndarray, positions: list[int], k: int) -> np.ndarray:
    return np.stack([tokens[t - k:t] for t in positions]).astype(np.uint64)


# --- exact tails ---------------------------------------------------------------

def _logsumexp(terms: np.ndarray) -> float:
    m = terms.max()
    return float(m + np.log(np.exp(terms - m).sum()))


def log_binom_tail(k: int, n: int, gamma: float) -> float:
    """ln P(X >= k) for X ~ Binomial(n, gamma), exact summation in log space."""
    if not 0.0 < gamma < 1.0:
        raise InvalidParameterError(f"gamma must be in (0, 1), got {gamma}")
    if k > n:
        raise InvalidParameterError(f"k={k} exceeds n={n}")
    if n == 0 or k <= 0:
        return 0.0
    js = np.arange(k, n + 1, dtype=np.float64)
    lg = math.lgamma(n + 1)
    terms = (
        lg
        - np.array([math.lgamma(j + 1) for j in js])
        - np.array([math.lgamma(n - j + 1) for j in js])
        + js * math.log(gamma)
        + (n - js) * math.log1p(-gamma)
    )
    return min(_logsumexp(terms), 0.0)


def binom_pvalue(k: int, n: int, gamma: float) -> float:
    return math.exp(log_binom_tail(k, n, gamma))


def log_gamma_upper(n: int, s: float) -> float:
    """ln Q(n, s), the regularized upper incomplete gamma at integer n.

    Q(n, s) = exp(-s) * sum_{j<n} s^j / j!, summed in log space.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if s <= 0.0:
        return 0.0
    js = np.arange(n, dtype=np.float64)
    terms = js * math.log(s) - np.array([math.lgamma(j + 1) for j in js])
    return min(_logsumexp(terms) - s, 0.0)


def gamma_pvalue(s: float, n: int) -> float:
    return math.exp(log_gamma_upper(n, s))


# --- detectors -----------------------------------------------------------------

def _report(scheme: str, key: WatermarkKey, n: int, stat: float, log_tail: float,
            trace: list[dict]) -> DetectionReport:
    return DetectionReport(
        scheme=scheme,
        key_id=key.s,
        n_scored=n,
        statistic=stat,
        log10_pvalue=log_tail / LOG10,
        trace=trace,
    )


def score_greenred(tokens, key: WatermarkKey, gamma: float, positions=None,
                   dedup: str = "pair", with_trace: bool = False,
                   scheme: str = "greenred") -> DetectionReport:
    """Green count over deduped windows against the Binomial(N, gamma) null."""
    pos = dedup_windows(tokens, key.k, positions=positions, mode=dedup)
    arr = np.asarray(tokens, dtype=np.uint64)
    toks = arr[pos]
    wins = _windows_at(arr, pos, key.k)
    green = green_mask_at_positions(toks, wins, key, gamma)
    n = len(pos)
    k_green = int(green.sum())
    trace = []
    if with_trace:
        trace = [
            {"position": int(t), "window": [int(w) for w in wins[i]],
             "token": int(toks[i]), "score": float(green[i]), "included": True}
            for i, t in enumerate(pos)
        ]
    return _report(scheme, key, n, float(k_green), log_binom_tail(k_green, n, gamma), trace)


def gumbel_score(tokens, key: WatermarkKey, positions=None, dedup: str = "pair",
                 with_trace: bool = False) -> DetectionReport:
    """Sum of -log(1 - r) over deduped windows against the Gamma(N, 1) null."""
    pos = dedup_windows(tokens, key.k, positions=positions, mode=dedup)
    arr = np.asarray(tokens, dtype=np.uint64)
    toks = arr[pos]
    wins = _windows_at(arr, pos, key.k)
    r = np.minimum(uniform_at_positions(toks, wins, key), _R_CLAMP)
    scores = -np.log1p(-r)
    s = float(scores.sum())
    n = len(pos)
    trace = []
    if with_trace:
        trace = [
            {"position": int(t), "window": [int(w) for w in wins[i]],
             "token": int(toks[i]), "score": float(scores[i]), "included": True}
            for i, t in enumerate(pos)
        ]
    return _report("gumbel", key, n, s, log_gamma_upper(n, s), trace)


def _weighted_null_log_tail(obs_units: int, n: int, depth: int) -> float:
    """ln P(T >= obs) for T = n Bernoulli(1/2) coins per layer l at integer
    weight 2**(depth-l); exact within the op budget, else normal."""
    weights = [1 << (depth - layer) for layer in range(1, depth + 1)]
    # each layer adds the pmf as n+1 comb-shifted copies of the running pmf
    size, ops = 1, 0
    for w in weights:
        ops += size * (n + 1)
        size += n * w
    if ops <= DP_OP_BUDGET:
        layer_base = np.array(
            [math.exp(math.lgamma(n + 1) - math.lgamma(c + 1) - math.lgamma(n - c + 1))
             for c in range(n + 1)]
        ) * 0.5 ** n
        pmf = np.array([1.0])
        for w in weights:
            out = np.zeros(len(pmf) + n * w)
            for c in range(n + 1):
                out[c * w: c * w + len(pmf)] += layer_base[c] * pmf
            pmf = out
        tail = float(pmf[obs_units:].sum())
        if tail > 0.0:
            return min(math.log(tail), 0.0)
        # observation at the extreme upper lattice edge: all coins green
        return (n * depth) * math.log(0.5)
    mu = n * sum(weights) / 2.0
    var = n * sum(w * w for w in weights) / 4.0
    z = (obs_units - 0.5 - mu) / math.sqrt(var)
    return float(log_ndtr(-z))


def synthid_score(tokens, key: WatermarkKey, depth: int, weighted: bool = False,
                  positions=None, dedup: str = "pair",
                  with_trace: bool = False) -> DetectionReport:
    """Mean (or depth-discounted mean) of layer judge values over deduped windows.

    Unweighted: total green count over N*depth Bernoulli(1/2) draws, binomial
    tail.  Weighted: layer l carries weight 2**-(l-1) (normalized); the exact
    null of the weighted sum is convolved on its integer lattice when small,
    else approximated normally with continuity correction.  Depth mismatch
    with the generation config is undetectable here; callers must align it.
    """
    if depth < 1:
        raise InvalidParameterError(f"depth must be >= 1, got {depth}")
    pos = dedup_windows(tokens, key.k, positions=positions, mode=dedup)
    arr = np.asarray(tokens, dtype=np.uint64)
    toks = arr[pos]
    wins = _windows_at(arr, pos, key.k)
    g = layer_values_at_positions(toks, wins, key, depth)
    n = len(pos)

    if not weighted:
        k_green = int(g.sum())
        stat = k_green / (n * depth)
        log_tail = log_binom_tail(k_green, n * depth, 0.5)
        scheme = "synthid"
    else:
        unit_weights = np.array([1 << (depth - layer) for layer in range(1, depth + 1)],
                                dtype=np.int64)
        obs_units = int((g * unit_weights[None, :]).sum())
        norm = float(unit_weights.sum())  # sum of 2**-(l-1) scaled by 2**(depth-1)
        stat = obs_units / (n * norm)  # weighted mean in [0, 1]
        log_tail = _weighted_null_log_tail(obs_units, n, depth)
        scheme = "synthid-weighted"

    trace = []
    if with_trace:
        trace = [
            {"position": int(t), "window": [int(w) for w in wins[i]],
             "token": int(toks[i]), "score": float(g[i].mean()), "included": True}
            for i, t in enumerate(pos)
        ]
    return _report(scheme, key, n, float(stat), log_tail, trace)


# --- entropy-aware filtering -----------------------------------------------------

def predictive_entropies(tokens, model, start: int = 0) -> np.ndarray:
    """Model entropy at each position, conditioned only on the observed text."""
    tokens = list(tokens)
    out = np.empty(len(tokens), dtype=np.float64)
    for t in range(len(tokens)):
        if t < start:
            out[t] = np.nan
            continue
        dist = shape(model.next_logits(tokens[:t]), 1.0, 1.0)
        out[t] = entropy(dist)
    return out


def entropy_filtered_detect(tokens, model, tau: float, base_detector) -> DetectionReport:
    """Drop positions whose predictive entropy is <= tau, then delegate.

    The filter runs before deduplication; tau = 0 with strictly positive
    entropies reproduces unfiltered detection exactly.
    """
    if tau < 0:
        raise InvalidParameterError(f"tau must be >= 0, got {tau}")
    tokens = list(tokens)
    k = getattr(base_detector, "window_size", None)
    if k is None:
        raise InvalidParameterError("base detector does not expose window_size")
    if len(tokens) <= k:
        raise TooShortError(f"need more than {k} tokens, got {len(tokens)}")
    ent = predictive_entropies(tokens, model, start=k)
    kept = [t for t in range(k, len(tokens)) if ent[t] > tau]
    if not kept:
        raise TooShortError(f"entropy filter tau={tau} removed every position")
    return base_detector(tokens, positions=kept)


class Detector:
    """Callable detector bound to a scheme and key; exposes its window size."""

    def __init__(self, fn, window_size: int, label: str):
        self._fn = fn
        self.window_size = window_size
        self.label = label

    def __call__(self, tokens, positions=None) -> DetectionReport:
        return self._fn(tokens, positions)


def detector_for(scheme, key: WatermarkKey, dedup: str = "pair",
                 with_trace: bool = False) -> Detector:
    """Detector matched to a scheme config (see schemes module)."""
    from . import schemes as sch

    if isinstance(scheme, sch.GumbelMax):
        def fn(tokens, positions=None):
            return gumbel_score(tokens, key, positions=positions, dedup=dedup,
                                with_trace=with_trace)
        return Detector(fn, key.k, "gumbel")
    if isinstance(scheme, sch.SynthID):
        def fn(tokens, positions=None):
            return synthid_score(tokens, key, scheme.depth, weighted=scheme.weighted,
                                 positions=positions, dedup=dedup, with_trace=with_trace)
        return Detector(fn, key.k, "synthid-weighted" if scheme.weighted else "synthid")
    gamma = sch.detection_gamma(scheme)
    tag = sch.scheme_tag(scheme)

    def fn(tokens, positions=None):
        return score_greenred(tokens, key, gamma, positions=positions, dedup=dedup,
                              with_trace=with_trace, scheme=tag)
    return Detector(fn, key.k, tag)

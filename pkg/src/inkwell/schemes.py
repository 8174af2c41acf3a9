"""The five watermark sampling schemes.

Three are distribution transformers (green/red logit bias, quantile
reweighting, adaptive green boost) and two are token selectors (keyed
argmax sampling, tournament sampling).  All consume the PRF through the
window of k preceding tokens, so identical (window, key) reproduce
identical watermark randomness.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigurationError, InvalidParameterError
from .lm import TokenDistribution, entropy, shape
from .prf import WatermarkKey, green_mask_tokens, layer_token_shift, uniform_tokens

MAX_EXPLICIT_DEPTH = 10  # 2**10 candidate draws; deeper runs go sequential


@dataclass(frozen=True)
class GreenRed:
    """Add delta to the logits of the keyed green fraction gamma."""

    gamma: float = 0.5
    delta: float = 2.0
    sweet_tau: float | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise InvalidParameterError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.delta < 0:
            raise InvalidParameterError(f"delta must be >= 0, got {self.delta}")
        _check_sweet(self.sweet_tau)


@dataclass(frozen=True)
class DiPMark:
    """Zero the bottom quantile of the keyed permutation, double the top."""

    alpha: float = 0.3
    sweet_tau: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameterError(f"alpha must be in (0, 1), got {self.alpha}")
        _check_sweet(self.sweet_tau)


@dataclass(frozen=True)
class MorphMark:
    """Boost green mass adaptively; skip steps where it is already tiny."""

    gamma: float = 0.5
    kappa: float = 10.0
    p0: float = 0.1
    sweet_tau: float | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise InvalidParameterError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.kappa < 0:
            raise InvalidParameterError(f"kappa must be >= 0, got {self.kappa}")
        if not 0.0 <= self.p0 < 1.0:
            raise InvalidParameterError(f"p0 must be in [0, 1), got {self.p0}")
        _check_sweet(self.sweet_tau)


@dataclass(frozen=True)
class GumbelMax:
    """Keyed noise argmax; reduces to ancestral sampling in law over keys."""

    sweet_tau: float | None = None

    def __post_init__(self):
        _check_sweet(self.sweet_tau)


@dataclass(frozen=True)
class SynthID:
    """Tournament sampling over depth layers of keyed binary judges."""

    depth: int = 10
    weighted: bool = False
    sweet_tau: float | None = None

    def __post_init__(self):
        if self.depth < 1:
            raise InvalidParameterError(f"depth must be >= 1, got {self.depth}")
        _check_sweet(self.sweet_tau)


SchemeConfig = GreenRed | DiPMark | MorphMark | GumbelMax | SynthID

_SCHEME_TAGS = {
    "greenred": GreenRed,
    "dipmark": DiPMark,
    "morphmark": MorphMark,
    "gumbel": GumbelMax,
    "synthid": SynthID,
}


def _check_sweet(tau) -> None:
    if tau is not None and tau < 0:
        raise InvalidParameterError(f"sweet_tau must be >= 0, got {tau}")


def scheme_tag(scheme: SchemeConfig) -> str:
    for tag, cls in _SCHEME_TAGS.items():
        if isinstance(scheme, cls):
            return tag
    raise ConfigurationError(f"unknown scheme object {scheme!r}")


def scheme_to_dict(scheme: SchemeConfig) -> dict:
    out = {"scheme": scheme_tag(scheme)}
    for f in fields(scheme):
        out[f.name] = getattr(scheme, f.name)
    return out


def scheme_from_dict(doc: dict) -> SchemeConfig:
    doc = dict(doc)
    tag = doc.pop("scheme", None)
    cls = _SCHEME_TAGS.get(tag)
    if cls is None:
        raise ConfigurationError(
            f"unknown scheme {tag!r}; expected one of {sorted(_SCHEME_TAGS)}"
        )
    valid = {f.name for f in fields(cls)}
    unknown = set(doc) - valid
    if unknown:
        raise ConfigurationError(f"unknown {tag} parameters: {sorted(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigurationError(f"bad {tag} config: {exc}") from exc


def is_selector(scheme: SchemeConfig) -> bool:
    return isinstance(scheme, (GumbelMax, SynthID))


def detection_gamma(scheme: SchemeConfig) -> float:
    """Green fraction the binomial detector assumes for this scheme."""
    if isinstance(scheme, (GreenRed, MorphMark)):
        return scheme.gamma
    if isinstance(scheme, DiPMark):
        return 0.5
    raise ConfigurationError(f"{scheme_tag(scheme)} has no green-count detector gamma")


# --- distribution transformers ------------------------------------------------

def greenred_bias(logits: np.ndarray, window, key: WatermarkKey,
                  gamma: float, delta: float) -> np.ndarray:
    """Logits with +delta on green tokens, red untouched."""
    logits = np.asarray(logits, dtype=np.float64)
    mask = green_mask_tokens(np.arange(len(logits), dtype=np.uint64), window, key, gamma)
    out = logits.copy()
    out[mask] += delta
    return out


def dipmark_permutation(window, key: WatermarkKey, vocab_size: int) -> np.ndarray:
    """Keyed vocabulary order, greenest (lowest PRF value) last.

    Descending sort puts the doubled top quantile on the low-PRF tokens, so
    the standard green-count detector sees the boost; ties break by id.
    """
    u = uniform_tokens(np.arange(vocab_size, dtype=np.uint64), window, key)
    return np.lexsort((np.arange(vocab_size), -u))


def dipmark_reweight_perm(probs: np.ndarray, perm: np.ndarray, alpha: float) -> np.ndarray:
    """Quantile reweighting along an explicit permutation.

    Token masses are laid along [0, 1] in perm order and pushed through
    F(u) = max(u - alpha, 0) + max(u - (1 - alpha), 0); the first quantile
    is zeroed and the last doubled, total mass exactly preserved.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must be in (0, 1), got {alpha}")
    probs = np.asarray(probs, dtype=np.float64)
    edges = np.concatenate(([0.0], np.cumsum(probs[perm])))
    edges /= edges[-1]
    reweighted = np.maximum(edges - alpha, 0.0) + np.maximum(edges - (1.0 - alpha), 0.0)
    out = np.empty_like(probs)
    out[perm] = np.diff(reweighted)
    return out


def dipmark_reweight(dist: TokenDistribution, window, key: WatermarkKey,
                     alpha: float) -> TokenDistribution:
    perm = dipmark_permutation(window, key, len(dist.probs))
    probs = dipmark_reweight_perm(dist.probs, perm, alpha)
    return TokenDistribution(probs=probs, logits=dist.logits,
                             temperature=dist.temperature, top_p=dist.top_p).validate()


def morphmark_adjust(dist: TokenDistribution, window, key: WatermarkKey,
                     gamma: float, kappa: float, p0: float) -> TokenDistribution:
    """Scale green mass by an adaptive boost, red by the complement.

    With green mass P and boost r = min(kappa*P, 1): green tokens gain the
    factor 1 + r(1-P)/P, red tokens shrink by 1 - r.  Steps where P <= p0
    are left unwatermarked to protect quality.
    """
    if kappa < 0:
        raise InvalidParameterError(f"kappa must be >= 0, got {kappa}")
    if not 0.0 <= p0 < 1.0:
        raise InvalidParameterError(f"p0 must be in [0, 1), got {p0}")
    mask = green_mask_tokens(np.arange(len(dist.probs), dtype=np.uint64), window, key, gamma)
    pg = float(dist.probs[mask].sum())
    if pg <= p0 or pg >= 1.0:
        return dist
    r = min(kappa * pg, 1.0)
    probs = dist.probs.copy()
    probs[mask] *= 1.0 + r * (1.0 - pg) / pg
    probs[~mask] *= 1.0 - r
    return TokenDistribution(probs=probs, logits=dist.logits,
                             temperature=dist.temperature, top_p=dist.top_p).validate()


# --- token selectors ----------------------------------------------------------

def gumbel_select(dist: TokenDistribution, window, key: WatermarkKey) -> int:
    """argmax over the support of r**(1/p) with keyed noise r.

    Compared in log space as log(r)/p, which is monotone in r**(1/p) and
    immune to underflow; zero-probability tokens never win, ties go to the
    lowest token id.
    """
    support = dist.support
    if len(support) == 0:
        raise InvalidParameterError("empty support")
    u = uniform_tokens(support.astype(np.uint64), window, key)
    with np.errstate(divide="ignore"):
        scores = np.log(u) / dist.probs[support]
    return int(support[int(np.argmax(scores))])


def tournament_winner(candidates: np.ndarray, window, key: WatermarkKey,
                      rng: np.random.Generator) -> int:
    """Single-elimination bracket over 2**m candidates.

    At layer l the contender whose layer-l judge value is larger survives;
    equal values are settled by a fair coin.
    """
    contenders = np.asarray(candidates, dtype=np.int64)
    n = len(contenders)
    if n == 0 or n & (n - 1):
        raise InvalidParameterError(f"bracket size must be a power of two, got {n}")
    layer = 1
    while len(contenders) > 1:
        u = uniform_tokens(contenders.astype(np.uint64) + layer_token_shift(layer),
                           window, key)
        g = u < 0.5
        winners = np.empty(len(contenders) // 2, dtype=np.int64)
        for i in range(0, len(contenders), 2):
            ga, gb = g[i], g[i + 1]
            if ga != gb:
                winners[i // 2] = contenders[i] if ga else contenders[i + 1]
            else:
                winners[i // 2] = contenders[i] if rng.random() < 0.5 else contenders[i + 1]
        contenders = winners
        layer += 1
    return int(contenders[0])


def synthid_tournament(dist: TokenDistribution, window, key: WatermarkKey,
                       depth: int, rng: np.random.Generator) -> int:
    """Tournament sampling: draw candidates from the distribution, run judges.

    Up to MAX_EXPLICIT_DEPTH the full 2**depth bracket is materialized.
    Beyond that the tournament runs as depth sequential duels, the champion
    defending against a fresh draw per layer; each layer applies the same
    judge contract, without the infeasible exponential draw count.
    """
    if depth < 1:
        raise InvalidParameterError(f"depth must be >= 1, got {depth}")
    support = dist.support
    if len(support) == 0:
        raise InvalidParameterError("empty support")
    if depth <= MAX_EXPLICIT_DEPTH:
        candidates = rng.choice(len(dist.probs), size=2 ** depth, p=dist.probs)
        return tournament_winner(candidates, window, key, rng)
    champion = int(rng.choice(len(dist.probs), p=dist.probs))
    for layer in range(1, depth + 1):
        challenger = int(rng.choice(len(dist.probs), p=dist.probs))
        pair = np.array([champion, challenger], dtype=np.uint64) + layer_token_shift(layer)
        ua, ub = uniform_tokens(pair, window, key)
        ga, gb = ua < 0.5, ub < 0.5
        if ga != gb:
            champion = champion if ga else challenger
        elif rng.random() < 0.5:
            pass
        else:
            champion = challenger
    return champion


def synthid_marginal(dist: TokenDistribution, window, key: WatermarkKey, depth: int,
                     rng: np.random.Generator, runs: int = 64) -> TokenDistribution:
    """Monte-Carlo estimate of the one-step tournament output distribution.

    The exact marginal is intractable for deep tournaments; beam search uses
    this estimate as its watermarked distribution.
    """
    counts = np.zeros(len(dist.probs), dtype=np.float64)
    for _ in range(runs):
        counts[synthid_tournament(dist, window, key, depth, rng)] += 1.0
    probs = counts / counts.sum()
    return TokenDistribution(probs=probs, logits=dist.logits,
                             temperature=dist.temperature, top_p=dist.top_p).validate()


def sweet_gate(dist: TokenDistribution, tau: float) -> bool:
    """True when the step is entropic enough to carry watermark bias."""
    if tau < 0:
        raise InvalidParameterError(f"tau must be >= 0, got {tau}")
    return entropy(dist) > tau


# --- unified step interface ---------------------------------------------------

def watermarked_distribution(logits: np.ndarray, window, key: WatermarkKey,
                             scheme: SchemeConfig, temperature: float,
                             top_p: float) -> tuple[TokenDistribution, TokenDistribution | None]:
    """(original shaped distribution, watermarked distribution or None).

    Selector schemes return None for the second slot; their sampling happens
    through gumbel_select / synthid_tournament instead.
    """
    p_orig = shape(logits, temperature, top_p)
    if isinstance(scheme, GreenRed):
        biased = greenred_bias(logits, window, key, scheme.gamma, scheme.delta)
        return p_orig, shape(biased, temperature, top_p)
    if isinstance(scheme, DiPMark):
        return p_orig, dipmark_reweight(p_orig, window, key, scheme.alpha)
    if isinstance(scheme, MorphMark):
        return p_orig, morphmark_adjust(p_orig, window, key, scheme.gamma,
                                        scheme.kappa, scheme.p0)
    if is_selector(scheme):
        return p_orig, None
    raise ConfigurationError(f"unknown scheme {scheme!r}")

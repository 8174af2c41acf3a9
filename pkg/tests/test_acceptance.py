"""Acceptance suite: the headline criteria, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v -s`` for one pass/fail line per
criterion.  Every experiment is fully seeded and therefore reproducible;
numeric margins quoted in comments were frozen from the first calibration
run of this repository.

Two desk-scale models drive the experiments: a word-level trigram model
(vocabulary ~4.9k, the right regime for null-calibration statistics) and a
char-level trigram model (whose entropy range matches the 0..2 nat filter
grid).  Keys below were produced by the selection protocol itself and are
asserted against it.
"""

import itertools
import math
import time

import mpmath
import numpy as np
import pytest
from scipy import stats

from inkwell.data import corpus_documents, load_corpus
from inkwell.decode import (
    BeamSearch,
    Sampling,
    WaterMax,
    beam_search,
    generate_sampling,
    greencount_chunk_scorer,
    watermax_generate,
)
from inkwell.detect import (
    binom_pvalue,
    detector_for,
    entropy_filtered_detect,
    gamma_pvalue,
    log_binom_tail,
    log_gamma_upper,
    score_greenred,
)
from inkwell.errors import TooShortError
from inkwell.evaluation import fpr_report, sample_h0_texts
from inkwell.keyselect import ks_statistic, select_key
from inkwell.lm import train_from_texts, train_ngram
from inkwell.pipeline import aggregate_detect, rephrase_document
from inkwell.prf import WatermarkKey, is_green, layer_token_shift
from inkwell.radioactivity import ContextHashSuspect, radioactivity_pvalue
from inkwell.schemes import (
    DiPMark,
    GreenRed,
    GumbelMax,
    MorphMark,
    SynthID,
    dipmark_reweight_perm,
    gumbel_select,
    tournament_winner,
)

# selection protocol outputs, frozen from the first run and re-asserted in
# test_h0_calibration (candidate pool seed 7, selection corpus seed 101)
SELECTED_KEYS = {
    "binomial": 1251001403,
    "gumbel": 94364743,
    "synthid": 1959843350,
    "synthid-weighted": 246345229,
}

GKEY = WatermarkKey(s=SELECTED_KEYS["gumbel"], k=2)
BKEY = WatermarkKey(s=SELECTED_KEYS["binomial"], k=2)


@pytest.fixture(scope="module")
def word_model():
    return train_from_texts(corpus_documents(4000), order=3, smoothing=0.001,
                            tokenizer="word")


@pytest.fixture(scope="module")
def char_model():
    return train_from_texts(corpus_documents(1000), order=3, smoothing=0.1)


def mp_binom_tail(k, n, gamma):
    with mpmath.workdps(60):
        return mpmath.nsum(
            lambda j: mpmath.binomial(n, int(j)) * mpmath.mpf(gamma) ** int(j)
            * (1 - mpmath.mpf(gamma)) ** (n - int(j)),
            [k, n],
        )


class TestPValueExactness:
    def test_criterion(self):
        start = time.monotonic()
        # headline: 65 green of 100 at gamma 0.5
        p = binom_pvalue(65, 100, 0.5)
        assert 1.7e-3 < p < 1.9e-3

        # closed forms for the gamma tail at n=1 and n=2
        for s in (0.2, 1.0, 2.0, 7.5, 40.0):
            assert gamma_pvalue(s, 1) == pytest.approx(math.exp(-s), rel=1e-12)
            assert gamma_pvalue(s, 2) == pytest.approx((1 + s) * math.exp(-s), rel=1e-12)

        # high-precision oracle agreement, n up to 1000, deep log-space tails
        rng = np.random.default_rng(77)
        for _ in range(25):
            n = int(rng.integers(1, 1001))
            k = int(rng.integers(0, n + 1))
            gamma = float(rng.uniform(0.1, 0.9))
            with mpmath.workdps(60):
                oracle = float(mpmath.log(mp_binom_tail(k, n, gamma)))
            assert log_binom_tail(k, n, gamma) == pytest.approx(oracle, rel=1e-9, abs=1e-12)
        for _ in range(25):
            n = int(rng.integers(1, 1001))
            s = float(rng.uniform(0.2, 3.0) * n)
            with mpmath.workdps(60):
                oracle = float(mpmath.log(mpmath.gammainc(n, a=s, regularized=True)))
            assert log_gamma_upper(n, s) == pytest.approx(oracle, rel=1e-9, abs=1e-12)
        assert log_binom_tail(1000, 1000, 0.5) / math.log(10) == pytest.approx(
            1000 * math.log10(0.5), rel=1e-12)

        elapsed = time.monotonic() - start
        assert elapsed < 1.0, f"exactness block took {elapsed:.2f}s"
        print(f"\n[PASS] p-value exactness: binom(65,100)={p:.3e}, "
              f"oracle agreement at 1e-9, {elapsed:.2f}s")


class TestH0Calibration:
    def test_criterion(self, word_model):
        start = time.monotonic()
        selection = sample_h0_texts(word_model, 100, seed=101)
        held_out = sample_h0_texts(word_model, 1000, seed=202)
        rng = np.random.default_rng(7)
        candidates = sorted(int(x) for x in rng.choice(2**31, size=50, replace=False))

        schemes = [
            (GreenRed(gamma=0.5, delta=4.0), "binomial"),
            (GumbelMax(), "gumbel"),
            (SynthID(depth=10), "synthid"),
            (SynthID(depth=10, weighted=True), "synthid-weighted"),
        ]
        lines = []
        for scheme, name in schemes:
            sel = select_key(candidates, selection, scheme)
            assert sel.best_key == SELECTED_KEYS[name], (name, sel.best_key)
            key = WatermarkKey(s=sel.best_key, k=2)
            det = detector_for(scheme, key)
            ps = [det(t).pvalue for t in held_out]
            _, ks_p = ks_statistic(ps)
            assert ks_p > 0.01, (name, ks_p)
            rows = fpr_report(ps, alphas=(0.1, 0.05, 0.01))
            for row in rows:
                assert row["pass"], (name, row)
            lines.append(f"{name}: KS p={ks_p:.3f}, "
                         f"FPR@0.1={rows[0]['fpr']:.3f}, FPR@0.01={rows[2]['fpr']:.4f}")
        elapsed = time.monotonic() - start
        assert elapsed < 300, f"H0 calibration took {elapsed:.0f}s"
        print(f"\n[PASS] H0 calibration ({elapsed:.0f}s): " + "; ".join(lines))


class TestDistortionFreeness:
    def test_criterion(self):
        # quantile reweighting: mean over all |V|! permutations is the input
        rng = np.random.default_rng(10)
        p = rng.dirichlet(np.ones(5))
        for alpha in (0.2, 0.3, 0.4):
            acc = np.zeros(5)
            perms = list(itertools.permutations(range(5)))
            for perm in perms:
                acc += dipmark_reweight_perm(p, np.array(perm), alpha)
            assert np.allclose(acc / len(perms), p, atol=1e-12)

        # keyed-argmax sampling: selection frequency over 10^4 keys follows p
        from inkwell.lm import TokenDistribution
        probs = np.array([0.7, 0.2, 0.1])
        dist = TokenDistribution(probs=probs, logits=np.log(probs)).validate()
        counts = np.zeros(3)
        n = 10_000
        for s in range(n):
            counts[gumbel_select(dist, (8, 3), WatermarkKey(s=s, k=2))] += 1
        freq = counts / n
        se = np.sqrt(probs * (1 - probs) / n)
        assert np.all(np.abs(freq - probs) <= 3 * se), (freq, probs)
        print(f"\n[PASS] distortion-freeness: permutation mean exact at 1e-12; "
              f"selection freq {np.round(freq, 3)} vs p {probs} within 3 SE")


class TestEmbedDetectPower:
    def test_criterion(self, word_model):
        start = time.monotonic()
        bos = [word_model.vocab.bos_id] * 2

        def gen(scheme, key, length, n, seed0):
            return [
                generate_sampling(word_model, scheme, key, bos, length,
                                  Sampling(seed=seed0 + i, stop_at_eos=False)).tokens
                for i in range(n)
            ]

        det = detector_for(GumbelMax(), GKEY)
        lp400 = [det(t).log10_pvalue for t in gen(GumbelMax(), GKEY, 400, 200, 10_000)]
        lp100 = [det(t).log10_pvalue for t in gen(GumbelMax(), GKEY, 100, 200, 20_000)]
        med400, med100 = np.median(lp400), np.median(lp100)
        assert med400 < med100 < 0, (med400, med100)

        h0 = sample_h0_texts(word_model, 200, min_len=380, max_len=420, seed=42)
        lp_h0 = [det(t).log10_pvalue for t in h0]
        mw = stats.mannwhitneyu(lp400, lp_h0, alternative="less")
        assert mw.pvalue < 1e-6, mw.pvalue

        hits = 0
        fracs = []
        for toks in gen(GreenRed(gamma=0.5, delta=4.0), BKEY, 400, 200, 30_000):
            rep = score_greenred(toks, BKEY, 0.5)
            fracs.append(rep.statistic / rep.n_scored)
            hits += binom_pvalue(int(rep.statistic), rep.n_scored, 0.5) < 1e-3
        assert hits / 200 >= 0.90, hits
        # calibration floor: mean green fraction was 0.98 on the first run
        assert np.mean(fracs) > 0.6

        elapsed = time.monotonic() - start
        assert elapsed < 600, f"power block took {elapsed:.0f}s"
        print(f"\n[PASS] embed->detect power ({elapsed:.0f}s): gumbel median "
              f"-log10 p {-med400:.0f}@400 > {-med100:.0f}@100 tokens; MW p={mw.pvalue:.1e}; "
              f"green-red d=4 fires per-text in {hits/2}% (mean frac {np.mean(fracs):.2f})")

    def test_every_scheme_separates_from_h0(self, word_model):
        # embed->detect round trip, one-sided rank test per scheme at 0.01
        bos = [word_model.vocab.bos_id] * 2
        h0 = sample_h0_texts(word_model, 60, min_len=140, max_len=160, seed=55)
        grid = [
            (GreenRed(gamma=0.5, delta=2.0), BKEY),
            (DiPMark(alpha=0.4), BKEY),
            (MorphMark(gamma=0.5, kappa=10.0, p0=0.1), BKEY),
            (GumbelMax(), GKEY),
            (SynthID(depth=10), WatermarkKey(s=SELECTED_KEYS["synthid"], k=2)),
            (SynthID(depth=10, weighted=True),
             WatermarkKey(s=SELECTED_KEYS["synthid-weighted"], k=2)),
        ]
        lines = []
        for scheme, key in grid:
            det = detector_for(scheme, key)
            marked = [
                generate_sampling(word_model, scheme, key, bos, 150,
                                  Sampling(seed=60_000 + i, stop_at_eos=False)).tokens
                for i in range(60)
            ]
            lp_marked = [det(t).log10_pvalue for t in marked]
            lp_h0 = [det(t).log10_pvalue for t in h0]
            mw = stats.mannwhitneyu(lp_marked, lp_h0, alternative="less")
            assert mw.pvalue < 0.01, (scheme, mw.pvalue)
            lines.append(f"{det.label}: median -log10 p {-np.median(lp_marked):.1f}")
        print("\n[PASS] per-scheme separation: " + "; ".join(lines))


class TestBruteForceOracles:
    def test_criterion(self):
        from test_decode import ToyModel, brute_force_tree

        # beam search equals exhaustive expansion-tree search
        for seed in (0, 3, 5):
            for scoring in ("biased", "unbiased"):
                model = ToyModel(vocab_size=3, seed=seed, spread=2.0)
                cfg = BeamSearch(beams=2, candidates=2, scoring=scoring,
                                 expansion="deterministic", seed=0)
                scheme = GreenRed(gamma=0.5, delta=1.5)
                got = beam_search(model, scheme, GKEY, [1], 3, cfg)
                want, _, _ = brute_force_tree(model, scheme, GKEY, [1], 3, cfg)
                assert tuple(got.tokens) == want

        # tournament winner equals exhaustive bracket evaluation (depth 2)
        window = (9, 17)

        def judge(v, layer):
            return is_green(v + int(layer_token_shift(layer)), window, GKEY, 0.5)

        rng = np.random.default_rng(2)
        checked = 0
        while checked < 10:
            cand = [int(x) for x in rng.integers(0, 60, 4)]
            if judge(cand[0], 1) == judge(cand[1], 1) or judge(cand[2], 1) == judge(cand[3], 1):
                continue
            w1 = cand[0] if judge(cand[0], 1) else cand[1]
            w2 = cand[2] if judge(cand[2], 1) else cand[3]
            if judge(w1, 2) == judge(w2, 2):
                continue
            expected = w1 if judge(w1, 2) else w2
            got = tournament_winner(np.array(cand), window, GKEY, np.random.default_rng(1))
            assert got == expected
            checked += 1

        # dedup + green scoring equal a naive quadratic scorer on 30 tokens
        rng = np.random.default_rng(42)
        tokens = [int(x) for x in rng.integers(0, 6, 30)]
        seen, naive_k, naive_n = [], 0, 0
        for t in range(2, len(tokens)):
            sig = (tuple(tokens[t - 2:t]), tokens[t])
            if sig in seen:
                continue
            seen.append(sig)
            naive_n += 1
            naive_k += is_green(tokens[t], tokens[t - 2:t], BKEY, 0.5)
        report = score_greenred(tokens, BKEY, 0.5)
        assert (report.n_scored, report.statistic) == (naive_n, float(naive_k))
        print("\n[PASS] brute-force oracles: beam tree (6 cases), tournament "
              "bracket (10 cases), naive scorer agree")


class TestRadioactivityDirection:
    def test_criterion(self, word_model):
        start = time.monotonic()
        bos = [word_model.vocab.bos_id] * 2

        # contaminated suspect: n-gram trained on delta=4 watermarked corpus
        marked = [
            generate_sampling(word_model, GreenRed(gamma=0.5, delta=4.0), BKEY, bos,
                              250, Sampling(seed=40_000 + i, stop_at_eos=False)).tokens
            for i in range(200)
        ]
        suspect = train_ngram(marked, order=3, smoothing=0.001, vocab=word_model.vocab)
        contaminated = radioactivity_pvalue(suspect, marked, BKEY)
        assert contaminated.pvalue < 1e-3, contaminated.log10_pvalue

        # ignorant suspect: p-values uniform over repeated keys
        rng = np.random.default_rng(5)
        hash_suspect = ContextHashSuspect(vocab_size=word_model.vocab_size, seed=9)
        ps = [
            radioactivity_pvalue(hash_suspect, marked[:20], WatermarkKey(s=int(s), k=2)).pvalue
            for s in rng.choice(2**31, size=200, replace=False)
        ]
        _, ks_p = ks_statistic(ps)
        assert ks_p > 0.01, ks_p

        # selection-bias corpus fires a never-exposed same-distribution suspect:
        # a fresh model fit on the generator's own clean training corpus
        fresh = train_ngram(
            [word_model.vocab.encode(d) for d in corpus_documents(4000)],
            order=3, smoothing=0.001, vocab=word_model.vocab,
        )
        scorer = greencount_chunk_scorer(BKEY, 0.5)
        wm_corpus = [
            watermax_generate(word_model, scorer, bos, 320,
                              WaterMax(chunk_len=4, drafts=8, seed=60_000 + i,
                                       stop_at_eos=False)).tokens
            for i in range(15)
        ]
        spurious = radioactivity_pvalue(fresh, wm_corpus, BKEY)
        assert spurious.pvalue < 0.01, spurious.log10_pvalue
        # control: token-level schemes do not fire the never-exposed suspect
        control = radioactivity_pvalue(fresh, marked[:40], BKEY)
        assert control.pvalue > 1e-3, control.log10_pvalue

        elapsed = time.monotonic() - start
        print(f"\n[PASS] radioactivity direction ({elapsed:.0f}s): contaminated "
              f"log10 p={contaminated.log10_pvalue:.0f}; ignorant KS p={ks_p:.2f}; "
              f"selection-bias spurious log10 p={spurious.log10_pvalue:.1f} vs "
              f"token-level control p={control.pvalue:.2f}")


class TestChunkingTrend:
    def test_criterion(self, word_model):
        start = time.monotonic()
        words = load_corpus().split()
        docs = [" ".join(words[i:i + 1500])
                for i in range(0, len(words) - 1500 + 1, 1500)]
        det = detector_for(GumbelMax(), GKEY)
        medians = {}
        for mode in ("full_context", "context_aware"):
            lp = []
            for i, text in enumerate(docs):
                doc = rephrase_document(
                    f"c{i}", word_model.vocab.encode(text), word_model, GumbelMax(),
                    GKEY, Sampling(seed=80_000 + i, stop_at_eos=True),
                    mode=mode, chunk_len=500, ctx_len=1000)
                try:
                    lp.append(-aggregate_detect(doc, det).log10_pvalue)
                except TooShortError:
                    lp.append(0.0)
            medians[mode] = float(np.median(lp))
        assert medians["context_aware"] > medians["full_context"], medians
        elapsed = time.monotonic() - start
        print(f"\n[PASS] chunking trend ({elapsed:.0f}s): context-aware median "
              f"-log10 p {medians['context_aware']:.0f} > full-context "
              f"{medians['full_context']:.0f} on {len(docs)} 1500-token documents")

    def test_power_grows_with_length(self, word_model):
        words = load_corpus().split()
        det = detector_for(GumbelMax(), GKEY)

        def median_at(doc_len, n_docs, seed0):
            lp = []
            for i in range(n_docs):
                text = " ".join(words[i * doc_len:(i + 1) * doc_len])
                doc = rephrase_document(
                    f"l{i}", word_model.vocab.encode(text), word_model, GumbelMax(),
                    GKEY, Sampling(seed=seed0 + i, stop_at_eos=True),
                    mode="context_aware", chunk_len=500, ctx_len=1000)
                try:
                    lp.append(-aggregate_detect(doc, det).log10_pvalue)
                except TooShortError:
                    lp.append(0.0)
            return float(np.median(lp))

        short = median_at(500, 8, 81_000)
        long = median_at(1500, 8, 82_000)
        assert long > short, (short, long)
        print(f"\n[PASS] context-aware power grows with length: "
              f"median -log10 p {short:.0f}@500 -> {long:.0f}@1500 tokens")


class TestEntropyFilterConsistency:
    def test_criterion(self, char_model, word_model):
        start = time.monotonic()
        # tau=0 is bit-exact against unfiltered detection (entropies all > 0)
        text = load_corpus()[:400]
        tokens = char_model.vocab.encode(text)
        base = detector_for(GreenRed(gamma=0.5, delta=2.0), BKEY)
        plain = base(tokens)
        filtered = entropy_filtered_detect(tokens, char_model, 0.0, base)
        assert filtered.log10_pvalue == plain.log10_pvalue
        assert filtered.n_scored == plain.n_scored

        # multi-draft selection spreads its signal at the chunk level: no
        # entropy threshold may improve detection meaningfully (>5% median
        # paired change counts as real; a 50-text median has ~1% noise)
        docs = [text for text in
                (load_corpus()[i:i + 400] for i in range(0, 20_000, 400))]
        wm_texts = []
        for i, d in enumerate(docs):
            doc = rephrase_document(
                f"w{i}", char_model.vocab.encode(d), char_model,
                GreenRed(gamma=0.5, delta=0.0), BKEY,
                WaterMax(chunk_len=8, drafts=8, seed=98_000 + i, stop_at_eos=False),
                mode="context_aware", chunk_len=200)
            wm_texts.append(doc.regenerated_tokens)
        assert len(wm_texts) == 50
        detector = detector_for(GreenRed(gamma=0.5, delta=0.0), BKEY)
        base_lp = np.array([-detector(t).log10_pvalue for t in wm_texts])
        med0 = float(np.median(base_lp))
        worst = 0.0
        for tau in [round(0.2 * i, 1) for i in range(1, 11)]:
            lp = []
            for t in wm_texts:
                try:
                    lp.append(-entropy_filtered_detect(t, char_model, tau, detector).log10_pvalue)
                except TooShortError:
                    lp.append(0.0)
            change = float(np.median(np.array(lp) - base_lp))
            worst = max(worst, change)
            assert change <= 0.05 * med0, (tau, change, med0)
        # strong filtering strictly degrades
        lp20 = []
        for t in wm_texts:
            try:
                lp20.append(-entropy_filtered_detect(t, char_model, 2.0, detector).log10_pvalue)
            except TooShortError:
                lp20.append(0.0)
        assert float(np.median(lp20)) < med0
        elapsed = time.monotonic() - start
        print(f"\n[PASS] entropy-filter consistency ({elapsed:.0f}s): tau=0 "
              f"bit-exact; max median gain {worst:+.2f} of {med0:.1f} "
              f"(<=5%); tau=2.0 degrades to {float(np.median(lp20)):.1f}")

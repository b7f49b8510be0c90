import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import crf_brute_force, grid_search_threshold
from toxspans.bundle import CrfParams, LogitBundle
from toxspans.corpus import TextSample
from toxspans.decode import (DecodeConfig, ThresholdUnset, apply_threshold, decode_crf, decode_msp, decode_sp,
                             decode_sptc, decode_tc, decode_word_baseline, enumerate_spans, merge_windows,
                             pair_multi_spans, read_predictions, score_sptc, sptc_candidates, threshold_curve,
                             tune_threshold, viterbi_decode, write_predictions)
from toxspans.features import Task, make_features
from toxspans.tokenizer import Vocabulary

TEXT = "aa bb cc dd"
NEG = -50.0


def feature(task=Task.SP, text=TEXT):
    return make_features(TextSample(0, text), task, 32, 8, Vocabulary(), training=False)[0]


def content_offsets(f, i, j):
    """Character offsets of content tokens i..j (0-based within the content)."""
    a = f.tokens[f.content_start + i].char_span[0]
    b = f.tokens[f.content_start + j].char_span[1]
    return tuple(range(a, b))


def padded(f, values):
    out = np.full(len(f), NEG)
    out[f.content_start:f.content_start + len(values)] = values
    return out


def test_decode_sp_hand_case():
    f = feature()
    b = LogitBundle(start_logits=padded(f, [0, 3, 0, 2]), end_logits=padded(f, [0, 0, 3, 2]))
    cfg = DecodeConfig(top_k=2, max_span_len=3, threshold=4.5)
    spans = enumerate_spans(b.start_logits, b.end_logits, cfg, range(f.content_start, f.content_start + 4))
    got = [(s.start_tok - f.content_start, s.end_tok - f.content_start, s.score) for s in spans]
    assert got == [(1, 2, 6.0), (3, 3, 4.0)]
    assert decode_sp(b, f, cfg) == content_offsets(f, 1, 2) == tuple(range(3, 8))


def test_enumerate_k1():
    s = np.array([0, 0, 9, 0, 0, 0.0])
    e = np.array([0, 0, 0, 0, 0, 7.0])
    (sp,) = enumerate_spans(s, e, DecodeConfig(top_k=1, max_span_len=30))
    assert (sp.start_tok, sp.end_tok, sp.score) == (2, 5, 16.0)


def test_enumerate_excludes_reversed_and_long_spans():
    s = np.array([0, 0, 0, 5.0])
    e = np.array([5.0, 0, 0, 0])
    assert enumerate_spans(s, e, DecodeConfig(top_k=1)) == []
    s = np.array([5.0, 0, 0, 0])
    e = np.array([0, 0, 0, 5.0])
    assert enumerate_spans(s, e, DecodeConfig(top_k=1, max_span_len=4)) == []
    assert len(enumerate_spans(s, e, DecodeConfig(top_k=1, max_span_len=5))) == 1


def test_thresholds_and_unset():
    f = feature()
    b = LogitBundle(start_logits=padded(f, [0, 3, 0, 2]), end_logits=padded(f, [0, 0, 3, 2]))
    assert decode_sp(b, f, DecodeConfig(top_k=2, threshold=100)) == ()
    with pytest.raises(ThresholdUnset, match="tune_threshold"):
        decode_sp(b, f, DecodeConfig())


def test_no_answer_never_contributes():
    f = feature()
    s = padded(f, [0, 0, 0, 0])
    s[0] = 100.0
    e = s.copy()
    assert decode_sp(LogitBundle(start_logits=s, end_logits=e), f, DecodeConfig(top_k=5, threshold=-1)) != ()
    assert all(o < len(TEXT) for o in decode_sp(LogitBundle(start_logits=s, end_logits=e), f,
                                                DecodeConfig(top_k=5, threshold=-1)))


def test_decode_sp_overlapping_union():
    f = feature()
    b = LogitBundle(start_logits=padded(f, [5, 5, 0, 0]), end_logits=padded(f, [0, 5, 5, 0]))
    out = decode_sp(b, f, DecodeConfig(top_k=2, threshold=9))
    assert out == content_offsets(f, 0, 2)


def test_decode_tc():
    f = feature(Task.TC)
    logits = np.zeros((len(f), 2))
    logits[:, 0] = 1.0
    assert decode_tc(LogitBundle(token_logits=logits), f) == ()
    logits[f.content_start + 1] = [0, 1]
    logits[f.content_start + 2] = [0, 1]
    logits[0] = [0, 9]  # [CLS] ignored
    assert decode_tc(LogitBundle(token_logits=logits), f) == (3, 4, 6, 7)


def test_score_sptc():
    assert score_sptc(np.array([2.0, 0]), np.array([0, 4.0]), np.array([1.0, 3.0]), 0, 1) == 5.0
    assert score_sptc(np.zeros(1), np.zeros(1), np.zeros(1), 0, 0) == 0.0
    c = np.full(6, 1.5)
    for j in range(1, 6):
        assert score_sptc(np.ones(6), np.ones(6) * 3, c, 0, j) == pytest.approx(2 + 1.5)
    with pytest.raises(IndexError):
        score_sptc(np.zeros(2), np.zeros(2), np.zeros(2), 1, 2)


def test_sptc_four_token_ranking():
    f = feature(Task.SPTC)
    s = padded(f, [1, 4, 0, 0])
    e = padded(f, [0, 2, 0, 4])
    tox = np.zeros((len(f), 2))
    tox[f.content_start:f.content_start + 4, 1] = [0, 6, -2, 0]
    b = LogitBundle(token_logits=tox, start_logits=s, end_logits=e)
    cands = sptc_candidates(b, f, DecodeConfig(top_k=2))
    # top starts {1, 0}, top ends {3, 1}: hand scores
    # (1,1): (4+2)/2 + 6 = 9;  (1,3): (4+4)/2 + (6-2+0)/3 = 5.333;  (0,1): (1+2)/2 + 3 = 4.5;
    # (0,3): (1+4)/2 + 1 = 3.5
    assert [round(sc, 6) for sc, _ in cands] == [9.0, 5.333333, 4.5, 3.5]
    assert cands[0][1] == content_offsets(f, 1, 1)
    assert decode_sptc(b, f, DecodeConfig(top_k=2, threshold=5)) == content_offsets(f, 1, 3)
    assert decode_sptc(b, f, DecodeConfig(top_k=2, threshold=50)) == ()
    assert decode_sptc(b, f, DecodeConfig(), mode="token_only") == decode_tc(b, f)
    with pytest.raises(ValueError):
        decode_sptc(b, f, DecodeConfig(threshold=0), mode="nope")


def test_msp_pairing():
    cfg = DecodeConfig()
    assert pair_multi_spans([1], [3], cfg) == [(1, 3)]
    assert pair_multi_spans([1, 5], [2, 6], cfg) == [(1, 2), (5, 6)]
    assert pair_multi_spans([5], [2], cfg) == []
    assert pair_multi_spans([0], [40], cfg) == []


def test_decode_msp():
    f = feature(Task.MSP)
    b = LogitBundle(start_logits=padded(f, [2, -1, 1, -1]), end_logits=padded(f, [1, -1, -1, 3]))
    assert decode_msp(b, f, DecodeConfig()) == content_offsets(f, 0, 0) + content_offsets(f, 2, 3)


def random_params(rng, L=3, scale=3.0):
    return CrfParams(rng.uniform(-scale, scale, (L, L)), rng.uniform(-scale, scale, L), rng.uniform(-scale, scale, L))


def test_viterbi_zero_transitions_is_argmax():
    rng = np.random.default_rng(0)
    em = rng.normal(size=(6, 3))
    z = CrfParams(np.zeros((3, 3)), np.zeros(3), np.zeros(3))
    assert viterbi_decode(z, em) == list(np.argmax(em, axis=1))


def test_viterbi_length_one_and_ties():
    p = CrfParams(np.zeros((3, 3)), np.array([0, 1.0, 0]), np.array([0, 0, 2.0]))
    assert viterbi_decode(p, np.array([[0.5, 0, 0]])) == [2]
    z = CrfParams(np.zeros((3, 3)), np.zeros(3), np.zeros(3))
    assert viterbi_decode(z, np.zeros((3, 3))) == [0, 0, 0]
    with pytest.raises(ValueError):
        viterbi_decode(z, np.zeros((2, 3)), mask=[0, 0])


def test_viterbi_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        p = random_params(rng)
        em = rng.uniform(-3, 3, (n, 3))
        _, best = crf_brute_force(em.tolist(), p.transitions.tolist(), p.start_transitions.tolist(),
                                  p.end_transitions.tolist())
        assert viterbi_decode(p, em) == best


def test_viterbi_mask_skips_positions():
    rng = np.random.default_rng(2)
    p = random_params(rng)
    em = rng.normal(size=(5, 3))
    assert viterbi_decode(p, em, [1, 0, 1, 1, 0]) == viterbi_decode(p, em[[0, 2, 3]])


def test_decode_crf_uses_viterbi():
    f = feature(Task.CRF)
    em = np.zeros((len(f), 3))
    em[:, 0] = 1
    em[f.content_start + 1] = [0, 5, 0]
    p = CrfParams(np.zeros((3, 3)), np.zeros(3), np.zeros(3))
    assert decode_crf(LogitBundle(token_logits=em), f, p) == content_offsets(f, 1, 1)


def test_word_baseline():
    words = [(0, 2), (3, 5)]
    assert decode_word_baseline([0.9, 0.1], words, 0.5) == (0, 1)
    assert decode_word_baseline([0.9, 1.0], words, 1.0) == ()
    assert decode_word_baseline([0.9, 0.1], words, 0.0) == (0, 1, 3, 4)


def test_merge_windows_examples():
    assert merge_windows([{1, 2}, {2, 3}]) == (1, 2, 3)
    assert merge_windows([(4, 5)]) == (4, 5)
    assert merge_windows([(7, 8), (1,)]) == (1, 7, 8)


offset_sets = st.sets(st.integers(0, 60), max_size=12)


@given(offset_sets, offset_sets, offset_sets)
def test_merge_windows_laws(a, b, c):
    m = merge_windows
    assert m([a, a]) == m([a])
    assert m([a, b]) == m([b, a])
    assert m([m([a, b]), c]) == m([a, m([b, c])])


@st.composite
def sp_bundles(draw):
    n = draw(st.integers(1, 8))
    vals = st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n)
    text = " ".join(["w"] * n)
    return n, text, draw(vals), draw(vals), draw(st.floats(-10, 10)), draw(st.floats(-10, 10))


@settings(max_examples=100)
@given(sp_bundles(), st.integers(1, 5), st.integers(1, 6))
def test_sp_threshold_monotone(bundle, k, max_len):
    n, text, s, e, t1, t2 = bundle
    t1, t2 = min(t1, t2), max(t1, t2)
    f = feature(text=text)
    b = LogitBundle(start_logits=padded(f, s), end_logits=padded(f, e))
    lo = decode_sp(b, f, DecodeConfig(top_k=k, max_span_len=max_len, threshold=t1))
    hi = decode_sp(b, f, DecodeConfig(top_k=k, max_span_len=max_len, threshold=t2))
    assert set(hi) <= set(lo)
    assert list(lo) == sorted(set(lo)) and all(0 <= o < len(text) for o in lo)


@st.composite
def dev_sets(draw):
    n = draw(st.integers(1, 10))
    scores = st.sampled_from([-1.0, 0.0, 0.5, 1.0, 2.0, 3.5])
    cand = st.tuples(scores, st.sets(st.integers(0, 12), min_size=1, max_size=4).map(lambda s: tuple(sorted(s))))
    cands = [draw(st.lists(cand, max_size=4)) for _ in range(n)]
    golds = [draw(st.sets(st.integers(0, 12), max_size=5)) for _ in range(n)]
    return cands, golds


@settings(max_examples=100)
@given(dev_sets())
def test_tune_threshold_matches_grid_oracle(dev):
    cands, golds = dev
    t = tune_threshold(cands, golds)
    best_t, best_f = grid_search_threshold(cands, golds)
    grid, curve = threshold_curve(cands, golds)
    assert t == best_t
    assert curve.max() == pytest.approx(best_f, abs=1e-12)
    assert np.all(curve <= curve[list(grid).index(t)] + 1e-12)


def test_tune_threshold_examples():
    # all gold empty, spurious spans only: predict nothing
    t = tune_threshold([[(1.0, (1,)), (2.0, (2,))], [(0.5, (3,))]], [set(), set()])
    assert t == 2.0
    # a single correct span: the smallest candidate reaching F1 1 is -inf
    assert tune_threshold([[(3.0, (1, 2))]], [{1, 2}]) == -math.inf
    with pytest.raises(ValueError):
        tune_threshold([], [])


def test_apply_threshold_strict():
    assert apply_threshold([(1.0, (1,))], 1.0) == ()
    assert apply_threshold([(1.0, (1,))], 0.999) == (1,)


def test_prediction_file_round_trip(tmp_path):
    pred = {2: (5, 6), 0: (), 1: (1,)}
    write_predictions(pred, tmp_path / "p.tsv")
    assert (tmp_path / "p.tsv").read_text().splitlines()[0] == "0\t[]"
    assert read_predictions(tmp_path / "p.tsv") == pred

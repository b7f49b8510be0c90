import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import scalar_bce, scalar_ce
from toxspans.corpus import TextSample
from toxspans.features import Task, make_features
from toxspans.model import EncoderConfig, TaggerModel
from toxspans.model.gradcheck import gradient_check, relative_error
from toxspans.model.losses import Batch, collate, loss_msp, loss_sp, loss_sptc, loss_tc, loss_word
from toxspans.tokenizer import Vocabulary

D = torch.float64


def batch(n, classes=None, start=0, end=0, smulti=None, emulti=None, pmask=None, cls_toxic=0):
    pmask = torch.tensor([pmask or [1] * n], dtype=torch.bool)
    return Batch(
        torch.zeros(1, n, dtype=torch.long), torch.ones(1, n, dtype=torch.bool), pmask,
        torch.tensor([classes or [0] * n]), torch.tensor([start]), torch.tensor([end]),
        torch.tensor([smulti or [0.0] * n], dtype=D), torch.tensor([emulti or [0.0] * n], dtype=D),
        torch.tensor([cls_toxic]),
    )


def t(x):
    return torch.tensor([x], dtype=D)


def test_tc_uniform_is_ln2():
    b = batch(3, classes=[0, 1, 0])
    assert loss_tc({"token_logits": torch.zeros(1, 3, 2, dtype=D)}, b, cls_aux=False).item() == pytest.approx(
        math.log(2), abs=1e-12)


def test_tc_hand_case_and_aux():
    logits = [[0.4, -1.0], [2.0, 0.5]]
    b = batch(2, classes=[1, 0], cls_toxic=1)
    out = {"token_logits": t(logits), "cls_logits": t([0.2, -0.3])}
    ref = (scalar_ce(logits[0], 1) + scalar_ce(logits[1], 0)) / 2
    assert loss_tc(out, b, cls_aux=False).item() == pytest.approx(ref, abs=1e-12)
    assert loss_tc(out, b).item() == pytest.approx(ref + scalar_ce([0.2, -0.3], 1), abs=1e-12)


def test_tc_ignores_special_and_masked():
    b = batch(3, classes=[2, 1, 0], pmask=[1, 1, 0])
    logits = [[5.0, 5.0], [0.0, 1.0], [9.0, -9.0]]
    assert loss_tc({"token_logits": t(logits)}, b, cls_aux=False).item() == pytest.approx(
        scalar_ce(logits[1], 1), abs=1e-12)
    with pytest.raises(ValueError):
        loss_tc({"token_logits": t(logits)}, batch(3, classes=[2, 2, 2]), cls_aux=False)


def test_sp_uniform_is_ln_n_and_hand_case():
    assert loss_sp({"start_logits": torch.zeros(1, 5, dtype=D), "end_logits": torch.zeros(1, 5, dtype=D)},
                   batch(5, start=1, end=3)).item() == pytest.approx(math.log(5), abs=1e-12)
    s, e = [0.1, 2.0, -1.0], [1.0, 0.0, 0.5]
    got = loss_sp({"start_logits": t(s), "end_logits": t(e)}, batch(3, start=1, end=2)).item()
    assert got == pytest.approx((scalar_ce(s, 1) + scalar_ce(e, 2)) / 2, abs=1e-12)


def test_sp_masked_positions_excluded_and_target_on_mask_fails():
    s, e = [0.1, 2.0, -1.0], [1.0, 0.0, 0.5]
    got = loss_sp({"start_logits": t(s), "end_logits": t(e)}, batch(3, start=1, end=0, pmask=[1, 1, 0])).item()
    assert got == pytest.approx((scalar_ce(s[:2], 1) + scalar_ce(e[:2], 0)) / 2, abs=1e-12)
    with pytest.raises(ValueError):
        loss_sp({"start_logits": t(s), "end_logits": t(e)}, batch(3, start=2, end=0, pmask=[1, 1, 0]))


def test_msp_zero_logits_ln2_and_hand_case():
    b = batch(4, smulti=[0, 1, 0, 0], emulti=[0, 0, 1, 0])
    z = torch.zeros(1, 4, dtype=D)
    assert loss_msp({"start_logits": z, "end_logits": z}, b).item() == pytest.approx(math.log(2), abs=1e-12)
    s, e = [0.5, -1.0, 2.0], [1.5, 0.0, -0.5]
    b = batch(3, smulti=[1, 0, 0], emulti=[0, 0, 1], pmask=[1, 1, 0])
    ref = (scalar_bce(s[0], 1) + scalar_bce(s[1], 0) + scalar_bce(e[0], 0) + scalar_bce(e[1], 0)) / 4
    assert loss_msp({"start_logits": t(s), "end_logits": t(e)}, b).item() == pytest.approx(ref, abs=1e-12)


def test_sptc_is_sum_of_parts():
    rng = np.random.default_rng(0)
    tok, s, e = rng.normal(size=(4, 2)).tolist(), rng.normal(size=4).tolist(), rng.normal(size=4).tolist()
    b = batch(4, classes=[2, 1, 1, 0], start=1, end=2)
    out = {"token_logits": t(tok), "start_logits": t(s), "end_logits": t(e)}
    token_part = (scalar_ce(tok[1], 1) + scalar_ce(tok[2], 1) + scalar_ce(tok[3], 0)) / 3
    span_part = (scalar_ce(s, 1) + scalar_ce(e, 2)) / 2
    assert loss_sptc(out, b).item() == pytest.approx(token_part + span_part, abs=1e-12)
    z = {"token_logits": torch.zeros(1, 4, 2, dtype=D), "start_logits": torch.zeros(1, 4, dtype=D),
         "end_logits": torch.zeros(1, 4, dtype=D)}
    assert loss_sptc(z, b).item() == pytest.approx(math.log(2) + math.log(4), abs=1e-12)


def test_word_loss():
    logits = [[1.0, 0.0, -1.0], [0.0, 2.0, 0.0]]
    b = batch(2, classes=[2, 1])
    assert loss_word({"token_logits": t(logits)}, b).item() == pytest.approx(
        (scalar_ce(logits[0], 2) + scalar_ce(logits[1], 1)) / 2, abs=1e-12)


def test_saturated_logits_give_zero_loss():
    big = 30.0
    classes = [1, 0, 1]
    tok = [[-big, big] if c else [big, -big] for c in classes]
    b = batch(3, classes=classes, start=1, end=2, smulti=[0, 1, 0], emulti=[0, 0, 1], cls_toxic=1)
    s = [-big, big, -big]
    e = [-big, -big, big]
    out = {"token_logits": t(tok), "start_logits": t(s), "end_logits": t(e), "cls_logits": t([-big, big])}
    for loss in (loss_tc(out, b), loss_sp(out, b), loss_msp(out, b), loss_sptc(out, b)):
        assert 0.0 <= loss.item() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 1000))
def test_losses_non_negative(n, seed):
    rng = np.random.default_rng(seed)
    classes = rng.integers(0, 2, n).tolist()
    sm, em = rng.integers(0, 2, n).astype(float).tolist(), rng.integers(0, 2, n).astype(float).tolist()
    b = batch(n, classes=classes, start=int(rng.integers(n)), end=int(rng.integers(n)), smulti=sm, emulti=em)
    out = {"token_logits": t(rng.normal(size=(n, 2)).tolist()), "start_logits": t(rng.normal(size=n).tolist()),
           "end_logits": t(rng.normal(size=n).tolist()), "cls_logits": t(rng.normal(size=2).tolist())}
    for loss in (loss_tc(out, b), loss_sp(out, b), loss_msp(out, b), loss_sptc(out, b)):
        assert loss.item() >= 0


def test_relative_error_floor():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(0.0, 1e-9) == pytest.approx(1e-3)


TEXT = "you dumb ignorant fool and pathetic troll"
GOLD = tuple(range(4, 17)) + tuple(range(27, 41))


@pytest.mark.parametrize("head", ["TC", "SP", "MSP", "SPTC", "CRF", "WORD"])
def test_gradient_check_tiny(head):
    vocab = Vocabulary(TEXT.split())
    enc = EncoderConfig(vocab_size=len(vocab), embedding_dim=4, hidden_dim=4, max_len=16, stride=4, seed=3)
    feats = make_features(TextSample(0, TEXT, GOLD), head, 16, 4, vocab)
    assert gradient_check(head, enc, feats) <= 1e-4


def test_gradient_check_transformer():
    vocab = Vocabulary(TEXT.split())
    enc = EncoderConfig(vocab_size=len(vocab), embedding_dim=4, hidden_dim=4, encoder="tiny_transformer",
                        max_len=16, stride=4, seed=3)
    feats = make_features(TextSample(0, TEXT, GOLD), "TC", 16, 4, vocab)
    assert gradient_check("TC", enc, feats) <= 1e-4


def test_forward_shapes_and_purity():
    vocab = Vocabulary(TEXT.split())
    enc = EncoderConfig(vocab_size=len(vocab), embedding_dim=8, hidden_dim=8, max_len=16, stride=4)
    # [CLS] [SEP] + 7 words + [SEP]; one more for the question token
    shapes = {"TC": {"token_logits": (1, 10, 2), "cls_logits": (1, 2)},
              "SP": {"start_logits": (1, 11), "end_logits": (1, 11)},
              "SPTC": {"token_logits": (1, 11, 2), "start_logits": (1, 11), "end_logits": (1, 11)},
              "CRF": {"token_logits": (1, 10, 3)}, "WORD": {"token_logits": (1, 10, 3)}}
    for head, want in shapes.items():
        model = TaggerModel(enc, head).eval()
        b = collate(make_features(TextSample(0, TEXT, GOLD), head, 16, 4, vocab, training=False))
        out = model(b.token_ids, b.attn_mask)
        assert {k: tuple(v.shape) for k, v in out.items()} == want
        again = model(b.token_ids, b.attn_mask)
        assert all(torch.equal(out[k], again[k]) for k in out)
    with pytest.raises(ValueError):
        TaggerModel(enc, "TC")(torch.tensor([[99]]), torch.ones(1, 1, dtype=torch.bool))

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fuzzy_trace
from semlab import fuzzyctl as fz
from semlab.fuzzyctl import FuzzyParams, controller_forward, directive_for, membership


def test_membership_examples():
    assert membership(7.0, 3.0, 2.0, 7.0) == 1.0
    for b in (1.0, 2.0, 3.5):
        assert membership(10.0 + 4.0, 4.0, b, 10.0) == 0.5
    assert membership(0.0, 5.0, 2.0, 10.0) == pytest.approx(1 / 17, abs=1e-15)
    assert membership(0.0, 5.0, 2.0, 10.0) == pytest.approx(0.058824, abs=1e-6)
    with pytest.raises(ValueError):
        membership(0.0, 0.0, 2.0, 0.0)


@given(st.floats(-50, 50), st.floats(0.1, 20), st.floats(1, 5), st.floats(-20, 20), st.floats(0, 30))
def test_membership_range_symmetry_monotone(x, a, b, c, d):
    m = membership(x, a, b, c)
    assert 0 < m <= 1 or m == 0.0  # may underflow far from the center
    assert m == pytest.approx(membership(2 * c - x, a, b, c), rel=1e-12, abs=1e-300)
    near, far = sorted([abs(x - c), abs(x - c) + d])
    assert membership(c + near, a, b, c) >= membership(c + far, a, b, c)


def test_normalize_and_softmax_examples():
    norm, flags = fz.normalize_weights([2.0, 3.0, 5.0])
    assert np.allclose(norm, [0.2, 0.3, 0.5], atol=1e-15) and flags == ()
    assert np.allclose(fz.softmax([0.4, 0.4, 0.4]), [1 / 3] * 3, atol=1e-15)


def test_zero_snr_falls_back_to_memberships():
    tr = controller_forward(0.0, FuzzyParams())
    assert "zero_weight_sum" in tr.flags
    assert np.allclose(tr.normalized, tr.memberships / tr.memberships.sum(), atol=1e-15)


def test_trace_at_10db_matches_oracle():
    p = FuzzyParams()
    tr = controller_forward(10.0, p)
    ref = fuzzy_trace(10.0, p.a, p.b, p.c, p.p, p.q)
    for got, want in zip((tr.memberships, tr.weights, tr.normalized, tr.sugeno, tr.probabilities), ref):
        assert np.max(np.abs(np.asarray(got) - want)) < 1e-12


params_st = st.builds(
    lambda a, b, c0, gaps, p, q: FuzzyParams(a, b, (c0, c0 + gaps[0], c0 + gaps[0] + gaps[1]), p, q),
    st.tuples(*[st.floats(0.5, 15)] * 3), st.tuples(*[st.floats(1, 4)] * 3), st.floats(-10, 10),
    st.tuples(st.floats(0.5, 15), st.floats(0.5, 15)), st.tuples(*[st.floats(-0.1, 0.1)] * 3),
    st.tuples(*[st.floats(0.3, 1.2)] * 3))


@given(params_st, st.floats(-10, 30))
def test_forward_matches_oracle_and_layers_normalized(p, x):
    tr = controller_forward(x, p)
    ref = fuzzy_trace(x, p.a, p.b, p.c, p.p, p.q)
    for got, want in zip((tr.memberships, tr.weights, tr.normalized, tr.sugeno, tr.probabilities), ref):
        assert np.max(np.abs(np.asarray(got) - want)) <= 1e-12 * max(1.0, np.max(np.abs(want)))
    if abs(tr.weights.sum()) > 1e-9:
        assert abs(tr.normalized.sum() - 1) < 1e-12
    assert abs(tr.probabilities.sum() - 1) < 1e-12
    assert np.all(tr.probabilities > 0) and np.all(tr.probabilities < 1)


def test_directive_examples_match_table():
    p = FuzzyParams()
    low, mid, high = directive_for(0, p), directive_for(10, p), directive_for(25, p)
    assert (low.snr_class, low.length_ratio_range) == ("Low", (0.70, 0.80))
    assert (mid.snr_class, mid.length_ratio_range) == ("Mid", (0.80, 0.90))
    assert (high.snr_class, high.length_ratio_range, high.recommended_ratio) == ("High", (1.0, 1.0), 1.0)


def test_directive_ranges_are_exact_table_values():
    assert fz.LENGTH_RANGES == {"Low": (0.70, 0.80), "Mid": (0.80, 0.90), "High": (1.00, 1.00)}


def test_class_monotone_on_grid():
    p = FuzzyParams()
    classes = [directive_for(round(x, 1), p).class_index for x in np.arange(-10, 30.0001, 0.1)]
    assert all(a <= b for a, b in zip(classes, classes[1:]))
    assert classes[0] == 0 and classes[-1] == 2


@given(st.floats(-20, 40))
def test_recommended_ratio_within_range(x):
    d = directive_for(x, FuzzyParams())
    lo, hi = d.length_ratio_range
    assert lo <= d.recommended_ratio <= hi


def test_params_validation():
    with pytest.raises(ValueError):
        FuzzyParams(a=(0, 1, 1))
    with pytest.raises(ValueError):
        FuzzyParams(b=(0.5, 2, 2))
    with pytest.raises(ValueError):
        FuzzyParams(c=(0, 0, 1))
    p = FuzzyParams(q=(0.7, 0.8, 0.95))
    assert FuzzyParams.from_dict(p.to_dict()) == p


def test_tune_flat_objective_returns_start():
    p0 = FuzzyParams()
    p, before, after = fz.tune(p0, lambda p: 1.0)
    assert p == p0 and before == after == 1.0


def test_tune_improves_simple_objective():
    target = (0.0, 0.0, 0.0), (0.6, 0.9, 1.0)
    obj = lambda p: -sum((a - b) ** 2 for a, b in zip(p.q, target[1]))  # noqa: E731
    p, before, after = fz.tune(FuzzyParams(), obj)
    assert after >= before and p.q == pytest.approx(target[1])


def test_tune_identity_kb_saturated():
    from semlab.kb import IdentityKb
    from semlab.textcore import demo_corpus_path, load_corpus
    from semlab.trainer import tune_fuzzy

    texts = load_corpus(demo_corpus_path()).texts[:20]
    p0 = FuzzyParams()
    p, before, after = tune_fuzzy(p0, texts, IdentityKb(), None, [-5.0, 0.0, 10.0])
    assert p == p0 and before == after == 1.0


def test_tune_mock_kb_improves_and_is_reproducible():
    from semlab.kb import MockKb
    from semlab.textcore import demo_corpus_path, load_corpus
    from semlab.trainer import fuzzy_objective, tune_fuzzy

    corpus = load_corpus(demo_corpus_path())
    texts = corpus.texts[:50]
    snrs = [-5.0, 0.0, 5.0, 10.0]
    kb = MockKb(corpus.texts)
    p, before, after = tune_fuzzy(FuzzyParams(), texts, kb, None, snrs, max_sweeps=1)
    assert after >= before
    again = fuzzy_objective(p, texts, MockKb(corpus.texts), None, snrs)
    assert again == after


def test_tune_empty_corpus_errors():
    from semlab.kb import IdentityKb
    from semlab.trainer import tune_fuzzy

    with pytest.raises(ValueError):
        tune_fuzzy(FuzzyParams(), [], IdentityKb(), None, [0.0])

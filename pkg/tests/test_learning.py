"""EM driver: observation flattening, M-step optimization against
closed-form oracles, and posterior behavior."""

import copy

import numpy as np
import pytest

from evstruct.corpus import AnnotationRecord, DocumentGraph, Node, Sentence, prepare_corpus
from evstruct.learning import (
    FitConfig, build_obs, e_step, fit, item_logliks, m_step, optimize_likelihoods,
    _packs_from_params, _prop_objective, total_evidence,
)
from evstruct.params import TypeInventory, init_params
from evstruct.schema import Schema, PropertySpec, PREDICATE_NODE, default_schema
from evstruct.synth import SynthConfig, flat_schema, sample_corpus

INV1 = TypeInventory(1, 1, 1, 1)


def one_binary_schema():
    return Schema((PropertySpec(name="prop", subspace="x",
                                attaches_to=PREDICATE_NODE,
                                response="binary"),))


def corpus_with_values(values, annotator="a"):
    docs = []
    for i, value in enumerate(values):
        pred = Node(f"p{i}", "predicate", 0)
        sent = Sentence((pred,), (), ())
        ann = [AnnotationRecord(element=f"p{i}", property="prop",
                                annotator=annotator, value=bool(value),
                                raw_confidence=3, ridit_confidence=1.0)]
        docs.append(DocumentGraph(f"d{i}", [sent], [], ann))
    return docs


def test_mstep_matches_logistic_mle():
    # K=1, intercepts off: optimum is the closed-form logit of the mean
    schema = one_binary_schema()
    values = [True] * 70 + [False] * 30
    docs = corpus_with_values(values)
    obs = build_obs(docs, schema, confidence_weighting=False)
    params = init_params(schema, INV1, seed=0, annotators=obs.annotators)
    config = FitConfig(m_step_iters=800, adam_lr=0.1, learn_rho=False)
    post = {"event": np.ones((100, 1))}
    optimize_likelihoods(params, schema, obs, post, config)
    assert params.props["prop"].mu[0] == pytest.approx(np.log(0.7 / 0.3),
                                                       abs=1e-3)


def test_weight_zero_gradient_is_zero():
    schema = one_binary_schema()
    docs = corpus_with_values([True, False, True])
    for doc in docs:
        for r in doc.annotations:
            r.ridit_confidence = 0.0
    obs = build_obs(docs, schema, confidence_weighting=True)
    params = init_params(schema, INV1, seed=3, annotators=obs.annotators)
    packs = _packs_from_params(params, schema, obs.annotators)
    table = obs.tables["prop"]
    coeff = np.ones((3, 1))[table.elem] * table.weight[:, None]
    _, grads = _prop_objective(packs["prop"], table, coeff, 1)
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    assert norm < 1e-12


def test_responsibility_weighting_shifts_optimum():
    schema = one_binary_schema()
    docs = corpus_with_values([True, True, False, False])
    obs = build_obs(docs, schema, confidence_weighting=False)
    params = init_params(schema, INV1, seed=1, annotators=obs.annotators)
    config = FitConfig(m_step_iters=600, adam_lr=0.1, learn_rho=False)
    # weight the True items three times as much
    post = {"event": np.array([[3.0], [3.0], [1.0], [1.0]])}
    optimize_likelihoods(params, schema, obs, post, config)
    assert params.props["prop"].mu[0] == pytest.approx(np.log(6.0 / 2.0),
                                                       abs=1e-3)


def make_fit_corpus(seed=0, n_docs=24, k=2):
    inv = TypeInventory(k, 2, 2, 2)
    cfg = SynthConfig(inventory=inv, schema=flat_schema(), n_docs=n_docs,
                      sentences_per_doc=2, seed=seed, separation=5.0,
                      sigma_ann=0.2, n_annotators=3, annotators_per_item=2)
    docs, truth, params = sample_corpus(cfg)
    prepare_corpus(docs, cfg.schema)
    return docs, truth, params, cfg


def test_fit_determinism():
    docs, _, _, cfg = make_fit_corpus()
    fc = FitConfig(max_em_iters=2, m_step_iters=30, seed=5)
    inv = cfg.inventory
    r1 = fit(docs[:20], docs[20:], inv, cfg.schema, fc)
    r2 = fit(docs[:20], docs[20:], inv, cfg.schema, fc)
    assert r1.train_evidence == r2.train_evidence
    assert r1.dev_evidence == r2.dev_evidence
    for name in r1.params.props:
        a, b = r1.params.props[name], r2.params.props[name]
        assert np.array_equal(a.mu, b.mu)


def test_fit_threads_identical():
    docs, _, _, cfg = make_fit_corpus(seed=2)
    base = dict(max_em_iters=2, m_step_iters=30, seed=5)
    r1 = fit(docs[:20], docs[20:], cfg.inventory, cfg.schema,
             FitConfig(threads=1, **base))
    r4 = fit(docs[:20], docs[20:], cfg.inventory, cfg.schema,
             FitConfig(threads=4, **base))
    assert r1.train_evidence == r4.train_evidence
    for name in r1.params.props:
        assert np.array_equal(r1.params.props[name].mu,
                              r4.params.props[name].mu)


def test_train_evidence_rises_early():
    docs, _, _, cfg = make_fit_corpus(seed=4)
    fc = FitConfig(max_em_iters=4, m_step_iters=80, seed=0,
                   confidence_weighting=False)
    res = fit(docs[:20], docs[20:], cfg.inventory, cfg.schema, fc)
    trace = res.train_evidence
    assert len(trace) >= 2
    assert trace[1] > trace[0]


def test_posteriors_concentrate_with_data():
    # more agreeing annotations concentrate the type posterior
    docs, truth, params, cfg = make_fit_corpus(seed=6, n_docs=4)
    fc = FitConfig(seed=0)
    posts = e_step(docs, params, cfg.schema, fc)
    ents = []
    for post in posts:
        for var, p in post.marginals.items():
            if post.kinds[var] == "event":
                p = np.clip(p, 1e-12, 1)
                ents.append(float(-(p * np.log(p)).sum()))
    assert np.mean(ents) < 0.45  # well below the log(2) uniform entropy


def test_estep_posteriors_align_with_truth():
    docs, truth, params, cfg = make_fit_corpus(seed=8, n_docs=12)
    posts = e_step(docs, params, cfg.schema, FitConfig(seed=0))
    correct = total = 0
    for doc, post in zip(docs, posts):
        for var, p in post.marginals.items():
            if post.kinds[var] == "event":
                correct += int(np.argmax(p) == truth[doc.doc_id][var])
                total += 1
    assert correct / total > 0.85


def test_item_logliks_match_estep_scale():
    # flat per-item log-likelihoods must be finite and K-shaped
    docs, _, params, cfg = make_fit_corpus(seed=9, n_docs=4)
    obs = build_obs(docs, cfg.schema, True)
    packs = _packs_from_params(params, cfg.schema, obs.annotators)
    ll = item_logliks(packs, obs, cfg.schema, "event", 2)
    assert ll.shape == (len(obs.elements["event"]), 2)
    assert np.all(np.isfinite(ll))


def test_empty_train_raises():
    _, _, _, cfg = make_fit_corpus(n_docs=4)
    with pytest.raises(ValueError):
        fit([], [], cfg.inventory, cfg.schema, FitConfig())

"""Sample corpora from the generative story with known parameters and
latent labels; the project's primary verification oracle.

Document skeletons are synthetic (ids, not text).  Types, annotations,
hurdle gating, and temporal tuples are sampled exactly as the generative
story prescribes, including the sentence-window queue for relation pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import likelihoods as lk
from .corpus import (
    AnnotationRecord, DocumentGraph, LOCK_OUTCOMES, ORDER_OUTCOMES, Node,
    Sentence, doc_edge_id, edge_id,
)
from .factorgraph import window_pairs
from .params import (
    BinaryParams, CategoricalParams, HurdleParams, ModelParams, OrdinalParams,
    PriorParams, TemporalParams, TypeInventory, default_cut_raw, init_params,
)
from .schema import (
    BINARY, CATEGORICAL, GROUP_FOR_ATTACH, ORDINAL, TEMPORAL, Schema,
    default_schema,
)


@dataclass
class SynthConfig:
    inventory: TypeInventory
    schema: Schema = field(default_factory=default_schema)
    params: Optional[ModelParams] = None   # drawn when absent
    n_docs: int = 10
    sentences_per_doc: int = 2
    predicates_per_sentence: int = 1
    arguments_per_predicate: int = 1
    eventive_prob: float = 0.0
    n_annotators: int = 3
    annotators_per_item: int = 1
    window: int = 2
    seed: int = 0
    separation: float = 2.0       # logit scale of the drawn true means
    sigma_ann: float = 0.0        # sd of drawn annotator intercepts
    confidence_levels: Optional[list[float]] = None  # probs over 1..5

    def __post_init__(self):
        if self.annotators_per_item > self.n_annotators:
            raise ValueError("annotators_per_item exceeds the pool size")


def flat_schema(n_event: int = 4, n_entity: int = 3, n_role: int = 3,
                n_rel: int = 2) -> Schema:
    """A gate-free all-binary schema.

    With hurdle properties, a child's presence is determined by the parent
    answer, so annotations on one element are not conditionally independent
    given its type; flat mixtures then keep finding extra structure.  This
    schema stays inside the conditional-independence regime, which recovery
    and type-count studies assume.
    """
    from .schema import (ARGUMENT_NODE, DOCUMENT_EDGE, PRED_ARG_EDGE,
                         PREDICATE_NODE, PropertySpec)
    props = []
    for attach, group, n in ((PREDICATE_NODE, "event", n_event),
                             (ARGUMENT_NODE, "entity", n_entity),
                             (PRED_ARG_EDGE, "role", n_role),
                             (DOCUMENT_EDGE, "rel", n_rel)):
        for i in range(n):
            props.append(PropertySpec(name=f"{group}_prop{i}",
                                      subspace=group, attaches_to=attach,
                                      response=BINARY))
    return Schema(tuple(props))


def separated_params(schema: Schema, inventory: TypeInventory,
                     annotators: list[str], separation: float,
                     sigma_ann: float, seed: int) -> ModelParams:
    """True parameters with per-type mean patterns separated by the given
    logit gap: binary means follow distinct sign patterns across types,
    ordinal means are spread evenly, and hurdle gates mirror their parent."""
    rng = np.random.default_rng(seed)
    params = init_params(schema, inventory, seed=seed, annotators=annotators)
    half = separation / 2.0

    # per group, give the types distinct sign patterns over the binary
    # properties, spreading the differences across as many properties as
    # possible (maximal minimum pairwise Hamming distance over a few draws)
    prop_col: dict[str, tuple[str, int]] = {}
    sign_mats: dict[str, np.ndarray] = {}
    for kind in ("event", "entity", "role", "rel"):
        names = [p.name for p in schema.group(kind) if p.response == BINARY]
        if not names:
            continue
        k = inventory.k_for(kind)
        for i, name in enumerate(names):
            prop_col[name] = (kind, i)
        sign_mats[kind] = _sign_patterns(k, len(names), rng)

    def spread(k):
        return np.linspace(-half, half, k) if k > 1 else np.zeros(1)

    for spec in schema:
        pp = params.props[spec.name]
        base = pp.base if isinstance(pp, HurdleParams) else pp
        k = base.mu.shape[0] if not isinstance(base, TemporalParams) \
            else base.start.mu.shape[0]
        if spec.response == BINARY:
            kind, col = prop_col[spec.name]
            base.mu = half * sign_mats[kind][:, col]
        elif spec.response == ORDINAL:
            base.mu = spread(k)
        elif spec.response == CATEGORICAL:
            base.mu = rng.normal(0.0, half, size=base.mu.shape)
        elif spec.response == TEMPORAL:
            base.start.mu = rng.normal(0.0, half, size=(k, 3))
            base.end.mu = rng.normal(0.0, half, size=(k, 3))
            base.order.mu = rng.normal(0.0, half, size=(k, 3))
        # annotator intercepts
        _draw_rhos(pp, annotators, sigma_ann, rng)
    # hurdle gates mirror the parent's Bernoulli so sampled presence is
    # consistent with the gate distribution
    for spec in schema:
        if not spec.gated:
            continue
        pp = params.props[spec.name]
        parent = params.props[spec.gate[0]]
        sign = 1.0 if spec.gate[1] else -1.0
        pp.gate_mu = sign * np.array(parent.mu)
        pp.gate_rho = {a: sign * v for a, v in parent.rho.items()}
    return params


def _sign_patterns(k: int, n_props: int, rng: np.random.Generator,
                   draws: int = 200) -> np.ndarray:
    """(k, n_props) matrix of +-1 type signatures with distinct rows and a
    large minimum pairwise Hamming distance."""
    if k == 1:
        return np.ones((1, n_props))
    best, best_dist = None, -1
    for _ in range(draws):
        mat = rng.choice([-1.0, 1.0], size=(k, n_props))
        dists = [np.sum(mat[i] != mat[j])
                 for i in range(k) for j in range(i + 1, k)]
        d = min(dists)
        if d > best_dist:
            best, best_dist = mat, d
    if best_dist < 1:
        raise ValueError(
            f"cannot give {k} types distinct signatures over {n_props} "
            f"binary properties")
    return best


def _draw_rhos(pp, annotators, sigma_ann, rng):
    def draw(base):
        if isinstance(base, BinaryParams):
            base.rho = {a: float(rng.normal(0.0, sigma_ann))
                        for a in annotators}
            base.sigma = max(sigma_ann ** 2, lk.SIGMA_FLOOR)
        elif isinstance(base, CategoricalParams):
            d = base.mu.shape[-1]
            base.rho = {a: rng.normal(0.0, sigma_ann, size=d)
                        for a in annotators}
            base.sigma = np.eye(d) * max(sigma_ann ** 2, lk.SIGMA_FLOOR)
        elif isinstance(base, OrdinalParams):
            d = len(base.cut_raw)
            base.rho = {a: rng.normal(0.0, sigma_ann, size=d)
                        for a in annotators}
            base.sigma = np.eye(d) * max(sigma_ann ** 2, lk.SIGMA_FLOOR)
        elif isinstance(base, TemporalParams):
            draw(base.start)
            draw(base.end)
            draw(base.order)

    if isinstance(pp, HurdleParams):
        pp.gate_rho = {a: float(rng.normal(0.0, sigma_ann))
                       for a in annotators}
        draw(pp.base)
    else:
        draw(pp)


def _sample_value(base, spec, annotator: str, type_idx: int,
                  rng: np.random.Generator):
    if spec.response == BINARY:
        p = lk.sigmoid(base.mu[type_idx] + base.rho_of(annotator))
        return bool(rng.random() < p)
    if spec.response == CATEGORICAL:
        p = np.exp(lk.log_softmax(base.mu[type_idx] + base.rho_of(annotator)))
        return int(rng.choice(len(p), p=p / p.sum()))
    if spec.response == ORDINAL:
        cuts = base.cutpoints(annotator)
        J = len(cuts) + 1
        probs = np.array([np.exp(lk.ordinal_loglik(base.mu[type_idx], cuts, j))
                          for j in range(1, J + 1)])
        return int(rng.choice(J, p=probs / probs.sum()) + 1)
    if spec.response == TEMPORAL:
        return _sample_temporal(base, annotator, type_idx, rng)
    raise ValueError(spec.response)  # pragma: no cover


def _cat3(mu_row, rho, rng):
    p = np.exp(lk.log_softmax(mu_row + rho))
    return int(rng.choice(3, p=p / p.sum()))


def _sample_temporal(base: TemporalParams, annotator: str, type_idx: int,
                     rng: np.random.Generator) -> list:
    ls = LOCK_OUTCOMES[_cat3(base.start.mu[type_idx],
                             base.start.rho_of(annotator), rng)]
    le = LOCK_OUTCOMES[_cat3(base.end.mu[type_idx],
                             base.end.rho_of(annotator), rng)]
    order = None
    if ls != "both" and le != "both" and ls != le:
        order = ORDER_OUTCOMES[_cat3(base.order.mu[type_idx],
                                     base.order.rho_of(annotator), rng)]
    return realize_tuple(ls, le, order, rng)


def realize_tuple(ls: str, le: str, order: Optional[str],
                  rng: np.random.Generator) -> list:
    """Construct a normalized 4-tuple consistent with sampled lock and
    free-order outcomes."""
    def interior():
        return float(rng.uniform(0.35, 0.65))

    def two_interior():
        a = float(rng.uniform(0.15, 0.4))
        b = float(rng.uniform(0.6, 0.85))
        return a, b

    s1 = s2 = 0.0
    e1 = e2 = 1.0
    if ls == "both" and le == "both":
        pass
    elif ls == "both":
        if le == "e1":
            e2 = interior()
        else:
            e1 = interior()
    elif le == "both":
        if ls == "e1":
            s2 = interior()
        else:
            s1 = interior()
    elif ls == le:
        # both free points belong to the unlocked event; keep them ordered
        a, b = two_interior()
        if ls == "e1":       # e1 locked at both ends, e2 interior
            s2, e2 = a, b
        else:
            s1, e1 = a, b
    else:
        # one free start and one free end from different events
        a, b = two_interior()
        mid = float(rng.uniform(0.45, 0.55))
        if ls == "e1" and le == "e2":
            # free: e2's start, e1's end
            if order == "e1-first":
                e1, s2 = a, b
            elif order == "e2-first":
                s2, e1 = a, b
            else:
                e1 = s2 = mid
        else:  # ls == "e2", le == "e1"
            # free: e1's start, e2's end
            if order == "e1-first":
                s1, e2 = a, b
            elif order == "e2-first":
                e2, s1 = a, b
            else:
                s1 = e2 = mid
    return [s1, s2, e1, e2]


def _sample_confidence(levels, rng) -> int:
    if levels is None:
        return 5
    p = np.asarray(levels, dtype=float)
    return int(rng.choice(5, p=p / p.sum()) + 1)


def sample_corpus(config: SynthConfig):
    """Returns (corpus, truth, params).

    truth maps doc id -> element id -> latent type index for every event,
    entity, role, and relation variable.
    """
    rng = np.random.default_rng(config.seed)
    annotators = [f"ann{i}" for i in range(config.n_annotators)]
    params = config.params
    if params is None:
        params = separated_params(config.schema, config.inventory, annotators,
                                  config.separation, config.sigma_ann,
                                  config.seed)
    inv = params.inventory
    schema = config.schema
    corpus, truth = [], {}
    for d in range(config.n_docs):
        doc, labels = _sample_document(d, config, params, schema, inv,
                                       annotators, rng)
        corpus.append(doc)
        truth[doc.doc_id] = labels
    return corpus, truth, params


def _sample_document(d, config, params, schema, inv, annotators, rng):
    doc_id = f"doc{d:04d}"
    sentences = []
    for s in range(config.sentences_per_doc):
        preds, args, edges = [], [], []
        for p in range(config.predicates_per_sentence):
            pid = f"d{d}s{s}p{p}"
            preds.append(Node(pid, "predicate", s, span=f"pred-{p}"))
            for a in range(config.arguments_per_predicate):
                aid = f"d{d}s{s}p{p}a{a}"
                eventive = rng.random() < config.eventive_prob
                args.append(Node(aid, "argument", s, span=f"arg-{a}",
                                 supersense="event" if eventive else None))
                edges.append((pid, aid))
        sentences.append(Sentence(tuple(preds), tuple(args), tuple(edges)))
    skeleton = DocumentGraph(doc_id, sentences, [], [])
    pairs = [(a.node_id, b.node_id)
             for a, b in window_pairs(skeleton, config.window)]
    doc = DocumentGraph(doc_id, sentences, list(pairs), [])

    labels: dict[str, int] = {}
    pr = params.priors
    node_kind = {}
    for sent in sentences:
        for p in sent.predicates:
            labels[p.node_id] = int(rng.choice(inv.k_event, p=pr.theta_event))
            node_kind[p.node_id] = "event"
        for a in sent.arguments:
            labels[a.node_id] = int(rng.choice(inv.k_entity,
                                               p=pr.theta_entity))
            node_kind[a.node_id] = "entity"
        for pid, aid in sent.edges:
            theta = pr.theta_role[labels[pid], labels[aid]]
            labels[edge_id(pid, aid)] = int(rng.choice(inv.k_role, p=theta))
    for a, b in pairs:
        block = "ee" if node_kind[b] == "event" else "en"
        theta = pr.theta_rel[block][labels[a], labels[b]]
        labels[doc_edge_id(a, b)] = int(rng.choice(inv.k_rel, p=theta))

    elements = []
    for sent in sentences:
        elements += [(p.node_id, "event") for p in sent.predicates]
        elements += [(a.node_id, "entity") for a in sent.arguments]
        elements += [(edge_id(p, a), "role") for p, a in sent.edges]
    elements += [(doc_edge_id(a, b), "rel") for a, b in pairs]

    records = []
    for element, kind in elements:
        t = labels[element]
        item_annotators = [annotators[i] for i in sorted(
            rng.choice(len(annotators), size=config.annotators_per_item,
                       replace=False))]
        for ann in item_annotators:
            answers = {}
            for spec in schema.group(kind):
                pp = params.props[spec.name]
                if spec.gated:
                    parent_value = answers.get(spec.gate[0])
                    if parent_value is None or \
                            bool(parent_value) != spec.gate[1]:
                        continue
                    base = pp.base
                else:
                    base = pp
                value = _sample_value(base, spec, ann, t, rng)
                answers[spec.name] = value
                records.append(AnnotationRecord(
                    element=element, property=spec.name, annotator=ann,
                    value=value,
                    raw_confidence=_sample_confidence(
                        config.confidence_levels, rng)))
    doc.annotations = records
    return doc, labels


# ---------------------------------------------------------------------------
# descriptive statistics

def corpus_stats(corpus: list[DocumentGraph], schema: Schema) -> dict:
    """Counts of elements per kind and per property-response category."""
    stats = {
        "documents": len(corpus),
        "sentences": 0, "predicates": 0, "arguments": 0,
        "edges": 0, "doc_edges": 0, "annotations": 0,
        "properties": {},
    }
    for doc in corpus:
        stats["sentences"] += len(doc.sentences)
        for sent in doc.sentences:
            stats["predicates"] += len(sent.predicates)
            stats["arguments"] += len(sent.arguments)
            stats["edges"] += len(sent.edges)
        stats["doc_edges"] += len(doc.doc_edges)
        stats["annotations"] += len(doc.annotations)
        for rec in doc.annotations:
            spec = schema[rec.property]
            hist = stats["properties"].setdefault(rec.property, {})
            if spec.response == BINARY:
                key = "true" if rec.value else "false"
            elif spec.response in (CATEGORICAL, ORDINAL):
                key = str(rec.value)
            else:
                key = "tuple"
            hist[key] = hist.get(key, 0) + 1
    return stats


def format_stats(stats: dict) -> str:
    """Count (percent) table in the descriptive-statistics layout."""
    lines = []
    for key in ("documents", "sentences", "predicates", "arguments",
                "edges", "doc_edges", "annotations"):
        lines.append(f"{key:12s} {stats[key]:>8,}")
    for prop, hist in sorted(stats["properties"].items()):
        total = sum(hist.values())
        lines.append(f"{prop} (total {total:,})")
        for key, count in sorted(hist.items()):
            pct = round(100.0 * count / total) if total else 0
            lines.append(f"  {key:12s} {count:>8,} ({pct}%)")
    return "\n".join(lines)

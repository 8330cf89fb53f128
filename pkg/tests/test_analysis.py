"""Type summaries, fit comparison, entropy statistics, and feature export."""

import numpy as np
import pytest

from evstruct.analysis import (
    NA, AnalysisError, confusion, entropy_stats, export_features,
    greedy_alignment, summarize_types,
)
from evstruct.corpus import DocumentGraph, Node, Sentence, edge_id
from evstruct.factorgraph import PosteriorSet
from evstruct.params import TypeInventory, init_params
from evstruct.schema import default_schema

SCHEMA = default_schema()
INV = TypeInventory(k_event=2, k_entity=2, k_role=2, k_rel=2)


def base_params(seed=0):
    return init_params(SCHEMA, INV, seed=seed)


class TestSummarize:

    def test_zero_mu_gives_half(self):
        params = base_params()
        for pp in params.props.values():
            inner = getattr(pp, "base", pp)
            if hasattr(inner, "mu"):
                inner.mu = np.zeros_like(inner.mu)
            if hasattr(pp, "gate_mu"):
                pp.gate_mu = np.zeros_like(pp.gate_mu)
        summary = summarize_types(params, SCHEMA)
        cells = summary.tables["event"]["telic"]
        assert cells == [pytest.approx(0.5)] * INV.k_event

    def test_saturation(self):
        params = base_params()
        params.props["telic"].mu = np.array([8.0, -8.0])
        cells = summarize_types(params, SCHEMA).tables["event"]["telic"]
        assert cells[0] > 0.999
        assert cells[1] < 0.001

    def test_na_gating(self):
        params = base_params()
        pp = params.props["part_similarity"]
        pp.gate_mu = np.array([3.0, -3.0])   # applies to type 0 only
        pp.base.mu = np.array([1.0, 1.0])
        cells = summarize_types(params, SCHEMA).tables["event"][
            "part_similarity"]
        assert cells[0] == pytest.approx(1 / (1 + np.exp(-1.0)))
        assert cells[1] == NA

    def test_only_binary_properties_tabled(self):
        tables = summarize_types(base_params(), SCHEMA).tables
        assert "part_duration" not in tables["event"]
        assert "temporal_relation" not in tables["rel"]
        assert set(tables["entity"]) == {"particular", "kind", "abstract"}

    def test_long_rows_cover_tables(self):
        summary = summarize_types(base_params(), SCHEMA)
        rows = list(summary.long_rows())
        n_cells = sum(len(cells) for group in summary.tables.values()
                      for cells in group.values())
        assert len(rows) == n_cells

    def test_missing_property_rejected(self):
        params = base_params()
        del params.props["telic"]
        with pytest.raises(AnalysisError):
            summarize_types(params, SCHEMA)


def posts(marginals, kind="event"):
    kinds = {var: kind for var in marginals}
    return [PosteriorSet(marginals={k: np.asarray(v, dtype=float)
                                    for k, v in marginals.items()},
                         evidence=0.0, converged=True, iterations=1,
                         kinds=kinds)]


class TestConfusion:

    def test_identity_for_matching_hard_fits(self):
        m = {"p0": [1.0, 0.0], "p1": [0.0, 1.0]}
        got = confusion(posts(m), posts(m), "event")
        np.testing.assert_allclose(got, np.eye(2), atol=1e-12)

    def test_label_swap_realigned_to_identity(self):
        a = {"p0": [1.0, 0.0], "p1": [0.0, 1.0]}
        b = {"p0": [0.0, 1.0], "p1": [1.0, 0.0]}
        got = confusion(posts(a), posts(b), "event")
        np.testing.assert_allclose(got, np.eye(2), atol=1e-12)

    def test_uniform_posteriors(self):
        m = {"p0": [0.5, 0.5], "p1": [0.5, 0.5]}
        got = confusion(posts(m), posts(m), "event", align=False)
        np.testing.assert_allclose(got, np.full((2, 2), 0.5), atol=1e-12)

    def test_hand_built_mass(self):
        a = {"p0": [1.0, 0.0], "p1": [1.0, 0.0], "p2": [0.0, 1.0],
             "p3": [1.0, 0.0]}
        b = {"p0": [1.0, 0.0], "p1": [0.0, 1.0], "p2": [0.0, 1.0],
             "p3": [1.0, 0.0]}
        got = confusion(posts(a), posts(b), "event", align=False)
        np.testing.assert_allclose(got, [[2 / 3, 1 / 3], [0.0, 1.0]],
                                   atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        a = {f"p{i}": np.diff(np.r_[0, np.sort(rng.random(2)), 1])
             for i in range(20)}
        b = {f"p{i}": np.diff(np.r_[0, np.sort(rng.random(2)), 1])
             for i in range(20)}
        got = confusion(posts(a), posts(b), "event")
        np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-9)

    def test_element_mismatch_rejected(self):
        with pytest.raises(AnalysisError):
            confusion(posts({"p0": [1, 0]}), posts({"q0": [1, 0]}), "event")

    def test_type_count_mismatch_rejected(self):
        with pytest.raises(AnalysisError):
            confusion(posts({"p0": [1.0, 0.0]}),
                      posts({"p0": [0.5, 0.3, 0.2]}), "event")

    def test_greedy_alignment_permutation(self):
        perm = greedy_alignment(np.array([[0.1, 0.9], [0.8, 0.2]]))
        assert sorted(perm.tolist()) == [0, 1]
        assert perm.tolist() == [1, 0]


class TestEntropy:

    def test_point_mass_zero(self):
        mean, median = entropy_stats(posts({"p0": [1.0, 0.0, 0.0]}), "event")
        assert mean == pytest.approx(0.0, abs=1e-12)
        assert median == pytest.approx(0.0, abs=1e-12)

    def test_uniform_one(self):
        mean, median = entropy_stats(
            posts({"p0": [0.25] * 4, "p1": [0.25] * 4}), "event")
        assert mean == pytest.approx(1.0, abs=1e-12)
        assert median == pytest.approx(1.0, abs=1e-12)

    def test_kind_filtering(self):
        post = posts({"p0": [1.0, 0.0]})[0]
        post.marginals["a0"] = np.array([0.5, 0.5])
        post.kinds["a0"] = "entity"
        mean, _ = entropy_stats([post], "event")
        assert mean == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(AnalysisError):
            entropy_stats([post], "role")


def feature_doc(n_args):
    pid = "s0p0"
    args = tuple(Node(f"s0p0a{i}", "argument", 0) for i in range(n_args))
    sent = Sentence((Node(pid, "predicate", 0),), args,
                    tuple((pid, a.node_id) for a in args))
    return DocumentGraph("doc", [sent], [], [])


def feature_posts(n_args, k_event=2, k_role=2, k_entity=3, seed=0):
    rng = np.random.default_rng(seed)

    def simplex(k):
        v = rng.random(k)
        return v / v.sum()

    marginals = {"s0p0": simplex(k_event)}
    kinds = {"s0p0": "event"}
    for i in range(n_args):
        aid = f"s0p0a{i}"
        marginals[aid] = simplex(k_entity)
        kinds[aid] = "entity"
        marginals[edge_id("s0p0", aid)] = simplex(k_role)
        kinds[edge_id("s0p0", aid)] = "role"
    return [PosteriorSet(marginals=marginals, evidence=0.0, converged=True,
                         iterations=1, kinds=kinds)]


class TestExportFeatures:

    def test_width_bookkeeping(self):
        table = export_features([feature_doc(2)], feature_posts(2))
        k_event, k_role, k_entity = 2, 2, 3
        expect = k_event + k_role + k_entity + 2 * (k_role + k_entity) + 1
        assert table.width == expect
        assert all(vec.shape == (expect,) for _, _, vec in table.rows)

    def test_single_argument_zero_pool(self):
        post = feature_posts(1)
        table = export_features([feature_doc(1)], post)
        arg_rows = [r for r in table.rows if r[1] == "argument"]
        assert len(arg_rows) == 1
        _, _, vec = arg_rows[0]
        # no sibling arguments: pooled block is zero, flag set
        assert np.all(vec[7:17] == 0.0)
        assert vec[-1] == 1.0
        np.testing.assert_allclose(vec[:2], post[0].marginals["s0p0"])

    def test_predicate_row_pools_all_arguments(self):
        post = feature_posts(2)
        table = export_features([feature_doc(2)], post)
        pred_rows = [r for r in table.rows if r[1] == "predicate"]
        assert len(pred_rows) == 1
        _, _, vec = pred_rows[0]
        # own role/entity block zeroed, flag clear
        assert np.all(vec[2:7] == 0.0)
        assert vec[-1] == 0.0
        blocks = [np.concatenate([post[0].marginals[edge_id("s0p0", a)],
                                  post[0].marginals[a]])
                  for a in ("s0p0a0", "s0p0a1")]
        stack = np.stack(blocks)
        np.testing.assert_allclose(vec[7:12], stack.max(axis=0), atol=1e-12)
        np.testing.assert_allclose(vec[12:17], stack.mean(axis=0), atol=1e-12)

    def test_two_arguments_pool_each_other(self):
        post = feature_posts(2)
        table = export_features([feature_doc(2)], post)
        rows = {r[0]: r[2] for r in table.rows if r[1] == "argument"}
        other = np.concatenate([post[0].marginals[edge_id("s0p0", "s0p0a1")],
                                post[0].marginals["s0p0a1"]])
        # with one sibling, max and mean pooling both equal that sibling
        np.testing.assert_allclose(rows["s0p0a0"][7:12], other, atol=1e-12)
        np.testing.assert_allclose(rows["s0p0a0"][12:17], other, atol=1e-12)

    def test_count_mismatch_rejected(self):
        with pytest.raises(AnalysisError):
            export_features([feature_doc(1)], [])

    def test_missing_posterior_rejected(self):
        post = feature_posts(1)
        del post[0].marginals["s0p0a0"]
        with pytest.raises(AnalysisError):
            export_features([feature_doc(1)], post)

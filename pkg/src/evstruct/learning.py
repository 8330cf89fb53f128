"""EM driver: loopy-BP E-step, Adam M-step over likelihood parameters with
confidence-weighted expected log-likelihood, closed-form prior updates, and
dev-evidence stopping.

The M-step machinery (observation tables, per-family vectorized objective
and gradient functions, Adam) is shared with the flat mixture models used
for type-count selection.
"""

from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import likelihoods as lk
from .corpus import DocumentGraph, normalize_temporal
from .factorgraph import PosteriorSet, build_graph, loopy_bp
from .params import (
    BinaryParams, CategoricalParams, HurdleParams, ModelParams, OrdinalParams,
    PriorParams, TemporalParams, TypeInventory, init_params,
)
from .schema import (
    BINARY, CATEGORICAL, GROUP_FOR_ATTACH, ORDINAL, TEMPORAL, Schema,
)

_THETA_FLOOR = 1e-10


@dataclass
class FitConfig:
    window: int = 2
    max_em_iters: int = 20
    adam_lr: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    m_step_iters: int = 200
    bp_max_iters: int = 200
    bp_damping: float = 0.1
    bp_tol: float = 1e-8
    seed: int = 0
    confidence_weighting: bool = True
    learn_rho: bool = True
    init_mu_scale: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.adam_lr <= 0:
            raise ValueError("adam step size must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class FitResult:
    params: ModelParams
    train_evidence: list[float]
    dev_evidence: list[float]
    posteriors: list[PosteriorSet]
    stopped_reason: str          # "dev-decrease" | "max-iters"


# ---------------------------------------------------------------------------
# observation tables

@dataclass
class PropTable:
    name: str
    spec: object
    elem: np.ndarray            # (N,) row into the kind's element registry
    ann: np.ndarray             # (N,) annotator index
    present: np.ndarray         # (N,) bool; False only for hurdle-absent rows
    bval: np.ndarray            # (N,) float, binary values
    ival: np.ndarray            # (N,) int, categorical / ordinal values
    tval: np.ndarray            # (N, 3) int, temporal outcome codes (-1 unused)
    weight: np.ndarray          # (N,) confidence weight


@dataclass
class ObsIndex:
    elements: dict[str, list[tuple[int, str]]]   # kind -> [(doc i, element)]
    pos: dict[str, dict[tuple[int, str], int]]
    tables: dict[str, PropTable]
    annotators: list[str]
    ann_index: dict[str, int]


def build_obs(corpus: list[DocumentGraph], schema: Schema,
              confidence_weighting: bool = True) -> ObsIndex:
    """Flatten a corpus into per-property observation tables."""
    elements: dict[str, list[tuple[int, str]]] = {
        "event": [], "entity": [], "role": [], "rel": []}
    pos: dict[str, dict[tuple[int, str], int]] = {
        k: {} for k in elements}
    annotators: list[str] = []
    ann_index: dict[str, int] = {}
    rows: dict[str, list] = {p.name: [] for p in schema}

    def elem_row(kind, doc_i, element):
        key = (doc_i, element)
        if key not in pos[kind]:
            pos[kind][key] = len(elements[kind])
            elements[kind].append(key)
        return pos[kind][key]

    def ann_row(name):
        if name not in ann_index:
            ann_index[name] = len(annotators)
            annotators.append(name)
        return ann_index[name]

    def weight_of(rec):
        if not confidence_weighting:
            return 1.0
        if rec.ridit_confidence is None:
            raise ValueError(
                f"record {rec.property} on {rec.element} lacks a ridit "
                f"confidence")
        return float(rec.ridit_confidence)

    for doc_i, doc in enumerate(corpus):
        kinds = doc.element_kinds()
        by_element = doc.annotations_by_element()
        for element, records in sorted(by_element.items()):
            kind = GROUP_FOR_ATTACH[kinds[element]]
            answered = {(r.property, r.annotator): r for r in records}
            for rec in records:
                spec = schema[rec.property]
                e = elem_row(kind, doc_i, element)
                a = ann_row(rec.annotator)
                rows[rec.property].append(
                    (e, a, True, rec.value, weight_of(rec)))
            for spec in schema:
                if spec.gate is None or spec.group != kind:
                    continue
                parent_name, gate_value = spec.gate
                for (prop, annotator), parent in answered.items():
                    if prop != parent_name:
                        continue
                    if bool(parent.value) == gate_value:
                        continue
                    if (spec.name, annotator) in answered:
                        continue
                    e = elem_row(kind, doc_i, element)
                    a = ann_row(annotator)
                    rows[spec.name].append(
                        (e, a, False, None, weight_of(parent)))

    tables = {}
    for spec in schema:
        rlist = rows[spec.name]
        n = len(rlist)
        elem = np.array([r[0] for r in rlist], dtype=int)
        ann = np.array([r[1] for r in rlist], dtype=int)
        present = np.array([r[2] for r in rlist], dtype=bool)
        weight = np.array([r[4] for r in rlist], dtype=float)
        bval = np.zeros(n)
        ival = np.zeros(n, dtype=int)
        tval = np.full((n, 3), -1, dtype=int)
        for i, r in enumerate(rlist):
            if not r[2]:
                continue
            v = r[3]
            if spec.response == BINARY:
                bval[i] = 1.0 if v else 0.0
            elif spec.response in (CATEGORICAL, ORDINAL):
                ival[i] = int(v)
            elif spec.response == TEMPORAL:
                obs = normalize_temporal(v)
                tval[i, 0] = lk.LOCK_INDEX[obs.lock_start]
                tval[i, 1] = lk.LOCK_INDEX[obs.lock_end]
                tval[i, 2] = (lk.ORDER_INDEX[obs.free_order]
                              if obs.free_order is not None else -1)
        tables[spec.name] = PropTable(spec.name, spec, elem, ann, present,
                                      bval, ival, tval, weight)
    return ObsIndex(elements, pos, tables, annotators, ann_index)


# ---------------------------------------------------------------------------
# vectorized per-family objective and gradients
#
# each returns (objective, grads...) where the objective is
# sum_n sum_k c[n, k] * loglik_k(row n) for responsibility-weighted rows c.

def _binary_terms(mu, rho_vec, ann, x, c, n_ann):
    z = mu[None, :] + rho_vec[ann][:, None]
    ll = x[:, None] * lk.log_sigmoid(z) + (1.0 - x)[:, None] * lk.log_sigmoid(-z)
    obj = float(np.sum(c * ll))
    g = x[:, None] - lk.sigmoid(z)
    cg = c * g
    dmu = cg.sum(axis=0)
    drho = np.zeros(n_ann)
    np.add.at(drho, ann, cg.sum(axis=1))
    return obj, dmu, drho


def _categorical_terms(mu, rho_mat, ann, x, c, n_ann):
    z = mu[None, :, :] + rho_mat[ann][:, None, :]
    ls = lk.log_softmax(z, axis=-1)
    n = len(x)
    ll = ls[np.arange(n), :, x]
    obj = float(np.sum(c * ll))
    g = -np.exp(ls)
    g[np.arange(n), :, x] += 1.0
    dmu = np.einsum("nk,nkc->kc", c, g)
    drho = np.zeros((n_ann, mu.shape[-1]))
    np.add.at(drho, ann, np.einsum("nk,nkc->nc", c, g))
    return obj, dmu, drho


def _ordinal_terms(mu, cut_raw, rho_mat, ann, j, c, n_ann):
    """Cumulative linked logit terms; gradients wrt mu, population raw
    cutpoints, and per-annotator raw offsets."""
    raw = cut_raw[None, :] + rho_mat            # (A, J-1)
    cuts = lk.cutpoints_from_raw(raw)           # (A, J-1)
    J = cuts.shape[1] + 1
    crow = cuts[ann]                            # (N, J-1)
    n = len(j)
    hi_cut = np.where(j < J, crow[np.arange(n), np.minimum(j, J - 1) - 1], 0.0)
    lo_cut = np.where(j > 1, crow[np.arange(n), np.maximum(j - 2, 0)], 0.0)
    hi = np.where((j < J)[:, None], lk.sigmoid(hi_cut[:, None] - mu[None, :]), 1.0)
    lo = np.where((j > 1)[:, None], lk.sigmoid(lo_cut[:, None] - mu[None, :]), 0.0)
    p = np.maximum(hi - lo, 1e-300)
    obj = float(np.sum(c * np.log(p)))
    dhi = np.where((j < J)[:, None], hi * (1.0 - hi), 0.0)
    dlo = np.where((j > 1)[:, None], lo * (1.0 - lo), 0.0)
    dmu = np.sum(c * (dlo - dhi) / p, axis=0)
    # cutpoint-space gradients, scattered per annotator
    u = np.sum(c * dhi / p, axis=1)             # d/d cut[j-1]
    l = -np.sum(c * dlo / p, axis=1)            # d/d cut[j-2]
    dcut = np.zeros((n_ann, J - 1))
    sel = j < J
    np.add.at(dcut, (ann[sel], j[sel] - 1), u[sel])
    sel = j > 1
    np.add.at(dcut, (ann[sel], j[sel] - 2), l[sel])
    draw = lk.raw_grad_from_cutpoint_grad(raw, dcut)   # (A, J-1) raw space
    dcut_raw = draw.sum(axis=0)
    return obj, dmu, dcut_raw, draw


# ---------------------------------------------------------------------------
# optimizable parameter packs

@dataclass
class _Pack:
    """Numpy views of one property's optimizable arrays."""
    name: str
    spec: object
    arrays: dict[str, np.ndarray]


def _rho_matrix(rho: dict, annotators: list[str], dim: int | None) -> np.ndarray:
    if dim is None:
        out = np.zeros(len(annotators))
        for i, a in enumerate(annotators):
            out[i] = rho.get(a, 0.0)
    else:
        out = np.zeros((len(annotators), dim))
        for i, a in enumerate(annotators):
            if a in rho:
                out[i] = rho[a]
    return out


def _packs_from_params(params: ModelParams, schema: Schema,
                       annotators: list[str]) -> dict[str, _Pack]:
    packs = {}
    for spec in schema:
        pp = params.props[spec.name]
        arrays = {}

        def base_arrays(base, prefix=""):
            if isinstance(base, BinaryParams):
                arrays[prefix + "mu"] = np.array(base.mu, dtype=float)
                arrays[prefix + "rho"] = _rho_matrix(base.rho, annotators, None)
            elif isinstance(base, CategoricalParams):
                arrays[prefix + "mu"] = np.array(base.mu, dtype=float)
                arrays[prefix + "rho"] = _rho_matrix(base.rho, annotators,
                                                     base.mu.shape[-1])
            elif isinstance(base, OrdinalParams):
                arrays[prefix + "mu"] = np.array(base.mu, dtype=float)
                arrays[prefix + "cut_raw"] = np.array(base.cut_raw, dtype=float)
                arrays[prefix + "rho"] = _rho_matrix(base.rho, annotators,
                                                     len(base.cut_raw))
            elif isinstance(base, TemporalParams):
                base_arrays(base.start, prefix + "start.")
                base_arrays(base.end, prefix + "end.")
                base_arrays(base.order, prefix + "order.")
            else:  # pragma: no cover
                raise TypeError(type(base))

        if isinstance(pp, HurdleParams):
            arrays["gate_mu"] = np.array(pp.gate_mu, dtype=float)
            arrays["gate_rho"] = _rho_matrix(pp.gate_rho, annotators, None)
            base_arrays(pp.base)
        else:
            base_arrays(pp)
        packs[spec.name] = _Pack(spec.name, spec, arrays)
    return packs


def _params_from_packs(params: ModelParams, schema: Schema,
                       annotators: list[str],
                       packs: dict[str, _Pack]) -> None:
    def rho_dict(mat, dim):
        if dim is None:
            return {a: float(mat[i]) for i, a in enumerate(annotators)}
        return {a: np.array(mat[i]) for i, a in enumerate(annotators)}

    for spec in schema:
        pp = params.props[spec.name]
        arrays = packs[spec.name].arrays

        def write_base(base, prefix=""):
            if isinstance(base, BinaryParams):
                base.mu = arrays[prefix + "mu"]
                base.rho = rho_dict(arrays[prefix + "rho"], None)
            elif isinstance(base, CategoricalParams):
                base.mu = arrays[prefix + "mu"]
                base.rho = rho_dict(arrays[prefix + "rho"], base.mu.shape[-1])
            elif isinstance(base, OrdinalParams):
                base.mu = arrays[prefix + "mu"]
                base.cut_raw = arrays[prefix + "cut_raw"]
                base.rho = rho_dict(arrays[prefix + "rho"],
                                    len(base.cut_raw))
            elif isinstance(base, TemporalParams):
                write_base(base.start, prefix + "start.")
                write_base(base.end, prefix + "end.")
                write_base(base.order, prefix + "order.")

        if isinstance(pp, HurdleParams):
            pp.gate_mu = arrays["gate_mu"]
            pp.gate_rho = rho_dict(arrays["gate_rho"], None)
            write_base(pp.base)
        else:
            write_base(pp)


def _prop_objective(pack: _Pack, table: PropTable, c_all: np.ndarray,
                    n_ann: int):
    """Objective and gradient dict for one property's observations.

    c_all: (N, K) responsibility-times-weight coefficients per row."""
    spec = pack.spec
    arrays = pack.arrays
    grads = {name: np.zeros_like(arr) for name, arr in arrays.items()}
    obj = 0.0
    present = table.present
    gated = "gate_mu" in arrays

    if gated:
        x = present.astype(float)
        o, dmu, drho = _binary_terms(arrays["gate_mu"], arrays["gate_rho"],
                                     table.ann, x, c_all, n_ann)
        obj += o
        grads["gate_mu"] += dmu
        grads["gate_rho"] += drho

    sel = present if gated else slice(None)
    ann = table.ann[sel]
    c = c_all[sel]
    if np.shape(c)[0] > 0:
        if spec.response == BINARY:
            o, dmu, drho = _binary_terms(arrays["mu"], arrays["rho"], ann,
                                         table.bval[sel], c, n_ann)
            obj += o
            grads["mu"] += dmu
            grads["rho"] += drho
        elif spec.response == CATEGORICAL:
            o, dmu, drho = _categorical_terms(arrays["mu"], arrays["rho"], ann,
                                              table.ival[sel], c, n_ann)
            obj += o
            grads["mu"] += dmu
            grads["rho"] += drho
        elif spec.response == ORDINAL:
            o, dmu, dcraw, drho = _ordinal_terms(
                arrays["mu"], arrays["cut_raw"], arrays["rho"], ann,
                table.ival[sel], c, n_ann)
            obj += o
            grads["mu"] += dmu
            grads["cut_raw"] += dcraw
            grads["rho"] += drho
        elif spec.response == TEMPORAL:
            codes = table.tval[sel]
            for block, col in (("start", 0), ("end", 1), ("order", 2)):
                bsel = codes[:, col] >= 0
                if not np.any(bsel):
                    continue
                o, dmu, drho = _categorical_terms(
                    arrays[f"{block}.mu"], arrays[f"{block}.rho"],
                    ann[bsel], codes[bsel, col], c[bsel], n_ann)
                obj += o
                grads[f"{block}.mu"] += dmu
                grads[f"{block}.rho"] += drho
    return obj, grads


def row_logliks(pack: _Pack, table: PropTable, n_ann: int) -> np.ndarray:
    """(N, K) log-likelihood of every observation row under each type,
    including hurdle gate terms on present and absent rows."""
    spec = pack.spec
    arrays = pack.arrays
    gated = "gate_mu" in arrays
    n = len(table.elem)
    k = arrays["gate_mu" if gated else
               ("start.mu" if spec.response == TEMPORAL else "mu")].shape[0]
    ll = np.zeros((n, k))
    if gated:
        z = arrays["gate_mu"][None, :] + arrays["gate_rho"][table.ann][:, None]
        x = table.present.astype(float)[:, None]
        ll += x * lk.log_sigmoid(z) + (1.0 - x) * lk.log_sigmoid(-z)
    sel = table.present if gated else np.ones(n, dtype=bool)
    if not np.any(sel):
        return ll
    ann = table.ann[sel]
    if spec.response == BINARY:
        z = arrays["mu"][None, :] + arrays["rho"][ann][:, None]
        x = table.bval[sel][:, None]
        ll[sel] += x * lk.log_sigmoid(z) + (1.0 - x) * lk.log_sigmoid(-z)
    elif spec.response == CATEGORICAL:
        z = arrays["mu"][None, :, :] + arrays["rho"][ann][:, None, :]
        ls = lk.log_softmax(z, axis=-1)
        ll[sel] += ls[np.arange(len(ann)), :, table.ival[sel]]
    elif spec.response == ORDINAL:
        mu = arrays["mu"]
        raw = arrays["cut_raw"][None, :] + arrays["rho"]
        cuts = lk.cutpoints_from_raw(raw)
        J = cuts.shape[1] + 1
        j = table.ival[sel]
        crow = cuts[ann]
        m = len(j)
        hi_cut = np.where(j < J, crow[np.arange(m), np.minimum(j, J - 1) - 1],
                          0.0)
        lo_cut = np.where(j > 1, crow[np.arange(m), np.maximum(j - 2, 0)], 0.0)
        hi = np.where((j < J)[:, None],
                      lk.sigmoid(hi_cut[:, None] - mu[None, :]), 1.0)
        lo = np.where((j > 1)[:, None],
                      lk.sigmoid(lo_cut[:, None] - mu[None, :]), 0.0)
        ll[sel] += np.log(np.maximum(hi - lo, 1e-300))
    elif spec.response == TEMPORAL:
        codes = table.tval[sel]
        add = np.zeros((len(ann), k))
        for block, col in (("start", 0), ("end", 1), ("order", 2)):
            bsel = codes[:, col] >= 0
            if not np.any(bsel):
                continue
            z = arrays[f"{block}.mu"][None, :, :] \
                + arrays[f"{block}.rho"][ann[bsel]][:, None, :]
            ls = lk.log_softmax(z, axis=-1)
            add[bsel] += ls[np.arange(int(bsel.sum())), :, codes[bsel, col]]
        ll[sel] += add
    return ll


def item_logliks(packs: dict[str, _Pack], obs: ObsIndex, schema: Schema,
                 kind: str, k: int) -> np.ndarray:
    """(n_items, K) weighted log-likelihood of each element of one kind.
    Row weights were fixed when the observation index was built."""
    n_items = len(obs.elements[kind])
    out = np.zeros((n_items, k))
    n_ann = len(obs.annotators)
    for spec in schema.group(kind):
        table = obs.tables[spec.name]
        if len(table.elem) == 0:
            continue
        ll = row_logliks(packs[spec.name], table, n_ann)
        np.add.at(out, table.elem, table.weight[:, None] * ll)
    return out


def _penalty_terms(pack: _Pack, params: ModelParams):
    """Gaussian intercept penalties for one property; returns
    (objective, grads-by-array-name)."""
    pp = params.props[pack.name]
    obj = 0.0
    grads = {}

    def add(name, mat, sigma):
        nonlocal obj
        mat = pack.arrays[name]
        if mat.ndim == 1:
            var = float(np.atleast_2d(sigma)[0, 0])
            obj += float(np.sum(-0.5 * mat ** 2 / var
                                - 0.5 * np.log(2 * np.pi * var)))
            grads[name] = -mat / var
        else:
            sigma = np.atleast_2d(sigma)
            inv = np.linalg.inv(sigma)
            _, logdet = np.linalg.slogdet(sigma)
            obj += float(np.sum(-0.5 * np.einsum("ad,de,ae->a", mat, inv, mat)
                                - 0.5 * logdet
                                - 0.5 * mat.shape[1] * np.log(2 * np.pi)))
            grads[name] = -mat @ inv

    def walk(base, prefix=""):
        if isinstance(base, BinaryParams):
            add(prefix + "rho", None, base.sigma)
        elif isinstance(base, CategoricalParams):
            add(prefix + "rho", None, base.sigma)
        elif isinstance(base, OrdinalParams):
            add(prefix + "rho", None, base.sigma)
        elif isinstance(base, TemporalParams):
            walk(base.start, prefix + "start.")
            walk(base.end, prefix + "end.")
            walk(base.order, prefix + "order.")

    if isinstance(pp, HurdleParams):
        add("gate_rho", None, pp.gate_sigma)
        walk(pp.base)
    else:
        walk(pp)
    return obj, grads


class Adam:
    """Plain full-batch Adam over a dict of named arrays (ascent)."""

    def __init__(self, arrays: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.arrays = arrays
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {n: np.zeros_like(a) for n, a in arrays.items()}
        self.v = {n: np.zeros_like(a) for n, a in arrays.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mh = self.m[name] / (1 - b1 ** self.t)
            vh = self.v[name] / (1 - b2 ** self.t)
            self.arrays[name] += self.lr * mh / (np.sqrt(vh) + self.eps)


def optimize_likelihoods(params: ModelParams, schema: Schema, obs: ObsIndex,
                         post_mats: dict[str, np.ndarray],
                         config: FitConfig) -> float:
    """Maximize the expected weighted complete-data log-likelihood plus the
    intercept penalty via Adam; keeps the best-objective iterate.  Writes
    the result back into params and returns the best objective."""
    n_ann = len(obs.annotators)
    packs = _packs_from_params(params, schema, obs.annotators)

    coeffs = {}
    for spec in schema:
        table = obs.tables[spec.name]
        if len(table.elem) == 0:
            continue
        post = post_mats[spec.group]
        coeffs[spec.name] = post[table.elem] * table.weight[:, None]

    flat: dict[str, np.ndarray] = {}
    for pname, pack in packs.items():
        for aname, arr in pack.arrays.items():
            if not config.learn_rho and "rho" in aname:
                continue
            flat[f"{pname}/{aname}"] = arr

    def evaluate():
        obj = 0.0
        grads = {n: np.zeros_like(a) for n, a in flat.items()}
        for pname, pack in packs.items():
            if pname in coeffs:
                o, g = _prop_objective(pack, obs.tables[pname], coeffs[pname],
                                       n_ann)
                obj += o
                for aname, garr in g.items():
                    key = f"{pname}/{aname}"
                    if key in grads:
                        grads[key] += garr
            if config.learn_rho:
                o, g = _penalty_terms(pack, params)
                obj += o
                for aname, garr in g.items():
                    key = f"{pname}/{aname}"
                    if key in grads:
                        grads[key] += garr
        if not np.isfinite(obj):
            bad = [p for p in packs if p in coeffs]
            raise ArithmeticError(
                f"non-finite M-step objective (properties: {bad})")
        return obj, grads

    adam = Adam(flat, config.adam_lr, config.adam_beta1, config.adam_beta2,
                config.adam_eps)
    best_obj = -np.inf
    best = None
    for _ in range(config.m_step_iters):
        obj, grads = evaluate()
        if obj > best_obj:
            best_obj = obj
            best = {n: a.copy() for n, a in flat.items()}
        adam.step(grads)
    obj, _ = evaluate()
    if obj > best_obj:
        best_obj = obj
        best = {n: a.copy() for n, a in flat.items()}
    for name, arr in best.items():
        flat[name][...] = arr

    _params_from_packs(params, schema, obs.annotators, packs)
    _update_sigmas(params, schema)
    for pp in params.props.values():
        base = pp.base if isinstance(pp, HurdleParams) else pp
        if isinstance(base, OrdinalParams):
            base.recenter()
    params.annotators = list(obs.annotators)
    return best_obj


def _update_sigmas(params: ModelParams, schema: Schema) -> None:
    def walk(base):
        if isinstance(base, (BinaryParams,)):
            rhos = np.array(list(base.rho.values()), dtype=float)
            base.sigma = float(lk.update_sigma(rhos[:, None])[0, 0]) \
                if rhos.size else 1.0
        elif isinstance(base, (CategoricalParams, OrdinalParams)):
            if base.rho:
                base.sigma = lk.update_sigma(np.stack(list(base.rho.values())))
        elif isinstance(base, TemporalParams):
            walk(base.start)
            walk(base.end)
            walk(base.order)

    for spec in schema:
        pp = params.props[spec.name]
        if isinstance(pp, HurdleParams):
            rhos = np.array(list(pp.gate_rho.values()), dtype=float)
            pp.gate_sigma = float(lk.update_sigma(rhos[:, None])[0, 0]) \
                if rhos.size else 1.0
            walk(pp.base)
        else:
            walk(pp)


# ---------------------------------------------------------------------------
# E-step, prior updates, EM driver

def e_step(corpus: list[DocumentGraph], params: ModelParams, schema: Schema,
           config: FitConfig) -> list[PosteriorSet]:
    def run(item):
        doc_i, doc = item
        try:
            graph = build_graph(doc, params, schema, config.window,
                                config.confidence_weighting)
            return loopy_bp(graph, config.bp_max_iters, config.bp_damping,
                            config.bp_tol)
        except ArithmeticError as exc:
            raise ArithmeticError(f"document {doc.doc_id}: {exc}") from exc

    items = list(enumerate(corpus))
    if config.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(run, items))
    return [run(it) for it in items]


def posterior_matrices(obs: ObsIndex,
                       posteriors: list[PosteriorSet],
                       inventory: TypeInventory) -> dict[str, np.ndarray]:
    mats = {}
    for kind, elems in obs.elements.items():
        k = inventory.k_for(kind)
        mat = np.zeros((len(elems), k))
        for row, (doc_i, element) in enumerate(elems):
            mat[row] = posteriors[doc_i].marginals[element]
        mats[kind] = mat
    return mats


def _normalize_counts(counts: np.ndarray) -> np.ndarray:
    counts = np.maximum(counts, 0.0)
    total = counts.sum(axis=-1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / counts.shape[-1])
    out = np.where(total > 0, counts / np.maximum(total, _THETA_FLOOR), uniform)
    out = np.maximum(out, _THETA_FLOOR)
    return out / out.sum(axis=-1, keepdims=True)


def update_priors(params: ModelParams,
                  posteriors: list[PosteriorSet]) -> None:
    """Closed-form normalized expected-count updates for all type priors."""
    inv = params.inventory
    ev = np.zeros(inv.k_event)
    en = np.zeros(inv.k_entity)
    role = np.zeros((inv.k_event, inv.k_entity, inv.k_role))
    rel = {"ee": np.zeros((inv.k_event, inv.k_event, inv.k_rel)),
           "en": np.zeros((inv.k_event, inv.k_entity, inv.k_rel)),
           "nn": np.zeros((inv.k_entity, inv.k_entity, inv.k_rel))}
    for post in posteriors:
        for var_id, kind in post.kinds.items():
            if kind == "event":
                ev += post.marginals[var_id]
            elif kind == "entity":
                en += post.marginals[var_id]
        for fid, belief in post.factor_beliefs.items():
            if fid.startswith("prior:") and belief.ndim == 3:
                elem = fid.split(":", 1)[1]
                if post.kinds[elem] == "role":
                    role += belief
                else:
                    rel[_rel_block(post, elem)] += belief
    params.priors.theta_event = _normalize_counts(ev)
    params.priors.theta_entity = _normalize_counts(en)
    params.priors.theta_role = _normalize_counts(role)
    params.priors.theta_rel = {b: _normalize_counts(m)
                               for b, m in rel.items()}


def _rel_block(post: PosteriorSet, elem: str) -> str:
    _, b = elem.split("--")
    return "ee" if post.kinds[b] == "event" else "en"


def m_step(corpus: list[DocumentGraph], posteriors: list[PosteriorSet],
           params: ModelParams, schema: Schema, config: FitConfig,
           obs: ObsIndex | None = None) -> ModelParams:
    """One EM maximization step: closed-form priors, Adam likelihoods."""
    if obs is None:
        obs = build_obs(corpus, schema, config.confidence_weighting)
    update_priors(params, posteriors)
    post_mats = posterior_matrices(obs, posteriors, params.inventory)
    optimize_likelihoods(params, schema, obs, post_mats, config)
    return params


def total_evidence(posteriors: list[PosteriorSet]) -> float:
    return float(sum(p.evidence for p in posteriors))


def fit(train: list[DocumentGraph], dev: list[DocumentGraph],
        inventory: TypeInventory, schema: Schema,
        config: FitConfig) -> FitResult:
    """EM with loopy-BP E-steps and dev-evidence stopping; returns the
    parameters from the best dev iteration."""
    if not train:
        raise ValueError("empty training corpus")
    obs = build_obs(train, schema, config.confidence_weighting)
    params = init_params(schema, inventory, seed=config.seed,
                         mu_scale=config.init_mu_scale,
                         annotators=obs.annotators)
    train_trace: list[float] = []
    dev_trace: list[float] = []
    best_params = copy.deepcopy(params)
    stopped = "max-iters"
    for _ in range(config.max_em_iters):
        posts = e_step(train, params, schema, config)
        train_trace.append(total_evidence(posts))
        m_step(train, posts, params, schema, config, obs=obs)
        dev_posts = e_step(dev, params, schema, config) if dev else []
        dev_trace.append(total_evidence(dev_posts) if dev
                         else train_trace[-1])
        if len(dev_trace) >= 2 and dev_trace[-1] < dev_trace[-2]:
            stopped = "dev-decrease"
            break
        best_params = copy.deepcopy(params)
    final_posts = e_step(train, best_params, schema, config)
    return FitResult(params=best_params, train_evidence=train_trace,
                     dev_evidence=dev_trace, posteriors=final_posts,
                     stopped_reason=stopped)

"""Model parameters: type inventory, type priors, and per-property
likelihood parameters, with checkpoint serialization.

Document edges are directed from the later (current) predicate to the
earlier enqueued node, matching the generative story; relation priors are
stored blockwise by the endpoint kinds (event/entity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
from typing import Union

import numpy as np

from . import likelihoods as lk
from .corpus import normalize_temporal
from .schema import BINARY, CATEGORICAL, ORDINAL, TEMPORAL, Schema

CHECKPOINT_VERSION = 1

REL_BLOCKS = ("ee", "en", "nn")  # event x event, event x entity, entity x entity


@dataclass(frozen=True)
class TypeInventory:
    k_event: int
    k_entity: int
    k_role: int
    k_rel: int

    def __post_init__(self):
        for name in ("k_event", "k_entity", "k_role", "k_rel"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def k_for(self, group: str) -> int:
        return {"event": self.k_event, "entity": self.k_entity,
                "role": self.k_role, "rel": self.k_rel}[group]


@dataclass
class PriorParams:
    theta_event: np.ndarray    # (Ke,)
    theta_entity: np.ndarray   # (Kn,)
    theta_role: np.ndarray     # (Ke, Kn, Kr), simplex on last axis
    theta_rel: dict            # block -> (Ka, Kb, Kq), simplex on last axis

    @staticmethod
    def uniform(inv: TypeInventory) -> "PriorParams":
        ke, kn, kr, kq = inv.k_event, inv.k_entity, inv.k_role, inv.k_rel
        return PriorParams(
            theta_event=np.full(ke, 1.0 / ke),
            theta_entity=np.full(kn, 1.0 / kn),
            theta_role=np.full((ke, kn, kr), 1.0 / kr),
            theta_rel={
                "ee": np.full((ke, ke, kq), 1.0 / kq),
                "en": np.full((ke, kn, kq), 1.0 / kq),
                "nn": np.full((kn, kn, kq), 1.0 / kq),
            },
        )


@dataclass
class BinaryParams:
    mu: np.ndarray                  # (K,)
    rho: dict[str, float] = field(default_factory=dict)
    sigma: float = 1.0

    def rho_of(self, annotator: str) -> float:
        return self.rho.get(annotator, 0.0)


@dataclass
class CategoricalParams:
    mu: np.ndarray                  # (K, k)
    rho: dict[str, np.ndarray] = field(default_factory=dict)
    sigma: np.ndarray = None        # (k, k)

    def __post_init__(self):
        if self.sigma is None:
            self.sigma = np.eye(self.mu.shape[-1])

    def rho_of(self, annotator: str) -> np.ndarray:
        r = self.rho.get(annotator)
        return r if r is not None else np.zeros(self.mu.shape[-1])


@dataclass
class OrdinalParams:
    mu: np.ndarray                  # (K,)
    cut_raw: np.ndarray             # (J-1,), population (first, log gaps)
    rho: dict[str, np.ndarray] = field(default_factory=dict)  # raw offsets
    sigma: np.ndarray = None        # (J-1, J-1)

    def __post_init__(self):
        if self.sigma is None:
            self.sigma = np.eye(len(self.cut_raw))

    def rho_of(self, annotator: str) -> np.ndarray:
        r = self.rho.get(annotator)
        return r if r is not None else np.zeros(len(self.cut_raw))

    def cutpoints(self, annotator: str) -> np.ndarray:
        return lk.cutpoints_from_raw(self.cut_raw + self.rho_of(annotator))

    def recenter(self) -> None:
        """Shift location into mu so population cutpoints average to zero."""
        shift = float(np.mean(lk.cutpoints_from_raw(self.cut_raw)))
        self.cut_raw[0] -= shift
        self.mu -= shift


@dataclass
class HurdleParams:
    gate_mu: np.ndarray             # (K,)
    gate_rho: dict[str, float] = field(default_factory=dict)
    gate_sigma: float = 1.0
    base: Union[BinaryParams, CategoricalParams, OrdinalParams] = None

    def gate_rho_of(self, annotator: str) -> float:
        return self.gate_rho.get(annotator, 0.0)


@dataclass
class TemporalParams:
    start: CategoricalParams        # mu (K, 3) over lock outcomes
    end: CategoricalParams
    order: CategoricalParams


PropParams = Union[BinaryParams, CategoricalParams, OrdinalParams,
                   HurdleParams, TemporalParams]


@dataclass
class ModelParams:
    inventory: TypeInventory
    priors: PriorParams
    props: dict[str, PropParams]
    annotators: list[str] = field(default_factory=list)


def raw_from_cutpoints(cutpoints) -> np.ndarray:
    cutpoints = np.asarray(cutpoints, dtype=float)
    raw = np.empty_like(cutpoints)
    raw[0] = cutpoints[0]
    if len(cutpoints) > 1:
        raw[1:] = np.log(np.diff(cutpoints))
    return raw


def default_cut_raw(n_levels: int) -> np.ndarray:
    cuts = np.linspace(-2.0, 2.0, n_levels - 1)
    return raw_from_cutpoints(cuts)


def init_prop_params(spec, k: int, rng: np.random.Generator,
                     mu_scale: float = 0.5) -> PropParams:
    def binary():
        return BinaryParams(mu=rng.normal(0.0, mu_scale, size=k))

    def categorical(nc):
        return CategoricalParams(mu=rng.normal(0.0, mu_scale, size=(k, nc)))

    def ordinal(nl):
        return OrdinalParams(mu=rng.normal(0.0, mu_scale, size=k),
                             cut_raw=default_cut_raw(nl))

    if spec.response == BINARY:
        base = binary()
    elif spec.response == CATEGORICAL:
        base = categorical(spec.n_categories)
    elif spec.response == ORDINAL:
        base = ordinal(spec.n_levels)
    elif spec.response == TEMPORAL:
        base = TemporalParams(start=categorical(3), end=categorical(3),
                              order=categorical(3))
    else:  # pragma: no cover
        raise ValueError(spec.response)
    if spec.gated:
        return HurdleParams(gate_mu=rng.normal(0.0, mu_scale, size=k),
                            base=base)
    return base


def init_params(schema: Schema, inv: TypeInventory, seed: int = 0,
                mu_scale: float = 0.5,
                annotators: list[str] | None = None) -> ModelParams:
    """Symmetric start with small symmetry-breaking noise on mu; uniform
    priors; zero annotator intercepts."""
    rng = np.random.default_rng(seed)
    props = {}
    for spec in schema:
        props[spec.name] = init_prop_params(spec, inv.k_for(spec.group), rng,
                                            mu_scale)
    return ModelParams(inventory=inv, priors=PriorParams.uniform(inv),
                       props=props, annotators=list(annotators or []))


# ---------------------------------------------------------------------------
# per-annotation log-likelihood across candidate types

def base_loglik_types(base: PropParams, spec, value, annotator: str) -> np.ndarray:
    """(K,) log-likelihood of one observed value under each candidate type."""
    if spec.response == BINARY:
        return lk.binary_loglik(base.mu, base.rho_of(annotator), bool(value))
    if spec.response == CATEGORICAL:
        return lk.categorical_loglik(base.mu, base.rho_of(annotator), int(value))
    if spec.response == ORDINAL:
        return lk.ordinal_loglik(base.mu, base.cutpoints(annotator), int(value))
    if spec.response == TEMPORAL:
        obs = normalize_temporal(value)
        return lk.temporal_loglik(
            base.start.mu, base.start.rho_of(annotator),
            base.end.mu, base.end.rho_of(annotator),
            base.order.mu, base.order.rho_of(annotator), obs)
    raise ValueError(spec.response)  # pragma: no cover


def annotation_loglik_types(pp: PropParams, spec, value, annotator: str,
                            absent: bool = False) -> np.ndarray:
    """(K,) log-likelihood including the hurdle gate for gated properties.

    For gated properties, absent=True scores the annotator having answered
    the parent away from the gate (no value observed)."""
    if isinstance(pp, HurdleParams):
        base_ll = None if absent else base_loglik_types(pp.base, spec, value,
                                                        annotator)
        return lk.hurdle_loglik(pp.gate_mu, pp.gate_rho_of(annotator),
                                base_ll, absent)
    if absent:
        raise ValueError(f"{spec.name}: absent outcome on an ungated property")
    return base_loglik_types(pp, spec, value, annotator)


# ---------------------------------------------------------------------------
# checkpoint serialization

def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def _prop_obj(pp: PropParams) -> dict:
    if isinstance(pp, BinaryParams):
        return {"family": "binary", "mu": _arr(pp.mu),
                "rho": {a: float(v) for a, v in sorted(pp.rho.items())},
                "sigma": float(pp.sigma)}
    if isinstance(pp, CategoricalParams):
        return {"family": "categorical", "mu": _arr(pp.mu),
                "rho": {a: _arr(v) for a, v in sorted(pp.rho.items())},
                "sigma": _arr(pp.sigma)}
    if isinstance(pp, OrdinalParams):
        return {"family": "ordinal", "mu": _arr(pp.mu),
                "cut_raw": _arr(pp.cut_raw),
                "rho": {a: _arr(v) for a, v in sorted(pp.rho.items())},
                "sigma": _arr(pp.sigma)}
    if isinstance(pp, HurdleParams):
        return {"family": "hurdle", "gate_mu": _arr(pp.gate_mu),
                "gate_rho": {a: float(v)
                             for a, v in sorted(pp.gate_rho.items())},
                "gate_sigma": float(pp.gate_sigma),
                "base": _prop_obj(pp.base)}
    if isinstance(pp, TemporalParams):
        return {"family": "temporal", "start": _prop_obj(pp.start),
                "end": _prop_obj(pp.end), "order": _prop_obj(pp.order)}
    raise TypeError(type(pp))  # pragma: no cover


def _prop_from_obj(obj: dict) -> PropParams:
    fam = obj["family"]
    if fam == "binary":
        return BinaryParams(mu=np.asarray(obj["mu"]),
                            rho={a: float(v) for a, v in obj["rho"].items()},
                            sigma=float(obj["sigma"]))
    if fam == "categorical":
        return CategoricalParams(
            mu=np.asarray(obj["mu"]),
            rho={a: np.asarray(v) for a, v in obj["rho"].items()},
            sigma=np.asarray(obj["sigma"]))
    if fam == "ordinal":
        return OrdinalParams(
            mu=np.asarray(obj["mu"]), cut_raw=np.asarray(obj["cut_raw"]),
            rho={a: np.asarray(v) for a, v in obj["rho"].items()},
            sigma=np.asarray(obj["sigma"]))
    if fam == "hurdle":
        return HurdleParams(
            gate_mu=np.asarray(obj["gate_mu"]),
            gate_rho={a: float(v) for a, v in obj["gate_rho"].items()},
            gate_sigma=float(obj["gate_sigma"]),
            base=_prop_from_obj(obj["base"]))
    if fam == "temporal":
        return TemporalParams(start=_prop_from_obj(obj["start"]),
                              end=_prop_from_obj(obj["end"]),
                              order=_prop_from_obj(obj["order"]))
    raise ValueError(fam)


def params_to_obj(params: ModelParams) -> dict:
    inv = params.inventory
    return {
        "version": CHECKPOINT_VERSION,
        "inventory": {"k_event": inv.k_event, "k_entity": inv.k_entity,
                      "k_role": inv.k_role, "k_rel": inv.k_rel},
        "priors": {
            "theta_event": _arr(params.priors.theta_event),
            "theta_entity": _arr(params.priors.theta_entity),
            "theta_role": _arr(params.priors.theta_role),
            "theta_rel": {b: _arr(v)
                          for b, v in sorted(params.priors.theta_rel.items())},
        },
        "props": {name: _prop_obj(pp)
                  for name, pp in sorted(params.props.items())},
        "annotators": sorted(params.annotators),
    }


def params_from_obj(obj: dict) -> ModelParams:
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')}")
    inv = TypeInventory(**obj["inventory"])
    pr = obj["priors"]
    priors = PriorParams(
        theta_event=np.asarray(pr["theta_event"]),
        theta_entity=np.asarray(pr["theta_entity"]),
        theta_role=np.asarray(pr["theta_role"]),
        theta_rel={b: np.asarray(v) for b, v in pr["theta_rel"].items()},
    )
    props = {name: _prop_from_obj(p) for name, p in obj["props"].items()}
    return ModelParams(inventory=inv, priors=priors, props=props,
                       annotators=list(obj.get("annotators", [])))


def save_params(params: ModelParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_obj(params), fh, sort_keys=True)
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(path) as fh:
        return params_from_obj(json.load(fh))

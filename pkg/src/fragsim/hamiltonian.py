"""Ising-like spin models and the seeded ensembles they are drawn from.

A model is ``H = -sum J_ij^{ab} S_a^(i) S_b^(j) - sum_i h_i S_x^(i)``.

Random draws use numpy's Philox generator (a counter-based 64-bit bit
generator), so a seed gives the same model on every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

import numpy as np

from fragsim.core import (
    AXES,
    HermitianOperator,
    PauliString,
    StructuralError,
    compile_operator,
    hermitian_eig,
)

MODEL_SCHEMA = "fragsim.spin_model/1"

CouplingKey = tuple[int, int, str, str]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SpinModel:
    n: int
    couplings: dict[CouplingKey, float] = field(default_factory=dict)
    fields: tuple[float, ...] = ()
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise StructuralError(f"model needs at least one spin, got n={self.n}")
        canon: dict[CouplingKey, float] = {}
        for (i, j, a, b), val in self.couplings.items():
            i, j, a, b = int(i), int(j), str(a).lower(), str(b).lower()
            if i == j:
                raise StructuralError(f"self-coupling on spin {i}")
            if i > j:
                i, j, a, b = j, i, b, a
            if not (0 <= i < self.n and j < self.n):
                raise StructuralError(f"coupling ({i}, {j}) out of range for n={self.n}")
            if a not in AXES or b not in AXES:
                raise StructuralError(f"bad axes {a!r}, {b!r}")
            key = (i, j, a, b)
            canon[key] = canon.get(key, 0.0) + float(val)
        object.__setattr__(self, "couplings", dict(sorted(canon.items())))
        flds = tuple(float(h) for h in self.fields) if self.fields else (0.0,) * self.n
        if len(flds) != self.n:
            raise StructuralError(f"{len(flds)} fields for {self.n} spins")
        object.__setattr__(self, "fields", flds)

    def with_fields(self, h: float | list[float]) -> "SpinModel":
        flds = [float(h)] * self.n if np.isscalar(h) else list(h)
        return SpinModel(self.n, dict(self.couplings), tuple(flds), self.seed)

    def with_couplings(self, couplings: dict[CouplingKey, float]) -> "SpinModel":
        return SpinModel(self.n, couplings, self.fields, self.seed)

    @property
    def is_zz(self) -> bool:
        return all(a == "z" and b == "z" for (_, _, a, b) in self.couplings)

    def neighbors(self, i: int) -> set[int]:
        return {j if k == i else k for (k, j, _, _) in self.couplings if i in (k, j)}

    # JSON ----------------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": MODEL_SCHEMA,
            "n": self.n,
            "couplings": [[i, j, a, b, v] for (i, j, a, b), v in self.couplings.items()],
            "fields": list(self.fields),
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SpinModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise StructuralError(f"unsupported model schema {d.get('schema')!r}")
        extra = set(d) - {"schema", "n", "couplings", "fields", "seed"}
        if extra:
            raise StructuralError(f"unknown model keys {sorted(extra)}")
        coup = {(int(i), int(j), a, b): float(v) for i, j, a, b, v in d["couplings"]}
        return cls(int(d["n"]), coup, tuple(d["fields"]), d.get("seed"))

    @classmethod
    def from_json(cls, text: str) -> "SpinModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GraphEnsembleConfig:
    """Erdos-Renyi graphs with Gaussian edge weights."""

    n: int
    edge_prob: float = 0.5
    weight_mean: float = 0.0
    weight_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise StructuralError(f"ensemble needs n >= 2, got {self.n}")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError(f"edge_prob must lie in [0, 1], got {self.edge_prob}")
        if self.weight_std < 0.0:
            raise ValueError(f"weight_std must be >= 0, got {self.weight_std}")


def build_tfim_chain(n: int, J: float, h: float) -> SpinModel:
    """Open nearest-neighbour chain with z-z coupling J and uniform x field h."""
    if n < 2:
        raise StructuralError(f"chain needs n >= 2, got {n}")
    coup = {(i, i + 1, "z", "z"): float(J) for i in range(n - 1)}
    return SpinModel(n, coup, (float(h),) * n)


def sample_random_ising(cfg: GraphEnsembleConfig, h: float) -> SpinModel:
    rng = make_rng(cfg.seed)
    pairs = list(combinations(range(cfg.n), 2))
    present = rng.random(len(pairs)) < cfg.edge_prob
    weights = rng.normal(cfg.weight_mean, cfg.weight_std, len(pairs))
    coup = {(i, j, "z", "z"): float(w) for (i, j), keep, w in zip(pairs, present, weights) if keep}
    return SpinModel(cfg.n, coup, (float(h),) * cfg.n, cfg.seed)


def sample_all_to_all_gaussian(n: int, seed: int, h: float) -> SpinModel:
    """Complete graph with N(0, 1) weights; at h = 0 this is a weighted MaxCut instance."""
    if n < 2:
        raise StructuralError(f"need n >= 2, got {n}")
    rng = make_rng(seed)
    pairs = list(combinations(range(n), 2))
    weights = rng.normal(0.0, 1.0, len(pairs))
    coup = {(i, j, "z", "z"): float(w) for (i, j), w in zip(pairs, weights)}
    return SpinModel(n, coup, (float(h),) * n, seed)


def random_basis_index(n: int, rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**n))


def coupling_term(key: CouplingKey, J: float) -> PauliString:
    i, j, a, b = key
    return PauliString.of(-J, {i: a, j: b})


def assemble(model: SpinModel) -> HermitianOperator:
    terms = [coupling_term(k, v) for k, v in model.couplings.items()]
    terms += [PauliString.of(-h, {i: "x"}) for i, h in enumerate(model.fields) if h != 0.0]
    return HermitianOperator(tuple(terms))


def classical_energies(model: SpinModel) -> np.ndarray:
    """Diagonal of the coupling part over all 2^n basis states (fields ignored)."""
    if not model.is_zz:
        raise StructuralError("classical energies need z-z couplings only")
    return compile_operator(assemble(model.with_fields(0.0)), model.n).diag.copy()


def exact_ground(model: SpinModel) -> tuple[float, np.ndarray]:
    """Ground energy and a ground state by dense diagonalization."""
    if model.is_zz and not any(model.fields):
        energies = classical_energies(model)
        k = int(np.argmin(energies))
        psi = np.zeros(1 << model.n, dtype=np.complex128)
        psi[k] = 1.0
        return float(energies[k]), psi
    h = compile_operator(assemble(model), model.n).dense()
    if np.max(np.abs(h.imag)) == 0.0:
        h = h.real
    vals, vecs = hermitian_eig(h)
    return float(vals[0]), vecs[:, 0].astype(np.complex128)


def ground_energy(model: SpinModel) -> float:
    if model.is_zz and not any(model.fields):
        return float(np.min(classical_energies(model)))
    return exact_ground(model)[0]

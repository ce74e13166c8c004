"""Fragment layouts, fragment Hamiltonians and the short-time error proxies.

A fragment ``f`` is simulated on ``N_f + N_a`` registers: first its own spins
(in partition order), then one register per auxiliary, each impersonating an
environment spin (its target). ``S_f`` below is the set of system spins those
registers stand for.

Bookkeeping rules for couplings ``(i, j)`` seen from fragment ``f``:

* both endpoints in ``S_f``: a genuine two-body term (this includes
  target-target couplings when both targets sit in the same fragment);
* exactly one endpoint in ``S_f``: a mean-field term on the inside register;
* neither endpoint in ``S_f``: ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from fragsim.core import (
    AXES,
    HermitianOperator,
    PauliString,
    StateVector,
    StructuralError,
    compile_operator,
    expm_apply,
)
from fragsim.hamiltonian import CouplingKey, SpinModel

LAYOUT_SCHEMA = "fragsim.layout/1"


@dataclass(frozen=True)
class FragmentLayout:
    partition: tuple[tuple[int, ...], ...]
    aux_targets: tuple[tuple[int, ...], ...] = ()
    n: int = 0

    def __post_init__(self):
        part = tuple(tuple(int(q) for q in block) for block in self.partition)
        n = self.n or sum(len(b) for b in part)
        flat = sorted(q for b in part for q in b)
        if flat != list(range(n)):
            raise StructuralError(f"partition {part} does not cover 0..{n - 1} exactly once")
        if any(len(b) == 0 for b in part):
            raise StructuralError("empty fragment in partition")
        aux = tuple(tuple(int(q) for q in t) for t in self.aux_targets) or ((),) * len(part)
        if len(aux) != len(part):
            raise StructuralError(f"{len(aux)} auxiliary lists for {len(part)} fragments")
        for block, targets in zip(part, aux):
            if len(set(targets)) != len(targets):
                raise StructuralError(f"repeated auxiliary target in {targets}")
            if set(targets) & set(block):
                raise StructuralError(f"auxiliary targets {targets} overlap their own fragment {block}")
            if any(not 0 <= t < n for t in targets):
                raise StructuralError(f"auxiliary targets {targets} out of range")
        object.__setattr__(self, "partition", part)
        object.__setattr__(self, "aux_targets", aux)
        object.__setattr__(self, "n", n)

    @classmethod
    def blocks(cls, n: int, sizes: Sequence[int]) -> "FragmentLayout":
        """Contiguous blocks, e.g. ``blocks(6, [3, 3])`` -> (0,1,2 | 3,4,5)."""
        if sum(sizes) != n:
            raise StructuralError(f"block sizes {sizes} do not sum to {n}")
        start, part = 0, []
        for s in sizes:
            part.append(tuple(range(start, start + s)))
            start += s
        return cls(tuple(part), n=n)

    def with_targets(self, targets: Sequence[Sequence[int]]) -> "FragmentLayout":
        return FragmentLayout(self.partition, tuple(tuple(t) for t in targets), self.n)

    @property
    def n_fragments(self) -> int:
        return len(self.partition)

    def registers(self, f: int) -> tuple[int, ...]:
        """System spin represented by each register of fragment ``f``."""
        self._check(f)
        return self.partition[f] + self.aux_targets[f]

    def n_registers(self, f: int) -> int:
        return len(self.registers(f))

    def environment(self, f: int) -> tuple[int, ...]:
        inside = set(self.partition[f])
        return tuple(q for q in range(self.n) if q not in inside)

    def owner(self) -> list[int]:
        own = [0] * self.n
        for f, block in enumerate(self.partition):
            for q in block:
                own[q] = f
        return own

    def _check(self, f: int) -> None:
        if not 0 <= f < len(self.partition):
            raise StructuralError(f"unknown fragment {f}")

    def to_dict(self) -> dict:
        return {
            "schema": LAYOUT_SCHEMA,
            "n": self.n,
            "partition": [list(b) for b in self.partition],
            "aux_targets": [list(t) for t in self.aux_targets],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "FragmentLayout":
        if d.get("schema", LAYOUT_SCHEMA) != LAYOUT_SCHEMA:
            raise StructuralError(f"unsupported layout schema {d.get('schema')!r}")
        extra = set(d) - {"schema", "n", "partition", "aux_targets"}
        if extra:
            raise StructuralError(f"unknown layout keys {sorted(extra)}")
        return cls(
            tuple(tuple(b) for b in d["partition"]),
            tuple(tuple(t) for t in d.get("aux_targets", ())),
            int(d.get("n", 0)),
        )


@dataclass(frozen=True)
class MeanFieldTable:
    """Measured ``<S_b^(j)>`` values keyed by ``(spin, axis)``."""

    values: dict[tuple[int, str], float] = field(default_factory=dict)
    timestamp: int = 0

    def __post_init__(self):
        for key, v in self.values.items():
            if abs(v) > 0.5 + 1e-10:
                raise StructuralError(f"mean field {key} = {v} outside [-1/2, 1/2]")

    @classmethod
    def zeros(cls, n: int, axes: Iterable[str] = AXES) -> "MeanFieldTable":
        return cls({(j, a): 0.0 for j in range(n) for a in axes}, 0)

    def get(self, j: int, axis: str) -> float:
        try:
            return self.values[(j, axis)]
        except KeyError:
            raise StructuralError(f"no mean field recorded for spin {j}, axis {axis}") from None


@dataclass(frozen=True)
class ShortTimeError:
    variance: float
    per_aux: dict[int, float]


# --------------------------------------------------------------------------
# coupling bookkeeping


def interface_of(model: SpinModel, layout: FragmentLayout, f: int) -> list[CouplingKey]:
    """Couplings with exactly one endpoint inside fragment ``f``."""
    inside = set(layout.partition[f]) if 0 <= f < layout.n_fragments else layout._check(f)
    return [k for k in model.couplings if (k[0] in inside) != (k[1] in inside)]


def _split_couplings(model: SpinModel, spins: set[int]):
    internal, residual = [], []
    for key, J in model.couplings.items():
        i, j = key[0], key[1]
        if i in spins and j in spins:
            internal.append((key, J))
        elif i in spins or j in spins:
            residual.append((key, J))
    return internal, residual


def _reg_map(layout: FragmentLayout, f: int) -> dict[int, int]:
    return {spin: r for r, spin in enumerate(layout.registers(f))}


def bare_fragment_hamiltonian(model: SpinModel, layout: FragmentLayout, f: int) -> HermitianOperator:
    """Two-body terms inside ``S_f`` plus fields, on the fragment's registers."""
    reg = _reg_map(layout, f)
    internal, _ = _split_couplings(model, set(reg))
    terms = [PauliString.of(-J, {reg[i]: a, reg[j]: b}) for (i, j, a, b), J in internal]
    terms += [PauliString.of(-model.fields[s], {r: "x"}) for s, r in reg.items() if model.fields[s] != 0.0]
    return HermitianOperator(tuple(terms))


def mean_field_terms(model: SpinModel, layout: FragmentLayout, f: int, mft: MeanFieldTable) -> HermitianOperator:
    """``-J <S_b^(j)> S_a^(i)`` for every residual coupling of ``f``, one term each."""
    reg = _reg_map(layout, f)
    _, residual = _split_couplings(model, set(reg))
    terms = []
    for (i, j, a, b), J in residual:
        if i in reg:
            terms.append(PauliString.of(-J * mft.get(j, b), {reg[i]: a}))
        else:
            terms.append(PauliString.of(-J * mft.get(i, a), {reg[j]: b}))
    return HermitianOperator(tuple(terms))


def mean_field_fragment_hamiltonian(
    model: SpinModel, layout: FragmentLayout, f: int, mft: MeanFieldTable
) -> HermitianOperator:
    return bare_fragment_hamiltonian(model, layout, f) + mean_field_terms(model, layout, f, mft)


# --------------------------------------------------------------------------
# short-time error


def interface_operator(
    model: SpinModel, layout: FragmentLayout, f: int, only_env: int | None = None
) -> HermitianOperator:
    """``-sum_I J S S`` over the interface of ``f`` on the full system."""
    inside = set(layout.partition[f])
    terms = []
    for key in interface_of(model, layout, f):
        env = key[1] if key[0] in inside else key[0]
        if only_env is None or env == only_env:
            i, j, a, b = key
            terms.append(PauliString.of(-model.couplings[key], {i: a, j: b}))
    return HermitianOperator(tuple(terms))


def operator_variance(op: HermitianOperator, psi: np.ndarray, n: int) -> float:
    if not op.terms:
        return 0.0
    o_psi = compile_operator(op, n).apply(psi)
    mean = np.vdot(psi, o_psi).real
    return max(float(np.vdot(o_psi, o_psi).real - mean**2), 0.0)


def _amps(psi) -> np.ndarray:
    return psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=np.complex128)


def short_time_variance(model: SpinModel, layout: FragmentLayout, f: int, psi_full) -> float:
    """``var(H - H_I^(f))``: the t^2 coefficient of ``1 - F(t)``."""
    return operator_variance(interface_operator(model, layout, f), _amps(psi_full), model.n)


def aux_proxy(model: SpinModel, layout: FragmentLayout, f: int, psi, a: int) -> float:
    """The variance restricted to interface couplings whose environment end is ``a``."""
    if a in layout.partition[f]:
        raise StructuralError(f"candidate {a} lies inside fragment {f}")
    return operator_variance(interface_operator(model, layout, f, only_env=a), _amps(psi), model.n)


def short_time_error(model: SpinModel, layout: FragmentLayout, f: int, psi_full) -> ShortTimeError:
    psi = _amps(psi_full)
    per = {a: aux_proxy(model, layout, f, psi, a) for a in layout.environment(f)}
    return ShortTimeError(short_time_variance(model, layout, f, psi), per)


def restrict_basis(index: int, n: int, spins: Sequence[int]) -> int:
    """Basis index over ``spins`` holding the same bit values as ``index``."""
    out = 0
    for s in spins:
        out = (out << 1) | ((index >> (n - 1 - s)) & 1)
    return out


def _basis_index(psi0, n: int) -> int:
    if isinstance(psi0, (int, np.integer)):
        return int(psi0)
    k = (psi0 if isinstance(psi0, StateVector) else StateVector(n, psi0)).basis_index()
    if k is None:
        raise StructuralError("initial state must be a computational basis state")
    return k


def proxy_after_step(model: SpinModel, layout: FragmentLayout, f: int, psi0, a: int, dt: float) -> float:
    """v(a) after evolving fragment ``f`` plus a single auxiliary on ``a`` for ``dt``."""
    single = FragmentLayout(layout.partition, tuple((a,) if g == f else () for g in range(layout.n_fragments)), layout.n)
    regs = single.registers(f)
    nr = len(regs)
    k0 = restrict_basis(_basis_index(psi0, model.n), model.n, regs)
    psi = np.zeros(1 << nr, dtype=np.complex128)
    psi[k0] = 1.0
    psi = expm_apply(compile_operator(bare_fragment_hamiltonian(model, single, f), nr), psi, dt)
    reg = _reg_map(single, f)
    inside = set(layout.partition[f])
    terms = []
    for key in interface_of(model, layout, f):
        i, j, al, be = key
        if (j if i in inside else i) == a:
            terms.append(PauliString.of(-model.couplings[key], {reg[i]: al, reg[j]: be}))
    return operator_variance(HermitianOperator(tuple(terms)), psi, nr)


def rank_aux_targets(model: SpinModel, layout: FragmentLayout, f: int, psi0, dt: float) -> list[int]:
    """Environment spins of ``f`` by descending v(a), ties by ascending index.

    Each candidate is scored on the state reached by evolving the fragment
    with that one auxiliary for a single step ``dt`` under its bare
    Hamiltonian, since v(a) vanishes on computational basis states.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    env = layout.environment(f)
    if not env:
        raise StructuralError(f"fragment {f} has no environment spins")
    scores = {a: proxy_after_step(model, layout, f, psi0, a, dt) for a in env}
    return sorted(env, key=lambda a: (-scores[a], a))


def select_aux_targets(model: SpinModel, layout: FragmentLayout, n_aux: int, psi0, dt: float,
                       rank_slice: int = 0) -> FragmentLayout:
    """Layout whose fragment ``f`` targets ranked candidates ``[s*n_aux, (s+1)*n_aux)``."""
    targets = []
    for f in range(layout.n_fragments):
        ranked = rank_aux_targets(model, layout, f, psi0, dt) if n_aux else []
        targets.append(tuple(ranked[rank_slice * n_aux:(rank_slice + 1) * n_aux]))
    return layout.with_targets(targets)


# --------------------------------------------------------------------------
# quantum channel


def target_sets(layout: FragmentLayout) -> list[set[int]]:
    return [set(layout.registers(f)) for f in range(layout.n_fragments)]


def masked_coupling_union(model: SpinModel, layout: FragmentLayout) -> SpinModel:
    """Keep a coupling iff both ends lie in ``S_f`` for some fragment ``f``."""
    sets = target_sets(layout)
    kept = {k: J for k, J in model.couplings.items() if any(k[0] in s and k[1] in s for s in sets)}
    return model.with_couplings(kept)


def zeroed_couplings(model: SpinModel, layout: FragmentLayout) -> dict[CouplingKey, float]:
    union = masked_coupling_union(model, layout).couplings
    return {k: J for k, J in model.couplings.items() if k not in union}

"""Exact and fragmented time evolution.

Three protocols share one record type:

* exact: the full state under the full Hamiltonian;
* classical channel: each fragment (plus its auxiliaries) lives on its own
  registers and only mean-field tables cross fragment boundaries;
* quantum channel: a full-space state evolved under the couplings kept by
  the fragments' target sets, with mean-field terms replacing the rest.

Mean-field table ``k`` is measured after outer step ``k``; sub-step ``m``
uses table ``m - 1``. Table 0 is all zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from fragsim.core import (
    HermitianOperator,
    NORM_TOL,
    NumericalError,
    PauliString,
    StateVector,
    StructuralError,
    compile_operator,
    expm_apply,
    reduced_density,
)
from fragsim.fragmentation import (
    FragmentLayout,
    MeanFieldTable,
    aux_proxy,
    bare_fragment_hamiltonian,
    interface_operator,
    masked_coupling_union,
    mean_field_fragment_hamiltonian,
    rank_aux_targets,
    restrict_basis,
    zeroed_couplings,
)
from fragsim.hamiltonian import SpinModel, assemble, make_rng
from fragsim.metrics import exact_reduced, fragment_reduced, local_expectations, uhlmann_fidelity

CHANNELS = ("none", "classical", "quantum")
AUX_UPDATES = ("fixed", "active", "random_active")


@dataclass(frozen=True)
class EvolutionSchedule:
    """Time grid and protocol switches.

    ``n_aux`` set to an integer asks for targets chosen by the one-step
    variance ranking (entries ``rank_slice * n_aux`` onward); left as None
    the layout's own targets are used. ``streaming`` skips the per-step
    restart; results are identical, only the cost differs.
    """

    dt: float = 0.1
    n_steps: int = 10
    channel: str = "classical"
    aux_update: str = "fixed"
    seed: int = 0
    mean_field: bool = True
    n_aux: int | None = None
    rank_slice: int = 0
    streaming: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}, got {self.channel!r}")
        if self.aux_update not in AUX_UPDATES:
            raise ValueError(f"aux_update must be one of {AUX_UPDATES}, got {self.aux_update!r}")
        if self.n_aux is not None and self.n_aux < 0:
            raise ValueError(f"n_aux must be >= 0, got {self.n_aux}")
        if self.rank_slice < 0:
            raise ValueError(f"rank_slice must be >= 0, got {self.rank_slice}")


@dataclass
class EvolutionRecord:
    times: list[float]
    mean_field_history: list[MeanFieldTable]
    fragment_states: list
    aux_choices: list[tuple[tuple[int, ...], ...]]
    kind: str
    layout: FragmentLayout | None = None
    metrics: dict[str, list] = field(default_factory=dict)


def _amps(psi) -> np.ndarray:
    return psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=np.complex128)


def _check_state(psi: np.ndarray, n: int) -> None:
    if psi.shape != (1 << n,):
        raise StructuralError(f"state has {psi.shape[0]} amplitudes, model needs {1 << n}")


def _step(op: HermitianOperator, n: int, psi: np.ndarray, dt: float) -> np.ndarray:
    out = expm_apply(compile_operator(op, n), psi, dt)
    drift = abs(np.linalg.norm(out) - np.linalg.norm(psi))
    if drift > NORM_TOL:
        raise NumericalError("norm drift during evolution", drift)
    return out


def _times(sched: EvolutionSchedule) -> list[float]:
    return [round(k * sched.dt, 12) for k in range(sched.n_steps + 1)]


def evolve_exact(model: SpinModel, psi0, sched: EvolutionSchedule) -> EvolutionRecord:
    psi = _amps(psi0).copy()
    _check_state(psi, model.n)
    cop = compile_operator(assemble(model), model.n)
    states = [psi.copy()]
    for _ in range(sched.n_steps):
        psi = expm_apply(cop, psi, sched.dt)
        states.append(psi.copy())
    drift = abs(np.linalg.norm(psi) - np.linalg.norm(states[0]))
    if drift > NORM_TOL * sched.n_steps:
        raise NumericalError("norm drift during exact evolution", drift)
    return EvolutionRecord(_times(sched), [], states, [], "exact")


def single_site_means(psi: np.ndarray, n: int, site: int) -> dict[str, float]:
    r = reduced_density(psi, n, [site])
    return {"x": float(r[0, 1].real), "y": float(-r[0, 1].imag), "z": float(0.5 * (r[0, 0] - r[1, 1]).real)}


def _table_from_full(psi: np.ndarray, n: int, step: int) -> MeanFieldTable:
    vals = {}
    for j in range(n):
        for a, v in single_site_means(psi, n, j).items():
            vals[(j, a)] = v
    return MeanFieldTable(vals, step)


def _initial_targets(model: SpinModel, layout: FragmentLayout, psi0, sched: EvolutionSchedule) -> FragmentLayout:
    if sched.n_aux is None:
        return layout
    out = []
    for f in range(layout.n_fragments):
        ranked = rank_aux_targets(model, layout, f, psi0, sched.dt) if sched.n_aux else []
        lo = sched.rank_slice * sched.n_aux
        out.append(tuple(ranked[lo:lo + sched.n_aux]))
    return layout.with_targets(out)


# --------------------------------------------------------------------------
# classical channel


def _fragment_initial(index: int, n: int, layout: FragmentLayout, f: int) -> np.ndarray:
    regs = layout.registers(f)
    psi = np.zeros(1 << len(regs), dtype=np.complex128)
    psi[restrict_basis(index, n, regs)] = 1.0
    return psi


def _fragment_op(model, layout, f, table, mean_field) -> HermitianOperator:
    if mean_field:
        return mean_field_fragment_hamiltonian(model, layout, f, table)
    return bare_fragment_hamiltonian(model, layout, f)


def _measure_tables(states: list[np.ndarray], layout: FragmentLayout, step: int) -> MeanFieldTable:
    vals = {}
    for f, psi in enumerate(states):
        nr = layout.n_registers(f)
        for r, spin in enumerate(layout.partition[f]):
            for a, v in single_site_means(psi, nr, r).items():
                vals[(spin, a)] = v
    return MeanFieldTable(vals, step)


def evolve_classical_channel(model: SpinModel, layout: FragmentLayout, psi0,
                             sched: EvolutionSchedule) -> EvolutionRecord:
    """Fragments exchange only mean-field tables.

    Unless ``sched.streaming`` is set, every outer step ``k`` restarts each
    fragment from its initial state and replays sub-steps ``1..k``.
    """
    if layout.n != model.n:
        raise StructuralError(f"layout covers {layout.n} spins, model has {model.n}")
    if sched.aux_update != "fixed":
        raise StructuralError("the classical channel keeps auxiliary targets fixed")
    if isinstance(psi0, (int, np.integer)):
        index = int(psi0)
    else:
        amps = _amps(psi0)
        _check_state(amps, model.n)
        index = StateVector(model.n, amps).basis_index()
        if index is None:
            raise StructuralError("classical-channel evolution needs a computational basis initial state")
    layout = _initial_targets(model, layout, index, sched)
    nf = layout.n_fragments
    init = [_fragment_initial(index, model.n, layout, f) for f in range(nf)]
    tables = [MeanFieldTable.zeros(model.n)]
    history = [[s.copy() for s in init]]
    current = [s.copy() for s in init]
    nregs = [layout.n_registers(f) for f in range(nf)]
    for k in range(1, sched.n_steps + 1):
        if sched.streaming:
            current = [
                _step(_fragment_op(model, layout, f, tables[k - 1], sched.mean_field), nregs[f], current[f], sched.dt)
                for f in range(nf)
            ]
        else:
            current = []
            for f in range(nf):
                psi = init[f].copy()
                for m in range(1, k + 1):
                    op = _fragment_op(model, layout, f, tables[m - 1], sched.mean_field)
                    psi = _step(op, nregs[f], psi, sched.dt)
                current.append(psi)
        history.append([s.copy() for s in current])
        tables.append(_measure_tables(current, layout, k))
    return EvolutionRecord(_times(sched), tables, history, [layout.aux_targets] * len(history), "classical", layout)


def evolve_no_channel(model: SpinModel, layout: FragmentLayout, psi0, sched: EvolutionSchedule) -> EvolutionRecord:
    """Isolated fragments: no auxiliaries and no mean fields."""
    bare = layout.with_targets([()] * layout.n_fragments)
    sched = replace(sched, channel="classical", mean_field=False, n_aux=None)
    rec = evolve_classical_channel(model, bare, psi0, sched)
    rec.kind = "none"
    return rec


# --------------------------------------------------------------------------
# quantum channel


def mean_field_corrections(model: SpinModel, layout: FragmentLayout, table: MeanFieldTable) -> HermitianOperator:
    """Single-site replacements on both ends of every coupling outside the union."""
    terms = []
    for (i, j, a, b), J in zeroed_couplings(model, layout).items():
        terms.append(PauliString.of(-J * table.get(j, b), {i: a}))
        terms.append(PauliString.of(-J * table.get(i, a), {j: b}))
    return HermitianOperator(tuple(terms))


def quantum_channel_hamiltonian(model: SpinModel, layout: FragmentLayout, table: MeanFieldTable | None):
    op = assemble(masked_coupling_union(model, layout))
    if table is not None:
        op = op + mean_field_corrections(model, layout, table)
    return op


def _active_targets(model, layout, psi, n_aux) -> FragmentLayout:
    out = []
    for f in range(layout.n_fragments):
        env = layout.environment(f)
        scores = {a: aux_proxy(model, layout, f, psi, a) for a in env}
        out.append(tuple(sorted(env, key=lambda a: (-scores[a], a))[:n_aux]))
    return layout.with_targets(out)


def _random_targets(layout, rng, n_aux) -> FragmentLayout:
    out = []
    for f in range(layout.n_fragments):
        env = np.array(layout.environment(f))
        k = min(n_aux, len(env))
        out.append(tuple(int(a) for a in rng.choice(env, size=k, replace=False)))
    return layout.with_targets(out)


def _first_targets(model, layout, psi, basis, n_aux, sched) -> FragmentLayout:
    # on a basis state every zz proxy vanishes, so rank after one trial step
    if basis is not None:
        return _initial_targets(model, layout, basis, replace(sched, n_aux=n_aux))
    return _active_targets(model, layout, psi, n_aux)


def evolve_quantum_channel(model: SpinModel, layout: FragmentLayout, psi0,
                           sched: EvolutionSchedule) -> EvolutionRecord:
    if layout.n != model.n:
        raise StructuralError(f"layout covers {layout.n} spins, model has {model.n}")
    psi = _amps(psi0).copy()
    _check_state(psi, model.n)
    n_aux = sched.n_aux if sched.n_aux is not None else max((len(t) for t in layout.aux_targets), default=0)
    rng = make_rng(sched.seed)
    basis = StateVector(model.n, psi).basis_index()
    tables = [MeanFieldTable.zeros(model.n)]
    states = [psi.copy()]
    choices = []
    fixed = None
    if sched.aux_update == "fixed":
        fixed = layout if sched.n_aux is None else _first_targets(model, layout, psi, basis, n_aux, sched)
    for k in range(1, sched.n_steps + 1):
        if sched.aux_update == "random_active":
            cur = _random_targets(layout, rng, n_aux)
        elif sched.aux_update == "active":
            cur = _first_targets(model, layout, psi, basis, n_aux, sched) if k == 1 else _active_targets(
                model, layout, psi, n_aux)
        else:
            cur = fixed
        choices.append(cur.aux_targets)
        op = quantum_channel_hamiltonian(model, cur, tables[k - 1] if sched.mean_field else None)
        psi = _step(op, model.n, psi, sched.dt)
        states.append(psi.copy())
        tables.append(_table_from_full(psi, model.n, k))
    choices.append(choices[-1])
    return EvolutionRecord(_times(sched), tables, states, choices, "quantum", layout)


def evolve(model: SpinModel, layout: FragmentLayout, psi0, sched: EvolutionSchedule) -> EvolutionRecord:
    if sched.channel == "none":
        return evolve_no_channel(model, layout, psi0, sched)
    if sched.channel == "classical":
        return evolve_classical_channel(model, layout, psi0, sched)
    return evolve_quantum_channel(model, layout, psi0, sched)


# --------------------------------------------------------------------------
# comparison against the exact trajectory


def fragment_fidelities(record: EvolutionRecord, exact: EvolutionRecord, layout: FragmentLayout) -> np.ndarray:
    """``F[k, f]`` for every stored step; also written to ``record.metrics``."""
    if len(record.fragment_states) != len(exact.fragment_states):
        raise StructuralError("records cover different numbers of steps")
    lay = record.layout or layout
    out = np.zeros((len(record.fragment_states), layout.n_fragments))
    for k, (st, ex) in enumerate(zip(record.fragment_states, exact.fragment_states)):
        if record.kind == "quantum":
            lay = layout.with_targets(record.aux_choices[k])
        for f in range(layout.n_fragments):
            if record.kind == "quantum":
                rho = exact_reduced(st, lay, f)
            else:
                rho = fragment_reduced(st[f], lay, f)
            out[k, f] = uhlmann_fidelity(rho, exact_reduced(ex, layout, f))
    record.metrics["fidelity"] = out.tolist()
    return out


def fragment_expectations(record: EvolutionRecord, site: int) -> list[tuple[float, float]]:
    """(<S_x>, <S_z>) of a system spin along the trajectory."""
    out = []
    for k, st in enumerate(record.fragment_states):
        if record.kind in ("exact", "quantum"):
            out.append(local_expectations(st, site))
            continue
        lay = record.layout
        f = lay.owner()[site]
        out.append(local_expectations(st[f], lay.partition[f].index(site)))
    return out


def interface_removed_fidelity(model: SpinModel, layout: FragmentLayout, f: int, psi, t: float) -> float:
    """``|<psi| e^{iHt} e^{-i(H - O_f)t} |psi>|^2`` where ``O_f`` is the interface of ``f``."""
    psi = _amps(psi)
    _check_state(psi, model.n)
    full = assemble(model)
    cut = full + interface_operator(model, layout, f) * -1.0
    a = expm_apply(compile_operator(full, model.n), psi, t)
    b = expm_apply(compile_operator(cut, model.n), psi, t)
    return float(abs(np.vdot(a, b)) ** 2)


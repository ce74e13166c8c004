"""Variational ground-state search and mean-field fragmented pre-training.

Ansatz: ``L_s`` brickwork layers followed by ``L_c`` all-to-all layers. A
layer is RX then RY on every qubit, then controlled-RZ entanglers (nearest
neighbours ``(i, i+1)`` in brickwork layers, every pair ``i < j`` in
all-to-all layers). Parameters are ordered gate by gate; the brickwork
block (``theta``) comes first, then ``phi``.

Gradients use the adjoint method, one forward and one reverse sweep.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from fragsim import kernels
from fragsim.core import (
    CompiledOperator,
    HermitianOperator,
    StructuralError,
    compile_operator,
    z_signs,
    bit,
)
from fragsim.fragmentation import (
    FragmentLayout,
    MeanFieldTable,
    bare_fragment_hamiltonian,
    mean_field_fragment_hamiltonian,
)
from fragsim.hamiltonian import SpinModel, assemble, ground_energy, make_rng

RESULT_COLUMNS = ("seed", "n", "h", "method", "T", "eps", "n_iters")


@dataclass(frozen=True)
class AnsatzSpec:
    n: int
    L_s: int = 4
    L_c: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise StructuralError(f"ansatz needs n >= 1, got {self.n}")
        if self.L_c is None:
            object.__setattr__(self, "L_c", self.n)
        if self.L_s < 0 or self.L_c < 0:
            raise StructuralError("layer counts must be non-negative")

    @property
    def n_theta(self) -> int:
        return self.L_s * (2 * self.n + max(self.n - 1, 0))

    @property
    def n_phi(self) -> int:
        return self.L_c * (2 * self.n + self.n * (self.n - 1) // 2)

    @property
    def n_params(self) -> int:
        return self.n_theta + self.n_phi

    def brickwork_only(self) -> "AnsatzSpec":
        return AnsatzSpec(self.n, self.L_s, 0)


@dataclass(frozen=True)
class ParamVector:
    theta: np.ndarray
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        th = np.array(self.theta, dtype=float).reshape(-1)
        ph = np.array(self.phi, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(th)) and np.all(np.isfinite(ph))):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "phi", ph)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta, self.phi])

    @classmethod
    def split(cls, spec: AnsatzSpec, flat: np.ndarray) -> "ParamVector":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (spec.n_params,):
            raise StructuralError(f"{flat.shape[0]} parameters for an ansatz with {spec.n_params}")
        return cls(flat[: spec.n_theta], flat[spec.n_theta:])


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.05
    max_iters: int = 5000
    convergence_check_every: int = 100
    param_tol: float = 1e-6
    optimizer: str = "gd"
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_iters < 1 or self.convergence_check_every < 1:
            raise ValueError("iteration counts must be positive")
        if not self.param_tol > 0:
            raise ValueError(f"param_tol must be positive, got {self.param_tol}")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"optimizer must be 'gd' or 'adam', got {self.optimizer!r}")


@dataclass(frozen=True)
class PretrainConfig:
    max_fragment_size: int = 3
    n_aux: int = 2
    T: int = 10
    init_bound: float = 1e-5
    mean_field: bool = True
    steps_per_visit: int = 1
    learning_rate: float | None = None

    def __post_init__(self):
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_fragment_size < 1 or self.n_aux < 0 or self.T < 1 or self.steps_per_visit < 1:
            raise ValueError("pre-training counts out of range")
        if not self.init_bound >= 0:
            raise ValueError(f"init_bound must be >= 0, got {self.init_bound}")

    def check(self, n: int) -> None:
        if self.max_fragment_size + self.n_aux > n:
            raise StructuralError(
                f"fragment size {self.max_fragment_size} plus {self.n_aux} auxiliaries exceeds n={n}")


# --------------------------------------------------------------------------
# circuits as flat gate tables


@dataclass(frozen=True)
class GateTable:
    """Gate kinds, qubit masks and parameter slots ready for the kernels."""

    n: int
    kinds: np.ndarray
    m0s: np.ndarray
    m1s: np.ndarray
    pidx: np.ndarray
    qubits: tuple[tuple[int, ...], ...]

    @property
    def n_gates(self) -> int:
        return len(self.kinds)

    def forward(self, params: np.ndarray, psi0: np.ndarray) -> np.ndarray:
        psi = np.array(psi0, dtype=np.complex128, copy=True)
        kernels.circuit_forward(psi, self.kinds, self.m0s, self.m1s, self.pidx, params)
        return psi

    def energy_grad(self, params: np.ndarray, cop: CompiledOperator, psi0: np.ndarray,
                    n_params: int) -> tuple[float, np.ndarray]:
        phi = self.forward(params, psi0)
        lam = cop.apply(phi)
        energy = float(np.vdot(phi, lam).real)
        grad = np.zeros(n_params)
        kernels.circuit_adjoint(phi, lam, self.kinds, self.m0s, self.m1s, self.pidx, params, grad)
        return energy, grad


def _layer_gates(n: int, pairs) -> list[tuple[int, tuple[int, ...]]]:
    gates = []
    for q in range(n):
        gates.append((kernels.RX, (q,)))
        gates.append((kernels.RY, (q,)))
    for i, j in pairs:
        gates.append((kernels.CRZ, (i, j)))
    return gates


def ansatz_gates(spec: AnsatzSpec) -> list[tuple[int, tuple[int, ...]]]:
    """(kind, qubits) for every gate; the list index is the parameter index."""
    gates = []
    linear = [(i, i + 1) for i in range(spec.n - 1)]
    full = list(combinations(range(spec.n), 2))
    for _ in range(spec.L_s):
        gates += _layer_gates(spec.n, linear)
    for _ in range(spec.L_c):
        gates += _layer_gates(spec.n, full)
    return gates


def _table(n: int, gates: Sequence[tuple[int, tuple[int, ...]]], pidx: Sequence[int]) -> GateTable:
    kinds = np.array([k for k, _ in gates], dtype=np.int32)
    m0 = np.array([bit(n, qs[0]) for _, qs in gates], dtype=np.int64)
    m1 = np.array([bit(n, qs[1]) if len(qs) > 1 else 0 for _, qs in gates], dtype=np.int64)
    return GateTable(n, kinds, m0, m1, np.asarray(pidx, dtype=np.int64), tuple(qs for _, qs in gates))


def gate_table(spec: AnsatzSpec) -> GateTable:
    gates = ansatz_gates(spec)
    return _table(spec.n, gates, range(len(gates)))


def _zero_state(n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=np.complex128)
    psi[0] = 1.0
    return psi


def _initial(n: int, psi0) -> np.ndarray:
    if psi0 is None:
        return _zero_state(n)
    arr = psi0.amplitudes if hasattr(psi0, "amplitudes") else np.asarray(psi0, dtype=np.complex128)
    if arr.shape != (1 << n,):
        raise StructuralError(f"initial state has {arr.shape[0]} amplitudes, ansatz needs {1 << n}")
    return arr


def _flat(spec: AnsatzSpec, params) -> np.ndarray:
    flat = params.flat if isinstance(params, ParamVector) else np.asarray(params, dtype=float)
    if flat.shape != (spec.n_params,):
        raise StructuralError(f"{flat.shape[0]} parameters for an ansatz with {spec.n_params}")
    return np.ascontiguousarray(flat, dtype=float)


def build_circuit(spec: AnsatzSpec, params, psi0=None) -> np.ndarray:
    """Output state of the ansatz applied to ``psi0`` (default ``|0...0>``)."""
    return gate_table(spec).forward(_flat(spec, params), _initial(spec.n, psi0))


def energy_and_gradient(spec: AnsatzSpec, params, H: HermitianOperator | CompiledOperator,
                        psi0=None) -> tuple[float, np.ndarray]:
    cop = H if isinstance(H, CompiledOperator) else compile_operator(H, spec.n)
    if cop.n != spec.n:
        raise StructuralError(f"operator on {cop.n} qubits, ansatz on {spec.n}")
    flat = _flat(spec, params)
    e, g = gate_table(spec).energy_grad(flat, cop, _initial(spec.n, psi0), spec.n_params)
    return e, g


# --------------------------------------------------------------------------
# optimizer loop


class _Stepper:
    def __init__(self, opt: OptimizerConfig, size: int):
        self.opt = opt
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray, slots: np.ndarray | None = None) -> None:
        """Update ``x`` in place; ``slots`` maps its entries onto the moment arrays."""
        eta = self.opt.learning_rate
        if self.opt.optimizer == "gd":
            x -= eta * g
            return
        self.t += 1
        b1, b2 = 0.9, 0.999
        sel = slice(None) if slots is None else slots
        m = b1 * self.m[sel] + (1 - b1) * g
        v = b2 * self.v[sel] + (1 - b2) * g * g
        self.m[sel], self.v[sel] = m, v
        x -= eta * (m / (1 - b1**self.t)) / (np.sqrt(v / (1 - b2**self.t)) + 1e-12)


class _Window:
    """Stop rule: the largest single-step parameter change seen during the
    last ``every`` iterations falls below ``tol``; checked every ``every``."""

    def __init__(self, every: int, tol: float):
        self.every, self.tol, self.peak = every, tol, 0.0

    def update(self, it: int, before: np.ndarray, after: np.ndarray) -> bool:
        self.peak = max(self.peak, float(np.max(np.abs(after - before), initial=0.0)))
        if it % self.every:
            return False
        done, self.peak = self.peak < self.tol, 0.0
        return done


def minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0: np.ndarray,
             opt: OptimizerConfig) -> tuple[np.ndarray, float, int]:
    x = np.array(x0, dtype=float)
    stepper = _Stepper(opt, x.size)
    window = _Window(opt.convergence_check_every, opt.param_tol)
    it = 0
    for it in range(1, opt.max_iters + 1):
        _, g = fun(x)
        before = x.copy()
        stepper.step(x, g)
        if window.update(it, before, x):
            break
    return x, fun(x)[0], it


def relative_error(energy: float, e0: float) -> float:
    return (energy - e0) / abs(e0)


def vanilla_vqe(spec: AnsatzSpec, model: SpinModel, opt: OptimizerConfig,
                psi0=None) -> tuple[ParamVector, float, int]:
    """Full-circuit optimization from angles uniform in ``[-pi, pi)``."""
    rng = make_rng(opt.seed)
    x0 = rng.uniform(-np.pi, np.pi, spec.n_params)
    table = gate_table(spec)
    cop = compile_operator(assemble(model), spec.n)
    start = _initial(spec.n, psi0)

    def fun(x):
        e, g = table.energy_grad(x, cop, start, spec.n_params)
        return e, g

    x, e, it = minimize(fun, x0, opt)
    return ParamVector.split(spec, x), e, it


# --------------------------------------------------------------------------
# circuit fragmentation


@dataclass(frozen=True)
class FragmentCircuit:
    """Brickwork gates of one fragment, relabeled onto its registers.

    ``global_index[k]`` is the global parameter slot of local parameter ``k``;
    ``writeback`` flags the local parameters copied back after a visit.
    """

    registers: tuple[int, ...]
    table: GateTable
    global_index: np.ndarray
    writeback: np.ndarray

    @property
    def n_registers(self) -> int:
        return len(self.registers)

    @property
    def n_params(self) -> int:
        return len(self.global_index)


def fragment_circuit(spec: AnsatzSpec, layout: FragmentLayout) -> list[FragmentCircuit]:
    if layout.n != spec.n:
        raise StructuralError(f"layout covers {layout.n} qubits, ansatz has {spec.n}")
    gates = ansatz_gates(spec.brickwork_only())
    out = []
    for f in range(layout.n_fragments):
        regs = layout.registers(f)
        if len(set(regs)) != len(regs):
            raise StructuralError(f"fragment {f} claims a register twice: {regs}")
        rmap = {q: r for r, q in enumerate(regs)}
        system = set(layout.partition[f])
        kept, gidx, wb = [], [], []
        for g, (kind, qs) in enumerate(gates):
            if all(q in rmap for q in qs):
                kept.append((kind, tuple(rmap[q] for q in qs)))
                gidx.append(g)
                wb.append(any(q in system for q in qs))
        table = _table(len(regs), kept, range(len(kept)))
        out.append(FragmentCircuit(regs, table, np.array(gidx, dtype=np.int64), np.array(wb, dtype=bool)))
    return out


# --------------------------------------------------------------------------
# fragmented pre-training


class _FragmentEnergy:
    """``<H_MF^(f)>`` on the fragment registers with cheap mean-field refresh.

    For z-z models every mean-field term is diagonal, so a refresh only
    rebuilds the diagonal; other models recompile the operator.
    """

    def __init__(self, model: SpinModel, layout: FragmentLayout, f: int, mean_field: bool):
        self.model, self.layout, self.f, self.mean_field = model, layout, f, mean_field
        self.nr = layout.n_registers(f)
        self.fast = model.is_zz
        self.base = compile_operator(bare_fragment_hamiltonian(model, layout, f), self.nr)
        if self.fast and mean_field:
            reg = {s: r for r, s in enumerate(layout.registers(f))}
            self.mf_terms = []  # (register sign vector, J, environment spin)
            for (i, j, _, _), J in model.couplings.items():
                if (i in reg) != (j in reg):
                    inside, other = (i, j) if i in reg else (j, i)
                    self.mf_terms.append((0.5 * z_signs(self.nr, bit(self.nr, reg[inside])), J, other))

    def operator(self, table: MeanFieldTable) -> CompiledOperator:
        if not self.mean_field:
            return self.base
        if self.fast:
            diag = self.base.diag.copy()
            for sz, J, other in self.mf_terms:
                c = -J * table.get(other, "z")
                if c != 0.0:
                    diag += c * sz
            return self.base.with_diag(diag)
        return compile_operator(mean_field_fragment_hamiltonian(self.model, self.layout, self.f, table), self.nr)


def _needed_axes(model: SpinModel) -> tuple[str, ...]:
    axes = {a for k in model.couplings for a in k[2:]}
    return tuple(sorted(axes)) or ("z",)


def _site_means(psi: np.ndarray, nr: int, r: int, axes: Sequence[str]) -> dict[str, float]:
    t = psi.reshape(1 << r, 2, -1)
    p0 = t[:, 0, :]
    p1 = t[:, 1, :]
    out = {}
    for a in axes:
        if a == "z":
            out[a] = 0.5 * float(np.vdot(p0, p0).real - np.vdot(p1, p1).real)
        elif a == "x":
            out[a] = float(np.vdot(p0, p1).real)
        else:
            out[a] = float(np.vdot(p0, p1).imag)
    return out


def initial_theta(spec: AnsatzSpec, circuits: Sequence[FragmentCircuit], rng: np.random.Generator,
                  bound: float) -> np.ndarray:
    """Uniform ``[-pi, pi)`` on pre-trained gates, ``[-bound, bound]`` on gates no fragment sees."""
    covered = np.zeros(spec.n_theta, dtype=bool)
    for c in circuits:
        covered[c.global_index] = True
    wide = rng.uniform(-np.pi, np.pi, spec.n_theta)
    narrow = rng.uniform(-bound, bound, spec.n_theta)
    return np.where(covered, wide, narrow)


def pretrain_fragments(spec: AnsatzSpec, model: SpinModel, layout: FragmentLayout, opt: OptimizerConfig,
                       cfg: PretrainConfig, theta0: np.ndarray | None = None) -> tuple[ParamVector, int]:
    """Mean-field fragmented pre-training of the brickwork block.

    Each sweep visits the fragments in order. A visit loads the fragment's
    parameters from the global vector, takes ``cfg.steps_per_visit``
    gradient steps on the fragment energy, stores the system spins' mean
    fields and copies back every gate touching a system spin. Returns the
    brickwork parameters and the number of sweeps.
    """
    if model.n != spec.n:
        raise StructuralError(f"model has {model.n} spins, ansatz {spec.n}")
    circuits = fragment_circuit(spec, layout)
    theta = (initial_theta(spec, circuits, make_rng(opt.seed), cfg.init_bound) if theta0 is None
             else np.array(theta0, dtype=float))
    if theta.shape != (spec.n_theta,):
        raise StructuralError(f"{theta.shape[0]} brickwork parameters, expected {spec.n_theta}")
    axes = _needed_axes(model)
    table = MeanFieldTable.zeros(model.n, axes)
    energies = [_FragmentEnergy(model, layout, f, cfg.mean_field) for f in range(layout.n_fragments)]
    starts = [_zero_state(c.n_registers) for c in circuits]
    if cfg.learning_rate is not None:
        opt = replace(opt, learning_rate=cfg.learning_rate)
    stepper = _Stepper(opt, spec.n_theta)
    window = _Window(opt.convergence_check_every, opt.param_tol)
    sweeps = 0
    for sweeps in range(1, opt.max_iters + 1):
        before = theta.copy()
        for f, circ in enumerate(circuits):
            local = theta[circ.global_index]
            cop = energies[f].operator(table)
            for _ in range(cfg.steps_per_visit):
                _, g = circ.table.energy_grad(local, cop, starts[f], circ.n_params)
                stepper.step(local, g, circ.global_index)
            psi = circ.table.forward(local, starts[f])
            vals = dict(table.values)
            for r, spin in enumerate(layout.partition[f]):
                for a, v in _site_means(psi, circ.n_registers, r, axes).items():
                    vals[(spin, a)] = v
            table = MeanFieldTable(vals, sweeps)
            theta[circ.global_index[circ.writeback]] = local[circ.writeback]
        if window.update(sweeps, before, theta):
            break
    return ParamVector(theta), sweeps


def random_pretrain_layout(model: SpinModel, cfg: PretrainConfig, rng: np.random.Generator) -> FragmentLayout:
    """Random blocks of ``max_fragment_size`` plus the strongest-coupled auxiliaries."""
    n = model.n
    perm = rng.permutation(n)
    blocks = [tuple(sorted(int(q) for q in perm[i:i + cfg.max_fragment_size]))
              for i in range(0, n, cfg.max_fragment_size)]
    weight = np.zeros((n, n))
    for (i, j, _, _), J in model.couplings.items():
        weight[i, j] += abs(J)
        weight[j, i] += abs(J)
    targets = []
    for block in blocks:
        env = [q for q in range(n) if q not in block]
        score = {a: float(weight[a, list(block)].sum()) for a in env}
        targets.append(tuple(sorted(env, key=lambda a: (-score[a], a))[: cfg.n_aux]))
    return FragmentLayout(tuple(blocks), tuple(targets), n)


@dataclass(frozen=True)
class PretrainResult:
    params: ParamVector
    layout: FragmentLayout
    loss: float
    sweeps: int
    candidate_losses: tuple[float, ...]


def batched_pretrain(spec: AnsatzSpec, model: SpinModel, opt: OptimizerConfig,
                     cfg: PretrainConfig) -> PretrainResult:
    """Pre-train ``cfg.T`` random layouts and keep the lowest full-circuit loss.

    The winner's ``phi`` block is drawn uniformly from ``[-init_bound, init_bound]``.
    """
    cfg.check(spec.n)
    rng = make_rng(opt.seed)
    cop = compile_operator(assemble(model), spec.n)
    brick = spec.brickwork_only()
    table = gate_table(brick)
    start = _zero_state(spec.n)
    best = None
    losses = []
    for _ in range(cfg.T):
        layout = random_pretrain_layout(model, cfg, rng)
        theta0 = initial_theta(spec, fragment_circuit(spec, layout), rng, cfg.init_bound)
        params, sweeps = pretrain_fragments(spec, model, layout, opt, cfg, theta0)
        loss = cop.expect(table.forward(params.theta, start))
        losses.append(loss)
        if best is None or loss < best[0]:
            best = (loss, params, layout, sweeps)
    phi = rng.uniform(-cfg.init_bound, cfg.init_bound, spec.n_phi)
    loss, params, layout, sweeps = best
    return PretrainResult(ParamVector(params.theta, phi), layout, loss, sweeps, tuple(losses))


def full_train_from(spec: AnsatzSpec, model: SpinModel, init: ParamVector, opt: OptimizerConfig,
                    e0: float | None = None) -> tuple[ParamVector, float, int]:
    """Optimize every parameter starting from ``init``; returns (params, eps, n_iters)."""
    if init.phi.size == 0:
        init = ParamVector(init.theta, np.zeros(spec.n_phi))
    table = gate_table(spec)
    cop = compile_operator(assemble(model), spec.n)
    start = _zero_state(spec.n)

    def fun(x):
        e, g = table.energy_grad(x, cop, start, spec.n_params)
        return e, g

    x, e, it = minimize(fun, _flat(spec, init), opt)
    e0 = ground_energy(model) if e0 is None else e0
    return ParamVector.split(spec, x), relative_error(e, e0), it


# --------------------------------------------------------------------------
# experiment rows


@dataclass(frozen=True)
class VQEResult:
    seed: int
    n: int
    h: float
    method: str
    T: int
    eps: float
    n_iters: int

    def row(self) -> tuple:
        return (self.seed, self.n, self.h, self.method, self.T, self.eps, self.n_iters)


def run_instance(model: SpinModel, seed: int, h: float, methods: Sequence[str], spec: AnsatzSpec,
                 opt: OptimizerConfig, cfg: PretrainConfig) -> list[VQEResult]:
    """Run the requested arms (vanilla, frag_mf, frag_nomf) on one model."""
    e0 = ground_energy(model)
    out = []
    for method in methods:
        run_opt = OptimizerConfig(opt.learning_rate, opt.max_iters, opt.convergence_check_every,
                                  opt.param_tol, opt.optimizer, seed)
        if method == "vanilla":
            _, e, it = vanilla_vqe(spec, model, run_opt)
            eps = relative_error(e, e0)
        elif method in ("frag_mf", "frag_nomf"):
            pcfg = replace(cfg, mean_field=method == "frag_mf")
            pre = batched_pretrain(spec, model, run_opt, pcfg)
            _, eps, it = full_train_from(spec, model, pre.params, run_opt, e0)
        else:
            raise ValueError(f"unknown method {method!r}")
        out.append(VQEResult(seed, model.n, h, method, cfg.T, float(eps), int(it)))
    return out


def results_csv(results: Sequence[VQEResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()


def geometric_mean(values: Sequence[float], floor: float = 1e-16) -> float:
    """Geometric mean with entries clipped below at ``floor``."""
    v = np.maximum(np.asarray(values, dtype=float), floor)
    return float(np.exp(np.mean(np.log(v))))

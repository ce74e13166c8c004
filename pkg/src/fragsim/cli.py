"""Command-line experiment harness.

``fragsim <subcommand> --config <path|preset> [--out DIR] [--seed S] [--full] [--threads N] [--svg]``

Configs are JSON documents carrying ``schema_version``; unknown keys are
rejected. Every ensemble member is computed independently from its own
seed, so output does not depend on the worker count. Exit status is 0 on
success, 2 for configuration problems and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from fragsim.core import NumericalError, StateVector, StructuralError
from fragsim.evolution import (
    EvolutionSchedule,
    evolve,
    evolve_exact,
    fragment_expectations,
    fragment_fidelities,
)
from fragsim.fragmentation import FragmentLayout
from fragsim.hamiltonian import (
    GraphEnsembleConfig,
    SpinModel,
    build_tfim_chain,
    sample_all_to_all_gaussian,
    sample_random_ising,
)
from fragsim.metrics import envelope_rows, family_state, variance_diff
from fragsim.ptheory import SWEEP_COLUMNS, pt_sweep
from fragsim.vqe import (
    RESULT_COLUMNS,
    AnsatzSpec,
    OptimizerConfig,
    PretrainConfig,
    VQEResult,
    geometric_mean,
    run_instance,
)

CONFIG_SCHEMA = "fragsim.config/1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config types


@dataclass(frozen=True)
class EvolveConfig:
    schema_version: str = CONFIG_SCHEMA
    experiment: str = "evolve"
    name: str = "evolve"
    model: str = "tfim_chain"
    n_values: tuple[int, ...] = (12,)
    J: float = 1.0
    h_values: tuple[float, ...] = (1.0,)
    edge_prob: float = 0.5
    weight_mean: float = 0.0
    weight_std: float = 1.0
    n_models: int = 1
    fragment_size: int = 6
    n_aux_values: tuple[int, ...] = (0,)
    aux_choice: str = "chain"
    channels: tuple[str, ...] = ("classical",)
    aux_update: str = "fixed"
    mean_field_values: tuple[bool, ...] = (True, False)
    initial_state: str = "zero"
    dt: float = 0.1
    n_steps: int = 10
    observe_site: int = 0
    seed: int = 0
    full: dict = field(default_factory=dict)

    def check(self) -> None:
        _choice("model", self.model, ("tfim_chain", "random_ising"))
        _choice("aux_choice", self.aux_choice, ("chain", "ranked", "layout"))
        _choice("initial_state", self.initial_state, ("zero", "random_basis"))
        for c in self.channels:
            _choice("channels", c, ("none", "classical", "quantum"))
        if self.n_models < 1 or self.fragment_size < 1:
            raise ConfigError("n_models and fragment_size must be positive")
        for n in self.n_values:
            if n < 2:
                raise ConfigError(f"n_values entries must be >= 2, got {n}")
            if not 0 <= self.observe_site < n:
                raise ConfigError(f"observe_site {self.observe_site} outside a {n}-spin model")
        EvolutionSchedule(self.dt, self.n_steps, "classical", self.aux_update)


@dataclass(frozen=True)
class AuxRankConfig:
    schema_version: str = CONFIG_SCHEMA
    experiment: str = "aux-rank"
    name: str = "aux-rank"
    n: int = 12
    fragment_size: int = 6
    n_aux: int = 2
    h: float = 1.0
    edge_prob: float = 0.5
    weight_mean: float = 0.0
    weight_std: float = 1.0
    n_models: int = 20
    arms: tuple[str, ...] = ("v0", "v1", "v2", "random")
    panels: tuple[str, ...] = ("classical_fixed", "quantum_fixed", "quantum_active")
    mean_field_values: tuple[bool, ...] = (True, False)
    dt: float = 0.1
    n_steps: int = 30
    seed: int = 0
    full: dict = field(default_factory=dict)

    def check(self) -> None:
        for a in self.arms:
            if a != "random" and not (a.startswith("v") and a[1:].isdigit()):
                raise ConfigError(f"arms entries are 'v<k>' or 'random', got {a!r}")
        for p in self.panels:
            _choice("panels", p, ("classical_fixed", "quantum_fixed", "quantum_active"))
        if self.n < 2 or self.n_models < 1 or self.n_aux < 0:
            raise ConfigError("n >= 2, n_models >= 1 and n_aux >= 0 are required")
        EvolutionSchedule(self.dt, self.n_steps)


@dataclass(frozen=True)
class VQEConfig:
    schema_version: str = CONFIG_SCHEMA
    experiment: str = "vqe"
    name: str = "vqe"
    n_values: tuple[int, ...] = (6, 8, 10)
    n_graphs: int = 50
    h_values: tuple[float, ...] = (0.0,)
    T_values: tuple[int, ...] = (10,)
    methods: tuple[str, ...] = ("vanilla", "frag_mf")
    L_s: int = 4
    L_c: int | None = None
    learning_rate: float = 0.1
    max_iters: int = 5000
    convergence_check_every: int = 100
    param_tol: float = 1e-6
    optimizer: str = "gd"
    max_fragment_size: int = 3
    n_aux: int = 2
    init_bound: float = 1e-5
    failure_eps: float = 1e-2
    seed: int = 0
    full: dict = field(default_factory=dict)

    def check(self) -> None:
        for m in self.methods:
            _choice("methods", m, ("vanilla", "frag_mf", "frag_nomf"))
        if self.n_graphs < 1 or not self.n_values:
            raise ConfigError("n_graphs >= 1 and a non-empty n_values are required")
        OptimizerConfig(self.learning_rate, self.max_iters, self.convergence_check_every,
                        self.param_tol, self.optimizer)
        for n in self.n_values:
            AnsatzSpec(n, self.L_s, self.L_c)
            for T in self.T_values:
                PretrainConfig(self.max_fragment_size, self.n_aux, T, self.init_bound).check(n)


@dataclass(frozen=True)
class EnvelopeConfig:
    schema_version: str = CONFIG_SCHEMA
    experiment: str = "envelope"
    name: str = "envelope"
    n_states: int = 10000
    alpha_points: int = 101
    theta_points: int = 101
    beta_points: int = 101
    beta_max: float = 3.0
    seed: int = 0
    full: dict = field(default_factory=dict)

    def check(self) -> None:
        if min(self.n_states, self.alpha_points, self.theta_points, self.beta_points) < 1:
            raise ConfigError("sample and grid sizes must be positive")
        if not self.beta_max > 0:
            raise ConfigError("beta_max must be positive")


@dataclass(frozen=True)
class PTSweepConfig:
    schema_version: str = CONFIG_SCHEMA
    experiment: str = "pt-sweep"
    name: str = "pt-sweep"
    n: int = 8
    fragment_size: int = 4
    n_graphs: int = 1
    h_min: float = 0.0
    h_max: float = 0.5
    h_step: float = 0.025
    multistart: int = 32
    seed: int = 0
    full: dict = field(default_factory=dict)

    def check(self) -> None:
        if self.n < 3 or self.fragment_size < 1 or self.n_graphs < 1:
            raise ConfigError("n >= 3, fragment_size >= 1 and n_graphs >= 1 are required")
        if not self.h_step > 0 or self.h_max < self.h_min:
            raise ConfigError("need h_step > 0 and h_max >= h_min")
        if self.multistart < 1:
            raise ConfigError("multistart must be >= 1")

    def h_grid(self) -> list[float]:
        k = int(np.floor((self.h_max - self.h_min) / self.h_step + 1e-9))
        return [round(self.h_min + i * self.h_step, 12) for i in range(k + 1)]


CONFIG_TYPES: dict[str, type] = {
    "evolve": EvolveConfig,
    "aux-rank": AuxRankConfig,
    "vqe": VQEConfig,
    "envelope": EnvelopeConfig,
    "pt-sweep": PTSweepConfig,
}


def _choice(key: str, value: Any, allowed: Sequence[Any]) -> None:
    if value not in allowed:
        raise ConfigError(f"{key}: {value!r} is not one of {list(allowed)}")


def _coerce(name: str, value: Any, default: Any) -> Any:
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name} must be a string")
    if isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(f"{name} must be an object")
    return value


def config_from_dict(d: dict) -> Any:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    if d.get("schema_version") != CONFIG_SCHEMA:
        raise ConfigError(f"schema_version must be {CONFIG_SCHEMA!r}, got {d.get('schema_version')!r}")
    kind = d.get("experiment")
    if kind not in CONFIG_TYPES:
        raise ConfigError(f"experiment must be one of {sorted(CONFIG_TYPES)}, got {kind!r}")
    cls = CONFIG_TYPES[kind]
    proto = cls()
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    kwargs = {k: _coerce(k, v, getattr(proto, k)) for k, v in d.items()}
    bad = sorted(set(kwargs.get("full", {})) - known - {"schema_version", "experiment", "full"})
    if bad:
        raise ConfigError(f"unknown keys under 'full': {bad}")
    cfg = cls(**kwargs)
    try:
        cfg.check()
    except (ValueError, StructuralError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def config_to_dict(cfg: Any) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}


def dump_config(cfg: Any) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def parse_config(text: str) -> Any:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(d)


def apply_full(cfg: Any) -> Any:
    """Swap in the full-scale overrides stored under ``full``."""
    if not cfg.full:
        return cfg
    merged = config_to_dict(cfg)
    merged.update(cfg.full)
    merged["full"] = {}
    return config_from_dict(merged)


PRESETS = ("fig2a", "fig2b", "fig3", "fig4", "fig5", "fig7", "fig9", "figD1", "envelope", "ptsweep")


def preset_text(name: str) -> str:
    return resources.files("fragsim").joinpath("presets", f"{name}.json").read_text()


def load_config(ref: str) -> Any:
    path = Path(ref)
    if path.is_file():
        return parse_config(path.read_text())
    if ref in PRESETS:
        return parse_config(preset_text(ref))
    raise ConfigError(f"{ref!r} is neither a config file nor a preset ({', '.join(PRESETS)})")


# --------------------------------------------------------------------------
# shared plumbing


def instance_rng(*keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def run_ordered(fn: Callable, tasks: Sequence, threads: int) -> list:
    """Map ``fn`` over ``tasks``; results come back in task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, t) for t in tasks]
        return [f.result() for f in futures]


def to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def chain_targets(layout: FragmentLayout, n_aux: int) -> list[tuple[int, ...]]:
    """Environment spins closest along the chain to each fragment."""
    out = []
    for f, block in enumerate(layout.partition):
        env = layout.environment(f)
        dist = {a: min(abs(a - q) for q in block) for a in env}
        out.append(tuple(sorted(env, key=lambda a: (dist[a], a))[:n_aux]))
    return out


def mean_rows(rows: Sequence[tuple], keys: Sequence[int], value: int) -> list[tuple]:
    """Average column ``value`` over rows grouped by the ``keys`` columns (first-seen order)."""
    acc: dict[tuple, list[float]] = {}
    for r in rows:
        acc.setdefault(tuple(r[k] for k in keys), []).append(r[value])
    return [k + (float(np.mean(v)),) for k, v in acc.items()]


# --------------------------------------------------------------------------
# evolve

FIDELITY_COLUMNS = ("instance", "n", "h", "channel", "aux_update", "n_aux", "mean_field", "step", "t", "fragment", "F")
EXPECT_COLUMNS = ("instance", "n", "h", "channel", "aux_update", "n_aux", "mean_field", "step", "t", "site", "Sx", "Sz")
MEAN_COLUMNS = ("n", "channel", "aux_update", "n_aux", "mean_field", "step", "t", "mean_F")


def _evolve_model(cfg: EvolveConfig, n: int, h: float, index: int) -> SpinModel:
    if cfg.model == "tfim_chain":
        return build_tfim_chain(n, cfg.J, h)
    ens = GraphEnsembleConfig(n, cfg.edge_prob, cfg.weight_mean, cfg.weight_std, cfg.seed + index)
    return sample_random_ising(ens, h)


def _initial_index(cfg: EvolveConfig, n: int, index: int) -> int:
    if cfg.initial_state == "zero":
        return 0
    return int(instance_rng(cfg.seed, index, n).integers(0, 1 << n))


def evolve_instance(task: tuple) -> tuple[list, list]:
    cfg, index, n, h = task
    model = _evolve_model(cfg, n, h, index)
    layout = FragmentLayout.blocks(n, [min(cfg.fragment_size, n - s) for s in range(0, n, cfg.fragment_size)])
    psi0 = StateVector.basis(n, _initial_index(cfg, n, index))
    base = EvolutionSchedule(cfg.dt, cfg.n_steps, seed=cfg.seed + index)
    exact = evolve_exact(model, psi0, base)
    fid_rows, exp_rows = [], []
    for k, (sx, sz) in enumerate(fragment_expectations(exact, cfg.observe_site)):
        exp_rows.append((index, n, h, "exact", "", 0, False, k, exact.times[k], cfg.observe_site, sx, sz))
    for channel in cfg.channels:
        combos = [(0, False)] if channel == "none" else [
            (na, mf) for na in cfg.n_aux_values for mf in cfg.mean_field_values]
        aux_update = "fixed" if channel != "quantum" else cfg.aux_update
        for n_aux, mf in combos:
            sched = replace(base, channel=channel, aux_update=aux_update, mean_field=mf)
            lay = layout
            if cfg.aux_choice == "chain":
                lay = layout.with_targets(chain_targets(layout, n_aux))
                if channel == "quantum" and aux_update != "fixed":
                    sched = replace(sched, n_aux=n_aux)
            elif cfg.aux_choice == "ranked":
                sched = replace(sched, n_aux=n_aux)
            rec = evolve(model, lay, psi0, sched)
            F = fragment_fidelities(rec, exact, layout)
            tag = (index, n, h, channel, aux_update, n_aux, mf)
            for k in range(F.shape[0]):
                for f in range(F.shape[1]):
                    fid_rows.append(tag + (k, rec.times[k], f, float(F[k, f])))
            for k, (sx, sz) in enumerate(fragment_expectations(rec, cfg.observe_site)):
                exp_rows.append(tag + (k, rec.times[k], cfg.observe_site, sx, sz))
    return fid_rows, exp_rows


def cmd_evolve(cfg: EvolveConfig, threads: int = 1) -> dict[str, str]:
    tasks = [(cfg, i, n, h) for n in cfg.n_values for i in range(cfg.n_models) for h in cfg.h_values]
    results = run_ordered(evolve_instance, tasks, threads)
    fid = [r for res in results for r in res[0]]
    exp = [r for res in results for r in res[1]]
    means = mean_rows(fid, (1, 3, 4, 5, 6, 7, 8), 10)
    return {
        "fidelity.csv": to_csv(FIDELITY_COLUMNS, fid),
        "expectation.csv": to_csv(EXPECT_COLUMNS, exp),
        "fidelity_mean.csv": to_csv(MEAN_COLUMNS, means),
    }


# --------------------------------------------------------------------------
# aux-rank

AUX_COLUMNS = ("instance", "panel", "arm", "mean_field", "step", "t", "mean_F")
AUX_MEAN_COLUMNS = ("panel", "arm", "mean_field", "step", "t", "mean_F")


def aux_rank_instance(task: tuple) -> list:
    cfg, index = task
    n = cfg.n
    model = sample_random_ising(GraphEnsembleConfig(n, cfg.edge_prob, cfg.weight_mean, cfg.weight_std,
                                                    cfg.seed + index), cfg.h)
    layout = FragmentLayout.blocks(n, [min(cfg.fragment_size, n - s) for s in range(0, n, cfg.fragment_size)])
    rng = instance_rng(cfg.seed, index)
    basis = int(rng.integers(0, 1 << n))
    psi0 = StateVector.basis(n, basis)
    base = EvolutionSchedule(cfg.dt, cfg.n_steps, seed=cfg.seed + index)
    exact = evolve_exact(model, psi0, base)
    random_targets = [tuple(sorted(int(a) for a in rng.choice(layout.environment(f), cfg.n_aux, replace=False)))
                      for f in range(layout.n_fragments)]
    rows = []
    for panel in cfg.panels:
        channel = "classical" if panel.startswith("classical") else "quantum"
        for arm in cfg.arms:
            for mf in cfg.mean_field_values:
                if panel == "quantum_active":
                    update = "random_active" if arm == "random" else "active"
                    if arm not in ("v0", "random"):
                        continue
                    sched = replace(base, channel=channel, aux_update=update, mean_field=mf, n_aux=cfg.n_aux)
                    lay = layout
                elif arm == "random":
                    sched = replace(base, channel=channel, mean_field=mf)
                    lay = layout.with_targets(random_targets)
                else:
                    sched = replace(base, channel=channel, mean_field=mf, n_aux=cfg.n_aux, rank_slice=int(arm[1:]))
                    lay = layout
                rec = evolve(model, lay, psi0, sched)
                F = fragment_fidelities(rec, exact, layout)
                for k in range(F.shape[0]):
                    rows.append((index, panel, arm, mf, k, rec.times[k], float(F[k].mean())))
    return rows


def cmd_aux_rank(cfg: AuxRankConfig, threads: int = 1) -> dict[str, str]:
    results = run_ordered(aux_rank_instance, [(cfg, i) for i in range(cfg.n_models)], threads)
    rows = [r for res in results for r in res]
    return {
        "aux_rank.csv": to_csv(AUX_COLUMNS, rows),
        "aux_rank_mean.csv": to_csv(AUX_MEAN_COLUMNS, mean_rows(rows, (1, 2, 3, 4, 5), 6)),
    }


# --------------------------------------------------------------------------
# vqe

SUMMARY_COLUMNS = ("n", "h", "method", "T", "count", "geomean_eps", "mean_n_iters", "failure_fraction")


def vqe_instance(task: tuple) -> list[VQEResult]:
    cfg, n, h, T, graph = task
    seed = cfg.seed + graph
    model = sample_all_to_all_gaussian(n, seed, h)
    spec = AnsatzSpec(n, cfg.L_s, cfg.L_c)
    opt = OptimizerConfig(cfg.learning_rate, cfg.max_iters, cfg.convergence_check_every, cfg.param_tol,
                          cfg.optimizer, seed)
    pcfg = PretrainConfig(cfg.max_fragment_size, cfg.n_aux, T, cfg.init_bound)
    return run_instance(model, seed, h, cfg.methods, spec, opt, pcfg)


def vqe_tasks(cfg: VQEConfig) -> list[tuple]:
    """Graphs are spread round-robin over ``n_values``; ``n_graphs`` counts all of them."""
    per_n = {n: [g for g in range(cfg.n_graphs) if g % len(cfg.n_values) == i] for i, n in enumerate(cfg.n_values)}
    return [(cfg, n, h, T, g) for n in cfg.n_values for h in cfg.h_values for T in cfg.T_values for g in per_n[n]]


def summarize_vqe(results: Sequence[VQEResult], failure_eps: float) -> list[tuple]:
    groups: dict[tuple, list[VQEResult]] = {}
    for r in results:
        groups.setdefault((r.n, r.h, r.method, r.T), []).append(r)
    out = []
    for key, rs in groups.items():
        eps = [r.eps for r in rs]
        out.append(key + (len(rs), geometric_mean(eps), float(np.mean([r.n_iters for r in rs])),
                          float(np.mean([e > failure_eps for e in eps]))))
    return out


def cmd_vqe(cfg: VQEConfig, threads: int = 1) -> dict[str, str]:
    results = [r for res in run_ordered(vqe_instance, vqe_tasks(cfg), threads) for r in res]
    return {
        "vqe.csv": to_csv(RESULT_COLUMNS, [r.row() for r in results]),
        "vqe_summary.csv": to_csv(SUMMARY_COLUMNS, summarize_vqe(results, cfg.failure_eps)),
    }


# --------------------------------------------------------------------------
# envelope and pt-sweep

FAMILY_COLUMNS = ("family", "param", "concurrence", "V", "V_MF", "diff")


def family_rows(cfg: EnvelopeConfig) -> list[tuple]:
    grids = {
        "alpha": np.linspace(0.0, 1.0, cfg.alpha_points),
        "theta": np.linspace(0.0, np.pi, cfg.theta_points),
        "beta": np.linspace(0.0, cfg.beta_max, cfg.beta_points),
    }
    rows = []
    for fam, grid in grids.items():
        for p in grid:
            d = variance_diff(family_state(fam, float(p)))
            rows.append((fam, float(p), d.concurrence, d.v, d.v_mf, d.diff))
    return rows


def cmd_envelope(cfg: EnvelopeConfig, threads: int = 1) -> dict[str, str]:
    return {
        "envelope.csv": to_csv(("seed", "concurrence", "V", "V_MF", "diff"), envelope_rows(cfg.n_states, cfg.seed)),
        "families.csv": to_csv(FAMILY_COLUMNS, family_rows(cfg)),
    }


def pt_instance(task: tuple) -> list[tuple]:
    cfg, graph = task
    model = sample_all_to_all_gaussian(cfg.n, cfg.seed + graph, 0.0)
    layout = FragmentLayout.blocks(cfg.n, [min(cfg.fragment_size, cfg.n - s) for s in range(0, cfg.n, cfg.fragment_size)])
    return [(graph,) + r for r in pt_sweep(model, layout, cfg.h_grid(), cfg.seed + graph, cfg.multistart)]


def cmd_pt_sweep(cfg: PTSweepConfig, threads: int = 1) -> dict[str, str]:
    results = run_ordered(pt_instance, [(cfg, g) for g in range(cfg.n_graphs)], threads)
    rows = [r for res in results for r in res]
    return {"pt_sweep.csv": to_csv(("graph",) + SWEEP_COLUMNS, rows)}


COMMANDS: dict[str, Callable[[Any, int], dict[str, str]]] = {
    "evolve": cmd_evolve,
    "aux-rank": cmd_aux_rank,
    "vqe": cmd_vqe,
    "envelope": cmd_envelope,
    "pt-sweep": cmd_pt_sweep,
}


# --------------------------------------------------------------------------
# optional plots

_PLOTS = {
    "fidelity_mean.csv": ("t", "mean_F", ("n", "channel", "n_aux", "mean_field")),
    "aux_rank_mean.csv": ("t", "mean_F", ("panel", "arm", "mean_field")),
    "pt_sweep.csv": ("h", "F_exact_vs_mfmin", ("graph",)),
    "families.csv": ("concurrence", "diff", ("family",)),
}


def write_svgs(outputs: dict[str, str], out: Path) -> list[Path]:
    try:
        import matplotlib

        matplotlib.use("svg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping SVG output", file=sys.stderr)
        return []
    made = []
    for name, (xcol, ycol, keys) in _PLOTS.items():
        if name not in outputs:
            continue
        series: dict[tuple, tuple[list, list]] = {}
        for row in csv.DictReader(io.StringIO(outputs[name])):
            xs, ys = series.setdefault(tuple(row[k] for k in keys), ([], []))
            xs.append(float(row[xcol]))
            ys.append(float(row[ycol]))
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (xs, ys) in series.items():
            ax.plot(xs, ys, label=" ".join(label))
        ax.set_xlabel(xcol)
        ax.set_ylabel(ycol)
        if len(series) <= 12:
            ax.legend(fontsize=6)
        path = out / name.replace(".csv", ".svg")
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        made.append(path)
    return made


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fragsim", description="Fragmented simulation experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="config file path or preset name")
        s.add_argument("--out", default=None, help="output directory (default results/<name>)")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--full", action="store_true", help="full-scale ensemble sizes")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--svg", action="store_true", help="also write SVG line plots (needs matplotlib)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.command!r}")
        if args.full:
            cfg = apply_full(cfg)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = replace(cfg, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outputs = COMMANDS[args.command](cfg, args.threads)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (StructuralError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or Path("results") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_config(cfg))
    for name, text in outputs.items():
        with open(out / name, "w", newline="\n") as fh:
            fh.write(text)
    if args.svg:
        write_svgs(outputs, out)
    print(f"wrote {len(outputs)} tables to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

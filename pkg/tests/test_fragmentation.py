import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_term
from fragsim.core import StateVector, StructuralError, compile_operator
from fragsim.fragmentation import (
    FragmentLayout,
    MeanFieldTable,
    aux_proxy,
    bare_fragment_hamiltonian,
    interface_of,
    masked_coupling_union,
    mean_field_fragment_hamiltonian,
    rank_aux_targets,
    select_aux_targets,
    short_time_error,
    short_time_variance,
    zeroed_couplings,
)
from fragsim.hamiltonian import GraphEnsembleConfig, SpinModel, build_tfim_chain, sample_random_ising

# six spins on a ring plus the chord (2, 4); fragments {0,1,2} and {3,4,5}
TOY = SpinModel(6, {(0, 1, "z", "z"): 1.0, (1, 2, "z", "z"): 0.8, (2, 3, "z", "z"): 0.6, (3, 4, "z", "z"): 1.1,
                    (4, 5, "z", "z"): 0.9, (0, 5, "z", "z"): 0.7, (2, 4, "z", "z"): 1.3}, (0.5,) * 6)
TOY_LAYOUT = FragmentLayout(((0, 1, 2), (3, 4, 5)), ((4,), (0,)))


def term_set(op):
    return sorted((t.factors, round(t.coefficient, 12)) for t in op.terms)


def test_layout_validation():
    with pytest.raises(StructuralError):
        FragmentLayout(((0, 1), (1, 2)))
    with pytest.raises(StructuralError):
        FragmentLayout(((0, 1), (2,)), ((0,), ()))
    with pytest.raises(StructuralError):
        FragmentLayout(((0,), (1,)), ((1, 1), ()))
    lay = FragmentLayout(((2, 0), (1, 3)), ((1,), (0, 2)))
    assert FragmentLayout.from_dict(lay.to_dict()) == lay
    assert lay.registers(0) == (2, 0, 1)


def test_interfaces():
    chain = build_tfim_chain(6, 1.0, 0.5)
    assert interface_of(chain, FragmentLayout.blocks(6, [6]), 0) == []
    assert interface_of(chain, FragmentLayout.blocks(6, [3, 3]), 0) == [(2, 3, "z", "z")]
    assert sorted(interface_of(TOY, TOY_LAYOUT, 0)) == [(0, 5, "z", "z"), (2, 3, "z", "z"), (2, 4, "z", "z")]
    assert interface_of(TOY, TOY_LAYOUT, 0) == interface_of(TOY, TOY_LAYOUT, 1)


def test_bare_chain_fragment():
    op = bare_fragment_hamiltonian(build_tfim_chain(6, 1.0, 0.5), FragmentLayout.blocks(6, [3, 3]), 0)
    zz = [t for t in op.terms if len(t.factors) == 2]
    assert len(zz) == 2 and len(op.terms) == 5


def test_toy_auxiliary_inherits_target_couplings():
    op = bare_fragment_hamiltonian(TOY, TOY_LAYOUT, 0)
    # registers: spins 0, 1, 2 then the auxiliary on register 3 standing in for spin 4
    pairs = {t.factors: t.coefficient for t in op.terms if len(t.factors) == 2}
    assert pairs == {((0, "z"), (1, "z")): -1.0, ((1, "z"), (2, "z")): -0.8, ((2, "z"), (3, "z")): -1.3}
    assert ((3, "x"),) in {t.factors for t in op.terms}


def test_toy_auxiliary_mean_field_corrections():
    vals = {(j, a): 0.0 for j in range(6) for a in "xyz"}
    vals.update({(3, "z"): 0.5, (5, "z"): -0.25})
    op = mean_field_fragment_hamiltonian(TOY, TOY_LAYOUT, 0, MeanFieldTable(vals))
    on_aux = [t.coefficient for t in op.terms if t.factors == ((3, "z"),)]
    # spin 4's couplings to 3 and 5 land on the auxiliary register
    assert sorted(on_aux) == pytest.approx(sorted([-1.1 * 0.5, -0.9 * -0.25]))


def test_uncoupled_target_adds_only_its_field():
    chain = build_tfim_chain(6, 1.0, 0.5)
    base = FragmentLayout.blocks(6, [3, 3])
    with_aux = bare_fragment_hamiltonian(chain, base.with_targets([(5,), ()]), 0)
    extra = set(term_set(with_aux)) - set(term_set(bare_fragment_hamiltonian(chain, base, 0)))
    assert extra == {(((3, "x"),), -0.5)}


def test_mean_field_terms():
    chain = build_tfim_chain(6, 1.0, 0.0)
    lay = FragmentLayout.blocks(6, [3, 3])
    zero = MeanFieldTable.zeros(6)
    assert np.allclose(compile_operator(mean_field_fragment_hamiltonian(chain, lay, 0, zero), 3).dense(),
                       compile_operator(bare_fragment_hamiltonian(chain, lay, 0), 3).dense())
    vals = dict(zero.values)
    vals[(3, "z")] = 0.5
    op = mean_field_fragment_hamiltonian(chain, lay, 0, MeanFieldTable(vals))
    assert (((2, "z"),), -0.5) in term_set(op)
    with pytest.raises(StructuralError):
        MeanFieldTable({}).get(3, "z")


def test_variance_cases():
    chain = build_tfim_chain(4, 1.0, 0.7)
    lay = FragmentLayout.blocks(4, [2, 2])
    assert short_time_variance(chain, lay, 0, StateVector.basis(4, 5)) == 0.0
    two = SpinModel(2, {(0, 1, "z", "z"): 4.0})
    plus = StateVector.from_array(np.ones(4), normalize=True)
    assert short_time_variance(two, FragmentLayout.blocks(2, [1, 1]), 0, plus) == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 3.0))
def test_variance_scales_quadratically(seed, c):
    rng = np.random.default_rng(seed)
    m = sample_random_ising(GraphEnsembleConfig(4, 0.8, seed=seed), 0.5)
    lay = FragmentLayout.blocks(4, [2, 2])
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    scaled = m.with_couplings({k: c * J for k, J in m.couplings.items()})
    assert short_time_variance(scaled, lay, 0, psi) == pytest.approx(c * c * short_time_variance(m, lay, 0, psi),
                                                                      rel=1e-9, abs=1e-12)


def test_aux_proxy_cases(rng):
    two = SpinModel(3, {(0, 1, "z", "x"): 1.5})
    lay = FragmentLayout(((0,), (1, 2)))
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    assert aux_proxy(two, lay, 0, psi, 2) == 0.0
    assert aux_proxy(two, lay, 0, psi, 1) == pytest.approx(short_time_variance(two, lay, 0, psi))
    with pytest.raises(StructuralError):
        aux_proxy(two, lay, 0, psi, 0)


@pytest.mark.parametrize("seed", range(5))
def test_aux_proxy_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 4
    m = sample_random_ising(GraphEnsembleConfig(n, 1.0, seed=seed), 0.3)
    lay = FragmentLayout(((0, 1), (2, 3)))
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    for a in (2, 3):
        o = sum(dense_term(n, -J, {i: x, j: y}) for (i, j, x, y), J in m.couplings.items()
                if (i in (0, 1)) != (j in (0, 1)) and a in (i, j))
        ref = np.vdot(psi, o @ o @ psi).real - np.vdot(psi, o @ psi).real ** 2
        assert aux_proxy(m, lay, 0, psi, a) == pytest.approx(ref, abs=1e-12)
    err = short_time_error(m, lay, 0, psi)
    assert set(err.per_aux) == {2, 3}


def test_ranking():
    chain = build_tfim_chain(6, 1.0, 1.0)
    lay = FragmentLayout.blocks(6, [3, 3])
    assert rank_aux_targets(chain, lay, 0, StateVector.basis(6, 0), 0.1) == [3, 4, 5]
    assert rank_aux_targets(chain, lay, 1, StateVector.basis(6, 0), 0.1) == [2, 0, 1]
    free = SpinModel(4, {}, (1.0,) * 4)
    assert rank_aux_targets(free, FragmentLayout.blocks(4, [2, 2]), 0, 0, 0.1) == [2, 3]
    one = FragmentLayout(((0, 1), (2,)))
    assert rank_aux_targets(build_tfim_chain(3, 1.0, 1.0), one, 0, 0, 0.1) == [2]
    chosen = select_aux_targets(chain, lay, 2, 0, 0.1)
    assert chosen.aux_targets == ((3, 4), (2, 0))


def test_masked_union():
    chain = build_tfim_chain(6, 1.0, 0.4)
    lay = FragmentLayout.blocks(6, [3, 3])
    everything = lay.with_targets([(3, 4, 5), (0, 1, 2)])
    assert masked_coupling_union(chain, everything) == chain
    assert zeroed_couplings(chain, lay) == {(2, 3, "z", "z"): 1.0}
    kept = masked_coupling_union(chain, lay.with_targets([(3,), (2,)]))
    assert (2, 3, "z", "z") in kept.couplings

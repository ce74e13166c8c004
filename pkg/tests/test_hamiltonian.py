import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_model
from fragsim.core import StructuralError, compile_operator
from fragsim.hamiltonian import (
    GraphEnsembleConfig,
    SpinModel,
    assemble,
    build_tfim_chain,
    classical_energies,
    exact_ground,
    ground_energy,
    sample_all_to_all_gaussian,
    sample_random_ising,
)


def test_chain_builder():
    m = build_tfim_chain(3, 1.0, 0.0)
    assert m.couplings == {(0, 1, "z", "z"): 1.0, (1, 2, "z", "z"): 1.0}
    assert m.fields == (0.0, 0.0, 0.0)


def test_two_spin_ground_energy():
    e, _ = exact_ground(build_tfim_chain(2, 1.0, 0.0))
    assert e == pytest.approx(-0.25)
    w = np.linalg.eigvalsh(compile_operator(assemble(build_tfim_chain(2, 1.0, 0.0)), 2).dense())
    assert np.allclose(w, [-0.25, -0.25, 0.25, 0.25])


def test_assembled_term_count():
    op = assemble(build_tfim_chain(2, 1.0, 1.0))
    assert sorted(t.coefficient for t in op.terms) == [-1.0, -1.0, -1.0]
    assert len(assemble(SpinModel(3)).terms) == 0


def test_ensemble_extremes():
    assert sample_random_ising(GraphEnsembleConfig(5, edge_prob=0.0), 1.0).couplings == {}
    full = sample_random_ising(GraphEnsembleConfig(4, 1.0, 1.0, 0.0), 0.0)
    assert full.couplings == {(i, j, "z", "z"): 1.0 for i in range(4) for j in range(i + 1, 4)}


def test_edge_count_statistics():
    n, seeds = 8, 1000
    pairs = n * (n - 1) // 2
    counts = [len(sample_random_ising(GraphEnsembleConfig(n, seed=s), 1.0).couplings) for s in range(seeds)]
    sigma = np.sqrt(pairs * 0.25 / seeds)
    assert abs(np.mean(counts) - 0.5 * pairs) < 3 * sigma


def test_all_to_all_is_deterministic():
    a = sample_all_to_all_gaussian(6, 11, 0.0)
    b = sample_all_to_all_gaussian(6, 11, 0.0)
    assert a == b
    assert len(sample_all_to_all_gaussian(2, 0, 0.0).couplings) == 1


def test_classical_ground_is_basis_state():
    m = sample_all_to_all_gaussian(6, 3, 0.0)
    e, psi = exact_ground(m)
    assert e == pytest.approx(classical_energies(m).min())
    assert np.count_nonzero(np.abs(psi) > 1e-12) == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31), st.floats(-1.5, 1.5))
def test_assemble_matches_dense_oracle(n, seed, h):
    m = sample_random_ising(GraphEnsembleConfig(n, seed=seed), h)
    assert np.allclose(compile_operator(assemble(m), n).dense(), dense_model(m), atol=1e-12)
    assert ground_energy(m) == pytest.approx(np.linalg.eigvalsh(dense_model(m))[0], abs=1e-10)


def test_mixed_axis_couplings_and_canonical_order():
    m = SpinModel(3, {(2, 0, "x", "y"): 0.5, (0, 1, "z", "z"): 1.0})
    assert list(m.couplings) == [(0, 1, "z", "z"), (0, 2, "y", "x")]
    assert np.allclose(compile_operator(assemble(m), 3).dense(), dense_model(m))


def test_serialization_round_trip():
    m = sample_random_ising(GraphEnsembleConfig(5, seed=2), 0.3).with_couplings(
        {(0, 1, "x", "z"): 0.25, (1, 3, "z", "z"): -1.5})
    assert SpinModel.from_json(m.to_json()) == m


def test_invalid_models():
    with pytest.raises(StructuralError):
        SpinModel(2, {(0, 0, "z", "z"): 1.0})
    with pytest.raises(StructuralError):
        SpinModel(2, {(0, 2, "z", "z"): 1.0})
    with pytest.raises(StructuralError):
        SpinModel(2, {}, (1.0,))

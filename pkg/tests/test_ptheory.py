import numpy as np
import pytest

from fragsim.core import compile_operator
from fragsim.fragmentation import FragmentLayout
from fragsim.hamiltonian import SpinModel, assemble, build_tfim_chain, exact_ground, sample_all_to_all_gaussian
from fragsim.ptheory import (
    MeanFieldFunctional,
    UnsupportedInstance,
    decompose,
    descend,
    first_order_full,
    first_order_meanfield,
    flip_all,
    meanfield_energy,
    minimize_meanfield_energy,
    overlap,
    pt_sweep,
    sweep_csv,
    w_matrix,
)
from fragsim.hamiltonian import classical_energies

LAY6 = FragmentLayout.blocks(6, [3, 3])


def ground_index(model):
    return int(np.argmin(classical_energies(model.with_fields(0.0))))


def test_decomposition_sums_to_model():
    m = sample_all_to_all_gaussian(6, 0, 0.3)
    dec = decompose(m, LAY6)
    assert len(dec.HI.terms) == 9
    assert np.allclose(compile_operator(dec.total(), 6).dense(), compile_operator(assemble(m), 6).dense())
    assert len(decompose(m, FragmentLayout.blocks(6, [6])).HI.terms) == 0


@pytest.mark.parametrize("seed", range(6))
def test_overlap_is_half(seed):
    m = sample_all_to_all_gaussian(6, seed, 0.05)
    k = ground_index(m)
    full = first_order_full(m, LAY6, k)
    mf = first_order_meanfield(m, LAY6, k)
    assert abs(overlap(full, mf)) ** 2 == pytest.approx(0.5, abs=1e-10)
    assert full.normalization == pytest.approx(mf.normalization, abs=1e-10)
    z = full.zeroth.amplitudes
    assert abs(np.vdot(z, full.first_correction.amplitudes)) < 1e-10
    # corrections live on single flips only
    support = np.flatnonzero(np.abs(full.first_correction.amplitudes) > 0)
    for y in support:
        assert min(bin(y ^ k).count("1"), bin(y ^ flip_all(6, k)).count("1")) == 1


def test_zero_field_and_zero_lambda():
    m = sample_all_to_all_gaussian(5, 1, 0.0)
    k = ground_index(m)
    assert not first_order_full(m, FragmentLayout.blocks(5, [2, 3]), k).first_correction.amplitudes.any()
    mf = first_order_meanfield(m.with_fields(0.2), FragmentLayout.blocks(5, [2, 3]), k, lam=0.0)
    assert mf.normalization == pytest.approx(1.0)
    assert abs(mf.state[k]) == pytest.approx(1.0)


def test_two_spins_are_unsupported():
    m = build_tfim_chain(2, 1.0, 0.1)
    lay = FragmentLayout.blocks(2, [1, 1])
    with pytest.raises(UnsupportedInstance):
        overlap(first_order_full(m, lay, 0), first_order_meanfield(m, lay, 0))


def test_w_matrix_structure():
    # two spins: the Z2 partners share both single-flip neighbours
    w2 = w_matrix(build_tfim_chain(2, 1.0, 0.3), FragmentLayout.blocks(2, [1, 1]), 0)
    assert w2[0, 0] == pytest.approx(w2[0, 1], abs=1e-12)
    # three or more spins: no shared neighbour, so the pair is only coupled at order n
    m = sample_all_to_all_gaussian(6, 2, 0.2)
    w = w_matrix(m, LAY6, ground_index(m))
    assert w[0, 0] == pytest.approx(w[1, 1], abs=1e-12)
    assert w[0, 1] == 0.0 and w[0, 0] < 0


def symmetric_ground(model):
    """Ground state inside the sector even under flipping every spin.

    The two sectors split only at order h^n, far below eigensolver
    resolution for small h, so a plain diagonalization mixes them.
    """
    n = model.n
    half = 1 << (n - 1)
    basis = np.zeros((1 << n, half))
    for y in range(half):
        basis[y, y] = basis[flip_all(n, y), y] = 1 / np.sqrt(2)
    h = compile_operator(assemble(model), n).dense().real
    _, v = np.linalg.eigh(basis.T @ h @ basis)
    return basis @ v[:, 0]


@pytest.mark.parametrize("seed", range(3))
def test_first_order_state_matches_exact_in_symmetric_sector(seed):
    m0 = sample_all_to_all_gaussian(6, seed, 0.0)
    k = ground_index(m0)
    ref = first_order_full(m0.with_fields(1.0), LAY6, k)
    z, c = ref.zeroth.amplitudes, ref.first_correction.amplitudes
    slopes = []
    for lam in (1e-2, 1e-3):
        psi = symmetric_ground(m0.with_fields(lam))
        psi = psi * np.sign(np.vdot(z, psi).real)
        slopes.append((psi - z) / lam)
    assert np.max(np.abs(slopes[1] - c)) < 1e-2
    assert np.max(np.abs(slopes[1] - c)) < np.max(np.abs(slopes[0] - c))


def test_energy_shift_is_second_order():
    m0 = sample_all_to_all_gaussian(6, 3, 0.0)
    e0 = classical_energies(m0).min()
    lams = np.array([1e-1, 1e-2, 1e-3])
    shifts = [abs(exact_ground(m0.with_fields(lam))[0] - e0) for lam in lams]
    slope = np.polyfit(np.log(lams), np.log(shifts), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.05)


def test_meanfield_minimizer_at_zero_field():
    m = sample_all_to_all_gaussian(6, 5, 0.0)
    psi, e = minimize_meanfield_energy(m, LAY6, 0.0, seed=0, multistart=8)
    assert e == pytest.approx(classical_energies(m).min(), abs=1e-9)
    assert np.max(np.abs(psi.amplitudes)) ** 2 == pytest.approx(1.0, abs=1e-6)
    assert meanfield_energy(m, LAY6, psi) == pytest.approx(e)


def test_descent_is_monotone(rng):
    fun = MeanFieldFunctional(sample_all_to_all_gaussian(5, 1, 0.3), FragmentLayout.blocks(5, [2, 3]))
    _, _, trace = descend(fun, rng.normal(size=32) + 1j * rng.normal(size=32))
    assert np.all(np.diff(trace) <= 1e-15)


def test_meanfield_gradient_matches_finite_differences(rng):
    fun = MeanFieldFunctional(sample_all_to_all_gaussian(4, 2, 0.4), FragmentLayout.blocks(4, [2, 2]))
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    e, g = fun.energy_and_field(psi)
    d = rng.normal(size=16) + 1j * rng.normal(size=16)
    h = 1e-6
    fd = (fun.energy_and_field(psi + h * d)[0] - fun.energy_and_field(psi - h * d)[0]) / (2 * h)
    assert fd == pytest.approx(2 * np.vdot(g, d).real, rel=1e-6)


def test_sweep_shape_and_limits():
    m = sample_all_to_all_gaussian(6, 0, 0.0)
    rows = pt_sweep(m, LAY6, [0.0, 0.05, 0.4], seed=0, multistart=8)
    assert [r[0] for r in rows] == [0.0, 0.05, 0.4]
    h0 = rows[0]
    assert h0[3] == pytest.approx(1.0) and h0[4] == pytest.approx(0.5)
    assert rows[1][1] == pytest.approx(0.5, abs=0.05)
    assert rows[1][3] > rows[2][3]
    assert sweep_csv(rows).count("\n") == 4


def test_accidental_degeneracy_is_flagged():
    # J = 0 between fragments of a free model: every basis state is degenerate with its neighbours
    m = SpinModel(3, {(0, 1, "z", "z"): 1.0}, (0.1, 0.1, 0.1))
    with pytest.raises(UnsupportedInstance):
        first_order_full(m, FragmentLayout.blocks(3, [2, 1]), 0)

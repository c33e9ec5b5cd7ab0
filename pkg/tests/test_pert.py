"""Tests of effective Hamiltonians, diagrams, resonances and closed forms."""

import math

import numpy as np
import pytest

from floqpert import model, pert
from floqpert.errors import EnumerationCapError, NumericalError, ValidationError


def rabi_setup(n1=3, wx=0.05, detune=0.0):
    wd = 1.0 / n1 + detune
    system = model.rabi_model(1.0, wx, wd)
    dec = model.decompose(system, explicit_D=[0, 1], explicit_photons={1: n1})
    return system, dec


def random_system(seed, n_levels=4, scale=0.03):
    rng = np.random.default_rng(seed)
    energies = np.concatenate([[0.0], np.cumsum(rng.uniform(0.8, 1.8, n_levels - 1))])
    v1 = rng.normal(size=(n_levels, n_levels)) + 1j * rng.normal(size=(n_levels, n_levels))
    v0 = rng.normal(size=(n_levels, n_levels))
    wd = (energies[1] - energies[0]) / 3 * (1 + rng.uniform(-3e-3, 3e-3))
    system = model.system_from_positive_harmonics(
        energies, {0: scale * 0.5 * (v0 + v0.T), 1: scale * v1}, wd
    )
    return system, model.decompose(system, explicit_D=[0, 1])


# -- matrix path ------------------------------------------------------------------


def test_first_order_is_detuning_block():
    system, dec = rabi_setup(detune=0.003)
    heff = pert.effective_hamiltonian(system, dec, 1)
    np.testing.assert_allclose(
        np.diag(heff.orders[0]), dec.detunings[list(dec.degenerate)], atol=1e-15
    )


def test_xz_second_order_closed_forms():
    wd, wx, wz = 0.5, 0.05, 0.02
    system = model.xz_model(1.0, wx, wz, wd)
    dec = model.decompose(system)
    heff = pert.effective_hamiltonian(system, dec, 2)
    assert heff.omega(1, 0, 2) == pytest.approx(-2 * wx * wz / wd, rel=1e-12)
    assert heff.delta(0, 2) == pytest.approx(-4 * wx**2 / (3 * wd), rel=1e-12)
    assert heff.delta(1, 2) == pytest.approx(+4 * wx**2 / (3 * wd), rel=1e-12)


@pytest.mark.parametrize("n1", [3, 5, 7])
def test_rabi_leading_coupling(n1):
    q = (n1 - 1) // 2
    wx = 0.05
    system, dec = rabi_setup(n1=n1, wx=wx)
    heff = pert.effective_hamiltonian(system, dec, n1)
    wd = system.drive_frequency
    expected = (-1) ** q * wx ** (2 * q + 1) / (
        2 ** (2 * q) * math.factorial(q) ** 2 * wd ** (2 * q)
    )
    assert heff.orders[n1 - 1][1, 0].real == pytest.approx(expected, rel=1e-12)
    assert abs(heff.orders[n1 - 1][1, 0].imag) < 1e-18


def test_rabi_even_orders_vanish():
    system, dec = rabi_setup(n1=3)
    heff = pert.effective_hamiltonian(system, dec, 6)
    for r in (2, 4, 6):
        assert abs(heff.orders[r - 1][1, 0]) == 0.0


def test_rabi_second_order_stark():
    n1, wx = 3, 0.05
    system, dec = rabi_setup(n1=n1, wx=wx)
    wd = system.drive_frequency
    heff = pert.effective_hamiltonian(system, dec, 2)
    expected = -(wx**2) / ((n1 + 1) * wd) - wx**2 / ((n1 - 1) * wd)
    assert heff.delta(0, 2) == pytest.approx(expected, rel=1e-12)
    assert heff.delta(1, 2) == pytest.approx(-expected, rel=1e-12)


def test_symmetric_drive_stark_antisymmetry():
    for seed in (11, 12):
        rng = np.random.default_rng(seed)
        wx, wz = rng.uniform(0.01, 0.08, 2)
        system = model.xz_model(1.0, wx, wz, 0.5)
        dec = model.decompose(system)
        heff = pert.effective_hamiltonian(system, dec, 2)
        assert heff.orders[1][1, 1].real == pytest.approx(-heff.orders[1][0, 0].real, rel=1e-12)


def test_cumulative_and_accessors():
    system, dec = rabi_setup(detune=0.002)
    heff = pert.effective_hamiltonian(system, dec, 4)
    np.testing.assert_allclose(heff.cumulative(4), heff.total)
    np.testing.assert_allclose(
        heff.cumulative(2), heff.orders[0] + heff.orders[1]
    )
    with pytest.raises(ValidationError):
        heff.delta(2)


# -- w operator --------------------------------------------------------------------


def test_w_zeroth_order_is_projector_columns():
    system, dec = rabi_setup()
    w = pert.w_operator(system, dec, 0)
    cols = w.orders[0]
    space = w.space
    for j, k in enumerate(dec.degenerate):
        expected = np.zeros(space.dim)
        expected[space.index(k, int(dec.photon_numbers[k]))] = 1.0
        np.testing.assert_array_equal(cols[:, j].real, expected)
    assert not np.any(cols.imag)


def test_w_first_order_entries_by_hand():
    # R V P on the reference column reaches the partner level one sector away
    wx = 0.04
    system, dec = rabi_setup(wx=wx)
    wd = system.drive_frequency
    w = pert.w_operator(system, dec, 1)
    col0 = w.orders[1][:, 0]
    space = w.space
    assert col0[space.index(1, 1)] == pytest.approx(wx / (wd - 1.0), rel=1e-12)
    assert col0[space.index(1, -1)] == pytest.approx(wx / (-wd - 1.0), rel=1e-12)
    assert col0[space.index(0, 0)] == 0.0


def test_w_vanishes_without_drive():
    system = model.xz_model(1.0, 0.0, 0.0, 0.52)
    dec = model.decompose(system, explicit_D=[0, 1])
    w = pert.w_operator(system, dec, 3)
    for r in (1, 2, 3):
        assert not np.any(w.orders[r])


def test_w_unitarity_truncated():
    # the truncated identity closes as lambda^(r_W + 1); keep lambda ~ 1e-2
    system, dec = random_system(21, scale=0.003)
    w = pert.w_operator(system, dec, 4)
    cum = w.cumulative(4)
    gram = cum.conj().T @ cum
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-10)


# -- diagram path -------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(4))
def test_diagram_path_equals_matrix_path(seed):
    system, dec = random_system(seed)
    heff = pert.effective_hamiltonian(system, dec, 5)
    for r in range(1, 6):
        for l in dec.degenerate:
            for k in dec.degenerate:
                terms = pert.enumerate_processes(system, dec, l, k, r)
                total = sum(t.amplitude for t in terms)
                entry = heff.orders[r - 1][
                    dec.degenerate.index(l), dec.degenerate.index(k)
                ]
                assert abs(total - entry) <= 1e-10 * max(abs(entry), 1e-300)


def test_xz_second_order_process_listing():
    system = model.xz_model(1.0, 0.05, 0.02, 0.5)
    dec = model.decompose(system)
    coupling = pert.enumerate_processes(system, dec, 1, 0, 2)
    assert len(coupling) == 2
    amps = sorted(t.amplitude.real for t in coupling)
    assert amps == pytest.approx([-0.002, -0.002])
    stark = pert.enumerate_processes(system, dec, 0, 0, 2)
    assert len(stark) == 4
    longitudinal = sorted(
        t.amplitude.real for t in stark if abs(abs(t.amplitude) - 0.02**2 / 0.5) < 1e-15
    )
    assert longitudinal == pytest.approx([-0.0008, 0.0008])  # exact cancellation
    assert sum(t.amplitude for t in stark).real == pytest.approx(-4 * 0.05**2 / (3 * 0.5))


def test_resonant_intermediate_multiplicities():
    # five steps with a resonant third step: three exponent placements, all -1/2
    system, dec = rabi_setup(n1=3, wx=0.05)
    terms = pert.enumerate_processes(system, dec, 1, 0, 5)
    pattern = [t for t in terms if t.photons == (1, 1, 1, 1, -1)]
    assert len(pattern) == 3
    assert all(t.coefficient == pytest.approx(-0.5) for t in pattern)
    assert sorted(t.exponents for t in pattern) == [
        (1, 1, 0, 2), (1, 2, 0, 1), (2, 1, 0, 1)
    ]
    assert all(t.exponents[2] == 0 for t in pattern)  # the resonant step


def test_first_order_process():
    system = model.xz_model(1.0, 0.04, 0.01, 1.04)  # single-photon resonance
    dec = model.decompose(system, explicit_D=[0, 1])
    terms = pert.enumerate_processes(system, dec, 1, 0, 1)
    assert len(terms) == 1
    assert terms[0].amplitude == pytest.approx(0.04)


def test_enumeration_cap():
    system, dec = random_system(3)
    with pytest.raises(EnumerationCapError):
        pert.enumerate_processes(system, dec, 0, 0, 5, max_terms=10)


# -- resonance and rates ---------------------------------------------------------


def test_xz_resonance_root_closed_form():
    wx, wz = 0.05, 0.02
    build = lambda wd: model.xz_model(1.0, wx, wz, wd)
    result = pert.resonance_frequency(build, (0.45, 0.55), 2, explicit_D=[0, 1])
    closed = 0.25 + math.sqrt(0.25**2 + (4.0 / 3.0) * wx**2)
    assert result.omega_d == pytest.approx(closed, rel=1e-10)
    assert result.residual <= 1e-10
    assert not result.flagged


def test_resonance_zero_drive_limit():
    build = lambda wd: model.rabi_model(1.0, 1e-6, wd)
    result = pert.resonance_frequency(
        build, (0.3330, 0.3337), 3, explicit_D=[0, 1], explicit_photons={1: 3}
    )
    assert result.omega_d == pytest.approx(1.0 / 3.0, abs=1e-8)


def test_resonance_requires_sign_change():
    build = lambda wd: model.rabi_model(1.0, 0.05, wd)
    with pytest.raises(NumericalError):
        pert.resonance_frequency(build, (0.3, 0.31), 3, explicit_D=[0, 1],
                                 explicit_photons={1: 3})


def test_rabi_frequency_limits():
    heff = pert.EffectiveHamiltonian(
        levels=(0, 1),
        orders=(np.array([[0.0, 0.01], [0.01, 0.0]], dtype=complex),),
        drive_frequency=0.3,
    )
    rate = pert.rabi_frequency(heff)
    assert rate.omega_r == pytest.approx(0.02)
    assert rate.t_pi == pytest.approx(np.pi / 0.02)
    detuned = pert.EffectiveHamiltonian(
        levels=(0, 1),
        orders=(np.array([[0.0, 0.0], [0.0, 0.05]], dtype=complex),),
        drive_frequency=0.3,
    )
    assert pert.rabi_frequency(detuned).omega_r == pytest.approx(0.05)


def test_rabi_frequency_requires_two_levels():
    heff = pert.EffectiveHamiltonian(
        levels=(0, 1, 2), orders=(np.zeros((3, 3), dtype=complex),), drive_frequency=0.3
    )
    with pytest.raises(ValidationError):
        pert.rabi_frequency(heff)


# -- closed forms ----------------------------------------------------------------


def test_closed_form_matches_matrix_path():
    for seed in (31, 32):
        system, dec = random_system(seed)
        heff = pert.effective_hamiltonian(system, dec, 3)
        lead = pert.closed_form_leading(system, dec)
        n1 = int(dec.photon_numbers[1])
        coupled = heff.orders[n1 - 1][1, 0]
        assert abs(lead.coupling - coupled) <= 1e-12 * max(abs(coupled), 1e-300)
        for row, k in enumerate(dec.degenerate):
            assert lead.stark2[row] == pytest.approx(heff.delta(k, 2) - heff.delta(k, 1),
                                                     rel=1e-12)


def test_three_photon_splitting_closed_form():
    system, dec = rabi_setup(n1=3, wx=0.06, detune=-4e-4)
    heff = pert.effective_hamiltonian(system, dec, 3)
    lead = pert.closed_form_leading(system, dec)
    matrix = (heff.orders[2][1, 1] - heff.orders[2][0, 0]).real
    assert lead.splitting3 == pytest.approx(matrix, rel=1e-12)
    # proportional to the residual detuning, with the five-term structure
    assert lead.splitting3 == pytest.approx(
        5 * 0.06**2 * (-dec.detunings[1]) / (8 * system.drive_frequency**2), rel=1e-12
    )


def test_large_subharmonic_asymptotics():
    # the Stirling-type estimate approaches the exact prefactor as n1 grows
    wx = 0.05
    ratios = []
    for n1 in (7, 11, 15):
        q = (n1 - 1) // 2
        wd = 1.0 / n1
        exact = wx ** (2 * q + 1) / (2 ** (2 * q) * math.factorial(q) ** 2 * wd ** (2 * q))
        estimate = (math.e * wx) ** n1 / (math.pi * (n1 - 1))
        ratios.append(exact / estimate)
    assert abs(ratios[2] - 1) < abs(ratios[0] - 1)
    assert ratios[2] == pytest.approx(1.0, rel=0.06)


def test_closed_form_rejects_polychromatic():
    system = model.system_from_positive_harmonics(
        [0.0, 1.0], {1: 0.02 * np.eye(2), 2: 0.01 * np.eye(2)}, 0.34
    )
    dec = model.decompose(system, explicit_D=[0, 1])
    with pytest.raises(ValidationError):
        pert.closed_form_leading(system, dec)

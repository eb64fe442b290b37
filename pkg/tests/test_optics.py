import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qudit_homodyne.optics import (
    IDEAL,
    CoherenceKernel,
    InterferenceSettings,
    Polarization,
    bin_pair_coincidence,
    coherence_kernel,
    coincidence_density_vs_delay,
    cross_bin_rcp_analytic,
    cross_bin_rcp_enumerated,
    expected_side_peak_strength,
    joint_coincidence_density,
    mean_cross_bin_kernel,
    same_port_density,
    total_coincidence_probability,
    two_photon_output_expansion,
)
from qudit_homodyne.qudit_state import equal_qudit, local_oscillator, make_qudit

T = 230.0
PERP = IDEAL.with_polarization(Polarization.PERPENDICULAR)


@st.composite
def qudit_pairs(draw):
    d = draw(st.integers(1, 4))
    out = []
    for _ in range(2):
        mags = draw(st.lists(st.floats(0.1, 3.0), min_size=d, max_size=d))
        ph = draw(st.lists(st.floats(-4, 4), min_size=d, max_size=d))
        out.append(make_qudit(d, mags, ph, T))
    return out


times = st.floats(0.0, 4 * T - 1e-6)


def test_expansion_normalized_and_hom():
    lo = local_oscillator(2)
    for dist in (False, True):
        terms = two_photon_output_expansion(lo, lo, distinguishable=dist)
        assert sum(t.probability for t in terms) == pytest.approx(1.0, abs=1e-12)
    # identical photons never leave through different ports
    assert sum(t.probability for t in two_photon_output_expansion(lo, lo) if t.cross_port) == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("phi", oracles.PHI_GRID)
def test_enumeration_matches_analytic_and_permanent(phi):
    sig = equal_qudit([0, phi])
    enum = cross_bin_rcp_enumerated(sig, local_oscillator(2))
    assert enum == pytest.approx(float(cross_bin_rcp_analytic(phi)), abs=1e-12)
    assert enum == pytest.approx(oracles.cross_bin_rcp(phi), abs=1e-12)


def test_enumeration_qutrit_matches_permanent():
    sig = equal_qudit([0, 1.0, 2.0])
    lo = local_oscillator(3)
    assert cross_bin_rcp_enumerated(sig, lo, (0, 2)) == pytest.approx(oracles.cross_bin_rcp(1.0, 3, (0, 2)), abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        two_photon_output_expansion(equal_qudit([0, 0]), equal_qudit([0, 0, 0]))


def test_kernel_values():
    assert coherence_kernel(0.0, 500.0) == 1.0
    assert coherence_kernel(500.0, 500.0) == pytest.approx(math.exp(-1))
    assert coherence_kernel(500.0, 500.0, CoherenceKernel.EXPONENTIAL) == pytest.approx(math.exp(-1))
    assert coherence_kernel(1e6, math.inf) == 1.0


def test_density_matches_oracle():
    sig, lo = equal_qudit([0, math.pi]), local_oscillator(2)
    t1, t2 = np.meshgrid(np.linspace(0, 460, 47), np.linspace(0, 460, 47))
    np.testing.assert_allclose(joint_coincidence_density(sig, lo, IDEAL, t1, t2),
                               oracles.coherent_cross_density(sig.amplitudes, lo.amplitudes, T, t1, t2), atol=1e-18)
    np.testing.assert_allclose(joint_coincidence_density(sig, lo, PERP, t1, t2),
                               oracles.distinguishable_cross_density(sig.amplitudes, lo.amplitudes, T, t1, t2),
                               atol=1e-18)
    assert float(joint_coincidence_density(sig, lo, IDEAL, 50.0, 300.0)) == pytest.approx(
        oracles.FROZEN["coherent_density_sample"], rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(qudit_pairs(), times, times, st.sampled_from([IDEAL, InterferenceSettings(), PERP]))
def test_density_symmetric_and_nonnegative(pair, t1, t2, s):
    sig, lo = pair
    g12 = joint_coincidence_density(sig, lo, s, t1, t2)
    g21 = joint_coincidence_density(sig, lo, s, t2, t1)
    assert g12 >= 0
    assert g12 == pytest.approx(float(g21), rel=1e-12, abs=1e-20)


@settings(max_examples=60, deadline=None)
@given(qudit_pairs(), times, times)
def test_zero_overlap_equals_perpendicular(pair, t1, t2):
    sig, lo = pair
    zero = InterferenceSettings(coherence_time=300.0, mode_overlap=0.0)
    a = joint_coincidence_density(sig, lo, zero, t1, t2)
    b = joint_coincidence_density(sig, lo, PERP, t1, t2)
    assert abs(float(a) - float(b)) <= 1e-15


@settings(max_examples=30, deadline=None)
@given(qudit_pairs())
def test_ports_conserve_probability(pair):
    sig, lo = pair
    s = InterferenceSettings(coherence_time=400.0, mode_overlap=0.8)
    cross = total_coincidence_probability(sig, lo, s, step=2.0)
    from qudit_homodyne.qudit_state import envelope_grid

    t, h = envelope_grid(T, sig.d, 2.0)
    same = same_port_density(sig, lo, s, t[:, None], t[None, :]).sum() * h * h  # ordered pairs, one port
    assert cross + same == pytest.approx(1.0, abs=1e-3)


def test_perpendicular_half_cross():
    sig = equal_qudit([0, math.pi])
    assert total_coincidence_probability(sig, local_oscillator(2), PERP) == pytest.approx(0.5, abs=1e-6)
    assert total_coincidence_probability(sig, local_oscillator(2), IDEAL) == pytest.approx(0.5, abs=1e-6)
    lo = local_oscillator(2)
    assert total_coincidence_probability(lo, lo, IDEAL) == pytest.approx(0.0, abs=1e-12)


def test_bin_pair_cells_follow_rcp():
    phi = 2.0
    sig, lo = equal_qudit([0, phi]), local_oscillator(2)
    par = bin_pair_coincidence(sig, lo, IDEAL)
    ref = bin_pair_coincidence(sig, lo, PERP)
    np.testing.assert_allclose(np.diag(par), 0, atol=1e-12)
    np.testing.assert_allclose(par[0, 1] / ref[0, 1], 1 - math.cos(phi), atol=1e-9)


def test_mean_kernel_monotone_in_coherence():
    vals = [mean_cross_bin_kernel(InterferenceSettings(coherence_time=tc), T) for tc in (100, 300, 500, 2000)]
    assert vals == sorted(vals)
    assert mean_cross_bin_kernel(IDEAL, T) == 1.0
    assert mean_cross_bin_kernel(InterferenceSettings(), T) == pytest.approx(0.803, abs=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.floats(50, 3000), st.floats(1.01, 3.0), st.floats(0, 2 * math.pi))
def test_dephasing_reduces_contrast(tc, factor, phi):
    a = expected_side_peak_strength(phi, InterferenceSettings(coherence_time=tc))
    b = expected_side_peak_strength(phi, InterferenceSettings(coherence_time=tc * factor))
    # longer coherence pushes the strength further from 1
    assert abs(b - 1) >= abs(a - 1) - 1e-12


def test_expected_strength_limits():
    assert expected_side_peak_strength(math.pi, IDEAL) == pytest.approx(2.0)
    assert expected_side_peak_strength(0.0, IDEAL) == pytest.approx(0.0)
    assert expected_side_peak_strength(0.0, PERP) == pytest.approx(1.0)


def test_delay_distribution_integrates_to_total():
    sig, lo = equal_qudit([0, math.pi / 3]), local_oscillator(2)
    s = InterferenceSettings()
    taus = np.arange(-460, 461, 1.0)
    h = coincidence_density_vs_delay(sig, lo, s, taus)
    assert h.sum() == pytest.approx(total_coincidence_probability(sig, lo, s), rel=2e-3)
    np.testing.assert_allclose(h, h[::-1], atol=1e-12)

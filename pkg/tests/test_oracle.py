from __future__ import annotations

import math

import numpy as np
import pytest

from sympfaff.correlators import correlation, correlation_batch, partition_function, real_correlation
from sympfaff.numerics import ValidationError
from sympfaff.oracle import (
    AccuracyError,
    EigenConfig,
    brute_force_correlator,
    brute_force_partition,
    density_compare,
    histogram_grid,
    joint_log_density,
    mcmc_sample,
    real_brute_force_correlator,
    real_brute_force_partition,
)
from sympfaff.skewortho import chgse_skew_basis, gse_skew_basis
from sympfaff.weights import build_grid, chgse_weight, gse_weight, projected_weight

R0_GSE = 2.1708037636748028


def rel(a, b):
    return abs(complex(a) - complex(b)) / max(abs(complex(b)), 1e-300)


# --- joint density -------------------------------------------------------------

def test_eigen_config_validation():
    with pytest.raises(ValidationError):
        EigenConfig((0.3 - 0.1j,))
    with pytest.raises(ValidationError):
        EigenConfig((-0.3 + 0.1j,), chiral=True)
    assert EigenConfig((0.3 + 0.1j, 0.2j)).N == 2


def test_single_point_density():
    w = gse_weight(1, 0.5)
    z = 0.4 + 0.3j
    expect = math.log(w(0.4, 0.3)) + math.log(abs(z - z.conjugate()) ** 2)
    assert joint_log_density(w, EigenConfig((z,))) == pytest.approx(expect, rel=1e-14)


def test_density_symmetric_under_relabeling():
    w = chgse_weight(3, 0.5, 1)
    pts = (0.3 + 0.2j, 0.7 + 0.4j, 0.5 + 0.1j)
    a = joint_log_density(w, EigenConfig(pts, True), [0.8])
    b = joint_log_density(w, EigenConfig(pts[::-1], True), [0.8])
    assert a == pytest.approx(b, rel=1e-14)


def test_density_rejects_complex_masses():
    with pytest.raises(ValidationError):
        joint_log_density(gse_weight(1, 0.5), EigenConfig((0.1j,)), [0.3 + 0.1j])


def test_density_integrates_to_partition_function():
    w = gse_weight(1, 0.5)
    grid = build_grid(w, degree=2)
    z, wq = grid.complex_nodes()
    upper = z.imag > 0
    vals = [math.exp(joint_log_density(w, EigenConfig((p,)))) for p in z[upper]]
    # each conjugate pair is represented once in the upper half plane
    assert 2 * np.sum(np.array(vals) * wq[upper]) == pytest.approx(R0_GSE, rel=1e-10)


# --- direct quadrature -----------------------------------------------------------

def test_partition_single_eigenvalue():
    w = gse_weight(1, 0.5)
    assert brute_force_partition(w, 1) == pytest.approx(R0_GSE, rel=1e-10)
    assert brute_force_partition(w, 1, [0.3]) == pytest.approx(R0_GSE * 1.59, rel=1e-10)


@pytest.mark.parametrize("family", ["gse", "chgse"])
def test_partition_two_eigenvalues(family):
    if family == "gse":
        w, b = gse_weight(2, 0.5), gse_skew_basis(2, 0.5, 2)
    else:
        w, b = chgse_weight(2, 0.5, 0), chgse_skew_basis(2, 0.5, 0, 2)
    assert rel(brute_force_partition(w, 2), 2 * b.norms[0] * b.norms[1]) < 1e-6


def test_coarse_grid_is_reported():
    with pytest.raises(AccuracyError, match="not converged"):
        brute_force_partition(gse_weight(1, 0.5), 1, [0.3, 2.0 + 1.0j], n=16)


def test_brute_force_limits():
    w = gse_weight(1, 0.5)
    with pytest.raises(ValidationError):
        brute_force_partition(w, 3)
    with pytest.raises(ValidationError):
        brute_force_correlator(w, 1, [0.1j, 0.2j])


@pytest.mark.parametrize("family", ["gse", "chgse"])
def test_correlator_matches_pfaffian_at_random_points(family):
    if family == "gse":
        w, b = gse_weight(2, 0.5), gse_skew_basis(2, 0.5, 3)
    else:
        w, b = chgse_weight(2, 0.5, 1), chgse_skew_basis(2, 0.5, 1, 3)
    masses = [0.4 - 0.1j]
    Z = brute_force_partition(w, 2, masses)
    if w.chiral:
        Z = Z / masses[0] ** 2
    rng = np.random.default_rng(10)
    pts = rng.uniform(-0.9, 0.9, 10) + 1j * rng.uniform(-0.5, 0.5, 10)
    for z in pts:
        brute = brute_force_correlator(w, 2, [z], masses, Z=Z)
        assert rel(correlation(b, w, 2, [z], masses).value, brute) < 1e-5


def test_correlator_vanishes_on_axes():
    w = gse_weight(2, 0.5)
    assert brute_force_correlator(w, 2, [0.4], Z=1.0) == 0
    c = chgse_weight(2, 0.5, 0)
    assert brute_force_correlator(c, 2, [0.4j], Z=1.0) == 0
    assert brute_force_correlator(c, 2, [0.4], Z=1.0) == 0


# --- real line -----------------------------------------------------------------

def test_real_line_single_eigenvalue():
    wbar = projected_weight(gse_weight(1, 0.0))
    assert real_brute_force_partition(wbar, 1) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)
    assert real_brute_force_correlator(wbar, 1, [0.7]) == pytest.approx(
        math.exp(-0.49 / 2) / math.sqrt(2 * math.pi), rel=1e-12)


@pytest.mark.parametrize("family,nu", [("gse", 0), ("chgse", 0), ("chgse", 1)])
def test_real_line_matches_pfaffian(family, nu):
    if family == "gse":
        wbar, b = projected_weight(gse_weight(2, 0.0)), gse_skew_basis(2, 1.0, 4)
    else:
        wbar, b = projected_weight(chgse_weight(2, 0.5, nu)), chgse_skew_basis(2, 0.0, nu, 4)
    for masses in ((), (0.9,)):
        for xs in ([0.37], [0.37, -0.81]):
            assert rel(real_correlation(b, wbar, 2, xs, masses),
                       real_brute_force_correlator(wbar, 2, xs, masses)) < 1e-6


# --- sampling --------------------------------------------------------------------

@pytest.fixture(scope="module")
def single_chain():
    return mcmc_sample(gse_weight(1, 0.5), 1, 200_000, seed=5)


def test_chain_statistics(single_chain):
    st = single_chain.stats
    assert 0.2 <= st.acceptance_rate <= 0.4
    assert st.seed == 5 and st.steps == 200_000
    assert single_chain.samples.shape == (200_000, 1)
    assert np.all(single_chain.samples.imag > 0)
    assert 0 < st.effective_sample_estimate <= 200_000


def test_chain_is_deterministic():
    a = mcmc_sample(gse_weight(2, 0.5), 2, 5000, seed=9)
    b = mcmc_sample(gse_weight(2, 0.5), 2, 5000, seed=9)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_imaginary_part_marginal(single_chain):
    # R(z) = w |z - z*|^2 / r0 integrated over x: density of y > 0 is 2 * 4 y^2 sqrt(1.5 pi) e^{-2 y^2} / r0
    y = single_chain.samples.imag.ravel()
    edges = np.linspace(0, 2.0, 21)
    counts = np.histogram(y, edges)[0]
    t, tw = np.polynomial.legendre.leggauss(8)
    expected = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        yy = lo + (hi - lo) * (t + 1) / 2
        dens = 8 * yy**2 * math.sqrt(1.5 * math.pi) * 0.7978845608028654 * np.exp(-2 * yy**2) / R0_GSE
        expected.append(len(y) * np.sum(tw * dens) * (hi - lo) / 2)
    expected = np.array(expected)
    keep = expected > 20
    # autocorrelated chain: allow a generous inflation of the Poisson error
    z = (counts[keep] - expected[keep]) / np.sqrt(10 * expected[keep])
    assert np.max(np.abs(z)) < 4


def test_two_seeds_agree():
    w = chgse_weight(1, 0.5, 0)
    a = mcmc_sample(w, 1, 100_000, seed=1).samples.ravel()
    b = mcmc_sample(w, 1, 100_000, seed=2).samples.ravel()
    xe, ye = histogram_grid(w, 1, 8, 4)
    ca = np.histogram2d(a.real, a.imag, (xe, ye))[0]
    cb = np.histogram2d(b.real, b.imag, (xe, ye))[0]
    keep = (ca + cb) > 40
    z = (ca - cb)[keep] / np.sqrt(10 * (ca + cb)[keep])
    assert np.mean(np.abs(z) > 3) < 0.05


def test_compare_accepts_right_and_rejects_wrong_prediction(single_chain):
    w = gse_weight(1, 0.5)
    right = gse_skew_basis(1, 0.5, 1)
    edges = histogram_grid(w, 1)
    good = density_compare(single_chain.samples, lambda z: correlation_batch(right, w, 1, z).real,
                           edges, 1, norm_grid=build_grid(w, degree=6))
    assert good.fraction_beyond_3sigma < 0.01
    assert good.normalization == pytest.approx(1.0, rel=1e-4)
    w_bad = gse_weight(1, 0.4)
    wrong = gse_skew_basis(1, 0.4, 1)
    bad = density_compare(single_chain.samples, lambda z: correlation_batch(wrong, w_bad, 1, z).real,
                          edges, 1)
    assert bad.fraction_beyond_3sigma > 0.1
    assert not bad.passed()


def test_sampler_with_masses_and_csv(tmp_path):
    run = mcmc_sample(chgse_weight(2, 0.5, 0), 2, 4000, seed=3, masses=[0.8])
    assert np.all(run.samples.real > 0) and np.all(run.samples.imag > 0)
    path = tmp_path / "chain.csv"
    run.save_csv(str(path))
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 0], run.samples[:, 0].real)
    assert path.read_text().splitlines()[0] == "x1,y1,x2,y2"
    with pytest.raises(ValidationError):
        mcmc_sample(gse_weight(1, 0.5), 1, 10, seed=1, masses=[0.3j])

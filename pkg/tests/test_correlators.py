from __future__ import annotations

import csv
import io
import itertools
import math
import warnings

import numpy as np
import pytest

from sympfaff.correlators import (
    ArgumentList,
    DegenerateMassError,
    NearSingularError,
    char_poly_expectation,
    correlation,
    correlation_batch,
    hermitean_limit_sweep,
    isd_kernels,
    kernel_qdet_correlation,
    omega_matrix,
    partition_function,
    perturb_coincident,
    quaternion_form_correlation,
    real_correlation,
    real_kernel_qdet_correlation,
    results_to_csv,
    theta_matrix,
)
from sympfaff.numerics import ValidationError, gauss_legendre_panels, pfaffian
from sympfaff.skewortho import chgse_skew_basis, gse_skew_basis, kernel_derivatives, prekernel
from sympfaff.weights import build_grid, chgse_weight, gse_weight, projected_weight

R0_GSE = 2.1708037636748028
SQRT_2PI = math.sqrt(2 * math.pi)


def rel(a, b):
    return abs(complex(a) - complex(b)) / max(abs(complex(b)), 1e-300)


def gse(N, tau=0.5, pairs=3):
    return gse_weight(N, tau), gse_skew_basis(N, tau, N + pairs)


def chgse(N, mu=0.5, nu=0, pairs=3):
    return chgse_weight(N, mu, nu), chgse_skew_basis(N, mu, nu, N + pairs)


def projected(family, N, nu=0):
    if family == "gse":
        return projected_weight(gse_weight(N, 0.0)), gse_skew_basis(N, 1.0, N + 3)
    return projected_weight(chgse_weight(N, 0.5, nu)), chgse_skew_basis(N, 0.0, nu, N + 3)


# --- argument lists and Theta -------------------------------------------------

def test_argument_order():
    args = ArgumentList((0.1 + 0.2j, 0.3 + 0.4j), (1.0, 2.0))
    np.testing.assert_array_equal(args.entries, [0.1 + 0.2j, 0.1 - 0.2j, 0.3 + 0.4j, 0.3 - 0.4j, 1, 2])
    assert (args.k, args.M) == (2, 2)


def test_theta_single_pair():
    _, b = gse(1)
    z = 0.4 + 0.3j
    T = theta_matrix(b, 1, ArgumentList((z,)))
    assert T.entries.shape == (2, 2)
    assert rel(pfaffian(T), (z - np.conj(z)) / R0_GSE) < 1e-14
    assert np.all(np.diag(T.entries) == 0)


def test_theta_bordered_single_mass():
    _, b = gse(1)
    T = theta_matrix(b, 1, np.array([0.3]))
    assert T.entries.shape == (2, 2)
    assert pfaffian(T) == pytest.approx(1.59, rel=1e-14)


def test_theta_needs_long_enough_basis():
    b = gse_skew_basis(1, 0.5, 1, extra_even=False)
    with pytest.raises(ValidationError, match="basis too short"):
        theta_matrix(b, 1, np.array([0.3]))


# --- characteristic polynomials and partition functions -----------------------

def test_single_mass_expectation():
    _, b = gse(1)
    assert char_poly_expectation(b, 1, [0.3]) == pytest.approx(1.59, rel=1e-14)
    # frozen from independent scipy dblquad of the eigenvalue integral
    assert rel(char_poly_expectation(b, 1, [0.3 + 0.1j]), 1.58 + 0.06j) < 1e-12


def test_two_mass_expectation_frozen():
    _, b = gse(1)
    val = char_poly_expectation(b, 1, [0.3 + 0.1j, -0.4 + 0.2j])
    assert rel(val, 3.6492 - 0.0956j) < 1e-10


@pytest.mark.parametrize("nu,expected", [(0, 7.1378 - 0.1704j), (1, 18.7728 - 0.3504j)])
def test_chiral_single_mass_frozen(nu, expected):
    _, b = chgse(1, nu=nu)
    assert rel(char_poly_expectation(b, 1, [0.3 + 0.1j]), expected) < 1e-10


@pytest.mark.parametrize("make", [gse, lambda N: chgse(N, nu=1)])
@pytest.mark.parametrize("N", [1, 2])
def test_one_mass_gives_even_polynomial(make, N):
    _, b = make(N)
    m = 0.45 - 0.2j
    assert rel(char_poly_expectation(b, N, [m]), b.q(2 * N, m)) < 1e-12


@pytest.mark.parametrize("make", [gse, lambda N: chgse(N, nu=1)])
@pytest.mark.parametrize("N", [1, 2])
def test_two_masses_give_kernel(make, N):
    _, b = make(N)
    m1, m2 = 0.3 + 0.1j, -0.5 + 0.25j
    d = (m2 * m2 - m1 * m1) if b.chiral else (m2 - m1)
    expect = b.norms[N] * prekernel(b, N + 1, m2, m1) / d
    assert rel(char_poly_expectation(b, N, [m1, m2]), expect) < 1e-12


def _richardson(f, eps):
    # symmetric splitting: even in eps, so the error is O(eps^2)
    return (100 * f(eps / 10) - f(eps)) / 99


@pytest.mark.parametrize("make", [gse, lambda N: chgse(N, nu=0)])
def test_coincident_mass_limit_is_finite_and_stable(make):
    _, b = make(2)
    m = 0.35 + 0.15j
    f = lambda e: char_poly_expectation(b, 2, perturb_coincident([m, m], e, b.chiral))
    vals = [f(e) for e in (1e-2, 1e-3, 1e-4)]
    assert all(np.isfinite(v) for v in vals)
    r1, r2 = _richardson(f, 1e-2), _richardson(f, 1e-3)
    assert rel(r2, r1) < 1e-5


def test_coincident_masses_rejected():
    _, b = gse(1)
    with pytest.raises(DegenerateMassError, match="perturb"):
        char_poly_expectation(b, 1, [0.3, 0.3])
    _, c = chgse(1)
    with pytest.raises(DegenerateMassError):
        char_poly_expectation(c, 1, [0.3, -0.3])


def test_perturbation_is_symmetric():
    out = perturb_coincident([0.3, 0.3, 1.0], 1e-3)
    assert out == [pytest.approx(0.2995), pytest.approx(0.3005), 1.0]


def test_partition_functions():
    _, b1 = gse(1)
    assert partition_function(b1, 1) == pytest.approx(R0_GSE, rel=1e-14)
    assert partition_function(b1, 1, [0.3]) == pytest.approx(R0_GSE * 1.59, rel=1e-14)
    _, b2 = gse(2)
    r0, r1 = R0_GSE / 2**0.5, R0_GSE * 6 / 2**2.5
    assert partition_function(b2, 2) == pytest.approx(2 * r0 * r1, rel=1e-14)
    _, c = chgse(1, nu=1)
    m = 0.3 + 0.1j
    assert rel(partition_function(c, 1, [m]), c.norms[0] * c.q(2, m) * m**2) < 1e-13


def test_mass_at_root_is_near_singular():
    w, b = gse(1)
    root = 1j * math.sqrt(1.5)
    with pytest.raises(NearSingularError):
        correlation(b, w, 1, [0.3 + 0.4j], [root])


# --- complex-plane correlators -------------------------------------------------

def test_one_point_function_closed_form():
    w, b = gse(1)
    z = 0.4 + 0.3j
    res = correlation(b, w, 1, [z])
    expect = w(0.4, 0.3) * abs(z - np.conj(z)) ** 2 / R0_GSE
    assert rel(res.value, expect) < 1e-14
    assert res.R_index == 1 and res.parity == "even"


@pytest.mark.parametrize("make", [gse, chgse])
@pytest.mark.parametrize("N", [1, 2])
def test_density_integrates_to_n(make, N):
    w, b = make(N)
    grid = build_grid(w, degree=4 * N + 4)
    z, wq = grid.complex_nodes()
    assert rel(np.sum(wq * correlation_batch(b, w, N, z)), N) < 1e-6


@pytest.mark.parametrize("make", [gse, chgse])
def test_one_mass_density_integrates_to_n(make):
    w, b = make(2)
    grid = build_grid(w, degree=16)
    z, wq = grid.complex_nodes()
    total = np.sum(wq * correlation_batch(b, w, 2, z, [0.6 + 0.2j]))
    assert rel(total, 2) < 1e-6


@pytest.mark.parametrize("make", [gse, chgse])
def test_two_point_integrates_to_one_point(make):
    w, b = make(2)
    masses = [0.7]
    z1 = 0.35 + 0.45j
    grid = build_grid(w, degree=16)
    z, wq = grid.complex_nodes()
    pts = np.stack([np.full_like(z, z1), z], axis=1)
    lhs = np.sum(wq * correlation_batch(b, w, 2, pts, masses))
    assert rel(lhs, correlation(b, w, 2, [z1], masses).value) < 1e-6


@pytest.mark.parametrize("make", [gse, chgse])
def test_reflection_and_permutation_invariance(make):
    w, b = make(3)
    pts = [0.3 + 0.4j, -0.5 + 0.2j, 0.8 + 0.6j]
    masses = [0.9 + 0.1j]
    base = correlation(b, w, 3, pts, masses).value
    for perm in itertools.permutations(pts):
        assert rel(correlation(b, w, 3, list(perm), masses).value, base) < 1e-10
    flipped = [np.conj(pts[0])] + pts[1:]
    assert rel(correlation(b, w, 3, flipped, masses).value, base) < 1e-10


@pytest.mark.parametrize("make", [gse, chgse])
def test_conjugation_and_reality(make):
    w, b = make(2)
    pts = [0.3 + 0.4j, -0.5 + 0.2j]
    masses = [0.9 + 0.1j, -0.2 + 0.5j]
    a = correlation(b, w, 2, pts, masses).value
    c = correlation(b, w, 2, np.conj(pts), np.conj(masses)).value
    assert rel(c, np.conj(a)) < 1e-10
    r = correlation(b, w, 2, pts).value
    assert abs(r.imag) < 1e-8 and r.real >= 0
    paired = correlation(b, w, 2, pts, [0.9 + 0.1j, 0.9 - 0.1j]).value
    assert abs(paired.imag) < 1e-10 * abs(paired)


@pytest.mark.parametrize("make,pts,masses", [
    (lambda: chgse(2, nu=1), np.array([0.3 + 0.4j, -0.5 + 0.2j, 0.1 + 0.3j]), [0.9, -1.1 + 0.3j, 0.4j]),
    (lambda: gse(2), np.array([[0.3 + 0.4j, -0.5 + 0.2j], [0.1 + 0.9j, 0.6 + 0.3j]]), [0.9]),
])
def test_batch_matches_scalar(make, pts, masses):
    w, b = make()
    batch = correlation_batch(b, w, 2, pts, masses)
    for row, v in zip(pts, batch):
        assert rel(v, correlation(b, w, 2, list(np.atleast_1d(row)), masses).value) < 1e-12


def test_two_point_function_matches_joint_density():
    # for N = 2 the two-point function is the normalised joint density itself
    from sympfaff.oracle import EigenConfig, joint_log_density

    w, b = chgse(2, nu=1)
    pts = (0.3 + 0.2j, 0.5 + 0.15j)
    for masses in ((), (0.9,), (0.9, 1.3)):
        Z = partition_function(b, 2, masses) / np.prod(np.asarray(masses, complex) ** 2)
        dens = 2 * np.exp(joint_log_density(w, EigenConfig(pts), masses)) / Z
        with warnings.catch_warnings():
            # strong repulsion makes this value small; the cancellation warning is expected
            warnings.simplefilter("ignore", RuntimeWarning)
            res = correlation(b, w, 2, list(pts), masses)
        assert rel(res.value, dens) < 1e-8
        assert res.diagnostics["cancellation_numerator"] >= 1.0


@pytest.mark.parametrize("make", [gse, lambda N: chgse(N, nu=1)])
@pytest.mark.parametrize("N,pts", [(1, [0.3 + 0.2j]), (2, [0.3 + 0.2j, -0.4 + 0.5j]),
                                   (3, [0.3 + 0.2j, -0.4 + 0.5j])])
def test_pfaffian_equals_kernel_quaternion_determinant(make, N, pts):
    w, b = make(N)
    assert rel(kernel_qdet_correlation(b, w, N, pts), correlation(b, w, N, pts).value) < 1e-10


def test_correlator_validation():
    w, b = gse(1)
    with pytest.raises(ValidationError):
        correlation(b, w, 1, [])
    with pytest.raises(ValidationError):
        correlation(b, w, 1, [0.1j, 0.2j])
    with pytest.raises(ValidationError):
        correlation(b, chgse_weight(1, 0.5, 0), 1, [0.1j])


# --- real line ------------------------------------------------------------------

def test_omega_single_point():
    wbar, b = projected("gse", 1)
    O = omega_matrix(b, 1, [0.4])
    K, Kx, Kt, _ = kernel_derivatives(b, 1, 0.4, 0.4)
    assert O.entries[0, 1] == pytest.approx(Kx)
    assert pfaffian(O) == pytest.approx(-Kt)
    assert pfaffian(O) == pytest.approx(1 / SQRT_2PI, rel=1e-14)
    assert np.max(np.abs(O.entries + O.entries.T)) < 1e-12


def test_omega_masses_only():
    wbar, b = projected("gse", 1)
    O = omega_matrix(b, 1, [], [0.2, -0.7])
    assert O.entries[0, 1] == pytest.approx(prekernel(b, 1, 0.2, -0.7))
    with pytest.raises(ValidationError):
        omega_matrix(b, 1, [0.3 + 0.2j])


def test_real_density_is_gaussian():
    wbar, b = projected("gse", 1)
    xs = np.linspace(-3, 3, 13)
    vals = [real_correlation(b, wbar, 1, [x]) for x in xs]
    np.testing.assert_allclose(np.real(vals), np.exp(-xs**2 / 2) / SQRT_2PI, rtol=1e-13)


@pytest.mark.parametrize("family,nu", [("gse", 0), ("chgse", 0), ("chgse", 1)])
@pytest.mark.parametrize("N", [1, 2, 3])
def test_real_density_integrates_to_n(family, nu, N):
    wbar, b = projected(family, N, nu)
    # two panels keep the |x|^(4 nu + 1) kink of the chiral weight off the nodes
    x, wx = gauss_legendre_panels(12 / math.sqrt(N), 300)
    vals = np.array([real_correlation(b, wbar, N, [t]) for t in x])
    assert rel(np.sum(wx * vals), N) < 1e-10


def test_isd_examples():
    wbar, b = projected("gse", 2)
    I, S, D = isd_kernels(b, wbar, 2, 0.3, 0.3)
    assert I == 0
    x, t = 0.3, -0.7
    _, Kx_tx, _, _ = kernel_derivatives(b, 2, t, x)
    _, Kx_xt, _, _ = kernel_derivatives(b, 2, x, t)
    # d_t kappa(x, t) = -d_1 kappa(t, x)
    assert kernel_derivatives(b, 2, x, t)[2] == pytest.approx(-Kx_tx)
    wb1, b1 = projected("gse", 1)
    assert isd_kernels(b1, wb1, 1, 0.3, -0.7)[2] == 0


@pytest.mark.parametrize("family,nu", [("gse", 0), ("chgse", 0), ("chgse", 1)])
@pytest.mark.parametrize("masses", [(), (1.2,), (1.2, -1.5 + 0.4j, 0.9 + 1.1j)])
@pytest.mark.parametrize("xs", [[0.37], [0.37, -0.81]])
def test_omega_form_equals_quaternion_form(family, nu, masses, xs):
    wbar, b = projected(family, 3, nu)
    a = real_correlation(b, wbar, 3, xs, masses)
    q = quaternion_form_correlation(b, wbar, 3, xs, masses)
    assert rel(q, a) < 1e-9


@pytest.mark.parametrize("family,nu", [("gse", 0), ("chgse", 1)])
def test_real_quaternion_determinant(family, nu):
    wbar, b = projected(family, 3, nu)
    xs = [0.37, -0.81, 1.3]
    assert rel(real_kernel_qdet_correlation(b, wbar, 3, xs), real_correlation(b, wbar, 3, xs)) < 1e-9


# --- Hermitean limit sweeps ----------------------------------------------------

@pytest.mark.parametrize("family", ["gse", "chgse"])
def test_density_sweep_converges(family):
    rep = hermitean_limit_sweep(family, 1)
    assert rep.monotone and rep.final_deviation < 0.01


@pytest.mark.parametrize("observable", ["norms", "charpoly"])
@pytest.mark.parametrize("family", ["gse", "chgse"])
def test_other_sweeps_converge(family, observable):
    rep = hermitean_limit_sweep(family, 2, observable=observable)
    assert rep.monotone and rep.final_deviation < 0.01


def test_even_polynomial_coefficient_limit():
    for tau in (0.9, 0.99, 0.999):
        assert gse_skew_basis(1, tau, 1).polys[2].coeffs[0] == pytest.approx(2 - tau)
    assert gse_skew_basis(1, 1.0, 1).polys[2].coeffs[0] == pytest.approx(1.0)


def test_unknown_family_or_observable():
    with pytest.raises(ValidationError):
        hermitean_limit_sweep("goe")
    with pytest.raises(ValidationError):
        hermitean_limit_sweep("gse", observable="spacing")


# --- output -----------------------------------------------------------------

def test_csv_round_trip_is_exact():
    vals = [1 / 3 + 2j / 7, math.pi]
    text = results_to_csv([0.1 + 0.2j, -1.0], vals)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["x", "y", "re", "im"]
    assert complex(float(rows[1][2]), float(rows[1][3])) == vals[0]
    assert float(rows[2][2]) == math.pi

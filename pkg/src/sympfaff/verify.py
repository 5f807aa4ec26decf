"""Verification suites shared by the command line and the acceptance tests.

Each suite returns a list of :class:`Check` records (measured residual
against a tolerance); nothing here raises on a failed comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .correlators import (
    char_poly_expectation,
    correlation,
    correlation_batch,
    hermitean_limit_sweep,
    kernel_qdet_correlation,
    omega_matrix,
    partition_function,
    quaternion_form_correlation,
    real_correlation,
    real_kernel_qdet_correlation,
)
from .numerics import AntisymMatrix, pfaffian
from .oracle import (
    brute_force_correlator,
    brute_force_partition,
    density_compare,
    histogram_grid,
    mcmc_sample,
    real_brute_force_correlator,
)
from .skewortho import (
    chgse_skew_basis,
    gse_skew_basis,
    kernel_via_W,
    monomial_W,
    prekernel,
    with_odd_shift,
)
from .weights import build_grid, chgse_weight, gse_weight, projected_weight

__all__ = ["Check", "format_table", "SUITES", "ensemble", "projected_ensemble"]


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool

    @classmethod
    def at_most(cls, name: str, measured: float, tolerance: float) -> "Check":
        measured = float(measured)
        return cls(name, measured, tolerance, bool(measured <= tolerance))


def format_table(checks) -> str:
    width = max([len(c.name) for c in checks] + [5])
    lines = [f"{'check':<{width}}  {'measured':>11}  {'tolerance':>9}  result"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {c.measured:11.3e}  {c.tolerance:9.1e}  "
                     f"{'PASS' if c.passed else 'FAIL'}")
    return "\n".join(lines)


def _rel(a, b) -> float:
    return abs(complex(a) - complex(b)) / max(abs(complex(b)), 1e-300)


def ensemble(family: str, N: int, param: float, nu: int = 0, extra_pairs: int = 2):
    """``(weight, closed-form basis)`` for a family at a given non-Hermiticity."""
    if family == "gse":
        return gse_weight(N, param), gse_skew_basis(N, param, N + extra_pairs)
    return chgse_weight(N, param, nu), chgse_skew_basis(N, param, nu, N + extra_pairs)


def projected_ensemble(family: str, N: int, nu: int = 0, extra_pairs: int = 2):
    """``(projected weight, projected basis)``."""
    if family == "gse":
        return projected_weight(gse_weight(N, 0.0)), gse_skew_basis(N, 1.0, N + extra_pairs)
    return (projected_weight(chgse_weight(N, 0.5, nu)),
            chgse_skew_basis(N, 0.0, nu, N + extra_pairs))


THEOREM1_FAMILIES = (("gse", 0.5, 0), ("chgse", 0.5, 0), ("chgse", 0.5, 1))
THEOREM1_MASSES = {0: (), 1: (0.3 + 0.1j,), 2: (0.3 + 0.1j, -0.4 + 0.2j)}
THEOREM1_POINTS = (0.4 + 0.3j, 0.55 + 0.2j)


def theorem1(tol: float = 1e-5) -> list[Check]:
    """Pfaffian partition functions and one-point functions against direct quadrature."""
    checks = []
    for family, p, nu in THEOREM1_FAMILIES:
        tag = family if family == "gse" else f"chgse(nu={nu})"
        for N in (1, 2):
            w, b = ensemble(family, N, p, nu)
            for M, masses in THEOREM1_MASSES.items():
                Zb = brute_force_partition(w, N, masses)
                Zp = partition_function(b, N, masses)
                checks.append(Check.at_most(f"{tag} N={N} k=0 M={M}", _rel(Zp, Zb), tol))
                const = np.prod(np.asarray(masses, complex) ** (2 * nu)) if (w.chiral and nu and masses) else 1.0
                for z in THEOREM1_POINTS:
                    Rb = brute_force_correlator(w, N, [z], masses, Z=Zb / const)
                    Rp = correlation(b, w, N, [z], masses).value
                    checks.append(Check.at_most(f"{tag} N={N} k=1 M={M} z={z}", _rel(Rp, Rb), tol))
    return checks


def theorem2(tol_sweep: float = 0.01, tol_brute: float = 1e-5, tol_forms: float = 1e-9) -> list[Check]:
    """Hermitean limit: convergence sweeps, real-line brute force and equivalent Pfaffian forms."""
    checks = []
    for family in ("gse", "chgse"):
        rep = hermitean_limit_sweep(family, 1, observable="density")
        checks.append(Check(f"{family} sweep monotone {rep.parameters}",
                            float(rep.monotone is False), 0.0, rep.monotone))
        checks.append(Check.at_most(f"{family} sweep final sup deviation", rep.final_deviation, tol_sweep))
    for family, nu in (("gse", 0), ("chgse", 0), ("chgse", 1)):
        tag = family if family == "gse" else f"chgse(nu={nu})"
        wbar, pb = projected_ensemble(family, 2, nu)
        for masses in ((), (0.9,), (0.9, -1.3 + 0.3j)):
            for xs in ([0.37], [0.37, -0.81]):
                rb = real_brute_force_correlator(wbar, 2, xs, masses)
                rp = real_correlation(pb, wbar, 2, xs, masses)
                checks.append(Check.at_most(f"{tag} N=2 k={len(xs)} M={len(masses)} real brute force",
                                            _rel(rp, rb), tol_brute))
    for family, nu in (("gse", 0), ("chgse", 0)):
        tag = family if family == "gse" else f"chgse(nu={nu})"
        for N in (2, 3):
            wbar, pb = projected_ensemble(family, N, nu)
            for masses in ((), (1.2,), (1.2, -1.5 + 0.4j, 0.9 + 1.1j)):
                for xs in ([0.37], [0.37, -0.81]):
                    a = real_correlation(pb, wbar, N, xs, masses)
                    b = quaternion_form_correlation(pb, wbar, N, xs, masses)
                    checks.append(Check.at_most(
                        f"{tag} N={N} k={len(xs)} M={len(masses)} Omega vs quaternion form",
                        _rel(b, a), tol_forms))
            xs = [0.37, -0.81]
            checks.append(Check.at_most(f"{tag} N={N} k=2 Omega vs I/S/D qdet",
                                        _rel(real_kernel_qdet_correlation(pb, wbar, N, xs),
                                             real_correlation(pb, wbar, N, xs)), tol_forms))
    return checks


def identities(seed: int = 2024, tol: float = 1e-9) -> list[Check]:
    """Pfaffian algebra and basis independence of the kernel."""
    rng = np.random.default_rng(seed)
    checks = []
    worst_det, worst_ab, worst_swap = 0.0, 0.0, 0.0
    for n in range(2, 13, 2):
        for _ in range(5):
            X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            A = X - X.T
            pf = pfaffian(A)
            worst_det = max(worst_det, _rel(pf * pf, np.linalg.det(A)))
            B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            worst_ab = max(worst_ab, _rel(pfaffian(AntisymMatrix(B @ A @ B.T, tol=1e-9)),
                                          pf * np.linalg.det(B)))
            i, j = rng.choice(n, 2, replace=False)
            perm = np.arange(n)
            perm[[i, j]] = perm[[j, i]]
            worst_swap = max(worst_swap, _rel(pfaffian(A[np.ix_(perm, perm)]), -pf))
    checks.append(Check.at_most("Pf^2 = det, dims 2..12", worst_det, tol))
    checks.append(Check.at_most("Pf(B A B^T) = Pf(A) det(B), dims 2..12", worst_ab, tol))
    checks.append(Check.at_most("row/column swap flips the sign", worst_swap, 1e-12))
    for family, p, nu in (("gse", 0.5, 0), ("chgse", 0.5, 1)):
        w, b = ensemble(family, 2, p, nu, extra_pairs=1)
        Wm = monomial_W(w, 2 * b.R)
        z = rng.normal(size=50) + 1j * rng.normal(size=50)
        v = rng.normal(size=50) + 1j * rng.normal(size=50)
        k1 = prekernel(b, b.R, z, v)
        k2 = kernel_via_W(Wm, z, v)
        mask = np.abs(k1) > 1e-8
        checks.append(Check.at_most(f"{family} prekernel = W-inverse kernel (50 pairs)",
                                    float(np.max(np.abs(k1 - k2)[mask] / np.abs(k1)[mask])), tol))
        k3 = prekernel(with_odd_shift(b, 0.7), b.R, z, v)
        checks.append(Check.at_most(f"{family} kernel invariant under odd shift",
                                    float(np.max(np.abs(k3 - k1)[mask] / np.abs(k1)[mask])), tol))
        pts = [0.3 + 0.2j, -0.4 + 0.5j]
        checks.append(Check.at_most(f"{family} N=2 k=2 Pfaffian = kernel qdet",
                                    _rel(kernel_qdet_correlation(b, w, 2, pts),
                                         correlation(b, w, 2, pts).value), tol))
    return checks


def mcmc(steps: int = 1_000_000, n_values=(2, 3, 4, 5, 6), seed: int = 20240611,
         fraction: float = 0.01, progress: Optional[Callable[[str], None]] = None) -> list[Check]:
    """Metropolis histograms of the one-point function against the Pfaffian prediction."""
    checks = []
    for family, p in (("gse", 0.5), ("chgse", 0.5)):
        for N in n_values:
            w, b = ensemble(family, N, p, 0, extra_pairs=0)
            run = mcmc_sample(w, N, steps, seed + N)
            pred = (lambda z, b=b, w=w, N=N: correlation_batch(b, w, N, z).real)
            rep = density_compare(run.samples, pred, histogram_grid(w, N), N, chiral=w.chiral,
                                  norm_grid=build_grid(w, degree=8 * N + 4))
            name = f"{family} N={N} bins beyond 3 sigma ({rep.n_bins} bins)"
            checks.append(Check(name, rep.fraction_beyond_3sigma, fraction,
                                rep.fraction_beyond_3sigma < fraction))
            checks.append(Check.at_most(f"{family} N={N} predicted normalization",
                                        abs(rep.normalization / N - 1.0), 1e-4))
            if progress:
                progress(f"{name}: {rep.fraction_beyond_3sigma:.4f}, acceptance "
                         f"{run.stats.acceptance_rate:.3f}")
    return checks


SUITES = {"theorem1": theorem1, "theorem2": theorem2, "identities": identities, "mcmc": mcmc}

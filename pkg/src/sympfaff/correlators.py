"""Pfaffian expressions for partition functions and eigenvalue correlators.

Complex-plane quantities are built from the pre-kernel matrix ``Theta``,
real-line (Hermitean-limit) quantities from the derivative matrix
``Omega`` of the projected kernel.  Argument ordering follows the
convention ``(z_1, z_1*, ..., z_k, z_k*, m_1, ..., m_M)`` throughout; the
signs of all formulas below depend on it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from .numerics import (
    AntisymMatrix,
    NumericError,
    ValidationError,
    gauss_legendre_panels,
    pfaffian_batch,
    pfaffian_with_diagnostics,
)
from .skewortho import (
    SkewBasis,
    chgse_skew_basis,
    gse_skew_basis,
    kernel_derivatives,
    prekernel,
)
from .weights import RealWeightSpec, WeightSpec, chgse_weight, gse_weight, projected_weight

__all__ = [
    "NearSingularError",
    "DegenerateMassError",
    "ArgumentList",
    "CorrelatorResult",
    "theta_matrix",
    "char_poly_expectation",
    "partition_function",
    "correlation",
    "correlation_batch",
    "omega_matrix",
    "real_correlation",
    "isd_kernels",
    "quaternion_form_correlation",
    "quaternion_determinant",
    "kernel_qdet_correlation",
    "real_kernel_qdet_correlation",
    "perturb_coincident",
    "hermitean_limit_sweep",
    "SweepReport",
    "results_to_csv",
]

MASS_SEPARATION = 1e-9
SINGULAR_TOL = 1e-12
CANCELLATION_WARN = 1e8


class NearSingularError(NumericError):
    """The mass-only Pfaffian in a denominator is numerically zero."""


class DegenerateMassError(ValidationError):
    """Two masses coincide; the Pfaffian formulas need pairwise distinct masses."""


# ---------------------------------------------------------------------------
# Arguments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArgumentList:
    """Ordered arguments ``(z_1, z_1*, ..., z_k, z_k*, m_1, ..., m_M)``."""

    points: tuple[complex, ...]
    masses: tuple[complex, ...] = ()
    chiral: bool = False

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.points)
        ms = tuple(complex(m) for m in self.masses)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        check_masses(ms, self.chiral)

    @property
    def k(self) -> int:
        return len(self.points)

    @property
    def M(self) -> int:
        return len(self.masses)

    @property
    def entries(self) -> np.ndarray:
        u = []
        for z in self.points:
            u.extend([z, z.conjugate()])
        u.extend(self.masses)
        return np.array(u, dtype=complex)


def check_masses(masses: Sequence[complex], chiral: bool = False):
    """Reject masses closer than ``1e-9 * scale`` (compared as squares for chiral)."""
    ms = np.asarray(masses, dtype=complex)
    if not np.all(np.isfinite(ms)):
        raise ValidationError("masses must be finite")
    v = ms * ms if chiral else ms
    if len(v) < 2:
        return
    scale = max(1.0, float(np.max(np.abs(v))))
    d = np.abs(v[:, None] - v[None, :])
    np.fill_diagonal(d, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    if d[i, j] <= MASS_SEPARATION * scale:
        what = "squared masses" if chiral else "masses"
        raise DegenerateMassError(
            f"{what} {i} and {j} coincide ({ms[i]} vs {ms[j]}); the formulas need distinct "
            f"masses, perturb them symmetrically, e.g. by eps = 1e-4 (--perturb-masses)"
        )


def perturb_coincident(masses: Sequence[complex], eps: float, chiral: bool = False) -> list[complex]:
    """Split groups of coincident masses symmetrically: ``m + eps * (j - (g - 1) / 2)``."""
    ms = [complex(m) for m in masses]
    key = [m * m if chiral else m for m in ms]
    out = list(ms)
    used = [False] * len(ms)
    for i in range(len(ms)):
        if used[i]:
            continue
        scale = max(1.0, abs(key[i]))
        group = [j for j in range(len(ms))
                 if not used[j] and abs(key[j] - key[i]) <= MASS_SEPARATION * scale]
        for j in group:
            used[j] = True
        if len(group) > 1:
            g = len(group)
            for pos, j in enumerate(group):
                out[j] = ms[i] + eps * (pos - (g - 1) / 2.0)
    return out


def _vandermonde(v: np.ndarray) -> complex:
    out = 1.0 + 0j
    for a in range(len(v)):
        for b in range(a):
            out *= v[a] - v[b]
    return out


# ---------------------------------------------------------------------------
# Theta matrix and complex-plane quantities
# ---------------------------------------------------------------------------


def _require(basis: SkewBasis, R: int, odd: bool):
    need = 2 * R + (1 if odd else 0)
    if R > basis.R or len(basis.polys) < need:
        raise ValidationError(
            f"basis too short: need q_0..q_{need - 1} and {R} norms, have "
            f"{len(basis.polys)} polynomials and {basis.R} pairs"
        )


def _theta_batch(basis: SkewBasis, R: int, U: np.ndarray) -> np.ndarray:
    """``Theta`` for each row of ``U`` (shape ``(P, n)``)."""
    P, n = U.shape
    odd = n % 2 == 1
    _require(basis, R, odd)
    K = prekernel(basis, R, U[:, :, None], U[:, None, :]) if R else np.zeros((P, n, n), complex)
    K = np.broadcast_to(K, (P, n, n))
    if not odd:
        return np.array(K)
    T = np.zeros((P, n + 1, n + 1), dtype=complex)
    T[:, :n, :n] = K
    q = basis.q(2 * R, U)
    T[:, :n, n] = q
    T[:, n, :n] = -q
    return T


def theta_matrix(basis: SkewBasis, R: int, args) -> AntisymMatrix:
    """``[kappa_R(u_i, u_j)]``, bordered by ``q_{2R}`` when the argument count is odd."""
    u = args.entries if isinstance(args, ArgumentList) else np.asarray(args, dtype=complex)
    T = _theta_batch(basis, R, u[None, :])[0]
    return AntisymMatrix(T, tol=1e-9)


def _pf_checked(T: AntisymMatrix) -> tuple[complex, float]:
    pf, canc = pfaffian_with_diagnostics(T)
    if pf != 0 and canc > CANCELLATION_WARN:
        warnings.warn(f"Pfaffian lost ~{math.log10(canc):.0f} digits to cancellation",
                      RuntimeWarning, stacklevel=3)
    return pf, canc


def _abs_poly(p, a):
    """``sum_i |c_i| |a|^i``: the size of the terms summed when evaluating ``p(a)``."""
    return np.polyval(np.abs(p.coeffs[::-1]), np.abs(a))


def _term_bound(basis: SkewBasis, R: int, u: np.ndarray) -> float:
    """Hadamard-type bound on ``|Pf Theta(u)|`` from term magnitudes.

    Each entry is replaced by the sum of the absolute values of the terms
    that make it up; ``|Pf| <= prod_i ||row_i||^{1/2}`` for that matrix.  A
    Pfaffian far below this bound is cancellation noise.
    """
    a = u * u if basis.chiral else u
    n = len(a)
    A = np.zeros((n, n))
    for k in range(R):
        e = _abs_poly(basis.polys[2 * k], a)
        o = _abs_poly(basis.polys[2 * k + 1], a)
        A += (np.outer(o, e) + np.outer(e, o)) / abs(basis.norms[k])
    if n % 2:
        q = _abs_poly(basis.polys[2 * R], a)
        A = np.block([[A, q[:, None]], [q[None, :], np.zeros((1, 1))]])
    rows = np.sqrt(np.sum(A * A, axis=1))
    return float(np.prod(np.sqrt(rows)))


def char_poly_expectation(basis: SkewBasis, N: int, masses: Sequence[complex]) -> complex:
    """``< prod_f prod_i (m_f - z_i)(m_f - z_i*) >`` over the ``N``-eigenvalue ensemble.

    Equals ``(-1)^{[M/2]} prod_{h=N}^{N+[M/2]-1} r_h Pf Theta(m) / Delta(m)``;
    the norms product turns the ratio of partition functions into an
    expectation value.  Chiral bases use squared masses.
    """
    masses = tuple(complex(m) for m in masses)
    check_masses(masses, basis.chiral)
    M = len(masses)
    if M == 0:
        return 1.0 + 0j
    R = N + M // 2
    T = theta_matrix(basis, R, np.array(masses))
    pf, _ = _pf_checked(T)
    v = np.array(masses)
    if basis.chiral:
        v = v * v
    norms = np.prod(basis.norms[N:R]) if R > N else 1.0
    return complex((-1) ** (M // 2) * norms * pf / _vandermonde(v))


def partition_function(basis: SkewBasis, N: int, masses: Sequence[complex] = ()) -> complex:
    """``N! prod r_i`` times the characteristic-polynomial expectation.

    Chiral bases also carry ``prod_f m_f^{2 nu}``.
    """
    if N > basis.R:
        raise ValidationError(f"basis has only {basis.R} norms, need {N}")
    z0 = math.factorial(N) * np.prod(basis.norms[:N])
    out = z0 * char_poly_expectation(basis, N, masses)
    if basis.chiral and basis.nu:
        out *= np.prod(np.asarray(masses, dtype=complex) ** (2 * basis.nu))
    return complex(out)


@dataclass(frozen=True)
class CorrelatorResult:
    """Value of a k-point correlator with the data needed to interpret it."""

    value: complex
    R_index: int
    parity: str
    points: tuple[complex, ...]
    masses: tuple[complex, ...]
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "value": [self.value.real, self.value.imag],
            "R_index": self.R_index,
            "parity": self.parity,
            "points": [[p.real, p.imag] for p in self.points],
            "masses": [[m.real, m.imag] for m in self.masses],
            "diagnostics": self.diagnostics,
        }


def _prefactor(w: WeightSpec, z: np.ndarray) -> np.ndarray:
    zc = np.conj(z)
    diff = zc * zc - z * z if w.chiral else zc - z
    return w.at(z) * diff


def _denominator(basis: SkewBasis, N: int, masses: tuple) -> tuple[complex, float]:
    R = N + len(masses) // 2
    if not masses:
        return 1.0 + 0j, 1.0
    T = theta_matrix(basis, R, np.array(masses))
    pf, canc = _pf_checked(T)
    if abs(pf) < SINGULAR_TOL * _term_bound(basis, R, np.array(masses)):
        raise NearSingularError(
            f"mass Pfaffian |Pf Theta(m)| = {abs(pf):.3e} is numerically zero; "
            "the correlator is undefined for these masses"
        )
    return pf, canc


def correlation(basis: SkewBasis, w: WeightSpec, N: int, points: Sequence[complex],
                masses: Sequence[complex] = ()) -> CorrelatorResult:
    """k-point correlator ``prod_h w(z_h)(z_h* - z_h) Pf Theta(u) / Pf Theta(m)``.

    ``k = len(points)``; chiral weights use the factor ``z_h*^2 - z_h^2``.
    """
    if basis.chiral != w.chiral:
        raise ValidationError("basis and weight disagree on chirality")
    args = ArgumentList(tuple(points), tuple(masses), basis.chiral)
    k, M = args.k, args.M
    if k < 1:
        raise ValidationError("a correlator needs at least one point")
    if k > N:
        raise ValidationError(f"k = {k} exceeds N = {N}")
    R = N + M // 2
    den, canc_d = _denominator(basis, N, args.masses)
    T = theta_matrix(basis, R, args)
    num, canc_n = _pf_checked(T)
    pre = np.prod(_prefactor(w, np.array(args.points)))
    value = complex(pre * num / den)
    diag = {"cancellation_numerator": canc_n, "cancellation_denominator": canc_d,
            "pf_numerator": [num.real, num.imag], "pf_denominator": [den.real, den.imag]}
    if max(canc_n, canc_d) > CANCELLATION_WARN:
        diag["warning"] = "Pfaffian cancellation above 1e8"
    return CorrelatorResult(value, R, "odd" if M % 2 else "even",
                            args.points, args.masses, diag)


def correlation_batch(basis: SkewBasis, w: WeightSpec, N: int, points,
                      masses: Sequence[complex] = ()) -> np.ndarray:
    """Vectorised :func:`correlation` values for ``points`` of shape ``(P,)`` (k = 1) or ``(P, k)``."""
    pts = np.asarray(points, dtype=complex)
    if pts.ndim == 1:
        pts = pts[:, None]
    P, k = pts.shape
    masses = tuple(complex(m) for m in masses)
    check_masses(masses, basis.chiral)
    if k > N:
        raise ValidationError(f"k = {k} exceeds N = {N}")
    R = N + len(masses) // 2
    den, _ = _denominator(basis, N, masses)
    U = np.empty((P, 2 * k + len(masses)), dtype=complex)
    U[:, 0 : 2 * k : 2] = pts
    U[:, 1 : 2 * k : 2] = np.conj(pts)
    U[:, 2 * k :] = masses
    if k == 1 and not masses:
        num = prekernel(basis, R, U[:, 0], U[:, 1])
    else:
        num = pfaffian_batch(_theta_batch(basis, R, U))
    pre = np.prod(_prefactor(w, pts), axis=1)
    return pre * num / den


# ---------------------------------------------------------------------------
# Hermitean limit: Omega matrix and real-line correlators
# ---------------------------------------------------------------------------


def _omega_entries(basis: SkewBasis, R: int, vals: np.ndarray, derivs: np.ndarray, odd: bool):
    n = len(vals)
    K, K1, K2, K12 = kernel_derivatives(basis, R, vals[:, None], vals[None, :])
    K, K1, K2, K12 = (np.broadcast_to(a, (n, n)) for a in (K, K1, K2, K12))
    da = derivs[:, None]
    db = derivs[None, :]
    O = np.where(da & db, K12, np.where(da, K1, np.where(db, K2, K)))
    if not odd:
        return np.array(O)
    q = basis.polys[2 * R]
    if basis.chiral:
        qv = q(vals * vals)
        dq = 2.0 * vals * q.deriv()(vals * vals)
    else:
        qv, dq = q(vals), q.deriv()(vals)
    border = np.where(derivs, dq, qv)
    T = np.zeros((n + 1, n + 1), dtype=complex)
    T[:n, :n] = O
    T[:n, n] = border
    T[n, :n] = -border
    return T


def omega_matrix(basis: SkewBasis, R: int, xs: Sequence[float],
                 masses: Sequence[complex] = ()) -> AntisymMatrix:
    """Derivative matrix of the projected kernel.

    Rows/columns are ordered ``(d/dx_1, x_1, ..., d/dx_k, x_k, m_1, ..., m_M)``;
    the entry between arguments ``a`` and ``b`` is ``D_a D_b kappa(v_a, v_b)``
    where ``D`` differentiates the kernel slot of a derivative row.  A
    ``q_{2R}`` border (differentiated on derivative rows) closes odd sizes.
    """
    xs = np.asarray(xs)
    if np.iscomplexobj(xs) and np.any(np.abs(xs.imag) > 0):
        raise ValidationError("Omega needs real eigenvalue arguments")
    xs = xs.real.astype(float)
    ms = np.asarray(masses, dtype=complex)
    vals = np.concatenate([np.repeat(xs, 2).astype(complex), ms])
    derivs = np.concatenate([np.tile([True, False], len(xs)), np.zeros(len(ms), bool)])
    odd = len(vals) % 2 == 1
    _require(basis, R, odd)
    return AntisymMatrix(_omega_entries(basis, R, vals, derivs, odd), tol=1e-9)


def _real_measure(wbar: RealWeightSpec, x):
    return wbar.measure(np.asarray(x, dtype=float))


def real_correlation(basis: SkewBasis, wbar: RealWeightSpec, N: int, xs: Sequence[float],
                     masses: Sequence[complex] = ()) -> complex:
    """Real-eigenvalue correlator ``prod_h m(x_h) Pf Omega(x, m) / Pf Omega(m)``.

    ``m`` is ``wbar`` for the non-chiral ensemble and ``2 x wbar`` for the
    chiral one (see :class:`RealWeightSpec`); ``basis`` must be the projected
    basis (``tau = 1`` or ``mu = 0``).
    """
    if basis.chiral != wbar.chiral:
        raise ValidationError("basis and projected weight disagree on chirality")
    masses = tuple(complex(m) for m in masses)
    check_masses(masses, basis.chiral)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if len(xs) < 1 or len(xs) > N:
        raise ValidationError(f"need 1 <= k <= N = {N} points")
    R = N + len(masses) // 2
    den = 1.0 + 0j
    if masses:
        D = omega_matrix(basis, R, [], masses)
        den, _ = _pf_checked(D)
        if abs(den) < SINGULAR_TOL * _term_bound(basis, R, np.array(masses)):
            raise NearSingularError("mass Pfaffian of the projected kernel is numerically zero")
    num, _ = _pf_checked(omega_matrix(basis, R, xs, masses))
    return complex(np.prod(_real_measure(wbar, xs)) * num / den)


def isd_kernels(basis: SkewBasis, wbar: RealWeightSpec, R: int, x, t):
    """Quaternion kernel elements ``(I, S, D)`` of the real-line ensemble.

    ``I = s(x)s(t) kappa(x, t)``, ``S = s(x)s(t) d_1 kappa(t, x)``,
    ``D = -s(x)s(t) d_1 d_2 kappa(x, t)`` with ``s = sqrt(m)`` of the
    correlator measure (a complex root for the chiral ensemble at ``x < 0``).
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(np.asarray(wbar(x)) < 0) or np.any(np.asarray(wbar(t)) < 0):
        raise ValidationError("projected weight must be non-negative")
    sx = np.sqrt(_real_measure(wbar, x).astype(complex))
    st = np.sqrt(_real_measure(wbar, t).astype(complex))
    K, _, _, K12 = kernel_derivatives(basis, R, x, t)
    _, K1_tx, _, _ = kernel_derivatives(basis, R, t, x)
    g = sx * st
    return g * K, g * K1_tx, -g * K12


def quaternion_form_correlation(basis: SkewBasis, wbar: RealWeightSpec, N: int,
                                xs: Sequence[float], masses: Sequence[complex] = ()) -> complex:
    """Real correlator from the rearranged quaternion form built out of I, S, D.

    The matrix is ordered ``(masses, [q border], plain x rows, derivative x rows)``;
    the x-x blocks are ``[[-I, S], [-S^T, D]]`` and the mass blocks carry the
    weight-free kernel.  Reordering relative to :func:`omega_matrix` costs the
    sign ``(-1)^{k(k-1)/2}``.
    """
    masses = tuple(complex(m) for m in masses)
    check_masses(masses, basis.chiral)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    k, M = len(xs), len(masses)
    R = N + M // 2
    odd = M % 2 == 1
    _require(basis, R, odd)
    ms = np.array(masses, dtype=complex)
    nb = M + (1 if odd else 0)

    def mass_block():
        B = np.zeros((nb, nb), dtype=complex)
        if M:
            B[:M, :M] = -np.asarray(kernel_derivatives(basis, R, ms[:, None], ms[None, :])[0])
        if odd:
            q = basis.q(2 * R, ms)
            B[:M, M] = q
            B[M, :M] = -q
        return B

    n = nb + 2 * k
    A = np.zeros((n, n), dtype=complex)
    A[:nb, :nb] = mass_block()
    I, S, D = isd_kernels(basis, wbar, R, xs[:, None], xs[None, :])
    p0, d0 = nb, nb + k
    A[p0:d0, p0:d0] = -I
    A[p0:d0, d0:] = S
    A[d0:, p0:d0] = -S.T
    A[d0:, d0:] = D
    if M or odd:
        s = np.sqrt(_real_measure(wbar, xs).astype(complex))
        K, K1, _, _ = kernel_derivatives(basis, R, xs[:, None].astype(complex), ms[None, :])
        K, K1 = np.atleast_2d(K), np.atleast_2d(K1)
        A[p0:d0, :M] = -s[:, None] * K
        A[d0:, :M] = -s[:, None] * K1
        if odd:
            q = basis.polys[2 * R]
            xv = xs.astype(complex)
            if basis.chiral:
                qv, dq = q(xv * xv), 2.0 * xv * q.deriv()(xv * xv)
            else:
                qv, dq = q(xv), q.deriv()(xv)
            A[p0:d0, M] = s * qv
            A[d0:, M] = s * dq
        A[:nb, p0:] = -A[p0:, :nb].T
    num, _ = _pf_checked(AntisymMatrix(A, tol=1e-9))
    den = 1.0 + 0j
    if nb:
        den, _ = _pf_checked(AntisymMatrix(mass_block(), tol=1e-9))
        if den == 0:
            raise NearSingularError("mass Pfaffian vanishes")
    return complex((-1) ** (k * (k - 1) // 2) * num / den)


def quaternion_determinant(blocks: np.ndarray) -> complex:
    """Dyson quaternion determinant of a self-dual quaternion matrix.

    ``blocks[i, j]`` is the 2x2 complex representation of element ``(i, j)``.
    Computed by the cycle expansion ``sum_P (-1)^{n - L} prod_cycles
    (1/2) tr(q_{a b} q_{b c} ... q_{z a})``, so it is only meant for small
    sizes (it serves as an independent check of Pfaffian forms).
    """
    blocks = np.asarray(blocks, dtype=complex)
    n = blocks.shape[0]
    if n > 7:
        raise ValidationError("cycle expansion is limited to 7x7 quaternion matrices")
    total = 0j
    for perm in permutations(range(n)):
        seen = [False] * n
        term = 1.0 + 0j
        cycles = 0
        for s in range(n):
            if seen[s]:
                continue
            cycles += 1
            prod = np.eye(2, dtype=complex)
            a = s
            while not seen[a]:
                seen[a] = True
                prod = prod @ blocks[a, perm[a]]
                a = perm[a]
            term *= 0.5 * np.trace(prod)
        total += (-1) ** (n - cycles) * term
    return complex(total)


def kernel_qdet_correlation(basis: SkewBasis, w: WeightSpec, N: int,
                            points: Sequence[complex]) -> complex:
    """Mass-free k-point correlator as a quaternion determinant of 2x2 kernel blocks.

    Block ``(i, j)`` is ``sqrt(g_i g_j) [[-kappa(z_i*, z_j), -kappa(z_i*, z_j*)],
    [kappa(z_i, z_j), kappa(z_i, z_j*)]]`` with ``g = w (z* - z)`` (chiral:
    ``w (z*^2 - z^2)``); evaluated with the cycle expansion.
    """
    z = np.asarray(points, dtype=complex)
    g = np.sqrt(_prefactor(w, z).astype(complex))
    R = N
    k = len(z)
    blocks = np.zeros((k, k, 2, 2), dtype=complex)
    for i in range(k):
        for j in range(k):
            zi, zj = z[i], z[j]
            b = np.array([
                [-prekernel(basis, R, np.conj(zi), zj), -prekernel(basis, R, np.conj(zi), np.conj(zj))],
                [prekernel(basis, R, zi, zj), prekernel(basis, R, zi, np.conj(zj))],
            ])
            blocks[i, j] = g[i] * g[j] * b
    return quaternion_determinant(blocks)


def real_kernel_qdet_correlation(basis: SkewBasis, wbar: RealWeightSpec, N: int,
                                 xs: Sequence[float]) -> complex:
    """Mass-free real correlator as the quaternion determinant of I, S, D blocks.

    Block ``(i, j)`` is ``[[S(x_j, x_i), D(x_i, x_j)], [I(x_i, x_j), S(x_i, x_j)]]``.
    """
    x = np.atleast_1d(np.asarray(xs, dtype=float))
    I, S, D = isd_kernels(basis, wbar, N, x[:, None], x[None, :])
    k = len(x)
    blocks = np.empty((k, k, 2, 2), dtype=complex)
    blocks[:, :, 0, 0] = S.T
    blocks[:, :, 0, 1] = D
    blocks[:, :, 1, 0] = I
    blocks[:, :, 1, 1] = S
    return quaternion_determinant(blocks)


# ---------------------------------------------------------------------------
# Hermitean-limit sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepReport:
    family: str
    observable: str
    parameters: list
    deviations: list
    monotone: bool
    final_deviation: float
    details: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.monotone

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "observable": self.observable,
            "parameters": list(self.parameters),
            "deviations": list(self.deviations),
            "monotone": self.monotone,
            "final_deviation": self.final_deviation,
            "details": self.details,
        }


DEFAULT_SEQUENCES = {"gse": (0.9, 0.99, 0.999), "chgse": (0.3, 0.1, 0.03)}


def _y_integrated_density(w: WeightSpec, basis: SkewBasis, N: int, xs: np.ndarray,
                          n_y: int = 200) -> np.ndarray:
    sy = w.decay[1]
    c = max(10.0, math.sqrt(4 * N + 4 * w.nu + 6) + 8.0)
    y, wy = gauss_legendre_panels(c * sy, n_y, panels=2)
    keep = y > 0
    y, wy = y[keep], wy[keep]
    Z = xs[:, None] + 1j * y[None, :]
    vals = correlation_batch(basis, w, N, Z.ravel()).reshape(Z.shape)
    # the density is even in y
    return 2.0 * np.sum(vals.real * wy[None, :], axis=1)


def hermitean_limit_sweep(family: str, N: int = 1, sequence: Optional[Sequence[float]] = None,
                          observable: str = "density", nu: int = 0, mass: complex = 0.3,
                          x_max: float = 4.0, n_x: int = 161) -> SweepReport:
    """Deviation of a complex-plane observable from its real-line limit along a parameter sequence.

    Observables: ``density`` (y-integrated one-point function against the
    projected one-point function, sup norm relative to the limit's maximum),
    ``norms`` (max relative deviation of ``r_k``, ``k < N``) and ``charpoly``
    (relative deviation of ``<det(m - H)>`` for one mass).
    """
    if family not in DEFAULT_SEQUENCES:
        raise ValidationError(f"no Hermitean limit for family {family!r}")
    seq = tuple(sequence) if sequence is not None else DEFAULT_SEQUENCES[family]

    def make(p):
        if family == "gse":
            return gse_weight(N, p), gse_skew_basis(N, p, N + 1)
        return chgse_weight(N, p, nu), chgse_skew_basis(N, p, nu, N + 1)

    if family == "gse":
        pbasis = gse_skew_basis(N, 1.0, N + 1)
        wbar = projected_weight(gse_weight(N, 0.0))
    else:
        pbasis = chgse_skew_basis(N, 0.0, nu, N + 1)
        wbar = projected_weight(chgse_weight(N, 0.5, nu))

    details: dict = {}
    devs = []
    if observable == "density":
        xs = np.linspace(-x_max, x_max, n_x)
        limit = np.array([real_correlation(pbasis, wbar, N, [x]).real for x in xs])
        ref = float(np.max(np.abs(limit)))
        for p in seq:
            w, b = make(p)
            dens = _y_integrated_density(w, b, N, xs)
            devs.append(float(np.max(np.abs(dens - limit)) / ref))
        details["x_range"] = [-x_max, x_max]
    elif observable == "norms":
        for p in seq:
            _, b = make(p)
            devs.append(float(np.max(np.abs(b.norms[:N] / pbasis.norms[:N] - 1.0))))
    elif observable == "charpoly":
        target = char_poly_expectation(pbasis, N, [mass])
        for p in seq:
            _, b = make(p)
            devs.append(abs(char_poly_expectation(b, N, [mass]) - target) / abs(target))
        details["mass"] = [complex(mass).real, complex(mass).imag]
    else:
        raise ValidationError(f"unknown observable {observable!r}")
    monotone = all(b < a for a, b in zip(devs, devs[1:]))
    return SweepReport(family, observable, list(seq), devs, monotone, devs[-1], details)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def results_to_csv(points: Sequence[complex], values: Sequence[complex]) -> str:
    """CSV rows ``x,y,re,im`` in full double precision."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["x", "y", "re", "im"])
    for z, v in zip(points, values):
        z, v = complex(z), complex(v)
        wr.writerow(["%.17g" % z.real, "%.17g" % z.imag, "%.17g" % v.real, "%.17g" % v.imag])
    return buf.getvalue()


def result_json(result: CorrelatorResult) -> str:
    return json.dumps(result.to_json(), indent=2)

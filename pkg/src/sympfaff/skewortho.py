"""Skew products, skew-orthogonal polynomial bases and the pre-kernel.

Polynomials of chiral bases are stored in the squared variable ``s = z**2``;
all evaluation helpers square their arguments for chiral bases so callers
always pass eigenvalues and masses themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import (
    AntisymMatrix,
    NumericError,
    Polynomial,
    QuadratureGrid,
    ValidationError,
    pfaffian,
)
from .weights import RealWeightSpec, WeightSpec, build_grid

__all__ = [
    "MAX_R",
    "IllConditionedError",
    "DegenerateWeightError",
    "SkewBasis",
    "SkewProductMatrix",
    "skew_product",
    "skew_gram",
    "monomial_W",
    "projected_monomial_W",
    "gse_skew_basis",
    "chgse_skew_basis",
    "general_skew_basis",
    "with_odd_shift",
    "canonical_gauge",
    "prekernel",
    "kernel_via_W",
    "kernel_derivatives",
    "skew_residual",
    "projected_skew_gram",
    "projected_skew_residual",
]

MAX_R = 12
COND_LIMIT = 1e12


class IllConditionedError(NumericError):
    pass


class DegenerateWeightError(NumericError):
    pass


@dataclass(frozen=True)
class SkewBasis:
    """Monic skew-orthogonal polynomials ``q_0 .. q_{2R-1}`` (optionally ``q_{2R}``) and norms."""

    polys: tuple[Polynomial, ...]
    norms: np.ndarray
    chiral: bool = False
    nu: int = 0
    source: str = "closed_form"

    def __post_init__(self):
        norms = np.array(self.norms, dtype=complex)
        norms.setflags(write=False)
        object.__setattr__(self, "norms", norms)
        object.__setattr__(self, "polys", tuple(self.polys))
        for k, p in enumerate(self.polys):
            if p.degree != k or not p.is_monic(1e-9):
                raise ValidationError(f"q_{k} must be monic of degree {k}")

    @property
    def R(self) -> int:
        """Number of complete (even, odd) pairs."""
        return min(len(self.polys) // 2, len(self.norms))

    def q(self, j: int, z):
        """``q_j`` evaluated at eigenvalue/mass argument(s) ``z``."""
        z = np.asarray(z)
        return self.polys[j](z * z if self.chiral else z)

    def to_json(self) -> dict:
        def pairs(arr):
            return [[float(c.real), float(c.imag)] for c in arr]
        return {
            "chiral": self.chiral,
            "nu": self.nu,
            "source": self.source,
            "norms": pairs(self.norms),
            "polys": [pairs(p.coeffs) for p in self.polys],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, data) -> "SkewBasis":
        if isinstance(data, str):
            data = json.loads(data)
        polys = [Polynomial([complex(a, b) for a, b in p]) for p in data["polys"]]
        norms = [complex(a, b) for a, b in data["norms"]]
        return cls(tuple(polys), norms, bool(data["chiral"]), int(data.get("nu", 0)),
                   data.get("source", "closed_form"))


@dataclass(frozen=True)
class SkewProductMatrix:
    """Skew products of monomials ``W[m, n] = <z^m, z^n>`` (``z^{2m}`` for chiral).

    Computed in scaled monomials ``(z / scale)^m``; ``W`` and ``W_inverse``
    are reported in the original monomials.
    """

    W: np.ndarray
    W_inverse: np.ndarray
    condition_estimate: float
    W_scaled: np.ndarray
    scale: float
    chiral: bool = False
    nu: int = 0

    @property
    def size(self) -> int:
        return self.W.shape[0]


# ---------------------------------------------------------------------------
# Skew products
# ---------------------------------------------------------------------------


def _check_real(p: Polynomial):
    if not p.is_real():
        raise ValidationError("skew products need real-coefficient polynomials")


def _measure(w: WeightSpec, grid: QuadratureGrid):
    """Nodes ``z`` and the complex measure ``w (z* - z) dA`` (``z*^2 - z^2`` chiral)."""
    z, wq = grid.complex_nodes()
    zc = np.conj(z)
    factor = (zc * zc - z * z) if w.chiral else (zc - z)
    wv = np.asarray(w.evaluator(z.real, z.imag), dtype=float)
    if not np.all(np.isfinite(wv)):
        raise NumericError("weight is not finite on the quadrature grid")
    return z, wq * wv * factor


def skew_gram(polys: Sequence[Polynomial], w: WeightSpec, grid: QuadratureGrid) -> np.ndarray:
    """Matrix of skew products ``<p_i, p_j>`` for a list of polynomials."""
    for p in polys:
        _check_real(p)
    z, m = _measure(w, grid)
    arg = z * z if w.chiral else z
    A = np.array([p(arg) for p in polys])
    B = np.conj(A)  # real coefficients: p(z*) = p(z)*
    G = (A * m) @ B.T
    G = G - G.T
    return G


def skew_product(f: Polynomial, g: Polynomial, w: WeightSpec,
                 grid: Optional[QuadratureGrid] = None) -> complex:
    """``int d^2z w (z* - z) [f(z) g(z*) - f(z*) g(z)]``; chiral bases use ``z^2`` throughout."""
    if grid is None:
        grid = build_grid(w, degree=_grid_degree(max(f.degree, g.degree) + 1, w.chiral))
    return complex(skew_gram([f, g], w, grid)[0, 1])


def _grid_degree(n_poly: int, chiral: bool) -> float:
    # total |z| power of the skew-product integrand for polynomials up to degree n_poly-1
    d = 2 * (n_poly - 1) + 1
    return 2 * d + 2 if chiral else d + 1


def _monomial_scale(w: WeightSpec) -> float:
    if w.decay is None:
        return 1.0
    s = math.sqrt(2.0) * max(w.decay)
    return s * s if w.chiral else s


def monomial_W(w: WeightSpec, size: int, grid: Optional[QuadratureGrid] = None) -> SkewProductMatrix:
    """Skew-product matrix of monomials with inverse and a condition estimate."""
    if size % 2 or size < 2:
        raise ValidationError(f"W size must be a positive even number, got {size}")
    if size > 2 * MAX_R:
        raise ValidationError(f"W size capped at {2 * MAX_R}")
    if grid is None:
        grid = build_grid(w, degree=_grid_degree(size, w.chiral))
    s = _monomial_scale(w)
    z, m = _measure(w, grid)
    u = (z * z if w.chiral else z) / s
    A = np.vander(u, size, increasing=True).T
    Ws = (A * m) @ np.conj(A).T
    Ws = Ws - Ws.T
    return _finish_W(Ws, s, w.chiral, w.nu)


def projected_monomial_W(wbar: RealWeightSpec, size: int, n_nodes: int = 400) -> SkewProductMatrix:
    """Limit matrix ``Wbar[s, t] = int dx m(x) ((x^s)' x^t - x^s (x^t)')`` on the real line.

    ``m`` is ``wbar`` (non-chiral) or ``2 x wbar`` with monomials in ``x^2``
    (chiral), the products whose skew-orthogonal polynomials are the
    Hermitean limits of the complex ones.
    """
    from .numerics import gauss_legendre_panels

    if size % 2 or size < 2:
        raise ValidationError(f"W size must be a positive even number, got {size}")
    deg = 4 * size + 4 * wbar.nu + 2 if wbar.chiral else 2 * size
    L = (math.sqrt(deg) + 8.0) * wbar.sigma
    x, wx = gauss_legendre_panels(L, n_nodes, panels=2)
    s = 2.0 * wbar.sigma ** 2 if wbar.chiral else math.sqrt(2.0) * wbar.sigma
    meas = wx * wbar.measure(x)
    Ws = np.zeros((size, size), dtype=complex)
    if wbar.chiral:
        u = x * x / s
        powers = np.array([u ** j for j in range(size)])
        # d/dx (x^2 / s)^j = 2 j x (x^2/s)^(j-1) / s
        dpowers = np.array([2.0 * j * x * u ** (j - 1) / s if j else 0 * x for j in range(size)])
    else:
        u = x / s
        powers = np.array([u ** j for j in range(size)])
        dpowers = np.array([j * u ** (j - 1) / s if j else 0 * x for j in range(size)])
    Ws = (dpowers * meas) @ powers.T - (powers * meas) @ dpowers.T
    # undo the 1/s of the derivative so Ws is the product of (x/s)^j monomials
    # with d/d(x) derivatives, consistent with the complex-plane scaling
    return _finish_W(Ws.astype(complex), s, wbar.chiral, wbar.nu)


def _finish_W(Ws: np.ndarray, s: float, chiral: bool, nu: int) -> SkewProductMatrix:
    size = Ws.shape[0]
    d = np.max(np.abs(Ws), axis=1)
    if np.any(d == 0):
        raise DegenerateWeightError("skew-product matrix has an empty row")
    e = 1.0 / np.sqrt(d)
    cond = float(np.linalg.cond(e[:, None] * Ws * e[None, :]))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(
            f"monomial skew-product matrix is ill-conditioned (cond ~ {cond:.2e}); "
            "use fewer polynomials or rescale the variables"
        )
    Ws_inv = np.linalg.inv(Ws)
    pw = s ** np.arange(size)
    W = Ws * np.outer(pw, pw)
    W_inv = Ws_inv / np.outer(pw, pw)
    return SkewProductMatrix(W, W_inv, cond, Ws, s, chiral, nu)


# ---------------------------------------------------------------------------
# Closed-form bases
# ---------------------------------------------------------------------------


def _check_R(R: int):
    if R < 1 or R > MAX_R:
        raise ValidationError(f"R must lie in 1..{MAX_R}, got {R}")


def gse_skew_basis(N: int, tau: float, R: int, extra_even: bool = True) -> SkewBasis:
    """Hermite closed forms of the complex Gaussian SE (``tau = 1``: real-line GSE).

    Returns ``q_0 .. q_{2R-1}`` plus ``q_{2R}`` when ``extra_even`` (needed by
    bordered Pfaffians with an odd number of arguments).
    """
    _check_R(R)
    if not (0.0 <= tau <= 1.0):
        raise ValidationError(f"tau must lie in [0, 1], got {tau!r}")
    polys = []
    n_poly = 2 * R + (1 if extra_even else 0)
    f = math.factorial
    for n in range(n_poly):
        c = np.zeros(n + 1)
        k = n // 2
        if n % 2:
            # (tau/2N)^{n/2} H_n(z sqrt(N / 2 tau)) expanded; only z^{n-2m} terms
            for m in range(k + 1):
                i = n - 2 * m
                c[i] = f(n) * (-1) ** m / (f(m) * f(i)) * (tau / (2.0 * N)) ** m
        else:
            # (2/N)^k k! sum_j (tau/2)^j / (2j)!! H_{2j}(z sqrt(N / 2 tau))
            pre = (2.0 / N) ** k * f(k)
            for j in range(k + 1):
                for m in range(j + 1):
                    i = 2 * j - 2 * m
                    c[i] += (pre * f(2 * j) * (-1) ** m * 2.0 ** i * (N / 2.0) ** (i / 2)
                             * tau ** m / (4.0 ** j * f(j) * f(m) * f(i)))
        polys.append(Polynomial(c))
    norms = [SQRT_PI * math.sqrt(1.0 + tau) * f(2 * k + 1) / N ** (2 * k + 0.5) for k in range(R)]
    return SkewBasis(tuple(polys), norms, chiral=False, nu=0, source="closed_form")


SQRT_PI = math.sqrt(math.pi)


def _laguerre_coeffs(n: int, alpha: int) -> list[float]:
    """Coefficients of ``L_n^alpha(x)`` in ascending powers of ``x``."""
    return [(-1) ** i * math.comb(n + alpha, n - i) / math.factorial(i) for i in range(n + 1)]


def chgse_skew_basis(N: int, mu: float, nu: int, R: int, extra_even: bool = True,
                     reduced: bool = False) -> SkewBasis:
    """Laguerre closed forms of the complex chiral GSE, as polynomials in ``s = z^2``.

    ``mu = 0`` gives the real-line chiral GSE basis.  Powers of ``1 - mu^2``
    are combined before evaluation so ``mu = 1`` is handled exactly.
    ``reduced`` drops the ``(1 - mu^2)^{3/2}`` factor from the norms, matching
    ``chgse_weight(..., reduced=True)``.
    """
    _check_R(R)
    if not (0.0 <= mu <= 1.0):
        raise ValidationError(f"mu must lie in [0, 1], got {mu!r}")
    if nu < 0:
        raise ValidationError("nu must be non-negative")
    f = math.factorial
    cm = 1.0 - mu * mu
    cp = 1.0 + mu * mu
    polys = []
    n_poly = 2 * R + (1 if extra_even else 0)
    for n in range(n_poly):
        c = np.zeros(n + 1)
        k = n // 2
        if n % 2:
            lag = _laguerre_coeffs(n, 2 * nu)
            for i in range(n + 1):
                c[i] = -f(n) * lag[i] * cm ** (n - i) / N ** (n - i)
        else:
            pre = f(k) * math.gamma(k + nu + 1) * 4.0 ** k * cp ** (2 * k) / N ** (2 * k)
            for j in range(k + 1):
                lag = _laguerre_coeffs(2 * j, 2 * nu)
                t = f(2 * j) / (4.0 ** j * f(j) * math.gamma(j + nu + 1) * cp ** (2 * j))
                for i in range(2 * j + 1):
                    c[i] += pre * t * lag[i] * cm ** (2 * j - i) * N ** i
        polys.append(Polynomial(c))
    cm_pow = 1.0 if reduced else cm ** 1.5
    norms = [4.0 * f(2 * k + 1) * f(2 * k + 2 * nu + 1) * cm_pow * cp ** (4 * k + 2 * nu)
             / N ** (4 * k + 2 * nu + 2) for k in range(R)]
    return SkewBasis(tuple(polys), norms, chiral=True, nu=nu, source="closed_form")


# ---------------------------------------------------------------------------
# General-weight construction
# ---------------------------------------------------------------------------


def general_skew_basis(Wm: SkewProductMatrix) -> SkewBasis:
    """Skew Gram-Schmidt on monomials.

    ``q_{2k}`` and ``q_{2k+1}`` are the monomials minus their projections on
    the lower pairs; in particular ``q_{2k+1}`` has no ``q_{2k}`` component,
    so its ``z^{2k}`` coefficient vanishes.  Works in the scaled monomials of
    ``Wm`` and rescales coefficients on output.
    """
    G = Wm.W_scaled
    size = G.shape[0]
    R = size // 2
    scale = float(np.max(np.abs(G)))
    Q: list[np.ndarray] = []
    norms_s = []

    def sp(a, b):
        return a @ G @ b

    for k in range(R):
        new = []
        for n in (2 * k, 2 * k + 1):
            v = np.zeros(size, dtype=complex)
            v[n] = 1.0
            for _ in range(2):  # second pass cleans round-off
                corr = np.zeros(size, dtype=complex)
                for j in range(k):
                    qe, qo, rj = Q[2 * j], Q[2 * j + 1], norms_s[j]
                    corr += (sp(v, qo) / rj) * qe - (sp(v, qe) / rj) * qo
                v = v + corr
            new.append(v)
        r = sp(new[1], new[0])
        if abs(r) < 1e-10 * scale:
            raise DegenerateWeightError(f"vanishing skew norm r_{k}; weight is degenerate")
        Q.extend(new)
        norms_s.append(r)

    s = Wm.scale
    polys = []
    for n, v in enumerate(Q):
        c = v[: n + 1] * s ** (n - np.arange(n + 1))
        c[n] = 1.0
        polys.append(Polynomial(c.real if np.all(np.abs(c.imag) < 1e-12 * np.abs(c).max()) else c))
    norms = [norms_s[k] * s ** (4 * k + 1) for k in range(R)]
    return SkewBasis(tuple(polys), norms, chiral=Wm.chiral, nu=Wm.nu, source="w_matrix")


def with_odd_shift(basis: SkewBasis, c) -> SkewBasis:
    """Replace ``q_{2k+1}`` by ``q_{2k+1} + c_k q_{2k}`` (scalar ``c`` applies to all k)."""
    R = basis.R
    cs = np.broadcast_to(np.asarray(c, dtype=complex), (R,))
    polys = list(basis.polys)
    for k in range(R):
        polys[2 * k + 1] = polys[2 * k + 1] + polys[2 * k] * cs[k]
    return SkewBasis(tuple(polys), basis.norms, basis.chiral, basis.nu, basis.source)


def canonical_gauge(basis: SkewBasis) -> SkewBasis:
    """Shift odd polynomials so that ``q_{2k+1}`` has zero ``z^{2k}`` coefficient."""
    cs = [-basis.polys[2 * k + 1].coeffs[2 * k] for k in range(basis.R)]
    return with_odd_shift(basis, cs)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _check_kernel_R(basis: SkewBasis, R: int):
    if R < 0 or R > basis.R:
        raise ValidationError(f"kernel index R={R} exceeds basis size R={basis.R}")


def prekernel(basis: SkewBasis, R: int, z, v):
    """``kappa_R(z, v) = sum_k [q_{2k+1}(z) q_{2k}(v) - q_{2k+1}(v) q_{2k}(z)] / r_k``.

    Broadcasts over array arguments.
    """
    _check_kernel_R(basis, R)
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    out = np.zeros(np.broadcast(z, v).shape, dtype=complex)
    for k in range(R):
        qe_z, qo_z = basis.q(2 * k, z), basis.q(2 * k + 1, z)
        qe_v, qo_v = basis.q(2 * k, v), basis.q(2 * k + 1, v)
        out = out + (qo_z * qe_v - qo_v * qe_z) / basis.norms[k]
    return out[()] if out.ndim == 0 else out


def kernel_via_W(Wm: SkewProductMatrix, z, v):
    """Basis-free kernel ``sum_{m,n} z^m (W^{-1})_{n,m} v^n``.

    The transpose makes this equal to :func:`prekernel` for any skew basis
    spanning the same monomials.
    """
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if Wm.chiral:
        z, v = z * z, v * v
    s = Wm.scale
    n = Wm.size
    Wi = np.linalg.inv(Wm.W_scaled).T
    Zp = np.stack([(z / s) ** m for m in range(n)], axis=-1)
    Vp = np.stack([(v / s) ** m for m in range(n)], axis=-1)
    out = np.einsum("...m,mn,...n->...", Zp, Wi, Vp)
    return out[()] if np.ndim(out) == 0 else out


def kernel_derivatives(basis: SkewBasis, R: int, x, t):
    """``(kappa, d_x kappa, d_t kappa, d_x d_t kappa)`` at ``(x, t)`` from exact polynomial derivatives.

    For chiral bases derivatives are with respect to ``x`` and ``t``
    themselves (chain rule ``d/dx = 2 x d/ds``), not the squared variables.
    """
    _check_kernel_R(basis, R)
    x = np.asarray(x, dtype=complex)
    t = np.asarray(t, dtype=complex)
    shape = np.broadcast(x, t).shape
    K = np.zeros(shape, dtype=complex)
    Kx = np.zeros(shape, dtype=complex)
    Kt = np.zeros(shape, dtype=complex)
    Kxt = np.zeros(shape, dtype=complex)

    def vals(j, a):
        p = basis.polys[j]
        if basis.chiral:
            s = a * a
            return p(s), 2.0 * a * p.deriv()(s)
        return p(a), p.deriv()(a)

    for k in range(R):
        r = basis.norms[k]
        e_x, de_x = vals(2 * k, x)
        o_x, do_x = vals(2 * k + 1, x)
        e_t, de_t = vals(2 * k, t)
        o_t, do_t = vals(2 * k + 1, t)
        K = K + (o_x * e_t - o_t * e_x) / r
        Kx = Kx + (do_x * e_t - o_t * de_x) / r
        Kt = Kt + (o_x * de_t - do_t * e_x) / r
        Kxt = Kxt + (do_x * de_t - do_t * de_x) / r
    out = (K, Kx, Kt, Kxt)
    if not shape:
        return tuple(complex(a) for a in out)
    return out


def skew_residual(basis: SkewBasis, w: WeightSpec, grid: Optional[QuadratureGrid] = None) -> float:
    """Max normalised deviation of the skew-product matrix from the ideal pattern.

    Each entry ``<q_i, q_j>`` is compared with its expected value (``+-r_k`` or 0)
    and divided by ``|r_{floor(i/2)}|``.
    """
    n = 2 * basis.R
    polys = basis.polys[:n]
    if grid is None:
        grid = build_grid(w, degree=_grid_degree(n, w.chiral))
    G = skew_gram(polys, w, grid)
    expected = np.zeros((n, n), dtype=complex)
    for k in range(basis.R):
        expected[2 * k + 1, 2 * k] = basis.norms[k]
        expected[2 * k, 2 * k + 1] = -basis.norms[k]
    denom = np.abs(basis.norms)[np.arange(n) // 2][:, None]
    return float(np.max(np.abs(G - expected) / denom))


def projected_skew_gram(polys: Sequence[Polynomial], wbar: RealWeightSpec, chiral: bool,
                        n_nodes: int = 400) -> np.ndarray:
    """``<p_i, p_j> = int dx m(x) (p_i'(x) p_j(x) - p_i(x) p_j'(x))`` on the real line.

    For chiral polynomials (in ``s = x^2``) derivatives are taken in ``x``.
    """
    from .numerics import gauss_legendre_panels

    deg = max(p.degree for p in polys)
    deg = 4 * deg + 4 * wbar.nu + 2 if chiral else 2 * deg
    L = (math.sqrt(deg) + 9.0) * wbar.sigma
    x, wx = gauss_legendre_panels(L, n_nodes, panels=2)
    meas = wx * wbar.measure(x)
    if chiral:
        s = x * x
        V = np.array([p(s) for p in polys])
        dV = np.array([2.0 * x * p.deriv()(s) for p in polys])
    else:
        V = np.array([p(x) for p in polys])
        dV = np.array([p.deriv()(x) for p in polys])
    return (dV * meas) @ V.T - (V * meas) @ dV.T


def projected_skew_residual(basis: SkewBasis, wbar: RealWeightSpec) -> float:
    """Like :func:`skew_residual` for the real-line skew product of a projected basis."""
    n = 2 * basis.R
    G = projected_skew_gram(basis.polys[:n], wbar, basis.chiral)
    expected = np.zeros((n, n), dtype=complex)
    for k in range(basis.R):
        expected[2 * k + 1, 2 * k] = basis.norms[k]
        expected[2 * k, 2 * k + 1] = -basis.norms[k]
    denom = np.abs(basis.norms)[np.arange(n) // 2][:, None]
    return float(np.max(np.abs(G - expected) / denom))


def pf_of_W(Wm: SkewProductMatrix) -> complex:
    return pfaffian(AntisymMatrix(Wm.W, tol=1e-9))

"""Polynomial algebra, tensor Gauss-Legendre quadrature on the plane and Pfaffians.

Everything here is double precision. Polynomials store ascending
coefficients; quadrature grids are immutable tensor products of 1D
Gauss-Legendre panels over a truncated box centred at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "ValidationError",
    "NumericError",
    "ConfigurationError",
    "Polynomial",
    "poly_eval",
    "poly_derivative",
    "AntisymMatrix",
    "pfaffian",
    "pfaffian_with_diagnostics",
    "pfaffian_batch",
    "QuadratureGrid",
    "gauss_legendre_panels",
    "quad2d",
    "quad1d",
]

ANTISYM_TOL = 1e-12


class ValidationError(ValueError):
    """Input violates a documented precondition (bad domain, wrong shape, ...)."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""


class ConfigurationError(ValueError):
    """An object is missing metadata required by the requested operation."""


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """Polynomial with ascending complex coefficients, ``coeffs[i]`` multiplies ``z**i``.

    Trailing zeros above the declared degree are stripped at construction;
    the zero polynomial keeps a single coefficient.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex)).copy()
        if c.ndim != 1:
            raise ValidationError("polynomial coefficients must be one-dimensional")
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> complex:
        return complex(self.coeffs[-1])

    def is_monic(self, tol: float = 1e-12) -> bool:
        return abs(self.leading - 1.0) <= tol

    def is_real(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.coeffs.imag) < tol))

    def __call__(self, z):
        return poly_eval(self, z)

    def deriv(self) -> "Polynomial":
        return poly_derivative(self)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        out = np.zeros(n, dtype=complex)
        out[: len(self.coeffs)] += self.coeffs
        out[: len(other.coeffs)] += other.coeffs
        return Polynomial(out)

    def __mul__(self, scalar) -> "Polynomial":
        if isinstance(scalar, Polynomial):
            return Polynomial(np.convolve(self.coeffs, scalar.coeffs))
        return Polynomial(self.coeffs * scalar)

    __rmul__ = __mul__

    def substitute_square(self) -> "Polynomial":
        """Return ``p(z**2)`` as a polynomial in ``z``."""
        out = np.zeros(2 * len(self.coeffs) - 1, dtype=complex)
        out[::2] = self.coeffs
        return Polynomial(out)

    @classmethod
    def monomial(cls, n: int) -> "Polynomial":
        c = np.zeros(n + 1, dtype=complex)
        c[n] = 1.0
        return cls(c)


def poly_eval(p: Polynomial, z):
    """Horner evaluation; ``z`` may be a scalar or an array."""
    c = p.coeffs
    z = np.asarray(z)
    acc = np.full(z.shape, c[-1], dtype=complex)
    for a in c[-2::-1]:
        acc = acc * z + a
    return acc[()] if acc.ndim == 0 else acc


def poly_derivative(p: Polynomial) -> Polynomial:
    c = p.coeffs
    if len(c) == 1:
        return Polynomial([0.0])
    return Polynomial(c[1:] * np.arange(1, len(c)))


# ---------------------------------------------------------------------------
# Pfaffian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AntisymMatrix:
    """Dense complex antisymmetric matrix; antisymmetry is checked on construction."""

    entries: np.ndarray
    tol: float = field(default=ANTISYM_TOL, compare=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"antisymmetric matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NumericError("antisymmetric matrix contains NaN or Inf entries")
        if a.size:
            scale = max(1.0, float(np.max(np.abs(a))))
            resid = float(np.max(np.abs(a + a.T)))
            if resid > self.tol * scale:
                raise ValidationError(
                    f"matrix is not antisymmetric: max |A + A^T| = {resid:.3e}"
                )
        # project onto the antisymmetric part so round-off does not leak in
        a = 0.5 * (a - a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def pfaffian_with_diagnostics(A) -> tuple[complex, float]:
    """Pfaffian by skew-symmetric Parlett-Reid elimination with partial pivoting.

    Returns ``(pf, cancellation)`` where ``cancellation`` is the largest
    intermediate partial product of pivots divided by ``|pf|`` (1 when there
    is no cancellation, ``inf`` when the Pfaffian vanishes).
    """
    if not isinstance(A, AntisymMatrix):
        A = AntisymMatrix(A)
    a = np.array(A.entries, dtype=complex)
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0j, 1.0
    if n % 2:
        return 0j, float("inf")

    pf = 1.0 + 0j
    largest = 0.0
    for k in range(0, n - 1, 2):
        # bring the largest entry of column k below the diagonal to row k+1
        kp = k + 1 + int(np.argmax(np.abs(a[k + 1 :, k])))
        if kp != k + 1:
            a[[k + 1, kp], :] = a[[kp, k + 1], :]
            a[:, [k + 1, kp]] = a[:, [kp, k + 1]]
            pf = -pf
        piv = a[k, k + 1]
        if piv == 0:
            return 0j, float("inf")
        pf *= piv
        largest = max(largest, abs(pf))
        if k + 2 < n:
            tau = a[k, k + 2 :] / piv
            col = a[k + 2 :, k + 1]
            a[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return complex(pf), (largest / abs(pf) if pf != 0 else float("inf"))


def pfaffian(A) -> complex:
    """Pfaffian with the convention ``Pf([[0, a], [-a, 0]]) = a``; 0 for odd dimension."""
    return pfaffian_with_diagnostics(A)[0]


def pfaffian_batch(A) -> np.ndarray:
    """Pfaffians of a stack ``A[..., n, n]`` of antisymmetric matrices.

    Same pivoted elimination as :func:`pfaffian_with_diagnostics`, vectorised
    over the leading axes; antisymmetry is assumed, not checked.
    """
    a = np.array(A, dtype=complex)
    lead = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape((-1, n, n))
    B = a.shape[0]
    if n == 0:
        return np.ones(lead, dtype=complex)
    if n % 2:
        return np.zeros(lead, dtype=complex)
    pf = np.ones(B, dtype=complex)
    idx = np.arange(B)
    for k in range(0, n - 1, 2):
        kp = k + 1 + np.argmax(np.abs(a[:, k + 1 :, k]), axis=1)
        swap = kp != k + 1
        if swap.any():
            i, p = idx[swap], kp[swap]
            rows = a[i, p, :].copy()
            a[i, p, :] = a[i, k + 1, :]
            a[i, k + 1, :] = rows
            cols = a[i, :, p].copy()
            a[i, :, p] = a[i, :, k + 1]
            a[i, :, k + 1] = cols
            pf[swap] = -pf[swap]
        piv = a[:, k, k + 1]
        pf = pf * piv
        if k + 2 < n:
            safe = np.where(piv == 0, 1.0, piv)
            t = a[:, k, k + 2 :] / safe[:, None]
            col = a[:, k + 2 :, k + 1]
            a[:, k + 2 :, k + 2 :] += t[:, :, None] * col[:, None, :] - col[:, :, None] * t[:, None, :]
    return pf.reshape(lead)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def gauss_legendre_panels(half_width: float, n: int, panels: int = 2):
    """Composite Gauss-Legendre rule on ``[-half_width, half_width]``.

    ``n`` nodes in total, split evenly over ``panels`` equal panels (so with
    two panels the origin is a panel boundary, which keeps integrable kinks
    at ``x = 0`` off the nodes).
    """
    if n % panels:
        raise ValidationError(f"{n} nodes cannot be split over {panels} panels")
    t, w = leggauss(n // panels)
    edges = np.linspace(-half_width, half_width, panels + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        h = 0.5 * (hi - lo)
        xs.append(lo + h * (t + 1.0))
        ws.append(h * w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product rule on the box ``[-x_max, x_max] x [-y_max, y_max]``."""

    nodes_x: np.ndarray
    weights_x: np.ndarray
    nodes_y: np.ndarray
    weights_y: np.ndarray
    truncation_box: tuple[float, float]
    truncation_error: float = 0.0

    def __post_init__(self):
        for nodes, weights in ((self.nodes_x, self.weights_x), (self.nodes_y, self.weights_y)):
            if len(nodes) != len(weights):
                raise ValidationError("node and weight sequences differ in length")
            if np.any(np.asarray(weights) <= 0):
                raise ValidationError("quadrature weights must be positive")
            if np.any(np.diff(nodes) <= 0):
                raise ValidationError("quadrature nodes must be strictly increasing")
        for name in ("nodes_x", "weights_x", "nodes_y", "weights_y"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def box(cls, x_max: float, y_max: float, nx: int, ny: int | None = None,
            panels: int = 2, truncation_error: float = 0.0) -> "QuadratureGrid":
        ny = nx if ny is None else ny
        x, wx = gauss_legendre_panels(x_max, nx, panels)
        y, wy = gauss_legendre_panels(y_max, ny, panels)
        return cls(x, wx, y, wy, (float(x_max), float(y_max)), truncation_error)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.nodes_x), len(self.nodes_y)

    def mesh(self):
        """Return ``(X, Y, Wxy)`` arrays of shape ``(nx, ny)``."""
        X, Y = np.meshgrid(self.nodes_x, self.nodes_y, indexing="ij")
        return X, Y, np.outer(self.weights_x, self.weights_y)

    def complex_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened complex nodes ``x + iy`` and matching product weights."""
        X, Y, W = self.mesh()
        return (X + 1j * Y).ravel(), W.ravel()

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        nx, ny = self.shape
        return QuadratureGrid.box(*self.truncation_box, nx * factor, ny * factor,
                                  truncation_error=self.truncation_error)


def quad2d(f: Callable, grid: QuadratureGrid) -> complex:
    """Integrate ``f(x, y)`` (vectorised over 2D arrays) on the grid."""
    X, Y, W = grid.mesh()
    vals = np.asarray(f(X, Y))
    if vals.shape != X.shape:
        vals = np.broadcast_to(vals, X.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NumericError(
            f"integrand is not finite at node (x={X[i, j]:.6g}, y={Y[i, j]:.6g})"
        )
    # fixed-order pairwise reduction: deterministic for a given grid
    return complex(np.sum(vals * W))


def quad1d(f: Callable, nodes: Sequence[float], weights: Sequence[float]) -> complex:
    vals = np.asarray(f(np.asarray(nodes)))
    if not np.all(np.isfinite(vals)):
        raise NumericError("integrand is not finite on the 1D rule")
    return complex(np.sum(vals * np.asarray(weights)))

"""Weight functions on the complex plane and their Hermitean-limit projections.

Two concrete families are provided: the Gaussian weight of the complex
symplectic ensemble (``gse``, non-Hermiticity ``tau``) and the chiral
Gaussian weight (``chgse``, non-Hermiticity ``mu``, topological index
``nu``).  A weight carries its Gaussian decay scales so that quadrature
grids can be sized automatically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import k0e, k1e

from .numerics import ConfigurationError, QuadratureGrid, ValidationError

__all__ = [
    "WeightSpec",
    "RealWeightSpec",
    "gse_weight",
    "chgse_weight",
    "custom_weight",
    "projected_weight",
    "weight_from_params",
    "bessel_k_scaled",
    "build_grid",
]

SQRT_PI = math.sqrt(math.pi)


def bessel_k_scaled(n: int, x):
    """``exp(x) * K_n(x)`` for integer ``n >= 0`` and ``x > 0``.

    Upward recurrence ``K_{j+1} = K_{j-1} + (2j/x) K_j`` from ``K_0, K_1``;
    it is stable for K since K grows with the order.
    """
    if n < 0:
        raise ValidationError("Bessel order must be non-negative")
    x = np.asarray(x, dtype=float)
    k_prev = k0e(x)
    if n == 0:
        return k_prev
    k_cur = k1e(x)
    for j in range(1, n):
        k_prev, k_cur = k_cur, k_prev + (2.0 * j / x) * k_cur
    return k_cur


@dataclass(frozen=True)
class WeightSpec:
    """A real, non-negative weight ``w(z, z*)`` on the plane.

    ``evaluator(x, y)`` and ``log_evaluator(x, y)`` are vectorised over numpy
    arrays.  ``decay`` holds the Gaussian scales ``(sigma_x, sigma_y)`` of the
    weight; ``decay_degree`` is the power of ``|z|`` by which the weight's
    non-Gaussian part can grow, which widens quadrature boxes.
    """

    family: str
    N: int
    evaluator: Callable
    decay: Optional[tuple[float, float]]
    tau: Optional[float] = None
    mu: Optional[float] = None
    nu: int = 0
    chiral: bool = False
    log_evaluator: Optional[Callable] = field(default=None, compare=False)
    decay_degree: float = 0.0
    reduced: bool = False

    def __call__(self, x, y):
        return self.evaluator(x, y)

    def log(self, x, y):
        if self.log_evaluator is not None:
            return self.log_evaluator(x, y)
        with np.errstate(divide="ignore"):
            return np.log(self.evaluator(x, y))

    def at(self, z):
        """Evaluate at complex points."""
        z = np.asarray(z)
        return self.evaluator(z.real, z.imag)

    @property
    def params(self) -> dict:
        out = {"family": self.family, "N": self.N}
        if self.tau is not None:
            out["tau"] = self.tau
        if self.mu is not None:
            out["mu"] = self.mu
        if self.family != "gse":
            out["nu"] = self.nu
        return out


@dataclass(frozen=True)
class RealWeightSpec:
    """Projected weight ``wbar(x)`` on the real line.

    For chiral weights the correlator prefactor and the projected skew
    product use ``2 x wbar(x)`` (see :meth:`measure`), the image of
    ``|z^2 - z*^2|^2 w`` in the limit written with d/dx derivatives.
    """

    family: str
    N: int
    evaluator: Callable
    sigma: float
    chiral: bool = False
    nu: int = 0
    support: tuple[float, float] = (-math.inf, math.inf)

    def __call__(self, x):
        return self.evaluator(x)

    def measure(self, x):
        x = np.asarray(x)
        if self.chiral:
            return 2.0 * x * self.evaluator(x)
        return self.evaluator(x)


def gse_weight(N: int, tau: float) -> WeightSpec:
    """Gaussian weight of the complex symplectic ensemble.

    Uses the factorised form with prefactor ``N^{3/2} / (2 sqrt(pi) (1 - tau)^{3/2})``,
    for which ``int dy 4 y^2 w`` is a pure x-Gaussian of unit height.
    """
    if N < 1 or int(N) != N:
        raise ValidationError(f"N must be a positive integer, got {N!r}")
    if not (0.0 <= tau < 1.0):
        raise ValidationError(f"tau must lie in [0, 1), got {tau!r}")
    N = int(N)
    tau = float(tau)
    log_pref = 1.5 * math.log(N) - math.log(2.0 * SQRT_PI) - 1.5 * math.log1p(-tau)
    ay = N / (1.0 - tau)
    ax = N / (1.0 + tau)

    def log_w(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return log_pref - ay * y * y - ax * x * x

    def w(x, y):
        return np.exp(log_w(x, y))

    decay = (math.sqrt((1.0 + tau) / (2.0 * N)), math.sqrt((1.0 - tau) / (2.0 * N)))
    return WeightSpec("gse", N, w, decay, tau=tau, log_evaluator=log_w)


def chgse_weight(N: int, mu: float, nu: int, reduced: bool = False) -> WeightSpec:
    """Chiral Gaussian weight with the modified Bessel factor ``K_{2 nu}``.

    Evaluated as ``kve(a |z|^2) * exp(-N x^2 - N y^2 / mu^2)`` which is the
    printed product of the Bessel and Gaussian factors with the exponentials
    combined, so no overflow occurs for small ``mu``.  At ``mu = 1`` the
    normalisation contains ``(1 - mu^2)^{3/2}`` and the weight vanishes
    identically; ``reduced=True`` divides that factor out, which leaves a
    non-trivial rotation-invariant weight at ``mu = 1``.
    """
    if N < 1 or int(N) != N:
        raise ValidationError(f"N must be a positive integer, got {N!r}")
    if not (0.0 < mu <= 1.0):
        raise ValidationError(f"mu must lie in (0, 1], got {mu!r}")
    if nu < 0 or int(nu) != nu:
        raise ValidationError(f"nu must be a non-negative integer, got {nu!r}")
    N, nu, mu = int(N), int(nu), float(mu)
    one_m = 1.0 - mu * mu
    a = N * (1.0 + mu * mu) / (2.0 * mu * mu)
    log_pref = (0.5 * math.log(N) - math.log(mu * SQRT_PI) - math.log(2.0 * SQRT_PI)
                + 1.5 * math.log(N / (mu * mu)))
    if not reduced:
        log_pref = log_pref + 1.5 * math.log(one_m) if one_m > 0 else -math.inf

    def log_w(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r2 = x * x + y * y
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (log_pref + (2 * nu + 1) * np.log(r2)
                   + np.log(bessel_k_scaled(2 * nu, a * r2))
                   - N * x * x - N * y * y / (mu * mu))
        return np.where(r2 > 0, out, -np.inf)

    def w(x, y):
        return np.exp(log_w(x, y))

    decay = (math.sqrt(1.0 / (2.0 * N)), mu / math.sqrt(2.0 * N))
    return WeightSpec("chgse", N, w, decay, mu=mu, nu=nu, chiral=True,
                      log_evaluator=log_w, decay_degree=4 * nu + 1, reduced=reduced)


def custom_weight(evaluator: Callable, decay: Optional[tuple[float, float]], *,
                  N: int = 1, chiral: bool = False, nu: int = 0,
                  decay_degree: float = 0.0, check_box: float = 3.0) -> WeightSpec:
    """Wrap a user evaluator ``(x, y) -> w``.

    The evaluator is probed on a small sample for finiteness, non-negativity
    and evenness in ``y``.  ``decay`` may be ``None``, but then no quadrature
    grid can be built for the weight.
    """
    if decay is not None:
        sx, sy = decay
        rng = np.random.default_rng(0)
        xs = rng.uniform(-check_box * sx, check_box * sx, 64)
        ys = rng.uniform(-check_box * sy, check_box * sy, 64)
        v1 = np.asarray(evaluator(xs, ys), dtype=float)
        v2 = np.asarray(evaluator(xs, -ys), dtype=float)
        if not np.all(np.isfinite(v1)) or np.any(v1 < 0):
            raise ValidationError("custom weight must be finite and non-negative")
        if np.max(np.abs(v1 - v2)) > 1e-12 * max(1.0, float(np.max(np.abs(v1)))):
            raise ValidationError("custom weight must be even in y: w(z, z*) = w(z*, z)")
    return WeightSpec("custom", int(N), evaluator, decay, nu=int(nu), chiral=chiral,
                      decay_degree=decay_degree)


def projected_weight(w: WeightSpec) -> RealWeightSpec:
    """Hermitean-limit weight: ``exp(-N x^2 / 2)`` (gse), ``|x|^{4 nu + 1} exp(-N x^2)`` (chgse)."""
    N = w.N
    if w.family == "gse":
        return RealWeightSpec("gse", N, lambda x: np.exp(-0.5 * N * np.asarray(x) ** 2),
                              sigma=1.0 / math.sqrt(N))
    if w.family == "chgse":
        nu = w.nu

        def wbar(x):
            x = np.asarray(x, dtype=float)
            return np.abs(x) ** (4 * nu + 1) * np.exp(-N * x * x)

        return RealWeightSpec("chgse", N, wbar, sigma=1.0 / math.sqrt(2.0 * N),
                              chiral=True, nu=nu)
    raise ConfigurationError(
        f"no projection known for family {w.family!r}; supply a RealWeightSpec explicitly"
    )


def weight_from_params(params: dict) -> WeightSpec:
    """Build a weight from ``{family, N, tau, mu, nu}`` as found in CLI configs."""
    family = params.get("family", "gse")
    N = params.get("N", params.get("n", 1))
    if family == "gse":
        return gse_weight(N, params.get("tau", 0.5))
    if family == "chgse":
        return chgse_weight(N, params.get("mu", 0.5), params.get("nu", 0),
                            reduced=bool(params.get("reduced", False)))
    raise ValidationError(f"unknown weight family {family!r}")


def _box_factor(degree: float) -> float:
    # x^p exp(-x^2 / 2) peaks near sqrt(p); seven more standard deviations
    # push the neglected tail far below 1e-14 of the integral
    return max(8.0, math.sqrt(max(degree, 0.0)) + 7.0)


def build_grid(w: WeightSpec, points_per_axis: int = 160, degree: float = 0.0,
               panels: int = 2) -> QuadratureGrid:
    """Tensor Gauss-Legendre grid sized from the weight's Gaussian scales.

    ``degree`` is the largest power of ``|z|`` multiplying the weight in the
    integrands the grid will be used for.  The box half-width is ``c sigma``
    per axis with ``c >= 8``; the reported truncation error is the Gaussian
    tail bound at that width.
    """
    if w.decay is None:
        raise ConfigurationError("weight has no decay metadata; cannot size a quadrature box")
    sx, sy = w.decay
    c = _box_factor(degree + w.decay_degree)
    tail = math.erfc(c / math.sqrt(2.0))
    return QuadratureGrid.box(c * sx, c * sy, points_per_axis, points_per_axis,
                              panels=panels, truncation_error=tail)

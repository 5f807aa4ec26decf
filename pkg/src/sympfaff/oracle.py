"""Independent checks of the Pfaffian formulas.

* direct quadrature of the eigenvalue integrals for ``N <= 2`` (complex
  plane) and of the real-line integrals with a quartic Vandermonde,
* a random-walk Metropolis sampler of the mass-free (or real-mass) joint
  density for moderate ``N``, with histogram comparison against predicted
  one-point functions.

None of this code uses skew-orthogonal polynomials or Pfaffians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import kve

from .numerics import (
    NumericError,
    QuadratureGrid,
    ValidationError,
    gauss_legendre_panels,
)
from .weights import RealWeightSpec, WeightSpec, build_grid

__all__ = [
    "AccuracyError",
    "EigenConfig",
    "ChainStats",
    "joint_log_density",
    "brute_force_partition",
    "brute_force_correlator",
    "real_brute_force_partition",
    "real_brute_force_correlator",
    "mcmc_sample",
    "MCMCResult",
    "density_compare",
    "CompareReport",
    "histogram_grid",
]


class AccuracyError(NumericError):
    """Quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class EigenConfig:
    """Upper-half-plane representatives of ``N`` eigenvalue pairs (first quadrant if chiral)."""

    points: tuple[complex, ...]
    chiral: bool = False

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        for p in pts:
            if not p.imag > 0:
                raise ValidationError(f"eigenvalue representative {p} must have Im > 0")
            if self.chiral and not p.real > 0:
                raise ValidationError(f"chiral representative {p} must have Re > 0")

    @property
    def N(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ChainStats:
    steps: int
    burn_in: int
    acceptance_rate: float
    seed: int
    effective_sample_estimate: float
    proposal_scale: tuple[float, float] = (0.0, 0.0)
    retunes: int = 0


# ---------------------------------------------------------------------------
# Joint densities
# ---------------------------------------------------------------------------


def _pair_factor(a, b, chiral):
    """``|a - b|^2 |a - b*|^2`` (squared arguments if chiral); broadcasts."""
    if chiral:
        a, b = a * a, b * b
    return np.abs(a - b) ** 2 * np.abs(a - np.conj(b)) ** 2


def _self_factor(z, chiral):
    zc = np.conj(z)
    d = zc * zc - z * z if chiral else zc - z
    return np.abs(d) ** 2


def _mass_factor(z, masses, chiral):
    """``prod_f (m_f - z)(m_f - z*)`` with squares for chiral; complex in general."""
    out = np.ones(np.shape(z), dtype=complex)
    for m in masses:
        m = complex(m)
        if chiral:
            out = out * (m * m - z * z) * (m * m - np.conj(z) ** 2)
        else:
            out = out * (m - z) * (m - np.conj(z))
    return out


def _mass_constant(w: WeightSpec, masses) -> complex:
    if w.chiral and w.nu:
        return complex(np.prod(np.asarray(masses, dtype=complex) ** (2 * w.nu)))
    return 1.0 + 0j


def joint_log_density(w: WeightSpec, config: EigenConfig, masses: Sequence[float] = ()) -> float:
    """Log of the unnormalised joint density ``prod w |Delta|^2-type Jacobian prod mass factors``.

    Masses must be real (the integrand is not a density otherwise).  Points on
    an axis give ``-inf``.
    """
    ms = np.asarray(masses, dtype=complex)
    if np.any(np.abs(ms.imag) > 0):
        raise ValidationError("joint_log_density needs real masses")
    z = np.array(config.points)
    with np.errstate(divide="ignore"):
        out = float(np.sum(w.log(z.real, z.imag)))
        out += float(np.sum(np.log(_self_factor(z, w.chiral))))
        for i in range(len(z)):
            for j in range(i):
                out += float(np.log(_pair_factor(z[i], z[j], w.chiral)))
        if len(ms):
            out += float(np.sum(np.log(np.abs(_mass_factor(z, ms.real, w.chiral)))))
    return out


def _single_factor(w: WeightSpec, z: np.ndarray, masses) -> np.ndarray:
    return w.at(z) * _self_factor(z, w.chiral) * _mass_factor(z, masses, w.chiral)


# ---------------------------------------------------------------------------
# Direct quadrature
# ---------------------------------------------------------------------------


def _default_grid(w: WeightSpec, N: int, M: int, n: int) -> QuadratureGrid:
    # highest power of |z| multiplying w in the integrand for one variable
    deg = (4 * (N - 1) + 2 + 2 * M) * (2 if w.chiral else 1)
    return build_grid(w, points_per_axis=n, degree=deg)


def _z_partition(w, N, masses, grid, chunk=256) -> complex:
    z, wq = grid.complex_nodes()
    f = _single_factor(w, z, masses) * wq
    if N == 1:
        return complex(np.sum(f))
    if N != 2:
        raise ValidationError("direct complex quadrature is limited to N <= 2")
    total = 0j
    for s in range(0, len(z), chunk):
        P = _pair_factor(z[s : s + chunk, None], z[None, :], w.chiral)
        total += np.sum(f[s : s + chunk, None] * P * f[None, :])
    return complex(total)


def _with_richardson(compute, n, tol):
    fine = compute(n)
    coarse = compute(max(2 * ((2 * n // 3) // 2), 4))
    est = abs(fine - coarse)
    if est > tol * max(abs(fine), 1e-300):
        raise AccuracyError(
            f"quadrature not converged: |I_n - I_coarse| = {est:.3e} exceeds "
            f"{tol:.1e} relative; refine the grid"
        )
    return fine, est


def brute_force_partition(w: WeightSpec, N: int, masses: Sequence[complex] = (),
                          grid: Optional[QuadratureGrid] = None, n: Optional[int] = None,
                          tol: float = 1e-7, check: bool = True) -> complex:
    """Eigenvalue integral with masses by tensor quadrature over ``N <= 2`` full planes.

    Chiral weights include the ``prod_f m_f^{2 nu}`` factor.  Without an
    explicit ``grid`` a second, coarser grid provides a convergence estimate
    and :class:`AccuracyError` is raised when it exceeds ``tol``.
    """
    if N not in (1, 2):
        raise ValidationError("brute_force_partition supports N in {1, 2}")
    masses = tuple(complex(m) for m in masses)
    const = _mass_constant(w, masses)
    if grid is not None:
        return const * _z_partition(w, N, masses, grid)
    n = n or (160 if N == 1 else 96)

    def compute(nn):
        return _z_partition(w, N, masses, _default_grid(w, N, len(masses), nn))

    val, _ = _with_richardson(compute, n, tol) if check else (compute(n), 0.0)
    return const * val


def brute_force_correlator(w: WeightSpec, N: int, points: Sequence[complex],
                           masses: Sequence[complex] = (), grid: Optional[QuadratureGrid] = None,
                           n: Optional[int] = None, tol: float = 1e-7,
                           Z: Optional[complex] = None) -> complex:
    """``N!/(N-k)! / Z`` times the joint integrand integrated over the remaining ``N - k`` points.

    Supports ``N <= 2``; ``Z`` (the massive partition function without the
    chiral mass constant) may be supplied to avoid recomputation.
    """
    pts = np.asarray(points, dtype=complex)
    k = len(pts)
    if N not in (1, 2) or not 1 <= k <= N:
        raise ValidationError("brute_force_correlator supports N <= 2 and 1 <= k <= N")
    masses = tuple(complex(m) for m in masses)
    n = n or (160 if N == 1 else 96)
    if Z is None:
        Z = brute_force_partition(w, N, masses, grid, n=n, tol=tol) / _mass_constant(w, masses)
    fixed = np.prod(_single_factor(w, pts, masses))
    for i in range(k):
        for j in range(i):
            fixed *= _pair_factor(pts[i], pts[j], w.chiral)
    if k == N:
        integral = 1.0
    else:
        def compute(nn):
            g = grid or _default_grid(w, N, len(masses), nn)
            z, wq = g.complex_nodes()
            f = _single_factor(w, z, masses) * wq
            for p in pts:
                f = f * _pair_factor(z, p, w.chiral)
            return complex(np.sum(f))
        integral = compute(n) if grid is not None else _with_richardson(compute, n, tol)[0]
    return complex(math.factorial(N) / math.factorial(N - k) * fixed * integral / Z)


def _real_nodes(wbar: RealWeightSpec, N: int, M: int, n: int):
    deg = 4 * (N - 1) + 2 * M
    if wbar.chiral:
        deg = 2 * deg + 4 * wbar.nu + 3
    L = (math.sqrt(deg) + 9.0) * wbar.sigma
    return gauss_legendre_panels(L, n, panels=2)


def _real_single(wbar: RealWeightSpec, x, masses):
    x = np.asarray(x, dtype=float)
    out = wbar(x).astype(complex)
    if wbar.chiral:
        # the image of |z^2 - z*^2|^2 w is 4 x^2 times the image of |z - z*|^2 w
        out = out * 4.0 * x * x
    for m in masses:
        m = complex(m)
        out = out * ((m * m - x * x) ** 2 if wbar.chiral else (m - x) ** 2)
    return out


def _real_pair(a, b, chiral):
    if chiral:
        a, b = a * a, b * b
    return (a - b) ** 4


def _real_integral(wbar, N, masses, fixed_pts, n):
    """Integrate the real joint density over ``N - len(fixed_pts)`` free points."""
    x, wx = _real_nodes(wbar, N, len(masses), n)
    f = _real_single(wbar, x, masses) * wx
    for p in fixed_pts:
        f = f * _real_pair(x, p, wbar.chiral)
    free = N - len(fixed_pts)
    if free == 0:
        return 1.0 + 0j
    if free == 1:
        return complex(np.sum(f))
    if free == 2:
        return complex(f @ _real_pair(x[:, None], x[None, :], wbar.chiral) @ f)
    if free == 3:
        P = _real_pair(x[:, None], x[None, :], wbar.chiral)
        # sum_{abc} f_a f_b f_c P_ab P_ac P_bc
        return complex(np.einsum("a,b,c,ab,ac,bc->", f, f, f, P, P, P, optimize=True))
    raise ValidationError("real-line brute force supports at most three free points")


def real_brute_force_partition(wbar: RealWeightSpec, N: int, masses: Sequence[complex] = (),
                               n: int = 400) -> complex:
    """``int prod m(x_i) (x_i - x_j)^4 prod (m_f - x_i)^2`` over ``R^N`` (``N <= 3``).

    Chiral ensembles use squared variables in the Vandermonde and mass
    factors and ``4 x^2 wbar`` as single-point factor.
    """
    return _real_integral(wbar, N, tuple(complex(m) for m in masses), (), n)


def real_brute_force_correlator(wbar: RealWeightSpec, N: int, xs: Sequence[float],
                                masses: Sequence[complex] = (), n: int = 400) -> complex:
    masses = tuple(complex(m) for m in masses)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    k = len(xs)
    if not 1 <= k <= N:
        raise ValidationError("need 1 <= k <= N points")
    Z = _real_integral(wbar, N, masses, (), n)
    fixed = np.prod(_real_single(wbar, xs, masses))
    for i in range(k):
        for j in range(i):
            fixed *= _real_pair(xs[i], xs[j], wbar.chiral)
    integral = _real_integral(wbar, N, masses, tuple(xs), n)
    return complex(math.factorial(N) / math.factorial(N - k) * fixed * integral / Z)


# ---------------------------------------------------------------------------
# Metropolis sampling
# ---------------------------------------------------------------------------


def _scalar_log_weight(w: WeightSpec) -> Callable[[float, float], float]:
    """Fast scalar ``log w(x, y)`` for the built-in families."""
    if w.family == "gse":
        tau, N = w.tau, w.N
        ax, ay = N / (1.0 + tau), N / (1.0 - tau)
        return lambda x, y: -ax * x * x - ay * y * y
    if w.family == "chgse":
        N, mu, nu = w.N, w.mu, w.nu
        a = N * (1.0 + mu * mu) / (2.0 * mu * mu)
        order = 2 * nu
        by = N / (mu * mu)
        p = 2 * nu + 1

        def lw(x, y):
            r2 = x * x + y * y
            return p * math.log(r2) + math.log(kve(order, a * r2)) - N * x * x - by * y * y
        return lw
    return lambda x, y: float(w.log(np.float64(x), np.float64(y)))


@dataclass
class MCMCResult:
    samples: np.ndarray  # (S, N) complex representatives
    stats: ChainStats
    chiral: bool
    N: int

    def save_csv(self, path: str):
        cols = np.empty((self.samples.shape[0], 2 * self.N))
        cols[:, 0::2] = self.samples.real
        cols[:, 1::2] = self.samples.imag
        header = ",".join(f"x{i + 1},y{i + 1}" for i in range(self.N))
        np.savetxt(path, cols, delimiter=",", header=header, comments="", fmt="%.17g")


def mcmc_sample(w: WeightSpec, N: int, steps: int, seed: int, masses: Sequence[float] = (),
                burn_in: Optional[int] = None, thin: Optional[int] = None,
                target_acceptance: float = 0.3) -> MCMCResult:
    """Random-walk Metropolis on ``N`` upper-half-plane representatives.

    One step proposes a Gaussian move of a single eigenvalue (cycling through
    them), with per-axis scales proportional to the weight's decay and an
    overall factor tuned towards ``target_acceptance`` during burn-in.
    Moves leaving the half plane (quadrant if chiral) are rejected.  A
    configuration is recorded every ``thin`` steps (default ``N``).
    """
    if N < 1 or N > 6:
        raise ValidationError("mcmc_sample supports 1 <= N <= 6")
    ms = [float(np.real(m)) for m in masses]
    if any(abs(np.imag(m)) > 0 for m in masses):
        raise ValidationError("sampling needs real masses")
    if w.decay is None:
        raise ValidationError("weight needs decay scales to size proposals")
    chiral = w.chiral
    burn_in = steps // 10 if burn_in is None else burn_in
    thin = N if thin is None else thin
    ss = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(ss))
    lw = _scalar_log_weight(w)
    sx0, sy0 = w.decay

    # start near the typical region, strictly inside the half plane / quadrant
    xs = list(rng.normal(0.0, sx0, N))
    ys = list(np.abs(rng.normal(0.0, sy0, N)) + 0.5 * sy0)
    if chiral:
        xs = [abs(x) + 0.5 * sx0 for x in xs]

    log = math.log

    def point_terms(i, x, y):
        """Log of all factors of the density that involve point i."""
        if chiral:
            s_re, s_im = x * x - y * y, 2.0 * x * y
            val = lw(x, y) + log(4.0 * s_im * s_im)
            for j in range(N):
                if j == i:
                    continue
                t_re, t_im = xs[j] * xs[j] - ys[j] * ys[j], 2.0 * xs[j] * ys[j]
                dr, di, si = s_re - t_re, s_im - t_im, s_im + t_im
                val += log((dr * dr + di * di) * (dr * dr + si * si))
            for m in ms:
                dr = m * m - s_re
                val += log(dr * dr + s_im * s_im)
        else:
            val = lw(x, y) + log(4.0 * y * y)
            for j in range(N):
                if j == i:
                    continue
                dx, dy, sy = x - xs[j], y - ys[j], y + ys[j]
                val += log((dx * dx + dy * dy) * (dx * dx + sy * sy))
            for m in ms:
                dx = m - x
                val += log(dx * dx + y * y)
        return val

    scale = 1.0
    block = 65536
    normals = rng.standard_normal((block, 2))
    unif = rng.random(block)
    pos = 0
    n_rec = steps // thin
    out = np.empty((n_rec, N), dtype=complex)
    rec = 0
    acc_window = 0
    acc_total = 0
    retunes = 0
    last_rate = target_acceptance
    step = 0

    while step < burn_in + steps:
        if pos == block:
            normals = rng.standard_normal((block, 2))
            unif = rng.random(block)
            pos = 0
        i = step % N
        nx = xs[i] + scale * sx0 * normals[pos, 0]
        ny = ys[i] + scale * sy0 * normals[pos, 1]
        u = unif[pos]
        pos += 1
        accepted = False
        if ny > 0.0 and (not chiral or nx > 0.0):
            d = point_terms(i, nx, ny) - point_terms(i, xs[i], ys[i])
            if d >= 0.0 or u < math.exp(d):
                xs[i], ys[i] = nx, ny
                accepted = True
        if step < burn_in:
            acc_window += accepted
            if (step + 1) % 500 == 0:
                last_rate = acc_window / 500.0
                scale *= math.exp(last_rate - target_acceptance)
                acc_window = 0
            if step == burn_in - 1 and not 0.1 <= last_rate <= 0.7 and retunes < 10:
                # tuning has not settled: keep adapting before recording
                burn_in += 5000
                retunes += 1
        else:
            acc_total += accepted
            t = step - burn_in + 1
            if t % thin == 0 and rec < n_rec:
                for j in range(N):
                    out[rec, j] = complex(xs[j], ys[j])
                rec += 1
        step += 1

    rate = acc_total / max(steps, 1)
    ess = _batch_means_ess(out[:rec])
    stats = ChainStats(steps, burn_in, rate, int(seed), ess,
                       (scale * sx0, scale * sy0), retunes)
    return MCMCResult(out[:rec], stats, chiral, N)


def _batch_means_ess(samples: np.ndarray, batches: int = 50) -> float:
    """Effective sample size of the per-config mean of ``Im z`` by batch means."""
    if len(samples) < 2 * batches:
        return float(len(samples))
    obs = samples.imag.mean(axis=1)
    n = len(obs) // batches * batches
    obs = obs[:n]
    var = obs.var()
    if var == 0:
        return float(n)
    bm = obs.reshape(batches, -1).mean(axis=1)
    tau = (n // batches) * bm.var() / var
    return float(n / max(tau, 1.0))


# ---------------------------------------------------------------------------
# Histogram comparison
# ---------------------------------------------------------------------------


@dataclass
class CompareReport:
    max_abs_z: float
    fraction_beyond_3sigma: float
    n_bins: int
    inflation: float
    normalization: float
    n_configs: int
    details: dict = field(default_factory=dict)

    def passed(self, fraction: float = 0.01) -> bool:
        return self.fraction_beyond_3sigma < fraction

    def to_json(self) -> dict:
        return {
            "max_abs_z": self.max_abs_z,
            "fraction_beyond_3sigma": self.fraction_beyond_3sigma,
            "n_bins": self.n_bins,
            "inflation": self.inflation,
            "normalization": self.normalization,
            "n_configs": self.n_configs,
            **self.details,
        }


def histogram_grid(w: WeightSpec, N: int, nx: int = 24, ny: int = 12):
    """Bin edges covering the bulk of the eigenvalue density (upper half plane / first quadrant)."""
    sx, sy = w.decay
    if w.chiral:
        xr = (0.0, 1.6 + 5.0 * sx)
        yr = (0.0, 1.0 * math.sqrt(1.0 / N) + 5.0 * sy)
        yr = (0.0, min(yr[1], xr[1]))
    else:
        tau = w.tau if w.tau is not None else 0.0
        xr = (-(1.0 + tau) - 4.0 * sx, (1.0 + tau) + 4.0 * sx)
        yr = (0.0, (1.0 - tau) + 4.0 * sy)
    return np.linspace(*xr, nx + 1), np.linspace(*yr, ny + 1)


def density_compare(samples: np.ndarray, predicted: Callable, edges, N: int, chiral: bool = False,
                    min_expected: float = 20.0, batches: int = 50, gl_nodes: int = 4,
                    norm_grid: Optional[QuadratureGrid] = None) -> CompareReport:
    """Per-bin z-scores of sampled representatives against a predicted density.

    ``predicted(z)`` is the full-plane one-point function; representatives
    live in one half plane (quadrant if chiral), so the expected density of
    representatives is ``2 R`` (``4 R``).  Bin errors are Poisson errors
    inflated by a pooled batch-means factor that accounts for chain
    autocorrelation; bins with fewer than ``min_expected`` expected counts
    are excluded.  With ``norm_grid`` the report includes the integral of
    ``predicted`` over that grid, which should be ``N``.
    """
    samples = np.asarray(samples)
    S = samples.shape[0]
    if S < batches:
        raise ValidationError("too few samples for a batch-means error estimate")
    xe, ye = (np.asarray(e, dtype=float) for e in edges)
    fold = 4.0 if chiral else 2.0
    t, tw = np.polynomial.legendre.leggauss(gl_nodes)
    # expected mass per bin by tensor Gauss-Legendre
    hx, hy = np.diff(xe) / 2, np.diff(ye) / 2
    cx, cy = (xe[:-1] + xe[1:]) / 2, (ye[:-1] + ye[1:]) / 2
    X = cx[:, None] + hx[:, None] * t[None, :]          # (nx, g)
    Y = cy[:, None] + hy[:, None] * t[None, :]          # (ny, g)
    Z = X[:, None, :, None] + 1j * Y[None, :, None, :]  # (nx, ny, g, g)
    vals = np.real(predicted(Z.ravel())).reshape(Z.shape)
    wgt = (hx[:, None, None, None] * hy[None, :, None, None]
           * tw[None, None, :, None] * tw[None, None, None, :])
    expected = S * fold * np.sum(vals * wgt, axis=(2, 3))

    n = S // batches * batches
    pts = samples[:n]
    per_batch = np.empty((batches, len(xe) - 1, len(ye) - 1))
    for b, chunk in enumerate(pts.reshape(batches, -1, samples.shape[1])):
        c = chunk.ravel()
        per_batch[b] = np.histogram2d(c.real, c.imag, bins=(xe, ye))[0]
    counts = np.histogram2d(samples.ravel().real, samples.ravel().imag, bins=(xe, ye))[0]
    mask = expected >= min_expected
    if not mask.any():
        raise ValidationError("no bin reaches the minimum expected count")
    # pooled variance inflation: observed batch-to-batch variance over Poisson variance
    bvar = per_batch.var(axis=0, ddof=1) * batches * (S / n)
    inflation = max(1.0, float(np.sum(bvar[mask]) / np.sum(counts[mask])))
    zscore = (counts[mask] - expected[mask]) / np.sqrt(expected[mask] * inflation)
    az = np.abs(zscore)
    norm = float("nan")
    if norm_grid is not None:
        zn, wn = norm_grid.complex_nodes()
        norm = float(np.sum(np.real(predicted(zn)) * wn))
    return CompareReport(float(az.max()), float(np.mean(az > 3.0)), int(mask.sum()),
                         inflation, norm, S,
                         {"covered_fraction": float(np.sum(counts) / (S * N))})

"""Tensor-product discretizations of geodesic balls and conformal discs.

Grids are pole-offset: radial nodes sit at r_i = (i + 1/2) h so no node lands
on the coordinate singularity, and radial stencils reaching below the first
ring couple across the pole to the antipodal column (the smooth continuation
of a disc function satisfies F(-r, theta) = F(r, theta + pi), with a sign
flip for each radial tensor index).  The outermost ring lies exactly on the
ball boundary and carries the Dirichlet value.

Second-order centered stencils feed the Monge-Ampere operator; audits may
request higher radial orders and spectrally accurate angular derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "GridTooCoarseError",
    "InadmissibleNodeError",
    "PolarGrid",
    "DiscGrid",
    "ScalarField",
    "HessianField",
    "ChartData",
    "chart_arrays",
    "covariant_hessian",
    "ma_operator",
    "radial_derivative",
    "theta_derivative",
    "theta_derivative_spectral",
    "generalized_eig_range",
    "write_field_csv",
]


class GridTooCoarseError(ValueError):
    """Grid cannot support the second-order stencils."""


class InadmissibleNodeError(ValueError):
    """A node where Hess(u) + g or the equation's right side loses positivity."""

    def __init__(self, i, j, eigenvalue, rhs):
        self.node = (i, j)
        self.eigenvalue = eigenvalue
        self.rhs = rhs
        super().__init__(
            f"inadmissible state at node (i={i}, j={j}): "
            f"min eigenvalue of g^-1(Hess u + g) = {eigenvalue:.6g}, "
            f"|grad u|^2 + 2u = {rhs:.6g}"
        )


@dataclass(frozen=True)
class PolarGrid:
    """Geodesic polar grid on B(x0, ball_radius): r_i = (i+1/2) h_r, theta_j periodic."""

    n_r: int
    n_theta: int
    ball_radius: float
    theta0: float = 0.0

    def __post_init__(self):
        if self.n_theta % 2 != 0:
            raise ValueError("n_theta must be even (across-pole coupling)")
        if self.n_r < 2 or self.n_theta < 2:
            raise ValueError("grid needs at least 2 radial and angular nodes")
        if self.ball_radius <= 0.0:
            raise ValueError("ball_radius must be positive")

    kind = "polar"

    @property
    def n1(self):
        return self.n_r

    @property
    def n2(self):
        return self.n_theta

    @property
    def h1(self):
        return self.ball_radius / (self.n_r - 0.5)

    @property
    def h2(self):
        return 2.0 * math.pi / self.n_theta

    @property
    def q1(self):
        return (np.arange(self.n_r) + 0.5) * self.h1

    @property
    def q2(self):
        return self.theta0 + np.arange(self.n_theta) * self.h2

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    def mesh(self):
        return np.meshgrid(self.q1, self.q2, indexing="ij")


@dataclass(frozen=True)
class DiscGrid:
    """Chart-polar grid on a conformal disc of chart radius < 1.

    Same pole-offset tensor structure as PolarGrid; the first coordinate is
    the chart radius rho, not geodesic distance.  CSV dumps use Cartesian
    chart coordinates.
    """

    n_rho: int
    n_theta: int
    chart_radius: float
    theta0: float = 0.0

    def __post_init__(self):
        if self.n_theta % 2 != 0:
            raise ValueError("n_theta must be even (across-pole coupling)")
        if self.n_rho < 2 or self.n_theta < 2:
            raise ValueError("grid needs at least 2 radial and angular nodes")
        if not (0.0 < self.chart_radius < 1.0):
            raise ValueError("chart_radius must lie in (0, 1)")

    kind = "disc"

    @property
    def n1(self):
        return self.n_rho

    @property
    def n2(self):
        return self.n_theta

    @property
    def h1(self):
        return self.chart_radius / (self.n_rho - 0.5)

    @property
    def h2(self):
        return 2.0 * math.pi / self.n_theta

    @property
    def q1(self):
        return (np.arange(self.n_rho) + 0.5) * self.h1

    @property
    def q2(self):
        return self.theta0 + np.arange(self.n_theta) * self.h2

    @property
    def shape(self):
        return (self.n_rho, self.n_theta)

    def mesh(self):
        return np.meshgrid(self.q1, self.q2, indexing="ij")


@dataclass(frozen=True)
class ScalarField:
    """Grid function; construction rejects any non-finite value."""

    grid: PolarGrid | DiscGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class HessianField:
    """Covariant Hessian, gradient, and derived pointwise invariants of u."""

    grid: PolarGrid | DiscGrid
    h11: np.ndarray
    h12: np.ndarray
    h22: np.ndarray
    du1: np.ndarray
    du2: np.ndarray
    grad_sq: np.ndarray       # |grad u|^2 in the metric
    det_ratio: np.ndarray     # det(Hess u + g) / det g
    eig_min: np.ndarray       # eigenvalues of g^{-1}(Hess u + g)
    eig_max: np.ndarray


@dataclass(frozen=True)
class ChartData:
    """Metric, Christoffel, and curvature arrays evaluated at grid nodes."""

    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    det_g: np.ndarray
    inv11: np.ndarray
    inv22: np.ndarray
    K: np.ndarray
    gamma1_11: np.ndarray
    gamma1_12: np.ndarray
    gamma1_22: np.ndarray
    gamma2_11: np.ndarray
    gamma2_12: np.ndarray
    gamma2_22: np.ndarray


def chart_arrays(metric, grid) -> ChartData:
    q1, q2 = grid.mesh()
    g11, g12, g22 = metric.metric_components(q1, q2)
    gam = metric.christoffel_components(q1, q2)
    K = metric.curvature_at(q1, q2)
    det_g = g11 * g22 - g12 * g12
    return ChartData(
        g11, g12, g22, det_g, 1.0 / g11, 1.0 / g22, K,
        gam[0], gam[1], gam[2], gam[3], gam[4], gam[5],
    )


# ---------------------------------------------------------------------------
# finite-difference stencils


@lru_cache(maxsize=None)
def _fd_weights(offsets: tuple, deriv: int) -> np.ndarray:
    """Weights approximating the deriv-th derivative from nodes at integer offsets."""
    o = np.asarray(offsets, dtype=float)
    p = np.arange(len(o))
    A = o[np.newaxis, :] ** p[:, np.newaxis]
    rhs = np.zeros(len(o))
    rhs[deriv] = math.factorial(deriv)
    w = np.linalg.solve(A, rhs)
    if deriv >= 1 and 0 in offsets:
        w[offsets.index(0)] -= w.sum()  # annihilate constants exactly
    return w


def _ghost_rows_below(F: np.ndarray, depth: int, parity: float) -> np.ndarray:
    """Prepend rows r_{-1-k} = parity * F[k] rotated by half a turn."""
    half = F.shape[1] // 2
    ghosts = [parity * np.roll(F[k], half) for k in range(depth)]
    return np.vstack([*reversed(ghosts), F])


def radial_derivative(F, h, deriv=1, order=2, parity=1.0):
    """d^deriv/dr^deriv along axis 0, accuracy `order`, ghost rows across the pole.

    Interior rows use centered stencils; the top order//2 rows fall back to
    one-sided stencils of the same order (used only by audits, never by the
    equation operator).  `parity` is +1 for scalars and tensor components
    with an even number of radial indices, -1 otherwise.
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    half = order // 2
    npts_c = 2 * half + 1
    if n < npts_c:
        raise GridTooCoarseError(f"need at least {npts_c} radial rows for order {order}")
    Fe = _ghost_rows_below(F, half, parity)
    out = np.empty_like(F)
    w = _fd_weights(tuple(range(-half, half + 1)), deriv) / h**deriv
    n_centered = n - half  # rows 0..n_centered-1 have full upper neighbors
    acc = np.zeros((n_centered, F.shape[1]))
    for k, o in enumerate(range(-half, half + 1)):
        acc += w[k] * Fe[half + o : half + o + n_centered]
    out[:n_centered] = acc
    # one-sided top rows, same formal order
    npts_o = order + deriv
    for i in range(n_centered, n):
        offs = tuple(range(n - npts_o - i, n - i))
        wo = _fd_weights(offs, deriv) / h**deriv
        row = np.zeros(F.shape[1])
        for k, o in enumerate(offs):
            row += wo[k] * F[i + o]
        out[i] = row
    return out


def theta_derivative(F, h, deriv=1, order=2):
    """Periodic centered derivative along axis 1."""
    F = np.asarray(F, dtype=float)
    half = order // 2
    w = _fd_weights(tuple(range(-half, half + 1)), deriv) / h**deriv
    out = np.zeros_like(F)
    for k, o in enumerate(range(-half, half + 1)):
        out += w[k] * np.roll(F, -o, axis=1)
    return out


def theta_derivative_spectral(F, deriv=1):
    """FFT derivative in theta (exact for resolved smooth periodic fields)."""
    F = np.asarray(F, dtype=float)
    n = F.shape[1]
    k = np.fft.rfftfreq(n, d=1.0 / n)  # integer wavenumbers
    mult = (1j * k) ** deriv
    if deriv % 2 == 1 and n % 2 == 0:
        mult[-1] = 0.0  # Nyquist mode has no well-defined odd derivative
    return np.fft.irfft(np.fft.rfft(F, axis=1) * mult, n=n, axis=1)


def generalized_eig_range(a11, a12, a22, g11, g22):
    """Eigenvalue range of g^{-1} A for diagonal g and symmetric A."""
    b11 = a11 / g11
    b22 = a22 / g22
    b12 = a12 / np.sqrt(g11 * g22)
    mean = 0.5 * (b11 + b22)
    disc = np.sqrt(np.maximum(0.25 * (b11 - b22) ** 2 + b12 * b12, 0.0))
    return mean - disc, mean + disc


# ---------------------------------------------------------------------------
# covariant operators


def covariant_hessian(u: ScalarField, metric, order: int = 2) -> HessianField:
    """Covariant Hessian Hess(u)_ij = d_i d_j u - Gamma^k_ij d_k u plus invariants.

    Stencils are centered and second order by default; the top row of the
    returned arrays is one-sided and should only be consumed by audits.
    """
    grid = u.grid
    if grid.n1 < 4 or grid.n2 < 8:
        raise GridTooCoarseError(
            f"grid {grid.shape} too coarse for the Hessian stencils "
            "(need n_r >= 4 and n_theta >= 8)"
        )
    ch = chart_arrays(metric, grid)
    F = u.values
    h1, h2 = grid.h1, grid.h2
    du1 = radial_derivative(F, h1, deriv=1, order=order)
    du2 = theta_derivative(F, h2, deriv=1, order=order)
    d11 = radial_derivative(F, h1, deriv=2, order=order)
    d22 = theta_derivative(F, h2, deriv=2, order=order)
    d12 = radial_derivative(theta_derivative(F, h2, deriv=1, order=order),
                            h1, deriv=1, order=order)
    h11 = d11 - ch.gamma1_11 * du1 - ch.gamma2_11 * du2
    h12 = d12 - ch.gamma1_12 * du1 - ch.gamma2_12 * du2
    h22 = d22 - ch.gamma1_22 * du1 - ch.gamma2_22 * du2
    grad_sq = ch.inv11 * du1 * du1 + ch.inv22 * du2 * du2
    a11, a12, a22 = h11 + ch.g11, h12 + ch.g12, h22 + ch.g22
    det_ratio = (a11 * a22 - a12 * a12) / ch.det_g
    eig_min, eig_max = generalized_eig_range(a11, a12, a22, ch.g11, ch.g22)
    return HessianField(grid, h11, h12, h22, du1, du2, grad_sq, det_ratio,
                        eig_min, eig_max)


def ma_operator(u: ScalarField, metric, boundary_value: float) -> ScalarField:
    """Log-form Monge-Ampere residual.

    Interior nodes carry log[det(Hess u + g)/det g] - log[-K (|grad u|^2 + 2u)];
    the boundary ring carries u - boundary_value.  The log form symmetrizes
    the two positivity requirements; a node violating either raises
    InadmissibleNodeError so the caller can damp its step.
    """
    hess = covariant_hessian(u, metric, order=2)
    ch = chart_arrays(metric, u.grid)
    s = hess.grad_sq + 2.0 * u.values
    interior = slice(0, u.grid.n1 - 1)
    eig_int = hess.eig_min[interior]
    s_int = s[interior]
    if np.any(eig_int <= 0.0) or np.any(s_int <= 0.0):
        flat = np.argmin(np.where(s_int <= 0.0, s_int, eig_int))
        i, j = np.unravel_index(flat, eig_int.shape)
        raise InadmissibleNodeError(int(i), int(j), float(eig_int[i, j]),
                                    float(s_int[i, j]))
    res = np.empty_like(u.values)
    res[interior] = np.log(hess.det_ratio[interior]) - np.log(
        (-ch.K[interior]) * s_int
    )
    res[-1] = u.values[-1] - boundary_value
    return ScalarField(u.grid, res)


def write_field_csv(field: ScalarField, path):
    """Dump a field as CSV, row-major in (i, j), 17 significant digits.

    Polar grids emit (r, theta, value); disc grids emit Cartesian chart
    coordinates (x, y, value).
    """
    grid = field.grid
    q1, q2 = grid.mesh()
    if grid.kind == "disc":
        c1, c2 = q1 * np.cos(q2), q1 * np.sin(q2)
        header = "x,y,value"
    else:
        c1, c2 = q1, q2
        header = "r,theta,value"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        v = field.values
        for i in range(grid.n1):
            for j in range(grid.n2):
                fh.write(f"{c1[i, j]:.17g},{c2[i, j]:.17g},{v[i, j]:.17g}\n")

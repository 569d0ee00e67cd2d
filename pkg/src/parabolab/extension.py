"""Reflection extension across x1 = 0, interpolation checks, boundary maps.

The weighted reflection uses coefficients c_k solving
``sum_k (-1/k)^j c_k = 1`` for j = 0..2*tau-1, which matches one-sided
derivatives of orders < 2*tau at the interface, so the extension of a smooth
half-space function is C^{2*tau-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .core import GridFunction, ProblemDims, lp_norm, spectral_derivative
from .errors import ParabolabError

MAX_TAU = 6  # the float evaluation of sum_k c_k w(-x1/k) loses ~2 digits per tau


@dataclass(frozen=True)
class ExtensionCoefficients:
    """Reflection weights c_1..c_{2 tau} with the residual of their system."""

    tau: int
    c: np.ndarray
    residual: float


def _solve_exact(matrix, rhs):
    """Gaussian elimination over Fractions (exact; matrices here are tiny)."""
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0:
            raise ParabolabError("reflection system is singular")
        a[col], a[piv] = a[piv], a[col]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col] / a[col][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [a[i][n] / a[i][i] for i in range(n)]


def vandermonde_coefficients(tau: int) -> ExtensionCoefficients:
    """Solve the 2*tau x 2*tau system exactly and report the float residual."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if tau > MAX_TAU:
        raise ParabolabError(
            f"tau={tau} refused: the system's condition number grows like the "
            f"coefficient magnitudes (|c_k| ~ 10^{tau}) and the reflected sum "
            f"cancels catastrophically beyond tau={MAX_TAU}"
        )
    size = 2 * tau
    matrix = [[Fraction(-1, k + 1) ** j for k in range(size)] for j in range(size)]
    rhs = [Fraction(1)] * size
    c_exact = _solve_exact(matrix, rhs)
    c = np.array([float(v) for v in c_exact])
    nodes = -1.0 / np.arange(1, size + 1)
    residual = float(
        np.max(np.abs(np.vander(nodes, size, increasing=True).T @ c - 1.0))
    )
    return ExtensionCoefficients(tau=tau, c=c, residual=residual)


def _lagrange_weights(xs: np.ndarray, x0: float) -> np.ndarray:
    w = np.ones(xs.size)
    for j in range(xs.size):
        for l in range(xs.size):
            if l != j:
                w[j] *= (x0 - xs[l]) / (xs[j] - xs[l])
    return w


def _interp_row(coords: np.ndarray, x0: float, window: int) -> tuple:
    """(index array, weights) interpolating a sample at x0 from nearby nodes."""
    window = min(window, coords.size)
    center = int(np.clip(np.searchsorted(coords, x0) - window // 2, 0, coords.size - window))
    sl = np.arange(center, center + window)
    return sl, _lagrange_weights(coords[sl], x0)


def extend_tau(w: GridFunction, coeffs: ExtensionCoefficients,
               negative_points: int | None = None) -> GridFunction:
    """Weighted reflection of a slab field to x1 < 0.

    Identity for x1 > 0; ``sum_k c_k w(-x1/k, x')`` below.  Off-grid samples
    w(-x1/k) come from windowed polynomial interpolation of order > 2*tau
    (the slab axis is not periodic, so Fourier resampling does not apply).
    """
    if w.periodic[0]:
        raise ParabolabError("extend_tau expects a slab field (axis 0 non-periodic)")
    mpos = w.spatial_shape[0] - 1
    neg = mpos if negative_points is None else int(negative_points)
    if neg > mpos:
        raise ParabolabError(
            f"negative extent ({neg} nodes) exceeds the slab depth ({mpos} nodes); "
            "the k=1 reflection already needs w at -x1"
        )
    h = w.spacing(0)
    coords = w.axis_coords(0)
    window = 2 * coeffs.tau + 4
    rows = np.zeros((neg, mpos + 1))
    for i in range(1, neg + 1):
        for k, ck in enumerate(coeffs.c, start=1):
            sl, wk = _interp_row(coords, i * h / k, window)
            rows[i - 1, sl] += ck * wk
    vals_neg = np.einsum("ij,tj...->ti...", rows, w.values)
    # row i holds the value at x1 = -i*h; flip so axis 1 runs -E..X
    values = np.concatenate([np.flip(vals_neg, axis=1), w.values], axis=1)
    return GridFunction(
        dims=w.dims,
        origin=(-neg * h,) + w.origin[1:],
        lengths=(w.lengths[0] + neg * h,) + w.lengths[1:],
        periodic=w.periodic,
        times=w.times,
        values=values,
    )


def even_extend(g: GridFunction) -> GridFunction:
    """g(-x1, x') = g(x1, x'); exact node mirroring, no resampling."""
    if g.periodic[0]:
        raise ParabolabError("even_extend expects a slab field (axis 0 non-periodic)")
    mirrored = np.flip(g.values[:, 1:], axis=1)
    values = np.concatenate([mirrored, g.values], axis=1)
    return GridFunction(
        dims=g.dims,
        origin=(-g.lengths[0],) + g.origin[1:],
        lengths=(2 * g.lengths[0],) + g.lengths[1:],
        periodic=g.periodic,
        times=g.times,
        values=values,
    )


def restrict_positive(g: GridFunction) -> GridFunction:
    """Inverse of even_extend on the half-space part (x1 >= 0 nodes)."""
    h = g.spacing(0)
    i0 = int(round(-g.origin[0] / h))
    return GridFunction(
        dims=g.dims,
        origin=(0.0,) + g.origin[1:],
        lengths=(g.lengths[0] + g.origin[0],) + g.lengths[1:],
        periodic=g.periodic,
        times=g.times,
        values=g.values[:, i0:],
    )


def one_sided_derivatives(g: GridFunction, order: int, stencil: int = 7) -> tuple:
    """(D1^j from x1 > 0, D1^j from x1 < 0) at the interface x1 = 0.

    Sixth-order one-sided differences by default; used to measure how many
    derivatives the reflection extension matches across the interface.
    """
    h = g.spacing(0)
    i0 = int(round(-g.origin[0] / h))
    coords = np.arange(stencil) * h
    w_plus = _lagrange_derivative_weights(coords, 0.0, order)
    w_minus = _lagrange_derivative_weights(-coords, 0.0, order)
    plus = np.einsum("j,tj...->t...", w_plus, g.values[:, i0 : i0 + stencil])
    minus = np.einsum("j,tj...->t...", w_minus, g.values[:, i0 - stencil + 1 : i0 + 1][:, ::-1])
    return plus, minus


def _lagrange_derivative_weights(xs: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Weights of the order-th derivative of the interpolant through xs, at x0."""
    n = xs.size
    scale = max(np.max(np.abs(xs - x0)), 1e-300)
    V = np.vander((xs - x0) / scale, n, increasing=True)
    d = np.zeros(n)
    if order < n:
        d[order] = np.math.factorial(order) / scale**order if hasattr(np, "math") else 0
    # np.math was removed; compute directly
    import math

    d = np.zeros(n)
    if order < n:
        d[order] = math.factorial(order) / scale**order
    return np.linalg.solve(V.T, d)


# -- anisotropic interpolation inequality ------------------------------------

def _tangential_indices(dims: ProblemDims, order: int):
    from .core import enumerate_multiindices

    return [a for a in enumerate_multiindices(dims, order) if a[0] == 0]


def interpolation_lhs(u: GridFunction, k: int, p: float = 2.0) -> float:
    """max over tangential a', |a'| = m-k, of ||D_1^k D^{a'} u||_p."""
    dims = u.dims
    if not 0 <= k <= dims.m - 1:
        raise ValueError("k must satisfy 0 <= k <= m-1")
    best = 0.0
    for ap in _tangential_indices(dims, dims.m - k):
        alpha = (k,) + tuple(ap.entries[1:])
        best = max(best, lp_norm(spectral_derivative(u, alpha), p))
    return best


def interpolation_rhs_terms(u: GridFunction, p: float = 2.0) -> tuple:
    """(||D_1^m u||_p, sum_j ||D_j^m u||_p over tangential axes)."""
    dims = u.dims
    m = dims.m
    normal = lp_norm(spectral_derivative(u, (m,) + (0,) * (dims.d - 1)), p)
    tang = 0.0
    for j in range(1, dims.d):
        alpha = tuple(m if i == j else 0 for i in range(dims.d))
        tang += lp_norm(spectral_derivative(u, alpha), p)
    return normal, tang


def interpolation_check(u: GridFunction, k: int, epsilon: float, n_const: float,
                        p: float = 2.0):
    """Both sides of the mixed-derivative interpolation bound.

    Returns (lhs, rhs, passed) with
    rhs = epsilon * ||D_1^m u||_p + n_const * sum_j ||D_j^m u||_p.
    """
    lhs = interpolation_lhs(u, k, p)
    normal, tang = interpolation_rhs_terms(u, p)
    rhs = epsilon * normal + n_const * tang
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12))


def fit_interpolation_constant(corpus, k: int, epsilon: float, p: float = 2.0) -> float:
    """Smallest N validating the whole corpus at this epsilon."""
    best = 0.0
    for u in corpus:
        lhs = interpolation_lhs(u, k, p)
        normal, tang = interpolation_rhs_terms(u, p)
        slack = lhs - epsilon * normal
        if slack <= 0:
            continue
        if tang == 0:
            raise ParabolabError("corpus function has zero tangential derivatives but positive LHS")
        best = max(best, slack / tang)
    return best


# -- boundary mollification and flattening -----------------------------------

@dataclass(frozen=True)
class BoundaryGeometry:
    """A sampled Lipschitz graph on a (d-1)-torus plus its mollifier.

    ``eta_exponent`` parameterizes the polynomial bump kernel
    (1 - |y|^2)^q on the unit ball, normalized numerically to unit integral.
    """

    phi: np.ndarray
    length: float
    rho1: float
    eta_exponent: int = 4
    quad_points: int = 201
    phi_tilde: np.ndarray | None = None
    x1_values: np.ndarray | None = None
    fitted_growth: dict | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        measured = self.measured_lipschitz()
        if measured > self.rho1 * (1 + 1e-9):
            raise ValueError(f"measured Lipschitz constant {measured:g} exceeds rho1={self.rho1:g}")

    @property
    def spacing(self) -> float:
        return self.length / self.phi.size

    def measured_lipschitz(self) -> float:
        diffs = np.diff(np.concatenate([self.phi, self.phi[:1]]))
        return float(np.max(np.abs(diffs)) / self.spacing)

    def eval_phi(self, xp) -> np.ndarray:
        grid = np.arange(self.phi.size) * self.spacing
        return np.interp(np.asarray(xp, dtype=float), grid, self.phi, period=self.length)


def _bump_quadrature(exponent: int, points: int):
    y = np.linspace(-1.0, 1.0, points + 1)
    y = 0.5 * (y[:-1] + y[1:])  # midpoint nodes, symmetric about 0
    dy = 2.0 / points
    eta = np.clip(1.0 - y**2, 0.0, None) ** exponent
    eta /= np.sum(eta) * dy  # unit integral on the quadrature, by construction
    return y, eta * dy


def mollified_graph(geo: BoundaryGeometry, x1_values) -> np.ndarray:
    """phi_tilde(x1, x') = integral of eta(y) phi(x' - x1 y) dy, per x1 row."""
    y, w = _bump_quadrature(geo.eta_exponent, geo.quad_points)
    xp = np.arange(geo.phi.size) * geo.spacing
    out = np.empty((np.size(x1_values), geo.phi.size))
    for i, x1 in enumerate(np.atleast_1d(np.asarray(x1_values, dtype=float))):
        samples = geo.eval_phi(xp[None, :] - x1 * y[:, None])
        out[i] = w @ samples
    return out


def boundary_mollify(geo: BoundaryGeometry, x1_values=None) -> BoundaryGeometry:
    """Attach the mollified graph and fitted derivative-growth constants.

    For each tangential derivative order 1 <= order <= 4 the growth constant
    is max over the sampled rows of |D^order phi_tilde| * x1^(order-1) / rho1;
    the trace row x1 = 0 equals phi itself.
    """
    if x1_values is None:
        x1_values = np.geomspace(1e-3, 1.0, 16)
    x1_values = np.atleast_1d(np.asarray(x1_values, dtype=float))
    tilde = mollified_graph(geo, x1_values)
    freqs = 2.0 * np.pi / geo.length * np.fft.fftfreq(geo.phi.size, d=1.0 / geo.phi.size)
    fitted = {}
    hat = np.fft.fft(tilde, axis=1)
    for order in range(1, 5):
        deriv = np.fft.ifft(hat * (1j * freqs[None, :]) ** order, axis=1).real
        per_row = np.max(np.abs(deriv), axis=1)
        fitted[order] = float(np.max(per_row * x1_values ** (order - 1) / geo.rho1))
    return replace(geo, phi_tilde=tilde, x1_values=x1_values, fitted_growth=fitted)


@dataclass(frozen=True)
class FlattenMap:
    """y1 = x1 - phi(x'), y' = x'; unit lower-triangular Jacobian."""

    geo: BoundaryGeometry

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x.copy()
        out[..., 0] = x[..., 0] - self.geo.eval_phi(x[..., 1])
        return out

    def inverse(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = y.copy()
        out[..., 0] = y[..., 0] + self.geo.eval_phi(y[..., 1])
        return out

    def jacobian_det(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1])


def flatten_map(geo: BoundaryGeometry) -> FlattenMap:
    return FlattenMap(geo)

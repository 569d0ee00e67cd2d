"""Exact per-mode solver for u_t + (-1)^m L0 u + lambda u = rhs on the torus.

Each Fourier mode xi obeys an n x n linear ODE with the piecewise-constant
matrix m(xi, t) = sum_{|a|=|b|=m} xi^{a+b} A^{ab}(t); the solver advances it
by the exact matrix exponential with the Duhamel term for zero-order-hold
forcing, so no time-discretization error pollutes the estimate ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import core
from .core import GridFunction, MultiIndex, as_multiindex, enumerate_multiindices_upto, lp_norm
from .ellipticity import CoefficientTensor, lh_constant, petrovskii_margin
from .errors import DegenerateInputError, EllipticityError, NumericsError


@dataclass(frozen=True)
class ModeSymbol:
    """Per-interval matrices of one Fourier mode: sum_{ab} xi^{a+b} A^{ab}(t)."""

    xi: tuple
    matrices: np.ndarray  # (n_intervals, n, n)


@dataclass(frozen=True)
class SolveRequest:
    """Inputs for one torus solve.

    ``forcing`` is a mapping multi-index -> GridFunction for the divergence
    form (one f_a per |a| <= m) or a single GridFunction for the
    non-divergence form; ``initial`` optionally injects u at the start time
    (defaults to zero).  All fields must share grid and times.
    """

    coeff: CoefficientTensor
    lam: float
    form: str  # "divergence" | "nondivergence"
    forcing: object = None
    initial: GridFunction | None = None
    ellipticity_check: str = "lh"  # "lh" | "petrovskii" | "skip"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.form not in ("divergence", "nondivergence"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.forcing is None and self.initial is None:
            raise ValueError("need forcing or initial data to define the grid")

    def grid_template(self) -> GridFunction:
        if self.initial is not None:
            return self.initial
        if self.form == "nondivergence":
            return self.forcing
        return next(iter(self.forcing.values()))

    def forcing_map(self) -> dict:
        if self.forcing is None:
            return {}
        if self.form == "nondivergence":
            d = self.grid_template().dims.d
            return {MultiIndex((0,) * d): self.forcing}
        return {as_multiindex(a): g for a, g in self.forcing.items()}


def mode_symbol(A: CoefficientTensor, xi) -> ModeSymbol:
    xi = np.asarray(xi, dtype=float)
    idx = A.leading_indices
    powers = np.array([core.monomial_power(xi, a) for a in idx])
    mats = np.einsum("a,b,kabij->kij", powers, powers, A.blocks)
    return ModeSymbol(xi=tuple(xi), matrices=mats)


def _mode_lattice(grid: GridFunction) -> np.ndarray:
    """(n_modes, d) array of frequency vectors in fftn layout order."""
    freqs = [core.frequencies(grid, j) for j in range(grid.dims.d)]
    mesh = np.meshgrid(*freqs, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _check_ellipticity(req: SolveRequest, t_start: float, t_end: float) -> None:
    if req.ellipticity_check == "skip":
        return
    for t in req.coeff.interval_times(t_start, t_end):
        if req.ellipticity_check == "lh":
            margin = lh_constant(req.coeff, t, directions=512, refine=False)
            if margin <= 0:
                raise EllipticityError(
                    f"Legendre-Hadamard constant {margin:g} <= 0 at t={t:g}; "
                    "pass ellipticity_check='petrovskii' to override"
                )
        elif req.ellipticity_check == "petrovskii":
            margin = petrovskii_margin(req.coeff, t, directions=512, refine=False)
            if margin <= 0:
                raise EllipticityError(f"Petrovskii margin {margin:g} <= 0 at t={t:g}")
        else:
            raise ValueError(f"unknown ellipticity_check {req.ellipticity_check!r}")


def _substeps(coeff: CoefficientTensor, t0: float, t1: float):
    """Split [t0, t1] at interior coefficient breakpoints."""
    cuts = coeff.breakpoints[(coeff.breakpoints > t0) & (coeff.breakpoints < t1)]
    edges = np.concatenate(([t0], cuts, [t1]))
    return [(edges[i], edges[i + 1]) for i in range(edges.size - 1)]


def _phi_weights_scalar(m_vals: np.ndarray, delta: float):
    """exp(-M delta) and int_0^delta exp(-M s) ds for scalar (n=1) symbols."""
    z = -m_vals * delta
    prop = np.exp(z)
    w = np.empty_like(z)
    small = np.abs(z) < 1e-12
    nz = ~small
    w[nz] = -np.expm1(z[nz]) / m_vals[nz]
    w[small] = delta * (1.0 + z[small] / 2.0)
    return prop, w


class _PropagatorCache:
    """exp(-M delta) / Duhamel weights per (interval, delta), all modes at once."""

    def __init__(self, symbols: np.ndarray, lam: float):
        # symbols: (n_modes, n_intervals, n, n)
        self.symbols = symbols
        self.lam = lam
        self.n = symbols.shape[-1]
        self._cache = {}

    def get(self, interval: int, delta: float):
        key = (interval, round(delta, 14))
        if key in self._cache:
            return self._cache[key]
        M = self.symbols[:, interval] + self.lam * np.eye(self.n)
        n_modes = M.shape[0]
        if self.n == 1:
            prop, w = _phi_weights_scalar(M[:, 0, 0], delta)
            pair = (prop.reshape(-1, 1, 1), w.reshape(-1, 1, 1))
        else:
            n = self.n
            prop = np.empty((n_modes, n, n), dtype=complex)
            wght = np.empty((n_modes, n, n), dtype=complex)
            aug = np.zeros((2 * n, 2 * n), dtype=complex)
            for i in range(n_modes):
                aug[:n, :n] = -M[i]
                aug[:n, n:] = np.eye(n)
                aug[n:, :] = 0.0
                E = expm(aug * delta)
                if not np.all(np.isfinite(E)):
                    raise NumericsError(f"matrix exponential overflowed for mode {i}")
                prop[i] = E[:n, :n]
                wght[i] = E[:n, n:]
            pair = (prop, wght)
        self._cache[key] = pair
        return pair


def solve_whole_space(req: SolveRequest) -> GridFunction:
    """Solve the requested torus problem; returns u on the forcing grid."""
    template = req.grid_template()
    times = template.times
    if times.size < 2:
        raise ValueError("need at least two time samples to step")
    _check_ellipticity(req, float(times[0]), float(times[-1]))

    dims = template.dims
    n = dims.n
    xis = _mode_lattice(template)
    n_modes = xis.shape[0]
    spatial_axes = tuple(range(1, 1 + dims.d))

    # per-mode symbols for every coefficient interval
    powers = np.stack(
        [core.monomial_power(xis, a) for a in req.coeff.leading_indices], axis=-1
    )  # (n_modes, N)
    symbols = np.einsum("ma,mb,kabij->mkij", powers, powers, req.coeff.blocks)

    # forcing in mode space: g_hat (nt, n_modes, n)
    g_hat = np.zeros((times.size, n_modes, n), dtype=complex)
    for alpha, f in req.forcing_map().items():
        if f.spatial_shape != template.spatial_shape or f.nt != times.size:
            raise ValueError("forcing fields must share grid and times")
        fh = np.fft.fftn(f.values, axes=spatial_axes).reshape(times.size, n_modes, n)
        factor = core.monomial_power(1j * xis.astype(complex), alpha)
        g_hat += factor[None, :, None] * fh

    u_hat = np.zeros((times.size, n_modes, n), dtype=complex)
    if req.initial is not None:
        # only the first stored slice seeds the state
        init0 = req.initial.values[0]
        u_hat[0] = np.fft.fftn(init0, axes=tuple(range(dims.d))).reshape(n_modes, n)

    cache = _PropagatorCache(symbols, req.lam)
    for k in range(times.size - 1):
        state = u_hat[k]
        g = g_hat[k]
        for (a, b) in _substeps(req.coeff, float(times[k]), float(times[k + 1])):
            prop, wght = cache.get(req.coeff.interval_of(0.5 * (a + b)), b - a)
            state = np.einsum("mij,mj->mi", prop, state) + np.einsum("mij,mj->mi", wght, g)
        u_hat[k + 1] = state

    values = np.fft.ifftn(
        u_hat.reshape((times.size,) + template.spatial_shape + (n,)), axes=spatial_axes
    )
    return template.with_values(values)


def time_derivative(req: SolveRequest, u: GridFunction) -> GridFunction:
    """u_t recovered from the equation residual (not finite differencing)."""
    dims = u.dims
    spatial_axes = tuple(range(1, 1 + dims.d))
    xis = _mode_lattice(u)
    powers = np.stack(
        [core.monomial_power(xis, a) for a in req.coeff.leading_indices], axis=-1
    )
    u_hat = np.fft.fftn(u.values, axes=spatial_axes).reshape(u.nt, xis.shape[0], dims.n)
    g_hat = np.zeros_like(u_hat)
    for alpha, f in req.forcing_map().items():
        fh = np.fft.fftn(f.values, axes=spatial_axes).reshape(u.nt, xis.shape[0], dims.n)
        g_hat += core.monomial_power(1j * xis.astype(complex), alpha)[None, :, None] * fh
    ut_hat = np.empty_like(u_hat)
    for k, t in enumerate(u.times):
        # left-step data: the hold value that produced the sample at t_k
        k_hold = max(min(k - 1, u.nt - 2), 0)
        interval = req.coeff.interval_of(float(0.5 * (u.times[k_hold] + u.times[k_hold + 1])))
        mats = np.einsum("ma,mb,abij->mij", powers, powers, req.coeff.blocks[interval])
        ut_hat[k] = g_hat[k_hold] - np.einsum("mij,mj->mi", mats + req.lam * np.eye(dims.n), u_hat[k])
    values = np.fft.ifftn(
        ut_hat.reshape((u.nt,) + u.spatial_shape + (dims.n,)), axes=spatial_axes
    )
    return u.with_values(values)


def _mode_l2_norms(u: GridFunction, alphas) -> dict:
    """L2 norms of D^alpha u for many alphas from one FFT pass (Parseval)."""
    dims = u.dims
    spatial_axes = tuple(range(1, 1 + dims.d))
    xis = _mode_lattice(u)
    u_hat = np.fft.fftn(u.values, axes=spatial_axes).reshape(u.nt, xis.shape[0], dims.n)
    amp2 = np.sum(np.abs(u_hat) ** 2, axis=-1)  # (nt, n_modes)
    w_t = np.ones(u.nt)
    if u.nt > 1:
        w_t[0] = w_t[-1] = 0.5
        w_t *= u.dt
    n_total = float(np.prod(u.spatial_shape))
    scale = u.cell_volume / n_total
    out = {}
    for alpha in alphas:
        alpha = as_multiindex(alpha)
        sym2 = np.abs(core.monomial_power(1j * xis.astype(complex), alpha)) ** 2
        out[alpha] = float(np.sqrt(scale * np.dot(w_t, amp2 @ sym2)))
    return out


def divergence_estimate_ratio(req: SolveRequest, u: GridFunction):
    """LHS/RHS of the divergence-form resolvent estimate, with breakdown.

    LHS = sum_{|a|<=m} lam^{1-|a|/2m} ||D^a u||, RHS = sum lam^{|a|/2m} ||f_a||.
    """
    if req.lam <= 0:
        raise DegenerateInputError("estimate ratio needs lambda > 0")
    dims = u.dims
    two_m = 2 * dims.m
    forcing = req.forcing_map()
    rhs_terms = {a: req.lam ** (a.order / two_m) * lp_norm(f, 2) for a, f in forcing.items()}
    rhs = sum(rhs_terms.values())
    if rhs == 0.0:
        raise DegenerateInputError("all forcing fields vanish; u = 0 and the ratio is 0/0")
    alphas = enumerate_multiindices_upto(dims, dims.m)
    norms = _mode_l2_norms(u, alphas)
    lhs_terms = {a: req.lam ** (1.0 - a.order / two_m) * norms[a] for a in alphas}
    lhs = sum(lhs_terms.values())
    return lhs / rhs, {"lhs": lhs, "rhs": rhs, "lhs_terms": lhs_terms, "rhs_terms": rhs_terms}


def nondivergence_estimate_ratio(req: SolveRequest, u: GridFunction):
    """(||u_t|| + sum_{|a|<=2m} lam^{1-|a|/2m} ||D^a u||) / ||f||."""
    if req.lam <= 0:
        raise DegenerateInputError("estimate ratio needs lambda > 0")
    if req.form != "nondivergence":
        raise ValueError("nondivergence ratio needs a nondivergence request")
    f = req.forcing
    if f is None:
        raise DegenerateInputError("forcing vanishes; the ratio is 0/0")
    rhs = lp_norm(f, 2)
    if rhs == 0.0:
        raise DegenerateInputError("forcing vanishes; the ratio is 0/0")
    dims = u.dims
    two_m = 2 * dims.m
    alphas = enumerate_multiindices_upto(dims, two_m)
    norms = _mode_l2_norms(u, alphas)
    ut_norm = lp_norm(time_derivative(req, u), 2)
    lhs_terms = {a: req.lam ** (1.0 - a.order / two_m) * norms[a] for a in alphas}
    lhs = ut_norm + sum(lhs_terms.values())
    return lhs / rhs, {"lhs": lhs, "rhs": rhs, "ut": ut_norm, "lhs_terms": lhs_terms}


def _trig_lift(lam: float, m: int, y: np.ndarray, order: int) -> np.ndarray:
    """order-th derivative of cos(mu y) + sin(mu y), mu = lam^(1/2m), exactly."""
    mu = lam ** (1.0 / (2 * m))
    phase = 0.5 * np.pi * order
    return mu**order * (np.cos(mu * y + phase) + np.sin(mu * y + phase))


def agmon_lift_check(lam: float, m: int, grid) -> float:
    """Max residual of the lifted-variable identities for zeta(y).

    Checks (-1)^m D^{2m} zeta = lam * zeta on the sample grid, zeta(0) = 1,
    and |D^m zeta(0)| = sqrt(lam).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    y = np.asarray(grid, dtype=float)
    zeta = _trig_lift(lam, m, y, 0)
    d2m = _trig_lift(lam, m, y, 2 * m)
    res = float(np.max(np.abs((-1.0) ** m * d2m - lam * zeta)))
    res = max(res, abs(_trig_lift(lam, m, np.zeros(1), 0)[0] - 1.0))
    res = max(res, abs(abs(_trig_lift(lam, m, np.zeros(1), m)[0]) - np.sqrt(lam)))
    return res

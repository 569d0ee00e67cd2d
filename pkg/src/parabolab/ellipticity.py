"""Ellipticity constants of the leading symbol and constructive certificates.

Three nested conditions are measured for leading coefficients A^{ab}(t),
|a| = |b| = m (n x n complex blocks indexed by multi-index pairs):

* strong ellipticity: the Hermitian part of the full (N n) x (N n) block
  matrix is positive definite;
* Legendre-Hadamard: positivity of Re(theta* S(xi) theta) / |xi|^{2m} over
  real directions xi and complex amplitudes theta;
* Petrovskii parabolicity: every eigenvalue of the normalized symbol has
  positive real part.

The certificate route: a Schur factorization of the normalized symbol plus a
weighted diagonal B = diag(eps^{n-1}, ..., eps, 1) chosen so that the
Hermitian part of B U is positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import schur
from scipy.optimize import minimize

from .core import MultiIndex, ProblemDims, enumerate_multiindices, monomial_power
from .errors import CertificateError, EllipticityError

_EPS_FLOOR = 2.0**-60


@dataclass(frozen=True)
class CoefficientTensor:
    """Leading coefficients A^{ab}(t), piecewise constant in time.

    blocks[k, a, b] is the n x n matrix for the multi-index pair
    (alpha_a, alpha_b) on the k-th time interval; interval k covers
    [breakpoints[k-1], breakpoints[k]) with open ends at +-infinity, so
    ``len(blocks) == len(breakpoints) + 1``.  Every entry modulus is bounded
    by delta_inv.
    """

    dims: ProblemDims
    breakpoints: np.ndarray
    blocks: np.ndarray
    delta_inv: float

    def __post_init__(self):
        bp = np.atleast_1d(np.asarray(self.breakpoints, dtype=float)) if np.size(self.breakpoints) else np.zeros(0)
        blocks = np.asarray(self.blocks, dtype=complex)
        N, n = self.dims.n_leading, self.dims.n
        if blocks.shape != (bp.size + 1, N, N, n, n):
            raise ValueError(
                f"blocks shape {blocks.shape} != (intervals={bp.size + 1}, {N}, {N}, {n}, {n})"
            )
        if bp.size and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.delta_inv <= 0:
            raise ValueError("delta_inv must be positive")
        worst = float(np.max(np.abs(blocks))) if blocks.size else 0.0
        if worst > self.delta_inv * (1 + 1e-12):
            raise ValueError(f"entry modulus {worst:g} exceeds delta_inv={self.delta_inv:g}")
        bp.setflags(write=False)
        blocks.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "blocks", blocks)

    @property
    def leading_indices(self):
        return enumerate_multiindices(self.dims, self.dims.m)

    @property
    def n_intervals(self) -> int:
        return self.blocks.shape[0]

    def interval_of(self, t: float) -> int:
        return int(np.searchsorted(self.breakpoints, t, side="right"))

    def block_at(self, t: float) -> np.ndarray:
        return self.blocks[self.interval_of(t)]

    def interval_times(self, t_start: float, t_end: float) -> np.ndarray:
        """One representative time per interval overlapping [t_start, t_end]."""
        edges = np.concatenate(([t_start], self.breakpoints[(self.breakpoints > t_start) & (self.breakpoints < t_end)], [t_end]))
        return 0.5 * (edges[:-1] + edges[1:])


def identity_tensor(dims: ProblemDims, scale: float = 1.0, weights: str = "kronecker") -> CoefficientTensor:
    """Diagonal tensor A^{ab} = scale * w_a * delta_{ab} * I_n.

    weights="multinomial" uses w_a = m!/a! so the leading symbol equals
    scale * |xi|^{2m} exactly (polyharmonic normalization); "kronecker" uses
    w_a = 1.
    """
    import math

    idx = enumerate_multiindices(dims, dims.m)
    N, n = len(idx), dims.n
    blocks = np.zeros((1, N, N, n, n), dtype=complex)
    for a, alpha in enumerate(idx):
        w = 1.0
        if weights == "multinomial":
            w = math.factorial(dims.m) / np.prod([math.factorial(e) for e in alpha.entries])
        blocks[0, a, a] = scale * w * np.eye(n)
    bound = float(np.max(np.abs(blocks)))
    return CoefficientTensor(dims, np.zeros(0), blocks, max(bound, 1.0))


@dataclass(frozen=True)
class SymbolMatrix:
    """Normalized symbol |xi|^{-2m} sum_{ab} xi^a xi^b A^{ab}(t); degree-0 in xi."""

    value: np.ndarray
    t: float
    xi: tuple


@dataclass(frozen=True)
class EnergyCertificate:
    """Weighted-diagonal energy certificate for an upper-triangular factor U.

    Guarantees Re(x* B U x) >= delta1 |x|^2 with B = diag(eps^{n-1},...,1).
    ``schur_unitary``/``schur_triangular`` are populated when the certificate
    was derived from a Schur factorization of a symbol matrix.
    """

    epsilon: float
    delta1: float
    b_diag: np.ndarray
    triangular: np.ndarray
    schur_unitary: np.ndarray | None = None

    @property
    def B(self) -> np.ndarray:
        return np.diag(self.b_diag)

    def revalidate(self) -> float:
        """Recompute min-eig(Herm(B U)); certificate is valid iff >= delta1."""
        BU = self.B @ self.triangular
        return float(np.linalg.eigvalsh(0.5 * (BU + BU.conj().T))[0])


def _raw_symbol(A: CoefficientTensor, t: float, xi: np.ndarray) -> np.ndarray:
    """sum_{ab} xi^a xi^b A^{ab}(t) without the |xi|^{-2m} normalization."""
    block = A.block_at(t)
    powers = np.array([monomial_power(xi, alpha) for alpha in A.leading_indices])
    return np.einsum("a,b,abij->ij", powers, powers, block)


def _raw_symbols_batch(A: CoefficientTensor, t: float, xis: np.ndarray) -> np.ndarray:
    block = A.block_at(t)
    powers = np.stack([monomial_power(xis, alpha) for alpha in A.leading_indices], axis=-1)
    return np.einsum("...a,...b,abij->...ij", powers, powers, block)


def symbol_matrix(A: CoefficientTensor, t: float, xi) -> SymbolMatrix:
    xi = np.asarray(xi, dtype=float)
    norm = np.linalg.norm(xi)
    if norm == 0.0:
        raise ValueError("symbol is undefined at xi = 0")
    value = _raw_symbol(A, t, xi) / norm ** (2 * A.dims.m)
    return SymbolMatrix(value=value, t=float(t), xi=tuple(xi))


def sphere_directions(d: int, count: int = 2048) -> np.ndarray:
    """Deterministic quasi-uniform sample of the unit sphere in R^d."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # seeded Gaussian directions; adequate quasi-uniformity for d <= 4
    rng = np.random.default_rng(20080424)
    pts = rng.standard_normal((max(count, 2048), d))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _min_over_sphere(objective_batch, objective_one, d: int, count: int, refine: bool):
    dirs = sphere_directions(d, count)
    vals = objective_batch(dirs)
    best = float(np.min(vals))
    if not refine or d == 1:
        return best
    order = np.argsort(vals)[:10]
    for i in order:
        res = minimize(
            lambda x: objective_one(x / np.linalg.norm(x)),
            dirs[i],
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 400},
        )
        if np.linalg.norm(res.x) > 0:
            best = min(best, float(objective_one(res.x / np.linalg.norm(res.x))))
    return best


def lh_constant(A: CoefficientTensor, t: float, directions: int = 2048, refine: bool = True) -> float:
    """Legendre-Hadamard constant at time t.

    The complex-amplitude minimization is exact (smallest eigenvalue of the
    Hermitian part); only the real direction sphere is sampled, coarse scan
    plus local refinement.  The result is a measured lower bound of the
    margin, and may be <= 0 when the condition fails.
    """

    def batch(dirs):
        sym = _raw_symbols_batch(A, t, dirs)
        herm = 0.5 * (sym + np.conj(np.swapaxes(sym, -1, -2)))
        return np.linalg.eigvalsh(herm)[..., 0]

    def one(xi):
        sym = _raw_symbol(A, t, xi)
        return float(np.linalg.eigvalsh(0.5 * (sym + sym.conj().T))[0])

    return _min_over_sphere(batch, one, A.dims.d, directions, refine)


def strong_ellipticity_constant(A: CoefficientTensor, t: float) -> float:
    """Smallest eigenvalue of the Hermitian part of the (Nn) x (Nn) block matrix."""
    block = A.block_at(t)
    N, n = block.shape[0], block.shape[2]
    G = block.transpose(0, 2, 1, 3).reshape(N * n, N * n)
    return float(np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0])


def petrovskii_margin(A: CoefficientTensor, t: float, directions: int = 2048, refine: bool = True) -> float:
    """min over sampled unit xi of min_j Re(lambda_j) of the normalized symbol."""

    def batch(dirs):
        sym = _raw_symbols_batch(A, t, dirs)  # |xi|=1, so already normalized
        return np.min(np.real(np.linalg.eigvals(sym)), axis=-1)

    def one(xi):
        sym = _raw_symbol(A, t, np.asarray(xi))
        return float(np.min(np.real(np.linalg.eigvals(sym))))

    return _min_over_sphere(batch, one, A.dims.d, directions, refine)


def weighted_diag_certificate(U, delta: float) -> EnergyCertificate:
    """Certificate for upper-triangular U with Re(diag) >= delta, |U| <= 1/delta.

    Halves eps from 1 until Herm(BU) is positive definite (floor 2^-60); the
    first eps that works wins and delta1 is the achieved minimum eigenvalue.
    """
    U = np.asarray(U, dtype=complex)
    n = U.shape[0]
    if U.shape != (n, n):
        raise ValueError("U must be square")
    if delta <= 0:
        raise CertificateError("delta must be positive")
    lower = np.tril(U, -1)
    if np.max(np.abs(lower)) > 1e-10 * max(1.0, np.max(np.abs(U))):
        raise CertificateError("U is not upper triangular")
    if np.max(np.abs(U)) > (1.0 / delta) * (1 + 1e-9):
        raise CertificateError(
            f"entry modulus {np.max(np.abs(U)):g} exceeds 1/delta = {1.0 / delta:g}"
        )
    if np.min(np.real(np.diag(U))) < delta * (1 - 1e-9):
        raise CertificateError(
            f"Re(diagonal) min {np.min(np.real(np.diag(U))):g} below delta = {delta:g}"
        )
    eps = 1.0
    while eps >= _EPS_FLOOR:
        b = eps ** np.arange(n - 1, -1, -1, dtype=float)
        BU = b[:, None] * U
        lam = float(np.linalg.eigvalsh(0.5 * (BU + BU.conj().T))[0])
        if lam > 0.0:
            return EnergyCertificate(epsilon=eps, delta1=lam, b_diag=b, triangular=U)
        eps *= 0.5
    raise CertificateError("no eps >= 2^-60 makes Herm(BU) positive definite")


def schur_energy_certificate(A: CoefficientTensor, t: float, xi) -> EnergyCertificate:
    """Schur-factorize the normalized symbol and certify its triangular factor.

    Returns the certificate with the unitary factor attached; unitarity and
    reconstruction residuals are required to be <= 1e-10.
    """
    sym = symbol_matrix(A, t, xi).value
    n = sym.shape[0]
    U, Z = schur(sym, output="complex")
    Q = Z.conj().T  # sym = Q^H U Q
    if np.max(np.abs(Q @ Q.conj().T - np.eye(n))) > 1e-10:
        raise EllipticityError("Schur unitary factor failed the 1e-10 unitarity check")
    if np.max(np.abs(Q.conj().T @ U @ Q - sym)) > 1e-10 * max(1.0, np.max(np.abs(sym))):
        raise EllipticityError("Schur reconstruction residual exceeds 1e-10")
    margin = float(np.min(np.real(np.diag(U))))
    if margin <= 0:
        raise EllipticityError(
            f"Petrovskii margin {margin:g} <= 0 at xi={tuple(np.asarray(xi))}; certificate refused"
        )
    delta = min(margin, 1.0 / max(float(np.max(np.abs(U))), 1e-300))
    cert = weighted_diag_certificate(U, delta)
    return EnergyCertificate(
        epsilon=cert.epsilon,
        delta1=cert.delta1,
        b_diag=cert.b_diag,
        triangular=U,
        schur_unitary=Q,
    )

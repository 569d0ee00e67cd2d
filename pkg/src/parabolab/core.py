"""Shared vocabulary: multi-indices, parabolic cylinders, sampled fields.

Fields live on uniform tensor grids.  Periodic axes sample ``origin + i*L/N``
for ``i = 0..N-1`` (no duplicated endpoint); non-periodic axes sample
``origin + i*L/(N-1)`` including both endpoints.  Values are complex
n-vectors at each (time, space) node, stored time-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .errors import NonPeriodicAxisError, UnderResolvedCylinderError

MIN_CYLINDER_NODES = 8  # cylinders with fewer sampled nodes are rejected


@dataclass(frozen=True)
class MultiIndex:
    """A d-tuple of nonnegative integers addressing one spatial derivative."""

    entries: tuple

    def __post_init__(self):
        ent = tuple(int(e) for e in self.entries)
        if len(ent) < 1 or any(e < 0 for e in ent):
            raise ValueError(f"invalid multi-index entries {self.entries}")
        object.__setattr__(self, "entries", ent)

    @property
    def order(self) -> int:
        return sum(self.entries)

    @property
    def d(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __len__(self):
        return len(self.entries)

    def __add__(self, other):
        other = as_multiindex(other)
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        return MultiIndex(tuple(a + b for a, b in zip(self.entries, other.entries)))


def as_multiindex(alpha) -> MultiIndex:
    if isinstance(alpha, MultiIndex):
        return alpha
    if isinstance(alpha, int):
        return MultiIndex((alpha,))
    return MultiIndex(tuple(alpha))


@dataclass(frozen=True)
class ProblemDims:
    """Spatial dimension d, half-order m (system order 2m), n equations."""

    d: int
    m: int
    n: int

    def __post_init__(self):
        if self.d < 1 or self.m < 1 or self.n < 1:
            raise ValueError(f"dims must be positive, got {self}")

    @property
    def n_leading(self) -> int:
        """Number of multi-indices of order m: C(m+d-1, d-1)."""
        return math.comb(self.m + self.d - 1, self.d - 1)


def enumerate_multiindices(dims, order: int):
    """All multi-indices of the given order, leading entries largest first.

    ``dims`` may be a ProblemDims or a plain spatial dimension.
    """
    d = dims.d if isinstance(dims, ProblemDims) else int(dims)
    if order < 0:
        raise ValueError("order must be >= 0")

    def rec(remaining, axes):
        if axes == 1:
            yield (remaining,)
            return
        for lead in range(remaining, -1, -1):
            for tail in rec(remaining - lead, axes - 1):
                yield (lead,) + tail

    return [MultiIndex(t) for t in rec(order, d)]


def enumerate_multiindices_upto(dims, max_order: int):
    """Multi-indices of every order 0..max_order, ordered by order then as above."""
    out = []
    for k in range(max_order + 1):
        out.extend(enumerate_multiindices(dims, k))
    return out


def monomial_power(xi, alpha) -> complex:
    """prod_i xi_i**alpha_i with the empty-product convention 0**0 = 1."""
    alpha = as_multiindex(alpha)
    xi = np.asarray(xi)
    if xi.shape[-1] != alpha.d:
        raise ValueError("xi and alpha lengths disagree")
    out = np.ones(xi.shape[:-1], dtype=xi.dtype)
    for i, a in enumerate(alpha):
        if a:
            out = out * xi[..., i] ** a
    return out if out.shape else out[()]


@dataclass(frozen=True)
class ParabolicCylinder:
    """Q_r(t0, x0) = (t0 - r^{2m}, t0] x B_r(x0), the 2m-anisotropic region."""

    center_t: float
    center_x: tuple
    radius: float
    half_order: int

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.half_order < 1:
            raise ValueError("half_order must be >= 1")
        object.__setattr__(self, "center_x", tuple(float(c) for c in self.center_x))

    @property
    def time_extent(self) -> float:
        return self.radius ** (2 * self.half_order)

    @property
    def t_lo(self) -> float:
        return self.center_t - self.time_extent

    def dilated(self, kappa: float) -> "ParabolicCylinder":
        return ParabolicCylinder(self.center_t, self.center_x, kappa * self.radius, self.half_order)


@dataclass(frozen=True)
class CylinderQuery:
    """A base cylinder together with a dilation factor kappa >= 1."""

    base: ParabolicCylinder
    kappa: float

    def __post_init__(self):
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")

    @property
    def dilated(self) -> ParabolicCylinder:
        return self.base.dilated(self.kappa)


@dataclass(frozen=True)
class GridFunction:
    """Complex n-vector field sampled on a uniform (time x space) grid.

    values has shape (nt, *spatial_shape, n).  ``periodic[j]`` marks axis j
    as a torus axis (length ``lengths[j]``, no endpoint duplication).
    """

    dims: ProblemDims
    origin: tuple
    lengths: tuple
    periodic: tuple
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "periodic", tuple(bool(v) for v in self.periodic))
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=complex)
        d = self.dims.d
        if len(self.origin) != d or len(self.lengths) != d or len(self.periodic) != d:
            raise ValueError("axis metadata length must equal d")
        if values.ndim != d + 2:
            raise ValueError(f"values must have shape (nt, *spatial, n); got {values.shape}")
        if values.shape[0] != times.size or values.shape[-1] != self.dims.n:
            raise ValueError(f"value shape {values.shape} inconsistent with nt={times.size}, n={self.dims.n}")
        if times.size > 1:
            dt = np.diff(times)
            if not np.allclose(dt, dt[0], rtol=1e-10, atol=1e-14):
                raise ValueError("time samples must be uniform")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def spatial_shape(self) -> tuple:
        return self.values.shape[1:-1]

    @property
    def nt(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.nt > 1 else 0.0

    def spacing(self, axis: int) -> float:
        npts = self.spatial_shape[axis]
        if self.periodic[axis]:
            return self.lengths[axis] / npts
        if npts < 2:
            raise ValueError("non-periodic axis needs >= 2 points")
        return self.lengths[axis] / (npts - 1)

    def axis_coords(self, axis: int) -> np.ndarray:
        npts = self.spatial_shape[axis]
        return self.origin[axis] + self.spacing(axis) * np.arange(npts)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([self.spacing(j) for j in range(self.dims.d)]))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.dims, self.origin, self.lengths, self.periodic, self.times, values)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


def torus_grid(dims: ProblemDims, n_points, times, values=None, length=2.0 * np.pi) -> GridFunction:
    """Canonical whole-space proxy: a periodic torus of side 2*pi per axis."""
    if np.isscalar(n_points):
        n_points = (int(n_points),) * dims.d
    shape = tuple(int(p) for p in n_points)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if values is None:
        values = np.zeros((times.size,) + shape + (dims.n,), dtype=complex)
    return GridFunction(
        dims=dims,
        origin=(0.0,) * dims.d,
        lengths=(float(length),) * dims.d,
        periodic=(True,) * dims.d,
        times=times,
        values=values,
    )


def slab_grid(dims: ProblemDims, depth, normal_points, tangential_points, times,
              values=None, tangential_length=2.0 * np.pi) -> GridFunction:
    """Half-space proxy: axis 0 is a clamped slab (0, depth), the rest a torus."""
    shape = (int(normal_points) + 1,) + ((int(tangential_points),) * (dims.d - 1) if dims.d > 1 else ())
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if values is None:
        values = np.zeros((times.size,) + shape + (dims.n,), dtype=complex)
    return GridFunction(
        dims=dims,
        origin=(0.0,) * dims.d,
        lengths=(float(depth),) + ((float(tangential_length),) * (dims.d - 1) if dims.d > 1 else ()),
        periodic=(False,) + ((True,) * (dims.d - 1) if dims.d > 1 else ()),
        times=times,
        values=values,
    )


def sample_grid(grid: GridFunction, fn) -> GridFunction:
    """Fill a grid by evaluating fn(t, X) where X is a stacked coordinate array."""
    coords = np.meshgrid(*[grid.axis_coords(j) for j in range(grid.dims.d)], indexing="ij")
    X = np.stack(coords, axis=-1)
    vals = np.empty((grid.nt,) + grid.spatial_shape + (grid.dims.n,), dtype=complex)
    for k, t in enumerate(grid.times):
        out = np.asarray(fn(t, X), dtype=complex)
        if out.shape == grid.spatial_shape:
            out = out[..., None] * np.ones(grid.dims.n)
        vals[k] = out
    return grid.with_values(vals)


def frequencies(grid: GridFunction, axis: int) -> np.ndarray:
    """Integer-lattice frequencies scaled to the axis length (2*pi/L * k)."""
    if not grid.periodic[axis]:
        raise NonPeriodicAxisError(f"axis {axis} is not periodic")
    npts = grid.spatial_shape[axis]
    return 2.0 * np.pi / grid.lengths[axis] * np.fft.fftfreq(npts, d=1.0 / npts)


def spectral_derivative(u: GridFunction, alpha) -> GridFunction:
    """D^alpha via Fourier symbol multiplication; exact on band-limited fields."""
    alpha = as_multiindex(alpha)
    if alpha.d != u.dims.d:
        raise ValueError("alpha dimension mismatch")
    for j, a in enumerate(alpha):
        if a and not u.periodic[j]:
            raise NonPeriodicAxisError(
                f"spectral derivative along non-periodic axis {j}; use the half-space operators"
            )
    if alpha.order == 0:
        return u
    axes = [1 + j for j in range(u.dims.d) if alpha[j]]
    hat = np.fft.fftn(u.values, axes=axes)
    for j, a in enumerate(alpha):
        if not a:
            continue
        xi = frequencies(u, j)
        shape = [1] * hat.ndim
        shape[1 + j] = xi.size
        hat = hat * (1j * xi.reshape(shape)) ** a
    return u.with_values(np.fft.ifftn(hat, axes=axes))


def _periodic_delta(coords, center, length, periodic):
    delta = coords - center
    if periodic:
        delta = (delta + 0.5 * length) % length - 0.5 * length
    return delta


def cylinder_mask(g: GridFunction, Q: ParabolicCylinder):
    """(time_index_array, spatial_bool_mask) of nodes inside Q.

    Times lie in (t0 - r^{2m}, t0] up to a half-spacing tolerance so that a
    cylinder centered on a sample always owns that sample.
    """
    if Q.half_order != g.dims.m:
        raise ValueError("cylinder half_order disagrees with field dims.m")
    tol = 1e-9 * max(g.dt, 1.0) + 1e-12
    t_in = np.nonzero((g.times > Q.t_lo - tol) & (g.times <= Q.center_t + tol))[0]
    dist2 = np.zeros(g.spatial_shape)
    for j in range(g.dims.d):
        delta = _periodic_delta(g.axis_coords(j), Q.center_x[j], g.lengths[j], g.periodic[j])
        shape = [1] * g.dims.d
        shape[j] = delta.size
        dist2 = dist2 + delta.reshape(shape) ** 2
    space_mask = dist2 < Q.radius**2
    return t_in, space_mask


def cylinder_node_count(g: GridFunction, Q: ParabolicCylinder) -> int:
    t_in, mask = cylinder_mask(g, Q)
    return int(t_in.size * np.count_nonzero(mask))


def _require_resolved(g, Q):
    t_in, mask = cylinder_mask(g, Q)
    count = t_in.size * int(np.count_nonzero(mask))
    if count < MIN_CYLINDER_NODES:
        raise UnderResolvedCylinderError(
            f"cylinder r={Q.radius:g} at t={Q.center_t:g} intersects {count} nodes "
            f"(< {MIN_CYLINDER_NODES}); refine the grid or enlarge r"
        )
    return t_in, mask


def cylinder_values(g: GridFunction, Q: ParabolicCylinder) -> np.ndarray:
    """All node values inside Q, shape (n_nodes, n)."""
    t_in, mask = _require_resolved(g, Q)
    return g.values[t_in][:, mask, :].reshape(-1, g.dims.n)


def cylinder_mean(g: GridFunction, Q: ParabolicCylinder) -> np.ndarray:
    """Componentwise nodal mean over Q (midpoint quadrature)."""
    return cylinder_values(g, Q).mean(axis=0)


def lp_norm(g: GridFunction, p: float, region: ParabolicCylinder | None = None) -> float:
    """(sum |g|^p * cellvolume)^{1/p}; |g| is the pointwise Euclidean modulus.

    Time quadrature is composite trapezoid over the stored samples; a single
    stored time carries no time weight.  ``region`` restricts to a cylinder
    (nodal membership, uniform weights).
    """
    if not np.isfinite(p) or p <= 0:
        raise ValueError("p must be a finite positive exponent")
    amp2 = np.sum(np.abs(g.values) ** 2, axis=-1)
    if region is not None:
        t_in, mask = _require_resolved(g, region)
        chunk = amp2[t_in][:, mask]
        total = float(np.sum(chunk ** (p / 2.0)))
        weight = g.cell_volume * (g.dt if g.nt > 1 else 1.0)
        return (total * weight) ** (1.0 / p)
    w_t = np.ones(g.nt)
    if g.nt > 1:
        w_t[0] = w_t[-1] = 0.5
        w_t *= g.dt
    per_slice = np.sum(amp2 ** (p / 2.0), axis=tuple(range(1, amp2.ndim)))
    return float((np.dot(w_t, per_slice) * g.cell_volume) ** (1.0 / p))


# -- serialization ----------------------------------------------------------
#
# CSV layout (documented): comment header with axis metadata, then one row
# per (time, node, component) in time-major order, nodes in lexicographic
# index order, components innermost:
#     t_index, i_1, ..., i_d, component, re, im

def write_grid_csv(g: GridFunction, path) -> None:
    import json

    meta = {
        "d": g.dims.d,
        "m": g.dims.m,
        "n": g.dims.n,
        "origin": list(g.origin),
        "lengths": list(g.lengths),
        "periodic": [int(b) for b in g.periodic],
        "spatial_shape": list(g.spatial_shape),
        "times": [repr(float(t)) for t in g.times],
    }
    nt = g.nt
    n = g.dims.n
    idx = np.indices((nt,) + g.spatial_shape + (n,)).reshape(2 + g.dims.d, -1).T
    flat = g.values.reshape(-1)
    with open(path, "w") as fh:
        fh.write("# parabolab-grid v1\n")
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("t_index," + ",".join(f"i{j+1}" for j in range(g.dims.d)) + ",component,re,im\n")
        for row, v in zip(idx, flat):
            fh.write(",".join(str(int(c)) for c in row) + f",{float(v.real)!r},{float(v.imag)!r}\n")


def read_grid_csv(path) -> GridFunction:
    import json

    with open(path) as fh:
        magic = fh.readline()
        if not magic.startswith("# parabolab-grid"):
            raise ValueError(f"{path} is not a parabolab grid CSV")
        meta = json.loads(fh.readline().lstrip("# "))
        fh.readline()  # column header
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    dims = ProblemDims(meta["d"], meta["m"], meta["n"])
    shape = (len(meta["times"]),) + tuple(meta["spatial_shape"]) + (meta["n"],)
    values = np.zeros(shape, dtype=complex)
    flat_idx = np.ravel_multi_index(
        tuple(data[:, j].astype(int) for j in range(2 + meta["d"])), shape
    )
    values.reshape(-1)[flat_idx] = data[:, -2] + 1j * data[:, -1]
    return GridFunction(
        dims=dims,
        origin=tuple(meta["origin"]),
        lengths=tuple(meta["lengths"]),
        periodic=tuple(bool(b) for b in meta["periodic"]),
        times=np.array([float(t) for t in meta["times"]]),
        values=values,
    )

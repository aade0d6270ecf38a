"""Periodic spectral grid, transforms, differentiation and dealiased products.

Everything downstream (block decompositions, norms, the time stepper)
computes on the objects defined here.  Conventions, fixed once:

* the torus is ``[0, 2*pi*M)**d`` with ``N`` points per dimension,
  ``x_i = 2*pi*M*i/N``;
* the frequency lattice is ``xi = m/M`` for integer vectors
  ``m in [-N/2, N/2)**d`` in standard FFT layout;
* physical -> spectral includes the ``1/N**d`` factor, so a single mode
  ``exp(i*m.x/M)`` has coefficient 1 at lattice point ``m``;
* Parseval therefore reads ``||f||_2**2 = (2*pi*M)**d * sum |c|**2``;
* quadratic terms are dealiased with the 2/3 rule: after a product,
  every coefficient with any ``|m_i| > cutoff*N/2`` is zeroed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

__all__ = [
    "Grid",
    "SpectralField",
    "GridMismatchError",
    "from_physical",
    "to_physical",
    "roundtrip",
    "derivative",
    "gradient",
    "divergence",
    "laplacian",
    "dealiased_product",
    "advection_term",
    "lp_norm",
    "l2_norm_spectral",
    "write_snapshot",
    "read_snapshot",
    "SnapshotFormatError",
]

_CONVENTION_TAG = b"fwd=1/N^d;xi=m/M"  # 16 bytes, embedded in snapshot headers
_MAGIC = b"TORUSFLD"
_HEADER = struct.Struct("<8sH16sBBIId")


class GridMismatchError(ValueError):
    """Raised when an operation mixes fields from different grids."""


class SnapshotFormatError(ValueError):
    """Raised by the snapshot reader on wrong magic/version/convention."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Discretization of the periodic box ``[0, 2*pi*M)**d``.

    ``N`` and ``M`` must be powers of two: ``N`` for the FFT, ``M`` so that
    the lowest nonzero lattice frequency ``1/M`` sits exactly on a dyadic
    block boundary (the block toolkit relies on this alignment).
    """

    d: int
    N: int
    M: int = 16
    dealias_cutoff: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if not _is_pow2(self.N) or self.N < 8:
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if not _is_pow2(self.M):
            raise ValueError(f"M must be a power of two >= 1, got {self.M}")
        if not 0.0 < self.dealias_cutoff <= 1.0:
            raise ValueError("dealias_cutoff must lie in (0, 1]")

    # -- cached lattice machinery ------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def dx(self) -> float:
        return 2.0 * np.pi * self.M / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def volume(self) -> float:
        return (2.0 * np.pi * self.M) ** self.d

    def _cache(self) -> dict:
        cache = _GRID_CACHE.get(self.key())
        if cache is None:
            cache = _build_cache(self)
            _GRID_CACHE[self.key()] = cache
        return cache

    def key(self) -> tuple:
        return (self.d, self.N, self.M, self.dealias_cutoff)

    @property
    def modes(self) -> tuple[np.ndarray, ...]:
        """Integer mode numbers per axis, broadcastable to ``shape``."""
        return self._cache()["modes"]

    @property
    def xi(self) -> tuple[np.ndarray, ...]:
        """Frequency ``m/M`` per axis, broadcastable to ``shape``."""
        return self._cache()["xi"]

    @property
    def xi_abs(self) -> np.ndarray:
        """Euclidean norm of the lattice frequency, shape ``shape``."""
        return self._cache()["xi_abs"]

    @property
    def xi_sq(self) -> np.ndarray:
        return self._cache()["xi_sq"]

    @property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask of modes kept by the 2/3 rule."""
        return self._cache()["dealias_mask"]

    @property
    def xi_abs_max_dealiased(self) -> float:
        return self._cache()["xi_abs_max_dealiased"]

    def axes(self) -> tuple[np.ndarray, ...]:
        """Physical coordinates per axis (1d arrays)."""
        x = 2.0 * np.pi * self.M * np.arange(self.N) / self.N
        return tuple(x for _ in range(self.d))

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))


_GRID_CACHE: dict[tuple, dict] = {}


def _build_cache(grid: Grid) -> dict:
    n, d = grid.N, grid.d
    m1 = np.fft.fftfreq(n, d=1.0 / n)  # integer modes in FFT layout
    modes = []
    for axis in range(d):
        shape = [1] * d
        shape[axis] = n
        modes.append(m1.reshape(shape))
    xi = tuple(m / grid.M for m in modes)
    xi_sq = sum(x**2 for x in xi)
    xi_abs = np.sqrt(xi_sq)
    mcut = grid.dealias_cutoff * n / 2.0
    mask = np.ones(grid.shape, dtype=bool)
    for m in modes:
        mask &= np.abs(m) <= mcut
    return {
        "modes": tuple(modes),
        "xi": xi,
        "xi_sq": xi_sq + np.zeros(grid.shape),
        "xi_abs": xi_abs + np.zeros(grid.shape),
        "dealias_mask": mask,
        "xi_abs_max_dealiased": float(np.max(xi_abs[mask] if mask.ndim else xi_abs)),
    }


@dataclass(frozen=True)
class SpectralField:
    """Scalar or vector field stored as Fourier coefficients.

    ``coeffs`` has shape ``grid.shape`` for a scalar and
    ``(k,) + grid.shape`` for a ``k``-component field.  Fields are values:
    treat them as immutable (the constructor locks the array).
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.shape and c.shape[1:] != self.grid.shape:
            raise GridMismatchError(
                f"coefficient shape {c.shape} does not match grid {self.grid.shape}"
            )
        if c is not self.coeffs or c.flags.writeable:
            c = c.copy() if c is self.coeffs else c
            c.flags.writeable = False
            object.__setattr__(self, "coeffs", c)

    @property
    def components(self) -> int:
        return 1 if self.coeffs.shape == self.grid.shape else self.coeffs.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.coeffs.shape == self.grid.shape

    def component(self, i: int) -> "SpectralField":
        if self.is_scalar:
            if i != 0:
                raise IndexError("scalar field has a single component")
            return self
        return SpectralField(self.grid, self.coeffs[i])

    def mean(self) -> float | np.ndarray:
        zero = (0,) * self.grid.d
        if self.is_scalar:
            return float(self.coeffs[zero].real)
        return self.coeffs[(slice(None),) + zero].real.copy()

    def hermitian_defect(self) -> float:
        """Relative deviation from the real-field symmetry c(-m) = conj(c(m))."""
        c = self.coeffs
        axes = tuple(range(c.ndim - self.grid.d, c.ndim))
        mirrored = _reverse_modes(c, axes)
        scale = np.max(np.abs(c))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(c - np.conj(mirrored))) / scale)

    # value-style arithmetic used by tests and diagnostics
    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    @staticmethod
    def zeros(grid: Grid, components: int = 1) -> "SpectralField":
        shape = grid.shape if components == 1 else (components,) + grid.shape
        return SpectralField(grid, np.zeros(shape, dtype=np.complex128))


def _reverse_modes(c: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    out = c
    for ax in axes:
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid.key() != b.grid.key():
        raise GridMismatchError("fields live on different grids")


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def spectral_from_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Raw physical -> spectral transform (arrays, hot-path form)."""
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    return _fft.fftn(values, axes=axes) / grid.N**grid.d


def values_from_spectral(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Raw spectral -> physical transform; returns the real part."""
    axes = tuple(range(coeffs.ndim - grid.d, coeffs.ndim))
    return _fft.ifftn(coeffs, axes=axes).real * grid.N**grid.d


def from_physical(grid: Grid, values: np.ndarray) -> SpectralField:
    return SpectralField(grid, spectral_from_values(grid, np.asarray(values, dtype=float)))


def to_physical(f: SpectralField) -> np.ndarray:
    return values_from_spectral(f.grid, f.coeffs)


def roundtrip(f: SpectralField) -> SpectralField:
    """to_physical then to_spectral; identity up to rounding for real fields."""
    return from_physical(f.grid, to_physical(f))


# ---------------------------------------------------------------------------
# calculus
# ---------------------------------------------------------------------------

def derivative(f: SpectralField, axis: int) -> SpectralField:
    if axis >= f.grid.d:
        raise ValueError(f"axis {axis} out of range for d={f.grid.d}")
    return SpectralField(f.grid, f.coeffs * (1j * f.grid.xi[axis]))


def gradient(f: SpectralField) -> SpectralField:
    """Gradient of a scalar field as a d-component field."""
    if not f.is_scalar:
        raise ValueError("gradient expects a scalar field")
    g = f.grid
    out = np.empty((g.d,) + g.shape, dtype=np.complex128)
    for ax in range(g.d):
        out[ax] = f.coeffs * (1j * g.xi[ax])
    return SpectralField(g, out)


def divergence(f: SpectralField) -> SpectralField:
    if f.is_scalar:
        if f.grid.d != 1:
            raise ValueError("divergence expects a d-component field")
        return derivative(f, 0)
    g = f.grid
    out = np.zeros(g.shape, dtype=np.complex128)
    for ax in range(g.d):
        out += f.coeffs[ax] * (1j * g.xi[ax])
    return SpectralField(g, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * (-f.grid.xi_sq))


# ---------------------------------------------------------------------------
# products and norms
# ---------------------------------------------------------------------------

def dealias(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Zero every coefficient outside the 2/3 box (new array)."""
    return np.where(grid.dealias_mask, coeffs, 0.0)


def dealiased_product(a: SpectralField, b: SpectralField) -> SpectralField:
    """Pointwise physical product followed by 2/3 truncation.

    Exact (up to rounding) whenever the supports of ``a`` and ``b`` are
    inside the dealias box: aliased images then land outside the box and
    are removed by the truncation.
    """
    _check_same_grid(a, b)
    if not (a.is_scalar and b.is_scalar):
        raise ValueError("dealiased_product expects scalar fields")
    pa = to_physical(a)
    pb = to_physical(b)
    prod = spectral_from_values(a.grid, pa * pb)
    return SpectralField(a.grid, dealias(a.grid, prod))


def advection_term(v: SpectralField, f: SpectralField) -> SpectralField:
    """Dealiased ``v . grad(f)`` for vector ``v`` and scalar ``f``."""
    _check_same_grid(v, f)
    g = f.grid
    out = np.zeros(g.shape, dtype=np.complex128)
    for ax in range(g.d):
        vi = v.component(ax) if not v.is_scalar else v
        out = out + dealiased_product(vi, derivative(f, ax)).coeffs
    return SpectralField(g, out)


def lp_norm(f: SpectralField, p: float) -> float:
    """Quadrature L^p norm ``(sum |f(x)|**p * dx**d)**(1/p)``; max for p=inf.

    Vector fields use the pointwise Euclidean magnitude.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 2:
        return l2_norm_spectral(f.grid, f.coeffs)
    phys = to_physical(f)
    if not f.is_scalar:
        mag = np.sqrt(np.sum(phys**2, axis=0))
    else:
        mag = np.abs(phys)
    if np.isinf(p):
        return float(np.max(mag))
    return float((np.sum(mag**p) * f.grid.cell_volume) ** (1.0 / p))


def l2_norm_spectral(grid: Grid, coeffs: np.ndarray) -> float:
    """L^2 norm straight from coefficients (Parseval, exact on the lattice)."""
    return float(np.sqrt(grid.volume * np.sum(np.abs(coeffs) ** 2)))


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

def write_snapshot(path, f: SpectralField) -> None:
    """Binary snapshot: fixed header + little-endian complex64 coefficients.

    complex64 is the interchange precision; in-memory fields are complex128.
    """
    header = _HEADER.pack(
        _MAGIC,
        1,
        _CONVENTION_TAG,
        f.grid.d,
        f.components,
        f.grid.N,
        f.grid.M,
        f.grid.dealias_cutoff,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.coeffs).astype("<c8").tobytes())


def read_snapshot(path) -> SpectralField:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise SnapshotFormatError("truncated snapshot header")
        magic, version, tag, d, comp, n, m, cutoff = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise SnapshotFormatError("not a field snapshot")
        if version != 1:
            raise SnapshotFormatError(f"unsupported snapshot version {version}")
        if tag != _CONVENTION_TAG:
            raise SnapshotFormatError(
                f"convention tag mismatch: {tag!r} != {_CONVENTION_TAG!r}"
            )
        grid = Grid(d=d, N=n, M=m, dealias_cutoff=cutoff)
        count = comp * n**d
        data = np.frombuffer(fh.read(count * 8), dtype="<c8")
        if data.size != count:
            raise SnapshotFormatError("truncated coefficient payload")
    shape = grid.shape if comp == 1 else (comp,) + grid.shape
    return SpectralField(grid, data.astype(np.complex128).reshape(shape))

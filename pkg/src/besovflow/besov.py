"""Homogeneous Besov semi-norms, threshold-split (hybrid) norms, and
Chemin-Lerner time-space norms computed from per-block trajectories.

A hybrid norm is the usual ``sum_j 2**(j*s) ||block_j f||_p`` restricted to
blocks below ("low") or at/above ("high") a threshold index.  Time-space
norms apply the time integrability per block *before* the dyadic sum.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid, SpectralField, l2_norm_spectral, lp_norm
from .lp import LPBasis, get_basis, project_coeffs

__all__ = [
    "HybridNormSpec",
    "NormReport",
    "ChemLernerAccumulator",
    "block_lp_norms",
    "besov_seminorm",
    "besov_report",
    "hl_shift_check",
    "embedding_ratio",
    "cl_norm",
    "cl_report",
    "threshold_index",
    "EmptyBandError",
    "MEAN_WARN_FACTOR",
]

MEAN_WARN_FACTOR = 1e-10

BAND_ALL = "all"
BAND_LOW = "low"
BAND_HIGH = "high"


class EmptyBandError(ValueError):
    """Raised when a ratio needs a band that carries no energy."""


def threshold_index(eps: float, k: int) -> int:
    """Split index between damped high and diffusive low frequencies.

    ``-floor(log2(eps)) + k``; for ``eps = 2**-e`` this is ``e + k``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return -int(np.floor(np.log2(eps))) + k


@dataclass(frozen=True)
class HybridNormSpec:
    """Selects ``sum 2**(j*s) ||block_j .||_p`` over a band of blocks."""

    s: float
    p: float
    band: str = BAND_ALL
    threshold: int | None = None

    def __post_init__(self) -> None:
        if self.band not in (BAND_ALL, BAND_LOW, BAND_HIGH):
            raise ValueError(f"band must be all/low/high, got {self.band!r}")
        if self.band != BAND_ALL and self.threshold is None:
            raise ValueError("band-restricted spec needs a threshold index")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    def selects(self, j: int) -> bool:
        if self.band == BAND_ALL:
            return True
        if self.band == BAND_LOW:
            return j <= self.threshold - 1
        return j >= self.threshold

    def degenerate_on(self, basis: LPBasis) -> bool:
        """True when the threshold leaves too little room on either side."""
        if self.band == BAND_ALL or self.threshold is None:
            return False
        return not (basis.j_min + 2 <= self.threshold <= basis.j_max - 2)


@dataclass(frozen=True)
class NormReport:
    """Value plus the health flags that a silent float would hide."""

    spec: HybridNormSpec
    value: float
    truncated: bool = False
    degenerate: bool = False
    quadrature_error: float | None = None

    def to_json(self) -> str:
        d = {
            "spec": {"s": self.spec.s, "p": self.spec.p, "band": self.spec.band,
                     "threshold": self.spec.threshold},
            "value": self.value,
            "truncation_flag": self.truncated,
            "degenerate": self.degenerate,
            "quadrature_error": self.quadrature_error,
        }
        return json.dumps(d, sort_keys=True)


def block_lp_norms(f: SpectralField, p: float,
                   basis: LPBasis | None = None) -> dict[int, float]:
    """``||block_j f||_p`` for every stored block (guards included)."""
    basis = basis or get_basis(f.grid)
    _warn_on_large_mean(f)
    out: dict[int, float] = {}
    for j in basis.stored:
        cj = project_coeffs(basis, f.coeffs, j)
        if cj is None:
            out[j] = 0.0
        elif p == 2:
            out[j] = l2_norm_spectral(f.grid, cj)
        else:
            out[j] = lp_norm(SpectralField(f.grid, cj), p)
    return out


def _warn_on_large_mean(f: SpectralField) -> None:
    mean = f.mean()
    mean_mag = abs(mean) if np.isscalar(mean) else float(np.max(np.abs(mean)))
    if mean_mag == 0.0:
        return
    scale = l2_norm_spectral(f.grid, f.coeffs)
    if scale > 0 and mean_mag > MEAN_WARN_FACTOR * scale:
        warnings.warn(
            "field has a non-negligible mean; homogeneous semi-norms ignore it",
            stacklevel=3,
        )


def besov_seminorm(f: SpectralField, spec: HybridNormSpec,
                   norms: dict[int, float] | None = None) -> float:
    """Hybrid Besov semi-norm of ``f``; see :func:`besov_report` for flags."""
    return besov_report(f, spec, norms).value


def besov_report(f: SpectralField, spec: HybridNormSpec,
                 norms: dict[int, float] | None = None) -> NormReport:
    basis = get_basis(f.grid)
    if norms is None:
        norms = block_lp_norms(f, spec.p, basis)
    value = 0.0
    for j in basis.resolved:
        if spec.selects(j):
            value += 2.0 ** (j * spec.s) * norms[j]
    truncated = any(norms.get(j, 0.0) > 0.0
                    for j in basis.stored if j > basis.j_max)
    return NormReport(spec=spec, value=value, truncated=truncated,
                      degenerate=spec.degenerate_on(basis))


def hl_shift_check(f: SpectralField, s: float, sigma0: float, threshold: int,
                   p: float = 2.0) -> float:
    """Ratio of the high norm at ``s`` to ``2**(-sigma0*J)`` times the high
    norm at ``s + sigma0``; termwise arithmetic forces it <= 1."""
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive")
    hi = HybridNormSpec(s=s, p=p, band=BAND_HIGH, threshold=threshold)
    norms = block_lp_norms(f, p)
    num = besov_seminorm(f, hi, norms)
    den = 2.0 ** (-sigma0 * threshold) * besov_seminorm(
        f, replace(hi, s=s + sigma0), norms)
    if den == 0.0:
        raise EmptyBandError(f"no energy at or above block {threshold}")
    return num / den


def embedding_ratio(f: SpectralField, p: float) -> float:
    """``||f||_{B^{d/2}_{2,1}} / ||f||_{B^{d/p}_{p,1}}`` for ``1 <= p <= 2``."""
    if not 1.0 <= p <= 2.0:
        raise ValueError("embedding_ratio expects 1 <= p <= 2")
    d = f.grid.d
    num = besov_seminorm(f, HybridNormSpec(s=d / 2.0, p=2.0))
    den = besov_seminorm(f, HybridNormSpec(s=d / p, p=p))
    if den == 0.0:
        raise EmptyBandError("field carries no resolved energy")
    return num / den


# ---------------------------------------------------------------------------
# Chemin-Lerner accumulators
# ---------------------------------------------------------------------------

class ChemLernerAccumulator:
    """Append-only record of per-block L^p norms along a trajectory.

    One accumulator per (field, p).  Rows are appended in time order while
    a run is live and the accumulator is queried after finalization;
    querying finalizes it implicitly.
    """

    def __init__(self, j_values, p: float, label: str = ""):
        self.j_values = np.asarray(list(j_values), dtype=int)
        self.p = float(p)
        self.label = label
        self._times: list[float] = []
        self._rows: list[np.ndarray] = []
        self._final: tuple[np.ndarray, np.ndarray] | None = None

    def append(self, t: float, norms) -> None:
        if self._times and t <= self._times[-1]:
            raise ValueError("time samples must be strictly increasing")
        row = np.asarray(norms, dtype=float)
        if row.shape != self.j_values.shape:
            raise ValueError("norm row does not match the block index set")
        self._times.append(float(t))
        self._rows.append(row)
        self._final = None

    def finalize(self) -> tuple[np.ndarray, np.ndarray]:
        if self._final is None:
            self._final = (np.asarray(self._times), np.vstack(self._rows)
                           if self._rows else np.empty((0, len(self.j_values))))
        return self._final

    @property
    def times(self) -> np.ndarray:
        return self.finalize()[0]

    @property
    def matrix(self) -> np.ndarray:
        """Shape (n_times, n_blocks)."""
        return self.finalize()[1]

    def to_csv(self, path) -> None:
        t, m = self.finalize()
        with open(path, "w") as fh:
            fh.write("t,j,p,block_norm\n")
            for it, tv in enumerate(t):
                for ij, j in enumerate(self.j_values):
                    fh.write(f"{tv:.17g},{j},{self.p:.17g},{m[it, ij]:.17g}\n")


def _time_reduce(times: np.ndarray, series: np.ndarray, r: float) -> np.ndarray:
    """Per-block time norm: trapezoid for finite r, sup for r = inf."""
    if np.isinf(r):
        return np.max(series, axis=0)
    integrand = series**r
    return np.trapezoid(integrand, times, axis=0) ** (1.0 / r)


def cl_norm(acc: ChemLernerAccumulator, spec: HybridNormSpec, r: float) -> float:
    return cl_report(acc, spec, r).value


def cl_report(acc: ChemLernerAccumulator, spec: HybridNormSpec,
              r: float) -> NormReport:
    """Time-space norm ``sum_j 2**(j*s) || ||block_j f(t)||_p ||_{L^r_T}``.

    The quadrature error estimate compares the trapezoid value against the
    half-sampled one (Richardson-style; reported, not subtracted).
    """
    if spec.p != acc.p:
        raise ValueError(f"accumulator holds p={acc.p}, spec wants p={spec.p}")
    times, series = acc.finalize()
    if not np.isinf(r) and len(times) < 2:
        raise ValueError("need at least two time samples for finite r")
    if len(times) == 0:
        raise ValueError("empty accumulator")
    weights = 2.0 ** (acc.j_values * spec.s)
    select = np.array([spec.selects(int(j)) for j in acc.j_values])
    per_block = _time_reduce(times, series, r)
    value = float(np.sum(weights[select] * per_block[select]))
    qerr = None
    if not np.isinf(r) and len(times) >= 5:
        half = _time_reduce(times[::2], series[::2], r)
        value_half = float(np.sum(weights[select] * half[select]))
        qerr = abs(value - value_half)
    return NormReport(spec=spec, value=value, quadrature_error=qerr)

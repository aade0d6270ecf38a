"""Bony splitting of a product into low-high, high-low and diagonal parts,
plus the commutator blocks used by the high-frequency energy bookkeeping.

All block sums run over the stored block range in ascending j, and the
dealias truncation is applied once per part, so the three parts sum back
to the dealiased product exactly (up to rounding) for mean-free inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import (
    SpectralField,
    advection_term,
    dealias,
    dealiased_product,
    derivative,
    divergence,
    l2_norm_spectral,
    spectral_from_values,
    to_physical,
    values_from_spectral,
)
from .lp import get_basis, project_coeffs

__all__ = [
    "BonyParts",
    "bony_decompose",
    "commutator_block",
    "transport_commutators",
]


@dataclass(frozen=True)
class BonyParts:
    """The three pieces of ``a*b`` and the reconstruction defect."""

    tab: SpectralField        # low(a) * blocks(b)
    tba: SpectralField        # low(b) * blocks(a)
    remainder: SpectralField  # comparable-frequency pairs
    residual: float           # relative L2 defect vs the dealiased product

    def total(self) -> SpectralField:
        return SpectralField(self.tab.grid,
                             self.tab.coeffs + self.tba.coeffs + self.remainder.coeffs)


def _mean_free(f: SpectralField, who: str) -> SpectralField:
    mean = f.mean()
    mag = abs(mean) if np.isscalar(mean) else float(np.max(np.abs(mean)))
    if mag == 0.0:
        return f
    warnings.warn(f"{who} had a nonzero mean; subtracted before the splitting",
                  stacklevel=3)
    c = f.coeffs.copy()
    c[(0,) * f.grid.d] = 0.0
    return SpectralField(f.grid, c)


def _paraproduct(a: SpectralField, b: SpectralField) -> np.ndarray:
    """sum_j lowpass_{j-1}(a) * block_j(b), physical products, one truncation."""
    grid = a.grid
    basis = get_basis(grid)
    acc = np.zeros(grid.shape)
    for j in basis.stored:
        la = project_coeffs(basis, a.coeffs, j - 1, "lowpass")
        bj = project_coeffs(basis, b.coeffs, j)
        if la is None or bj is None:
            continue
        acc += values_from_spectral(grid, la) * values_from_spectral(grid, bj)
    return dealias(grid, spectral_from_values(grid, acc))


def _remainder(a: SpectralField, b: SpectralField) -> np.ndarray:
    grid = a.grid
    basis = get_basis(grid)
    phys_a = {j: values_from_spectral(grid, project_coeffs(basis, a.coeffs, j))
              for j in basis.stored}
    phys_b = {j: values_from_spectral(grid, project_coeffs(basis, b.coeffs, j))
              for j in basis.stored}
    acc = np.zeros(grid.shape)
    for jp in basis.stored:
        for jpp in (jp - 1, jp, jp + 1):
            if jpp in phys_a:
                acc += phys_a[jpp] * phys_b[jp]
    return dealias(grid, spectral_from_values(grid, acc))


def bony_decompose(a: SpectralField, b: SpectralField) -> BonyParts:
    """Split ``a*b`` into the two paraproducts and the remainder.

    Means are subtracted first (warned about); the residual measures
    ``||tab + tba + remainder - dealiased(a*b)||_2`` relatively.
    """
    if not (a.is_scalar and b.is_scalar):
        raise ValueError("bony_decompose expects scalar fields")
    a = _mean_free(a, "first factor")
    b = _mean_free(b, "second factor")
    grid = a.grid
    tab = _paraproduct(a, b)
    tba = _paraproduct(b, a)
    rem = _remainder(a, b)
    product = dealiased_product(a, b)
    defect = tab + tba + rem - product.coeffs
    scale = l2_norm_spectral(grid, product.coeffs)
    residual = l2_norm_spectral(grid, defect) / scale if scale > 0 else 0.0
    return BonyParts(
        tab=SpectralField(grid, tab),
        tba=SpectralField(grid, tba),
        remainder=SpectralField(grid, rem),
        residual=float(residual),
    )


def commutator_block(a: SpectralField, b: SpectralField, j: int,
                     jp: int) -> SpectralField:
    """``block_j(lowpass_{jp-1}(a) block_jp(b)) - lowpass_{jp-1}(a) block_j(block_jp(b))``.

    Vanishes exactly for constant ``a`` and, by support arithmetic, whenever
    ``|j - jp|`` is large enough for the inner supports to miss block j.
    """
    grid = a.grid
    basis = get_basis(grid)
    la = project_coeffs(basis, a.coeffs, jp - 1, "lowpass")
    bjp = project_coeffs(basis, b.coeffs, jp)
    if bjp is None:
        return SpectralField.zeros(grid)
    # constants pass through: lowpass drops the mean, so re-add it
    mean_a = a.coeffs[(0,) * grid.d]
    pa = values_from_spectral(grid, la) + mean_a.real if la is not None \
        else np.full(grid.shape, mean_a.real)
    pb = values_from_spectral(grid, bjp)
    prod = dealias(grid, spectral_from_values(grid, pa * pb))
    first = project_coeffs(basis, prod, j)
    inner = project_coeffs(basis, bjp, j)
    if first is None:
        first = np.zeros(grid.shape, dtype=np.complex128)
    if inner is None:
        second = np.zeros(grid.shape, dtype=np.complex128)
    else:
        second = dealias(grid, spectral_from_values(
            grid, pa * values_from_spectral(grid, inner)))
    return SpectralField(grid, first - second)


def transport_commutators(state, j: int) -> tuple[SpectralField, SpectralField,
                                                  SpectralField]:
    """The three commutators between block projection and the transport-type
    terms of the flow: advection of the scalar, the compressibility
    coefficient times the divergence, and self-advection of the velocity.

    Returns ``(-block_j(v.grad n) + v.grad block_j n,
               -block_j(G(n) div v) + G(n) div block_j v,
               -block_j(v.grad v) + v.grad block_j v)``.
    """
    grid = state.n.grid
    basis = get_basis(grid)

    v = state.v
    n = state.n
    nj = SpectralField(grid, (project_coeffs(basis, n.coeffs, j)
                              if basis.multiplier(j) is not None
                              else np.zeros(grid.shape, complex)))
    vj_coeffs = project_coeffs(basis, v.coeffs, j)
    if vj_coeffs is None:
        vj_coeffs = np.zeros_like(v.coeffs)
    vj = SpectralField(grid, vj_coeffs)

    adv_n = advection_term(v, n)
    r1 = SpectralField(grid, -_proj_or_zero(basis, adv_n.coeffs, j)
                       + advection_term(v, nj).coeffs)

    g_phys = state.law.G(values_from_spectral(grid, n.coeffs))
    g_spec = SpectralField(grid, dealias(grid, spectral_from_values(grid, g_phys)))
    div_v = divergence(v)
    g_div = dealiased_product(g_spec, div_v)
    r2 = SpectralField(grid, -_proj_or_zero(basis, g_div.coeffs, j)
                       + dealiased_product(g_spec, divergence(vj)).coeffs)

    r3 = np.empty_like(v.coeffs)
    for c in range(grid.d):
        vc = v.component(c)
        adv_vc = advection_term(v, vc)
        r3[c] = (-_proj_or_zero(basis, adv_vc.coeffs, j)
                 + advection_term(v, vj.component(c)).coeffs)
    return r1, r2, SpectralField(grid, r3)


def _proj_or_zero(basis, coeffs: np.ndarray, j: int) -> np.ndarray:
    out = project_coeffs(basis, coeffs, j)
    return out if out is not None else np.zeros_like(coeffs)

"""
Transverse spectral transforms: sine series for Dirichlet walls, real Fourier series
of period pi for periodic walls.
"""

import numpy as np
from scipy import fft

from models.core import Grid, TransverseBasis, TransverseBC


def transverse_axes(grid: Grid) -> tuple[int, ...]:
    return (1,) if grid.d == 1 else (1, 2)


def to_modes(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Transverse coefficients of a grid function (x stays in physical space)."""
    axes: tuple[int, ...] = transverse_axes(grid)
    if grid.transverse_bc == TransverseBC.DIRICHLET:
        return fft.dstn(values, type=2, axes=axes)
    return fft.rfftn(values, axes=axes)


def from_modes(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    axes: tuple[int, ...] = transverse_axes(grid)
    if grid.transverse_bc == TransverseBC.DIRICHLET:
        return fft.idstn(coeffs, type=2, axes=axes)
    sizes: list[int] = [grid.y.n] if grid.z is None else [grid.y.n, grid.z.n]
    return fft.irfftn(coeffs, s=sizes, axes=axes)


def mode_wavenumbers(grid: Grid) -> list[np.ndarray]:
    """Wavenumbers along each transverse axis, ordered like the coefficients of to_modes."""
    if grid.transverse_bc == TransverseBC.DIRICHLET:
        bases: list[TransverseBasis] = [grid.y] if grid.z is None else [grid.y, grid.z]
        return [basis.wavenumbers for basis in bases]
    if grid.z is None:
        return [grid.y.wavenumbers]
    # rfftn keeps the full spectrum on y and the half spectrum on z
    ky: np.ndarray = 2.0 * fft.fftfreq(grid.y.n, 1.0 / grid.y.n)
    return [ky, grid.z.wavenumbers]


def mode_eigenvalues(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """
    Symbols of the transverse operators on each mode.

    Returns:
        tuple: (kappa2, kappa4) with -(d_yy + d_zz) -> kappa2 and d_yyyy + d_zzzz -> kappa4,
        both shaped like the transverse part of to_modes output.
    """
    wavenumbers: list[np.ndarray] = mode_wavenumbers(grid)
    if len(wavenumbers) == 1:
        k: np.ndarray = wavenumbers[0]
        return k**2, k**4
    ky, kz = np.meshgrid(wavenumbers[0], wavenumbers[1], indexing="ij")
    return ky**2 + kz**2, ky**4 + kz**4


def transverse_derivative(
    grid: Grid, values: np.ndarray, axis: int, order: int
) -> np.ndarray:
    """
    Spectral derivative along transverse array axis 1 (y) or 2 (z).

    Even orders act diagonally on the basis. Odd orders of a sine series produce a
    cosine series, evaluated with a type-3 cosine transform; the top sine mode
    differentiates to cos(n s), which vanishes at every collocation point.
    """
    basis: TransverseBasis | None = grid.y if axis == 1 else grid.z
    if basis is None:
        raise ValueError("axis z is not available when d = 1")
    if order == 0:
        return values.copy()

    moved: np.ndarray = np.moveaxis(values, axis, -1)
    n: int = basis.n
    if basis.kind == TransverseBC.DIRICHLET:
        k: np.ndarray = basis.wavenumbers
        coeffs: np.ndarray = fft.dst(moved, type=2, axis=-1)
        if order % 2 == 0:
            result: np.ndarray = fft.idst(
                coeffs * ((-1.0) ** (order // 2) * k**order), type=2, axis=-1
            )
        else:
            amplitudes: np.ndarray = coeffs / n
            amplitudes[..., -1] *= 0.5
            sign: float = 1.0 if order % 4 == 1 else -1.0
            cosine: np.ndarray = sign * k**order * amplitudes
            shifted: np.ndarray = np.zeros_like(cosine)
            shifted[..., 1:] = 0.5 * cosine[..., :-1]
            result = fft.dct(shifted, type=3, axis=-1)
    else:
        k = basis.wavenumbers
        symbol: np.ndarray = (1j * k) ** order
        if order % 2 == 1 and n % 2 == 0:
            symbol[-1] = 0.0
        result = fft.irfft(fft.rfft(moved, axis=-1) * symbol, n=n, axis=-1)
    return np.moveaxis(result, -1, axis)

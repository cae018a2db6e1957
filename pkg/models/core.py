"""
Data model definitions
"""

import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from models.errors import GridError

# Extent of every transverse interval: (-pi/2, pi/2)
TRANSVERSE_LENGTH: float = math.pi

# Smallest resolutions the stencils support
MIN_NX: int = 8
MIN_TRANSVERSE: int = 4


class TransverseBC(str, Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


class BCTag(str, Enum):
    """Which x-boundary conditions a field is meant to satisfy."""

    UNCONSTRAINED = "unconstrained"
    ZK_LIMIT = "zk_limit"
    ZK_REGULARIZED = "zk_regularized"


class Closure(str, Enum):
    """
    Which x-boundary conditions the x stencils encode.

    limit_bcs and regularized_bcs are second order at every node and serve
    evaluation; energy_stable is the closure the time stepper advances with.
    """

    LIMIT_BCS = "limit_bcs"
    REGULARIZED_BCS = "regularized_bcs"
    ENERGY_STABLE = "energy_stable"
    INTERIOR_ONLY = "interior_only"


class GridSpec(BaseModel):
    """Resolution and transverse boundary type. Extents are fixed to (0,1)x(-pi/2,pi/2)^d."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d: int = PydanticField(default=1, ge=1, le=2)
    nx: int = PydanticField(default=64, ge=1)
    ny: int = PydanticField(default=16, ge=1)
    nz: int = PydanticField(default=4, ge=1)
    transverse_bc: TransverseBC = TransverseBC.DIRICHLET


class TransverseBasis:
    """
    Collocation points, quadrature weights and wavenumbers of one transverse axis.

    Dirichlet axes use the sine basis sin(k(y + pi/2)), k = 1..n, sampled at cell
    centres; every basis function and its second derivative vanish at the walls.
    Periodic axes use Fourier modes of period pi (wavenumbers 2m) sampled at
    equispaced points starting at the left wall.
    """

    def __init__(self, n: int, kind: TransverseBC) -> None:
        self.n: int = n
        self.kind: TransverseBC = kind
        spacing: float = TRANSVERSE_LENGTH / n
        self.weights: np.ndarray = np.full(n, spacing)
        if kind == TransverseBC.DIRICHLET:
            self.points: np.ndarray = -math.pi / 2 + (np.arange(n) + 0.5) * spacing
            self.wavenumbers: np.ndarray = np.arange(1, n + 1, dtype=float)
        else:
            self.points = -math.pi / 2 + np.arange(n) * spacing
            self.wavenumbers = 2.0 * np.arange(n // 2 + 1, dtype=float)


class Grid:
    def __init__(self, spec: GridSpec) -> None:
        self.spec: GridSpec = spec
        self.nx: int = spec.nx
        self.hx: float = 1.0 / spec.nx
        self.x: np.ndarray = np.arange(spec.nx + 1) / spec.nx
        self.y: TransverseBasis = TransverseBasis(spec.ny, spec.transverse_bc)
        self.z: TransverseBasis | None = (
            TransverseBasis(spec.nz, spec.transverse_bc) if spec.d == 2 else None
        )

        self.x_weights: np.ndarray = np.full(spec.nx + 1, self.hx)
        self.x_weights[0] = self.x_weights[-1] = 0.5 * self.hx

        transverse_weights: np.ndarray = self.y.weights
        if self.z is not None:
            transverse_weights = np.multiply.outer(transverse_weights, self.z.weights)
        self.transverse_weights: np.ndarray = transverse_weights
        self.weights: np.ndarray = np.multiply.outer(self.x_weights, transverse_weights)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def shape(self) -> tuple[int, ...]:
        if self.z is None:
            return (self.nx + 1, self.y.n)
        return (self.nx + 1, self.y.n, self.z.n)

    @property
    def transverse_bc(self) -> TransverseBC:
        return self.spec.transverse_bc

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to the field shape (x, y[, z])."""
        axes: list[np.ndarray] = [self.x, self.y.points]
        if self.z is not None:
            axes.append(self.z.points)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def x_profile(self, values: np.ndarray) -> np.ndarray:
        """Broadcast a vector over x to the field shape."""
        return values.reshape((-1,) + (1,) * self.d)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and other.spec == self.spec

    def __hash__(self) -> int:
        return hash(self.spec)


class Field:
    """A grid function on M together with the x-boundary conditions it is meant to satisfy."""

    def __init__(
        self,
        grid: Grid,
        values: np.ndarray,
        bc_tag: BCTag = BCTag.UNCONSTRAINED,
    ) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridError(
                f"field shape {values.shape} does not match grid shape {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")

        self.grid: Grid = grid
        self.values: np.ndarray = values
        self.bc_tag: BCTag = BCTag(bc_tag)

    @classmethod
    def zeros(cls, grid: Grid, bc_tag: BCTag = BCTag.UNCONSTRAINED) -> "Field":
        return cls(grid, np.zeros(grid.shape), bc_tag)

    def with_values(self, values: np.ndarray, bc_tag: BCTag | None = None) -> "Field":
        return Field(self.grid, values, self.bc_tag if bc_tag is None else bc_tag)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.bc_tag)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

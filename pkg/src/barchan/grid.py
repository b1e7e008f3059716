"""Rectangular grids of interior nodes and their discrete difference operators.

Height fields sample the open interior of an axis-aligned box; every
boundary node carries an implicit Dirichlet value of zero, so fields are
stored as plain arrays over interior nodes only.  The forward-difference
gradient and backward-difference divergence defined here are exact
negative adjoints of each other, which the cone projection relies on.

Slope constraints come in two flavours, selected by ``mode``:

* ``"isotropic"``: Euclidean norm of the per-node gradient vector,
* ``"componentwise"``: each axis difference bounded separately.

The two coincide in 1D.  ``edge_slopes`` additionally exposes the
differences that cross the left/bottom boundary, which the per-node
forward gradient does not host; together with the zero boundary they make
the slope-constrained set identical to the admissible cone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

TOL_CONSTRAINT = 1e-8

CONSTRAINT_MODES = ("isotropic", "componentwise")


@dataclass(frozen=True)
class Grid:
    """Uniform grid over the interior nodes of a box, zero Dirichlet boundary.

    ``spacing[a] = extents[a] / (counts[a] + 1)``; nodes are strictly
    interior and the boundary nodes are implicit.
    """

    dim: int
    extents: tuple[float, ...]
    counts: tuple[int, ...]
    spacing: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def node_count(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def diameter(self) -> float:
        """Diameter of the box (diagonal length)."""
        return float(np.sqrt(sum(e * e for e in self.extents)))

    def coords(self, axis: int = 0) -> np.ndarray:
        """Coordinates of the interior nodes along one axis."""
        return (np.arange(self.counts[axis]) + 1.0) * self.spacing[axis]

    def meshgrid(self) -> list[np.ndarray]:
        axes = [self.coords(a) for a in range(self.dim)]
        if self.dim == 1:
            return axes
        return list(np.meshgrid(*axes, indexing="ij"))


def make_grid(
    dim: int,
    extents: float | Sequence[float],
    counts: int | Sequence[int],
) -> Grid:
    """Build a validated grid.

    Parameters
    ----------
    dim : 1 or 2
    extents : physical side length per axis (meters), positive
    counts : interior node count per axis, at least 3

    Raises
    ------
    ValueError
        On unsupported dimension, non-positive extent or count < 3.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    ext = tuple(float(e) for e in np.atleast_1d(extents))
    cnt = tuple(int(c) for c in np.atleast_1d(counts))
    if len(ext) == 1 and dim == 2:
        ext = ext * 2
    if len(cnt) == 1 and dim == 2:
        cnt = cnt * 2
    if len(ext) != dim or len(cnt) != dim:
        raise ValueError(
            f"extents/counts must have one entry per axis, got {ext}, {cnt}"
        )
    for e in ext:
        if not (e > 0.0) or not np.isfinite(e):
            raise ValueError(f"extents must be positive, got {ext}")
    for c in cnt:
        if c < 3:
            raise ValueError(f"counts must be >= 3 on each axis, got {cnt}")
    spacing = tuple(e / (c + 1) for e, c in zip(ext, cnt))
    return Grid(dim=dim, extents=ext, counts=cnt, spacing=spacing)


@dataclass
class HeightField:
    """Heights (meters) at the interior nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("height field contains non-finite values")

    def copy(self) -> "HeightField":
        return HeightField(self.grid, self.values.copy())

    @classmethod
    def zeros(cls, grid: Grid) -> "HeightField":
        return cls(grid, np.zeros(grid.shape))


def dist_to_boundary(grid: Grid) -> np.ndarray:
    """Euclidean distance from every interior node to the box boundary.

    For an axis-aligned rectangle this is the minimum of the per-axis
    wall distances.
    """
    per_axis = []
    for a in range(grid.dim):
        x = grid.coords(a)
        per_axis.append(np.minimum(x, grid.extents[a] - x))
    if grid.dim == 1:
        return per_axis[0]
    return np.minimum(per_axis[0][:, None], per_axis[1][None, :])


def grad_forward(field: HeightField) -> np.ndarray:
    """Forward-difference gradient with zero ghost values beyond the boundary.

    Returns one gradient entry per interior node: shape ``(n,)`` in 1D and
    ``(nx, ny, 2)`` in 2D (components along x then y).
    """
    g = field.grid
    v = field.values
    if g.dim == 1:
        return (np.concatenate([v[1:], [0.0]]) - v) / g.spacing[0]
    gx = (np.vstack([v[1:, :], np.zeros((1, g.counts[1]))]) - v) / g.spacing[0]
    gy = (np.hstack([v[:, 1:], np.zeros((g.counts[0], 1))]) - v) / g.spacing[1]
    return np.stack([gx, gy], axis=-1)


def div_backward(grid: Grid, p: np.ndarray) -> np.ndarray:
    """Backward-difference divergence, the exact negative adjoint of
    :func:`grad_forward`: ``<grad u, p> = -<u, div p>`` in the Euclidean
    inner product (ghost value 0 on the left/bottom)."""
    if grid.dim == 1:
        return (p - np.concatenate([[0.0], p[:-1]])) / grid.spacing[0]
    px, py = p[..., 0], p[..., 1]
    dx = (px - np.vstack([np.zeros((1, grid.counts[1])), px[:-1, :]])) / grid.spacing[0]
    dy = (py - np.hstack([np.zeros((grid.counts[0], 1)), py[:, :-1]])) / grid.spacing[1]
    return dx + dy


def edge_slopes(field: HeightField) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """All nearest-neighbour slopes of the zero-extended field.

    Unlike :func:`grad_forward` this includes the differences that cross
    the left/bottom boundary, so bounding every entry by ``lam`` is
    equivalent to membership in the admissible cone.  Returns shape
    ``(n + 1,)`` in 1D, or a pair ``(ex, ey)`` of shapes
    ``(nx + 1, ny)`` and ``(nx, ny + 1)`` in 2D.
    """
    g = field.grid
    v = field.values
    if g.dim == 1:
        return np.diff(np.concatenate([[0.0], v, [0.0]])) / g.spacing[0]
    zx = np.zeros((1, g.counts[1]))
    zy = np.zeros((g.counts[0], 1))
    ex = np.diff(np.vstack([zx, v, zx]), axis=0) / g.spacing[0]
    ey = np.diff(np.hstack([zy, v, zy]), axis=1) / g.spacing[1]
    return ex, ey


def edge_slopes_adjoint(
    grid: Grid, q: np.ndarray | tuple[np.ndarray, np.ndarray]
) -> np.ndarray:
    """Exact adjoint of :func:`edge_slopes` in the Euclidean inner product."""
    if grid.dim == 1:
        return (q[:-1] - q[1:]) / grid.spacing[0]
    qx, qy = q
    return (qx[:-1, :] - qx[1:, :]) / grid.spacing[0] + (
        qy[:, :-1] - qy[:, 1:]
    ) / grid.spacing[1]


def node_slope_magnitude(field: HeightField, mode: str = "isotropic") -> np.ndarray:
    """Per-node magnitude of the forward gradient under the given norm."""
    if mode not in CONSTRAINT_MODES:
        raise ValueError(f"unknown constraint mode {mode!r}")
    g = grad_forward(field)
    if field.grid.dim == 1:
        return np.abs(g)
    if mode == "isotropic":
        return np.sqrt(g[..., 0] ** 2 + g[..., 1] ** 2)
    return np.maximum(np.abs(g[..., 0]), np.abs(g[..., 1]))


def max_slope(field: HeightField, mode: str = "isotropic") -> float:
    return float(node_slope_magnitude(field, mode).max())


def admissible(
    field: HeightField,
    lam: float,
    mode: str = "isotropic",
    tol: float = TOL_CONSTRAINT,
) -> bool:
    """Membership test for the lam-Lipschitz cone with zero boundary values.

    Checks both the per-node slope bound and the distance cone bound
    ``|u(x)| <= lam * dist(x, boundary)``; the latter covers the slopes
    crossing the left/bottom boundary that the per-node gradient does not
    see.
    """
    if max_slope(field, mode) > lam + tol:
        return False
    bound = lam * dist_to_boundary(field.grid)
    return bool(np.all(np.abs(field.values) <= bound + tol))


def dot(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Discrete L2 inner product (cell-volume weighted)."""
    return float(np.vdot(a, b)) * grid.cell_volume


def norm_l1(grid: Grid, a: np.ndarray) -> float:
    return float(np.sum(np.abs(a))) * grid.cell_volume


def norm_l2(grid: Grid, a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(a * a) * grid.cell_volume))


def norm_linf(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0

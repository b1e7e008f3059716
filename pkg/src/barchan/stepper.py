"""Time integration by operator splitting.

Each step transports sand explicitly with the conservative upwind wind
flux, then applies the avalanche resolvent: one implicit Euler step of the
slope-constrained flow, realized as the cone projection of the predicted
state.  The flux is evaluated at the previous iterate, the same freezing
the fixed-point construction of the continuous problem uses; an optional
inner loop re-evaluates it at the latest iterate to check insensitivity.

The wind blows in +x, so the flux velocity is nonnegative and upwinding
from the left is the monotone choice.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constitutive import (
    GammaProfile,
    HProfile,
    gamma_eval,
    gamma_sup_on,
    h_eval,
    h_sup,
    lipschitz_bound,
)
from .grid import Grid, HeightField, admissible, max_slope
from .kernels import DiscreteKernel, build_kernel, nonlocal_slope
from .projection import (
    MultiplierField,
    NonConvergedError,
    project_pdhg,
    resolvent_step,
)

logger = logging.getLogger(__name__)


class CFLViolationError(ValueError):
    """Requested explicit step exceeds the stable transport step."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel profile plus physical radius; the stencil is built per grid."""

    profile: str = "triangle"
    radius: float = 0.1


@dataclass(frozen=True)
class SourceSpec:
    """Space-time source: zero, a constant-rate patch, or a tabulated file.

    ``patch`` deposits ``rate`` (m/s) on nodes within ``width/2`` of
    ``center`` per axis; if the box is narrower than a cell the nearest
    node is used, so a point source is always representable.  ``tabulated``
    reads a CSV whose first column is time and remaining columns are
    per-node rates in row-major node order, held piecewise constant.
    """

    kind: str = "zero"
    center: tuple[float, ...] = ()
    width: float = 0.0
    rate: float = 0.0
    path: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "patch", "tabulated"):
            raise ValueError(f"unknown source kind {self.kind!r}")


@dataclass(frozen=True)
class ModelParams:
    """Physical data of one run: repose slope, constitutive profiles,
    kernel, source, final time, and the explicit step (or "auto")."""

    lam: float
    h: HProfile = field(default_factory=HProfile.smooth_ramp)
    gamma: GammaProfile = field(default_factory=GammaProfile.identity)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    source: SourceSpec = field(default_factory=SourceSpec)
    T: float = 1.0
    dt: float | str = "auto"

    def __post_init__(self) -> None:
        if not (self.lam > 0.0):
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.T < 0.0:
            raise ValueError(f"T must be nonnegative, got {self.T}")
        if isinstance(self.dt, str):
            if self.dt != "auto":
                raise ValueError(f'dt must be a positive number or "auto", got {self.dt!r}')
        elif not (self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class Numerics:
    """Solver knobs kept apart from the physics."""

    cfl_number: float = 0.45
    dt_max: float = 0.1
    picard_iters: int = 1
    inner_tol: float = 1e-10
    proj_tol: float = 1e-8
    proj_max_iter: int = 200_000
    strict: bool = True
    constraint_mode: str = "isotropic"
    disable_projection: bool = False
    warm_start: bool = True


@dataclass
class StepDiagnostics:
    t: float
    dt: float
    mass_pre: float
    mass_post: float
    source_integral: float
    transport_outflow: float
    avalanche_mass_change: float
    projection_iterations: int
    projection_gap: float
    cfl_number: float
    max_slope: float
    crest_index: int


@dataclass
class Snapshot:
    t: float
    u: HeightField
    m: MultiplierField


@dataclass
class Trajectory:
    """Snapshots plus per-step diagnostics of one simulation."""

    params: ModelParams
    numerics: Numerics
    grid: Grid
    snapshots: list[Snapshot]
    steps: list[StepDiagnostics]
    snapshot_every: int = 1
    failure: str | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])


def kernel_for(params: ModelParams, grid: Grid) -> DiscreteKernel:
    return build_kernel(params.kernel.profile, params.kernel.radius, grid.spacing[0])


def source_eval(spec: SourceSpec, grid: Grid, t: float) -> np.ndarray:
    """Source rate field at time t (sampled at the step's start time)."""
    if spec.kind == "zero":
        return np.zeros(grid.shape)
    if spec.kind == "patch":
        masks = []
        for a in range(grid.dim):
            c = spec.center[a] if a < len(spec.center) else grid.extents[a] / 2.0
            x = grid.coords(a)
            m = np.abs(x - c) <= spec.width / 2.0 + 1e-12
            if not m.any():
                m = np.zeros_like(m)
                m[int(np.argmin(np.abs(x - c)))] = True
            masks.append(m)
        if grid.dim == 1:
            box = masks[0]
        else:
            box = masks[0][:, None] & masks[1][None, :]
        return np.where(box, spec.rate, 0.0)
    table = _load_table(spec.path)
    times, rows = table
    idx = int(np.searchsorted(times, t, side="right") - 1)
    idx = min(max(idx, 0), rows.shape[0] - 1)
    return rows[idx].reshape(grid.shape)


_TABLE_CACHE: dict[str, tuple[np.ndarray, np.ndarray]] = {}


def _load_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    if path not in _TABLE_CACHE:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        _TABLE_CACHE[path] = (data[:, 0], data[:, 1:])
    return _TABLE_CACHE[path]


def transport_flux(
    u: HeightField, params: ModelParams, kernel: DiscreteKernel | None = None
) -> np.ndarray:
    """Wind flux F = gamma(u) * H(nonlocal slope); nonnegative everywhere."""
    if kernel is None:
        kernel = kernel_for(params, u.grid)
    s = nonlocal_slope(u, kernel)
    return gamma_eval(params.gamma, u.values) * h_eval(params.h, s)


def transport_div(grid: Grid, flux: np.ndarray) -> np.ndarray:
    """Upwind divergence (F_i - F_{i-1}) / dx along x, F = 0 outside.

    The left-neighbour difference is the monotone upwind choice for the
    nonnegative wind speed; summed over the domain it telescopes to the
    outflow through the right wall.
    """
    dx = grid.spacing[0]
    if grid.dim == 1:
        return (flux - np.concatenate([[0.0], flux[:-1]])) / dx
    shifted = np.vstack([np.zeros((1, grid.counts[1])), flux[:-1, :]])
    return (flux - shifted) / dx


def transport_outflow(grid: Grid, flux: np.ndarray) -> float:
    """Mass flow rate out through the right wall (the telescoped sum)."""
    if grid.dim == 1:
        return float(flux[-1])
    return float(np.sum(flux[-1, :]) * grid.spacing[1])


def transport_speed_bound(params: ModelParams, grid: Grid, kernel: DiscreteKernel) -> float:
    """Bound on the flux response to height changes, used as CFL speed.

    Combines the direct sensitivity ``Lip(gamma) * sup H`` with the
    nonlocal one ``sup gamma * Lip(H) * |dK/dx|_L1`` over the admissible
    height range [0, lam * diameter].
    """
    lam = params.lam
    direct = lipschitz_bound(params.gamma) * h_sup(params.h)
    indirect = (
        gamma_sup_on(params.gamma, lam * grid.diameter)
        * lipschitz_bound(params.h)
        * kernel.deriv_l1()
    )
    return direct + indirect


def cfl_dt(
    u: HeightField,
    params: ModelParams,
    numerics: Numerics = Numerics(),
    kernel: DiscreteKernel | None = None,
) -> float:
    """Stable explicit step ``cfl * dx / v_max``, capped at ``dt_max``.

    When the wind is off (v_max = 0) the avalanche step is implicit and
    unconditionally stable, so the cap is returned.
    """
    if kernel is None:
        kernel = kernel_for(params, u.grid)
    v_max = transport_speed_bound(params, u.grid, kernel)
    if v_max <= 0.0:
        return numerics.dt_max
    return min(numerics.dt_max, numerics.cfl_number * min(u.grid.spacing) / v_max)


def _crest_index(values: np.ndarray, grid: Grid) -> int:
    if grid.dim == 1:
        return int(np.argmax(values))
    return int(np.argmax(values[:, grid.counts[1] // 2]))


def _advance(
    u: HeightField,
    t: float,
    dt: float,
    params: ModelParams,
    numerics: Numerics,
    kernel: DiscreteKernel,
    warm_dual=None,
):
    """One split step; returns (field, multiplier, diagnostics, dual)."""
    grid = u.grid
    v_max = transport_speed_bound(params, grid, kernel)
    if v_max > 0.0 and dt > cfl_dt(u, params, numerics, kernel) * (1.0 + 1e-9):
        raise CFLViolationError(
            f"dt={dt} exceeds the stable step {cfl_dt(u, params, numerics, kernel)}"
        )

    vol = grid.cell_volume
    f = source_eval(params.source, grid, t)
    flux = transport_flux(u, params, kernel)
    drive = f - transport_div(grid, flux)

    mass_pre = float(u.values.sum()) * vol
    source_integral = float(f.sum()) * vol
    outflow = transport_outflow(grid, flux)

    if numerics.disable_projection:
        u_new = HeightField(grid, u.values + dt * drive)
        m = MultiplierField.zeros(grid)
        proj_iters, proj_gap, dual = 0, 0.0, None
    else:
        res = resolvent_step(
            u,
            drive,
            dt,
            params.lam,
            tol=numerics.proj_tol,
            max_iter=numerics.proj_max_iter,
            mode=numerics.constraint_mode,
            warm_dual=warm_dual,
        )
        for _ in range(1, numerics.picard_iters):
            flux_in = transport_flux(res.u, params, kernel)
            drive_in = f - transport_div(grid, flux_in)
            prev = res.u.values
            res = resolvent_step(
                u,
                drive_in,
                dt,
                params.lam,
                tol=numerics.proj_tol,
                max_iter=numerics.proj_max_iter,
                mode=numerics.constraint_mode,
                warm_dual=res.dual,
            )
            if float(np.max(np.abs(res.u.values - prev))) <= numerics.inner_tol:
                break
        if not res.converged and numerics.strict:
            raise NonConvergedError(
                f"projection not converged at t={t:.6g} "
                f"(gap {res.primal_dual_gap:.3e} after {res.iterations} iterations)"
            )
        u_new, m = res.u, res.m
        proj_iters, proj_gap, dual = res.iterations, res.primal_dual_gap, res.dual

    mass_post = float(u_new.values.sum()) * vol
    mass_star = mass_pre + dt * (source_integral - outflow)
    diag = StepDiagnostics(
        t=t + dt,
        dt=dt,
        mass_pre=mass_pre,
        mass_post=mass_post,
        source_integral=source_integral,
        transport_outflow=outflow,
        avalanche_mass_change=mass_post - mass_star,
        projection_iterations=proj_iters,
        projection_gap=proj_gap,
        cfl_number=v_max * dt / min(grid.spacing),
        max_slope=max_slope(u_new, numerics.constraint_mode),
        crest_index=_crest_index(u_new.values, grid),
    )
    return u_new, m, diag, dual


def step(
    u: HeightField,
    t: float,
    dt: float,
    params: ModelParams,
    picard_iters: int = 1,
    numerics: Numerics = Numerics(),
) -> tuple[HeightField, MultiplierField]:
    """Advance one split step and return the new state and multiplier."""
    numerics = replace(numerics, picard_iters=picard_iters)
    kernel = kernel_for(params, u.grid)
    u_new, m, _, _ = _advance(u, t, dt, params, numerics, kernel)
    return u_new, m


def run(
    params: ModelParams,
    u0: HeightField,
    snapshot_every: int = 1,
    numerics: Numerics = Numerics(),
) -> Trajectory:
    """Integrate from u0 to T, recording snapshots and diagnostics.

    Initial data outside the admissible cone is projected onto it with a
    logged warning.  On a numerical failure the partial trajectory is
    returned with ``failure`` set; strict mode stops at the failing step.
    """
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    grid = u0.grid
    kernel = kernel_for(params, grid)

    if not admissible(u0, params.lam, numerics.constraint_mode):
        logger.warning("initial data is not admissible; projecting onto the cone")
        u0 = project_pdhg(
            u0, params.lam, tol=numerics.proj_tol, mode=numerics.constraint_mode
        ).u

    dt = (
        cfl_dt(u0, params, numerics, kernel)
        if isinstance(params.dt, str)
        else float(params.dt)
    )
    n_steps = 0 if params.T == 0.0 else max(1, math.ceil(params.T / dt - 1e-12))

    traj = Trajectory(
        params=params,
        numerics=numerics,
        grid=grid,
        snapshots=[Snapshot(0.0, u0.copy(), MultiplierField.zeros(grid))],
        steps=[],
        snapshot_every=snapshot_every,
    )

    u = u0
    warm = None
    for k in range(1, n_steps + 1):
        t_prev = (k - 1) * dt
        dt_k = dt if k < n_steps else params.T - (n_steps - 1) * dt
        try:
            u, m, diag, dual = _advance(
                u, t_prev, dt_k, params, numerics, kernel, warm_dual=warm
            )
        except NonConvergedError as exc:
            traj.failure = str(exc)
            logger.error("run aborted: %s", exc)
            break
        if numerics.warm_start:
            warm = dual
        traj.steps.append(diag)
        if k % snapshot_every == 0 or k == n_steps:
            traj.snapshots.append(Snapshot(t_prev + dt_k, u.copy(), m))
    return traj

"""Finite-difference solver for the zero-noise equations: the hydrodynamic
limit  d_t rho = Lap Phi(rho) + alpha Lap rho - div nu(rho)  and the
controlled skeleton equation with the extra flux sigma(rho) g.

Scheme: second-order centered stencils written in conservative
interface-flux form (so the discrete mass balance is an algebraic
identity), explicit Euler in time under the stability bound

    dt <= c_cfl * h^2 / (max Phi' + alpha),

with the max of Phi' taken over the range of the current data.  Dirichlet
data is imposed on rho as rho = Phi^{-1}(fbar) at both endpoints, which is
well defined because Phi is strictly increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .basis import Grid
from .coefficients import NonlinearitySet
from .errors import ConfigurationError, DivergenceError, DomainError

PLAIN_SIGMA_CODE = {"zero": 0, "phi_sqrt": 1, "smooth": 2}


def plain_sigma_pack(nset: NonlinearitySet) -> tuple:
    """Kernel parameters evaluating the *unmollified* sigma."""
    code = PLAIN_SIGMA_CODE.get(nset.sigma_kind, -1)
    if code < 0:
        raise ConfigurationError(
            f"jitted kernels support the shipped sigma families, got {nset.sigma_kind!r}")
    q = (nset.m or 1.0) / 2.0
    dummy = np.zeros(2)
    return (code, q, 0.0, np.inf, 0.0, 0.0, 0.0, 0.0, dummy, dummy)


@dataclass(frozen=True)
class BoundaryData:
    """Constant Dirichlet datum fbar for Phi(rho), with the induced value
    of rho itself at the boundary."""

    fbar: float
    rho_boundary: float

    @staticmethod
    def from_fbar(nset: NonlinearitySet, fbar: float) -> "BoundaryData":
        if fbar < 0:
            raise DomainError(f"boundary datum must be nonnegative, got {fbar}")
        rho_b = nset.phi_inv(fbar)
        if abs(float(nset.Phi(rho_b)) - fbar) > 1e-12 * max(1.0, abs(fbar)):
            raise DomainError("boundary inversion failed to meet tolerance 1e-12")
        return BoundaryData(fbar=float(fbar), rho_boundary=float(rho_b))

    @staticmethod
    def from_density(nset: NonlinearitySet, M: float) -> "BoundaryData":
        if M < 0:
            raise DomainError(f"boundary density must be nonnegative, got {M}")
        return BoundaryData(fbar=float(nset.Phi(M)), rho_boundary=float(M))


@dataclass
class FieldTrajectory:
    """Nodal values at save times, with provenance metadata."""

    grid: Grid
    times: np.ndarray            # (n_frames,)
    frames: np.ndarray           # (n_frames, n_nodes)
    metadata: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def map_frames(self, fn) -> "FieldTrajectory":
        return FieldTrajectory(grid=self.grid, times=self.times.copy(),
                               frames=fn(self.frames.copy()),
                               metadata=dict(self.metadata))


@dataclass(frozen=True)
class Control:
    """Space-time control g on its own (usually coarse) grid.

    values[j, i] is g at time slab j and spatial node i; the spatial nodes
    are uniform on [0, L] including the endpoints.  In the solvers the
    control is interpolated linearly in space and held constant over each
    time slab of length dt_slab.
    """

    values: np.ndarray           # (n_slabs, n_x)
    L: float
    dt_slab: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 2:
            raise ConfigurationError(f"control grid must be (n_t>=1, n_x>=2), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("control contains non-finite values")
        if self.dt_slab <= 0:
            raise ConfigurationError(f"control slab duration must be positive, got {self.dt_slab}")
        object.__setattr__(self, "values", v)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.values.shape[1])

    @property
    def horizon(self) -> float:
        return self.dt_slab * self.values.shape[0]

    def refine_space(self, grid: Grid) -> np.ndarray:
        """(n_slabs, n_nodes) samples on the solver grid (linear in space)."""
        if abs(grid.L - self.L) > 1e-12:
            raise ConfigurationError(
                f"control domain length {self.L} differs from solver grid {grid.L}")
        xs = grid.nodes
        out = np.empty((self.values.shape[0], xs.size))
        for j in range(self.values.shape[0]):
            out[j] = np.interp(xs, self.x_nodes, self.values[j])
        return out

    @staticmethod
    def zero(L: float = 1.0, n_x: int = 2, n_t: int = 1, T: float = 1.0) -> "Control":
        return Control(values=np.zeros((n_t, n_x)), L=L, dt_slab=T / n_t)


def control_energy(g: Control) -> float:
    """Half the space-time quadrature of g^2 (trapezoid in space, exact
    slab sums in time for the piecewise-constant representation)."""
    w = np.full(g.values.shape[1], g.L / (g.values.shape[1] - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    per_slab = g.values ** 2 @ w
    return 0.5 * float(np.sum(per_slab) * g.dt_slab)


def stability_dt(nset: NonlinearitySet, alpha: float, lo: float, hi: float,
                 h: float, c_cfl: float = 0.25, extra: float = 0.0) -> float:
    """Largest stable explicit step for data ranging over [lo, hi].

    ``extra`` adds the diffusion coefficient of the stochastic correction
    term when the caller runs the noisy equation.
    """
    probe = np.array([max(abs(lo), 1e-9), max(abs(hi), 1e-9)])
    dmax = float(np.max(np.asarray(nset.dPhi(probe), dtype=float)))
    denom = dmax + alpha + extra
    if denom <= 0:
        raise ConfigurationError("degenerate stability bound: max Phi' + alpha <= 0")
    return c_cfl * h * h / denom


def _plan_steps(T: float, dt_req: Optional[float], dt_bound: float,
                save_frames: int) -> tuple[int, float, int]:
    """(n_steps, dt, save_every) with n_steps*dt == T and dt <= dt_bound."""
    if save_frames < 2:
        raise ConfigurationError(f"need at least 2 save frames, got {save_frames}")
    dt_target = dt_bound if dt_req is None else dt_req
    if dt_req is not None and dt_req > dt_bound * (1 + 1e-12):
        raise ConfigurationError(
            f"time step dt={dt_req:g} violates the stability bound {dt_bound:g}")
    per = max(1, int(np.ceil(T / (dt_target * (save_frames - 1)))))
    n_steps = per * (save_frames - 1)
    return n_steps, T / n_steps, per


def _run_deterministic(nset, grid, rho0, bd, T, dt, alpha, control,
                       save_frames, c_cfl, scheme_label):
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.shape != (grid.n_nodes,):
        raise ConfigurationError(
            f"initial field has shape {rho0.shape}, expected ({grid.n_nodes},)")
    if np.any(rho0 < 0):
        raise DomainError("initial data must be nonnegative")
    if abs(rho0[0] - bd.rho_boundary) > 1e-12 or abs(rho0[-1] - bd.rho_boundary) > 1e-12:
        raise ConfigurationError(
            "initial data must carry the boundary value Phi^{-1}(fbar) at both ends")
    if T <= 0:
        raise DomainError(f"horizon must be positive, got {T}")

    dt_bound = stability_dt(nset, alpha, float(np.min(rho0)), float(np.max(rho0)),
                            grid.h, c_cfl=c_cfl)
    n_steps, dt_eff, save_every = _plan_steps(T, dt, dt_bound, save_frames)

    rho = rho0.copy()
    empty_modes = np.zeros((0, grid.n_nodes))
    empty_incr = np.zeros((0, 0))
    zeros = np.zeros(grid.n_nodes)
    if control is not None:
        g_slabs = control.refine_space(grid)
        steps_per_slab = max(1, int(round(control.dt_slab / dt_eff)))
    else:
        g_slabs = np.zeros((0, grid.n_nodes))
        steps_per_slab = 1

    frames = np.zeros((save_frames, grid.n_nodes))
    times = np.zeros(save_frames)
    mass = np.zeros(save_frames)
    pack = plain_sigma_pack(nset)
    status, bad_step, run_min, run_max = _kernels.spde_run(
        rho, bd.rho_boundary, n_steps, dt_eff, grid.h,
        float(nset.m if nset.m is not None else 1.0), alpha, nset.nu_param,
        0.0, 0.0, empty_modes, empty_incr, zeros, zeros, *pack,
        g_slabs, steps_per_slab, save_every, frames, times, mass, False)
    if status != 0:
        raise DivergenceError(
            f"non-finite value at step {bad_step} (t={bad_step * dt_eff:g})", bad_step)

    meta = {"dt": dt_eff, "n_steps": n_steps, "scheme": scheme_label,
            "alpha": alpha, "cfl_bound": dt_bound, "mass": mass,
            "run_min": run_min, "run_max": run_max,
            "sqrt_phi_dissipation": _sqrt_phi_dissipation(nset, grid, frames, times)}
    return FieldTrajectory(grid=grid, times=times, frames=frames, metadata=meta)


def _sqrt_phi_dissipation(nset, grid, frames, times) -> float:
    """Diagnostic  int_0^T int_U |d_x Phi^(1/2)(rho)|^2  (finite for weak
    solutions of the controlled limit with constant boundary data)."""
    u = np.sqrt(np.maximum(np.asarray(nset.Phi(np.maximum(frames, 0.0)), dtype=float), 0.0))
    du = np.diff(u, axis=1) / grid.h
    per_frame = np.sum(du * du, axis=1) * grid.h
    return float(np.trapezoid(per_frame, times))


def solve_hydro(nset: NonlinearitySet, grid: Grid, rho0: np.ndarray,
                bd: BoundaryData, T: float, dt: Optional[float] = None,
                alpha: float = 0.0, save_frames: int = 65,
                c_cfl: float = 0.25) -> FieldTrajectory:
    """Zero-noise, zero-control trajectory of the hydrodynamic equation."""
    return _run_deterministic(nset, grid, rho0, bd, T, dt, alpha, None,
                              save_frames, c_cfl, "explicit-flux-form")


def solve_skeleton(nset: NonlinearitySet, grid: Grid, g: Optional[Control],
                   rho0: np.ndarray, bd: BoundaryData, T: float,
                   dt: Optional[float] = None, alpha: float = 0.0,
                   save_frames: int = 65, c_cfl: float = 0.25) -> FieldTrajectory:
    """Controlled deterministic trajectory; the control enters through the
    interface flux sigma(rho) g with arithmetic-mean sigma."""
    return _run_deterministic(nset, grid, rho0, bd, T, dt, alpha, g,
                              save_frames, c_cfl, "explicit-flux-form")

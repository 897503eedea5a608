"""Euler-Maruyama integrator for the regularized conservative SPDE in Ito
form.  One explicit step advances

    d_t rho = Lap Phi(rho) + alpha Lap rho - div nu(rho)
              - sqrt(eps) div( sigma_n(rho) xi_K )
              + eps/2 div( F1 sigma_n'(rho)^2 grad rho
                           + sigma_n(rho) sigma_n'(rho) F2 )
              - div( sigma_n(rho) P_K g )                       [optional]

with every divergence in conservative interface-flux form.  The stochastic
flux uses interface-averaged sigma_n(rho) times the interface-averaged
nodal noise increment; the correction term is an extra diffusion, so the
stability bound gains the term (eps/2) sup F1 (sup |sigma_n'|)^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .basis import (EigenMode, Grid, NoiseSummaries, mode_matrices,
                    noise_summaries, to_spectral)
from .coefficients import MollifiedSigma, NonlinearitySet
from .deterministic import (BoundaryData, Control, FieldTrajectory,
                            _plan_steps, _sqrt_phi_dissipation, stability_dt)
from .errors import ConfigurationError, DivergenceError, DomainError
from .rng import stream_generator


@dataclass(frozen=True)
class SPDEConfig:
    """Run parameters for one stochastic trajectory."""

    eps: float
    K: int
    n: int                       # mollification level of sigma
    T: float
    alpha: float = 0.0
    dt: Optional[float] = None   # None: largest stable step
    save_frames: int = 65
    c_cfl: float = 0.25
    control: Optional[Control] = None
    project_control: bool = True

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ConfigurationError(f"eps must lie in [0, 1], got {self.eps}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.T <= 0:
            raise ConfigurationError(f"horizon must be positive, got {self.T}")
        if self.K < 0:
            raise ConfigurationError(f"K must be nonnegative, got {self.K}")


@dataclass
class TrajectoryResult:
    trajectory: FieldTrajectory
    seed: Optional[int]
    increments: Optional[np.ndarray]   # (n_steps, K) Brownian increments
    diagnostics: dict = field(default_factory=dict)


def stochastic_stability_dt(cfg: SPDEConfig, nset: NonlinearitySet,
                            moll: MollifiedSigma, sums: NoiseSummaries,
                            lo: float, hi: float, h: float) -> float:
    extra = 0.5 * cfg.eps * sums.sup_F1 * moll.sup_dsigma_n() ** 2 if cfg.eps > 0 else 0.0
    return stability_dt(nset, cfg.alpha, lo, hi, h, c_cfl=cfg.c_cfl, extra=extra)


def _control_slabs(cfg: SPDEConfig, grid: Grid, modes: Sequence[EigenMode],
                   dt_eff: float):
    if cfg.control is None:
        return np.zeros((0, grid.n_nodes)), 1
    g = cfg.control
    if cfg.project_control and cfg.K > 0:
        g = project_control_nodal(g, modes[: cfg.K], grid)
        slabs = g
    else:
        slabs = g.refine_space(grid)
    steps_per_slab = max(1, int(round(cfg.control.dt_slab / dt_eff)))
    return slabs, steps_per_slab


def project_control_nodal(g: Control, modes: Sequence[EigenMode], grid: Grid) -> np.ndarray:
    """Per time slab, replace g(., t) by its projection onto the span of
    the supplied modes; returns nodal samples (n_slabs, n_nodes)."""
    slabs = g.refine_space(grid)
    E, _, _ = mode_matrices(modes)
    w = grid.quad_weights()
    coeffs = slabs @ (w[:, None] * E.T)          # (n_slabs, K)
    return coeffs @ E


def project_control(g: Control, modes: Sequence[EigenMode]) -> Control:
    """Spectral truncation of a control, returned on the solver grid."""
    grid = modes[0].grid
    nodal = project_control_nodal(g, modes, grid)
    return Control(values=nodal, L=grid.L, dt_slab=g.dt_slab)


def run_with_increments(cfg: SPDEConfig, nset: NonlinearitySet,
                        moll: MollifiedSigma, modes: Sequence[EigenMode],
                        rho0: np.ndarray, bd: BoundaryData,
                        increments: np.ndarray,
                        seed: Optional[int] = None,
                        retain_increments: bool = True) -> TrajectoryResult:
    """Trajectory driven by explicitly supplied Brownian increments
    (variance dt each).  Replaying the retained increments of an earlier
    run reproduces it bitwise."""
    grid = modes[0].grid if modes else None
    if grid is None:
        raise ConfigurationError("need at least the grid via one mode; pass modes")
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.shape != (grid.n_nodes,):
        raise ConfigurationError(
            f"initial field has shape {rho0.shape}, expected ({grid.n_nodes},)")
    if abs(rho0[0] - bd.rho_boundary) > 1e-12 or abs(rho0[-1] - bd.rho_boundary) > 1e-12:
        raise ConfigurationError("initial data must carry the boundary value at both ends")

    use_modes = modes[: cfg.K]
    if cfg.K > 0:
        if len(use_modes) < cfg.K:
            raise ConfigurationError(f"need {cfg.K} modes, got {len(modes)}")
        sums = noise_summaries(use_modes)
        E, _, _ = mode_matrices(use_modes)
        E = E.copy()
    else:
        sums = None
        E = np.zeros((0, grid.n_nodes))

    dt_bound = (stochastic_stability_dt(cfg, nset, moll, sums,
                                        float(np.min(rho0)), float(np.max(rho0)), grid.h)
                if cfg.K > 0 and cfg.eps > 0
                else stability_dt(nset, cfg.alpha, float(np.min(rho0)),
                                  float(np.max(rho0)), grid.h, c_cfl=cfg.c_cfl))
    n_steps, dt_eff, save_every = _plan_steps(cfg.T, cfg.dt, dt_bound, cfg.save_frames)

    increments = np.ascontiguousarray(np.asarray(increments, dtype=float))
    if cfg.K > 0 and increments.shape != (n_steps, cfg.K):
        raise ConfigurationError(
            f"increments have shape {increments.shape}, expected ({n_steps}, {cfg.K})")
    if cfg.K == 0:
        increments = np.zeros((0, 0))
        E = np.zeros((0, grid.n_nodes))

    if cfg.eps > 0 and cfg.K > 0:
        F1 = sums.F1.astype(float)
        F2 = sums.F2.astype(float)
    else:
        F1 = np.zeros(grid.n_nodes)
        F2 = np.zeros(grid.n_nodes)

    g_slabs, steps_per_slab = _control_slabs(cfg, grid, modes, dt_eff)

    rho = rho0.copy()
    frames = np.zeros((cfg.save_frames, grid.n_nodes))
    times = np.zeros(cfg.save_frames)
    mass = np.zeros(cfg.save_frames)
    pack = moll.kernel_pack()
    status, bad_step, run_min, run_max = _kernels.spde_run(
        rho, bd.rho_boundary, n_steps, dt_eff, grid.h,
        float(nset.m if nset.m is not None else 1.0), cfg.alpha, nset.nu_param,
        cfg.eps, float(np.sqrt(cfg.eps)), E, increments, F1, F2, *pack,
        g_slabs, steps_per_slab, save_every, frames, times, mass,
        cfg.eps > 0)
    if status != 0:
        raise DivergenceError(
            f"non-finite value at step {bad_step} (t={bad_step * dt_eff:g}); "
            "last stable frame retained in the exception context", bad_step)

    meta = {"dt": dt_eff, "n_steps": n_steps, "scheme": "euler-maruyama-flux-form",
            "alpha": cfg.alpha, "eps": cfg.eps, "K": cfg.K, "n": moll.n,
            "seed": seed, "cfl_bound": dt_bound, "mass": mass,
            "sqrt_phi_dissipation": _sqrt_phi_dissipation(nset, grid, frames, times)}
    traj = FieldTrajectory(grid=grid, times=times, frames=frames, metadata=meta)
    return TrajectoryResult(
        trajectory=traj, seed=seed,
        increments=increments if retain_increments and cfg.K > 0 else None,
        diagnostics={"run_min": run_min, "run_max": run_max, "mass": mass})


def planned_steps(cfg: SPDEConfig, nset: NonlinearitySet, moll: MollifiedSigma,
                  modes: Sequence[EigenMode], rho0: np.ndarray) -> tuple[int, float, int]:
    """(n_steps, dt, save_every) the run will use; lets callers pregenerate
    or share increment arrays."""
    grid = modes[0].grid
    rho0 = np.asarray(rho0, dtype=float)
    if cfg.K > 0 and cfg.eps > 0:
        dt_bound = stochastic_stability_dt(cfg, nset, moll,
                                           noise_summaries(modes[: cfg.K]),
                                           float(np.min(rho0)), float(np.max(rho0)),
                                           grid.h)
    else:
        dt_bound = stability_dt(nset, cfg.alpha, float(np.min(rho0)),
                                float(np.max(rho0)), grid.h, c_cfl=cfg.c_cfl)
    return _plan_steps(cfg.T, cfg.dt, dt_bound, cfg.save_frames)


def simulate(cfg: SPDEConfig, nset: NonlinearitySet, moll: MollifiedSigma,
             modes: Sequence[EigenMode], rho0: np.ndarray, bd: BoundaryData,
             seed: int, retain_increments: bool = False) -> TrajectoryResult:
    """Full trajectory; a pure function of (all inputs, seed)."""
    n_steps, dt_eff, _ = planned_steps(cfg, nset, moll, modes, rho0)
    if cfg.K > 0:
        rng = stream_generator(seed)
        increments = rng.normal(0.0, np.sqrt(dt_eff), size=(n_steps, cfg.K))
    else:
        increments = np.zeros((0, 0))
    return run_with_increments(cfg, nset, moll, modes, rho0, bd, increments,
                               seed=seed, retain_increments=retain_increments)


def ito_step(state: np.ndarray, cfg: SPDEConfig, nset: NonlinearitySet,
             moll: MollifiedSigma, sums: NoiseSummaries, dt: float, h: float,
             rho_boundary: float, noise_inc: np.ndarray,
             g_slice: Optional[np.ndarray] = None,
             return_fluxes: bool = False):
    """One explicit step given the *nodal* noise increment field.

    The increment must vanish at both boundary nodes (it does for any
    superposition of the Dirichlet modes).  With eps = 0 and no control
    this is exactly one step of the deterministic solver.
    """
    state = np.asarray(state, dtype=float)
    noise_inc = np.asarray(noise_inc, dtype=float)
    if noise_inc.shape != state.shape:
        raise ConfigurationError("noise increment shape differs from the state")
    if noise_inc[0] != 0.0 or noise_inc[-1] != 0.0:
        raise ConfigurationError("noise increment must vanish at the boundary nodes")
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")

    rho = state.copy()
    g_nodal = np.zeros_like(rho) if g_slice is None else np.asarray(g_slice, dtype=float)
    fluxes = np.zeros(rho.size - 1)
    bad = _kernels.flux_form_step(
        rho, noise_inc, g_nodal, dt, h,
        float(nset.m if nset.m is not None else 1.0), cfg.alpha, nset.nu_param,
        cfg.eps, float(np.sqrt(cfg.eps)), sums.F1.astype(float), sums.F2.astype(float),
        *moll.kernel_pack(),
        cfg.eps > 0, cfg.eps > 0, g_slice is not None, fluxes)
    if bad:
        raise DivergenceError("non-finite value after one step", 0)
    rho[0] = rho_boundary
    rho[-1] = rho_boundary
    if return_fluxes:
        return rho, fluxes
    return rho


def heun_stratonovich(cfg: SPDEConfig, nset: NonlinearitySet, moll: MollifiedSigma,
                      modes: Sequence[EigenMode], rho0: np.ndarray,
                      bd: BoundaryData, seed: int) -> np.ndarray:
    """Diagnostic midpoint integrator of the Stratonovich form (no
    correction drift); used only to cross-check the Ito form statistically."""
    grid = modes[0].grid
    n_steps, dt_eff, _ = planned_steps(cfg, nset, moll, modes, rho0)
    rng = stream_generator(seed)
    increments = rng.normal(0.0, np.sqrt(dt_eff), size=(n_steps, cfg.K))
    E, _, _ = mode_matrices(modes[: cfg.K])
    rho = np.asarray(rho0, dtype=float).copy()
    status, out = _kernels.heun_stratonovich_run(
        rho, bd.rho_boundary, n_steps, dt_eff, grid.h,
        float(nset.m if nset.m is not None else 1.0), cfg.alpha, nset.nu_param,
        float(np.sqrt(cfg.eps)), E.copy(), increments, *moll.kernel_pack())
    if status != 0:
        raise DivergenceError("non-finite value in the midpoint diagnostic", -1)
    return out

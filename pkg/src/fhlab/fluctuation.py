"""Estimators, trajectory norms, and the headline Monte Carlo experiments:
moment (law-of-large-numbers) rates in the noise amplitude, the coupled
linearization error in negative Sobolev norms, and the uniform negative-part
estimate.  Every experiment is a deterministic function of its plan and the
master seed: trajectory i of schedule point j always draws from the stream
(master_seed, j, i), and per-point statistics are reduced in index order.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .basis import Grid, dirichlet_eigenpairs, noise_summaries, scaling_budget
from .coefficients import NonlinearitySet, mollified_sigma, power_law_set
from .deterministic import BoundaryData, FieldTrajectory
from .errors import ArityError, ConfigurationError, DomainError
from .linear import build_linear_model, solve_linear_fluctuation
from .rng import stream_generator
from .spde import SPDEConfig, planned_steps, run_with_increments
from .stats import LogLogFit, fit_loglog, two_pass_moments


# ---------------------------------------------------------------------------
# picklable model description (workers rebuild the callables)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Plain-data description of a shipped model, safe to send to workers."""

    m: float = 1.0
    sigma_kind: str = "phi_sqrt"
    nu_kind: str = "zero"
    nu_a: float = 0.0
    M: float = 1.0

    def build_set(self) -> NonlinearitySet:
        nu_spec = "zero" if self.nu_kind == "zero" else ("linear", self.nu_a)
        return power_law_set(self.m, self.sigma_kind, nu_spec)


_BUILD_CACHE: dict = {}


def _build(spec: ModelSpec, moll_n: int, L: float, n_interior: int, K_max: int):
    key = (spec, moll_n, L, n_interior, K_max)
    hit = _BUILD_CACHE.get(key)
    if hit is None:
        nset = spec.build_set()
        moll = mollified_sigma(nset, moll_n)
        bd = BoundaryData.from_density(nset, spec.M)
        grid = Grid(L=L, n_interior=n_interior)
        modes = dirichlet_eigenpairs(grid, K_max)
        hit = (nset, moll, bd, grid, modes)
        _BUILD_CACHE[key] = hit
    return hit


# ---------------------------------------------------------------------------
# fluctuation field and trajectory norms
# ---------------------------------------------------------------------------

def fluctuation_field(traj: FieldTrajectory, rho_bar: float, eps: float) -> FieldTrajectory:
    """Rescaled deviation  eps^(-1/2) (rho - rho_bar),  frame by frame."""
    if eps <= 0:
        raise DomainError(f"fluctuation scaling needs eps > 0, got {eps}")
    scale = 1.0 / np.sqrt(eps)
    out = traj.map_frames(lambda fr: (fr - rho_bar) * scale)
    out.metadata["fluctuation_eps"] = eps
    out.metadata["rho_bar"] = rho_bar
    return out


def trajectory_norms(traj: FieldTrajectory, p: float, s: Optional[float] = None,
                     modes=None) -> dict:
    """Space-time norms of a trajectory by trapezoid quadrature.

    Returns lp_spacetime = ||u||_{L^p(U x [0,T])}, sup_lp_in_time, and,
    when s and modes are given, l2_hs = ||u||_{L^2([0,T]; H^-s)}.
    """
    if p < 1:
        raise DomainError(f"need p >= 1, got {p}")
    w = traj.grid.quad_weights()
    absu = np.abs(traj.frames)
    per_frame = (absu ** p) @ w
    lp_spacetime = float(np.trapezoid(per_frame, traj.times) ** (1.0 / p))
    sup_lp = float(np.max(per_frame ** (1.0 / p)))
    out = {"lp_spacetime": lp_spacetime, "sup_lp_in_time": sup_lp}
    if s is not None:
        if modes is None:
            raise ConfigurationError("l2_hs needs the eigenmode list")
        from .basis import hs_dual_norm
        hs_sq = np.array([hs_dual_norm(fr, s, modes).value ** 2 for fr in traj.frames])
        out["l2_hs"] = float(np.sqrt(np.trapezoid(hs_sq, traj.times)))
    return out


# ---------------------------------------------------------------------------
# schedules and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchedulePoint:
    """One (eps, K) pair of the joint schedule with its mollification level
    and trajectory budget."""

    eps: float
    K: int
    n: int = 100
    n_traj: int = 100

    def __post_init__(self):
        if self.n_traj < 2:
            raise ConfigurationError(f"need at least 2 trajectories, got {self.n_traj}")
        if self.eps < 0:
            raise ConfigurationError(f"eps must be nonnegative, got {self.eps}")


def schedule_from_rule(eps_list: Sequence[float], tau: float, d: int = 1,
                       n: int = 100, n_traj: int = 100,
                       grid: Optional[Grid] = None) -> list[SchedulePoint]:
    """K chosen per point as the largest integer with eps * K^(d+2) < tau."""
    pts = []
    for eps in eps_list:
        K = int(np.floor((tau / eps) ** (1.0 / (d + 2))))
        if eps * K ** (d + 2) >= tau:
            K -= 1
        K = max(K, 1)
        if grid is not None:
            K = min(K, grid.n_interior)
        pts.append(SchedulePoint(eps=float(eps), K=K, n=n, n_traj=n_traj))
    return pts


def point_budgets(plan: Sequence[SchedulePoint], grid: Grid) -> np.ndarray:
    out = np.empty(len(plan))
    for j, pt in enumerate(plan):
        modes = dirichlet_eigenpairs(grid, pt.K)
        out[j] = scaling_budget(pt.eps, noise_summaries(modes))
    return out


@dataclass
class RateReport:
    """Per-point Monte Carlo estimates with a fitted log-log slope."""

    kind: str
    x_label: str
    points: list                      # list of dicts, one per schedule point
    fit: Optional[LogLogFit]
    admissible: bool
    meta: dict = field(default_factory=dict)

    def estimates(self) -> np.ndarray:
        return np.array([p["estimate"] for p in self.points])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "x_label": self.x_label,
            "points": self.points,
            "fit": None if self.fit is None else {
                "slope": self.fit.slope, "intercept": self.fit.intercept,
                "r_squared": self.fit.r_squared, "slope_stderr": self.fit.slope_stderr},
            "admissible": self.admissible,
            "meta": self.meta,
        }


def _fit_or_flag(xs, ys, ses) -> tuple[Optional[LogLogFit], str]:
    try:
        return fit_loglog(xs, ys, ses), ""
    except (DomainError, ArityError) as exc:
        return None, f"slope undefined: {exc}"


# ---------------------------------------------------------------------------
# worker machinery
# ---------------------------------------------------------------------------

_CHUNK = 25


def _chunks(n_items: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + _CHUNK, n_items)) for lo in range(0, n_items, _CHUNK)]


def _run_chunks(worker, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) == 1:
        return [worker(t) for t in tasks]
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.map(worker, tasks)


def _lab_tuple(lab: "LabSetup") -> tuple:
    return (lab.spec, lab.L, lab.n_interior, lab.T, lab.alpha,
            lab.save_frames, lab.c_cfl)


@dataclass(frozen=True)
class LabSetup:
    """Shared experiment context: model, grid, horizon, solver options."""

    spec: ModelSpec
    L: float = 1.0
    n_interior: int = 128
    T: float = 0.25
    alpha: float = 0.0
    save_frames: int = 129
    c_cfl: float = 0.25


def _moment_chunk(task) -> tuple[int, np.ndarray, np.ndarray, np.ndarray]:
    """Per-trajectory moment statistics for one index range of one point.

    Returns (lo, lp2, lp4, run_min) where lp_p = int int (rho - M)^p.
    """
    (lab_t, eps, K, moll_n, master_seed, point_idx, lo, hi) = task
    spec, L, n_int, T, alpha, save_frames, c_cfl = lab_t
    nset, moll, bd, grid, modes = _build(spec, moll_n, L, n_int, max(K, 1))
    cfg = SPDEConfig(eps=eps, K=K, n=moll_n, T=T, alpha=alpha,
                     save_frames=save_frames, c_cfl=c_cfl)
    rho0 = np.full(grid.n_nodes, bd.rho_boundary)
    n_steps, dt_eff, _ = planned_steps(cfg, nset, moll, modes, rho0)
    w = grid.quad_weights()

    m = hi - lo
    lp2 = np.empty(m)
    lp4 = np.empty(m)
    rmin = np.empty(m)
    for j, i in enumerate(range(lo, hi)):
        rng = stream_generator(master_seed, point_idx, i)
        incr = rng.normal(0.0, np.sqrt(dt_eff), size=(n_steps, K)) if K > 0 \
            else np.zeros((0, 0))
        res = run_with_increments(cfg, nset, moll, modes, rho0, bd, incr,
                                  retain_increments=False)
        d = res.trajectory.frames - bd.rho_boundary
        t = res.trajectory.times
        lp2[j] = np.trapezoid((d * d) @ w, t)
        lp4[j] = np.trapezoid((d ** 4) @ w, t)
        rmin[j] = res.diagnostics["run_min"]
    return lo, lp2, lp4, rmin


def _collect_moment_point(lab: LabSetup, pt: SchedulePoint, point_idx: int,
                          master_seed: int, workers: int):
    tasks = [(_lab_tuple(lab), pt.eps, pt.K, pt.n, master_seed, point_idx, lo, hi)
             for lo, hi in _chunks(pt.n_traj)]
    parts = _run_chunks(_moment_chunk, tasks, workers)
    parts.sort(key=lambda r: r[0])
    lp2 = np.concatenate([p[1] for p in parts])
    lp4 = np.concatenate([p[2] for p in parts])
    rmin = np.concatenate([p[3] for p in parts])
    return lp2, lp4, rmin


def moment_statistics(lab: LabSetup, plan: Sequence[SchedulePoint],
                      master_seed: int, workers: int = 1) -> list[dict]:
    """Shared batch behind the moment-rate and negative-part experiments:
    one set of trajectories per schedule point, all statistics extracted
    from it (common random numbers across the derived reports)."""
    _warm(lab, plan)
    grid = Grid(L=lab.L, n_interior=lab.n_interior)
    budgets = point_budgets(plan, grid)
    M = lab.spec.M
    rows = []
    for j, pt in enumerate(plan):
        lp2, lp4, rmin = _collect_moment_point(lab, pt, j, master_seed, workers)
        neg = np.maximum(M - rmin, 0.0)
        below = (rmin < 0.5 * M).astype(float)
        rows.append({
            "eps": pt.eps, "K": pt.K, "n": pt.n, "n_traj": pt.n_traj,
            "budget": float(budgets[j]),
            "lp2": two_pass_moments(lp2), "lp4": two_pass_moments(lp4),
            "negpart": two_pass_moments(neg), "below_half": two_pass_moments(below),
        })
    return rows


def _warm(lab: LabSetup, plan: Sequence[SchedulePoint]) -> None:
    """Compile the kernels in the parent before forking workers."""
    K = max((pt.K for pt in plan), default=1)
    nset, moll, bd, grid, modes = _build(lab.spec, plan[0].n if plan else 100,
                                         lab.L, lab.n_interior, max(K, 1))
    cfg = SPDEConfig(eps=min(plan[0].eps if plan else 0.0, 1.0), K=min(K, 1),
                     n=moll.n, T=lab.T, alpha=lab.alpha, save_frames=2,
                     c_cfl=lab.c_cfl, dt=None)
    rho0 = np.full(grid.n_nodes, bd.rho_boundary)
    n_steps, dt_eff, _ = planned_steps(cfg, nset, moll, modes, rho0)
    incr = np.zeros((n_steps, cfg.K)) if cfg.K else np.zeros((0, 0))
    run_with_increments(cfg, nset, moll, modes, rho0, bd, incr,
                        retain_increments=False)


def _admissible(budgets: np.ndarray) -> bool:
    return bool(np.all(np.diff(budgets) < 0))


def run_lln_experiment(lab: LabSetup, plan: Sequence[SchedulePoint], p: int,
                       master_seed: int, workers: int = 1,
                       _rows: Optional[list] = None) -> RateReport:
    """Monte Carlo estimates of  E int int (rho - M)^p  against eps with a
    fitted log-log slope (expected: 1 at p=2, p/2 at higher even p)."""
    if p not in (2, 4):
        raise ConfigurationError(f"shipped moment orders are p in {{2, 4}}, got {p}")
    rows = moment_statistics(lab, plan, master_seed, workers) if _rows is None else _rows
    key = "lp2" if p == 2 else "lp4"
    points = []
    for r in rows:
        mom = r[key]
        points.append({"eps": r["eps"], "K": r["K"], "n": r["n"],
                       "budget": r["budget"], "estimate": mom.mean,
                       "stderr": mom.stderr, "n_traj": r["n_traj"]})
    xs = np.array([r["eps"] for r in rows])
    ys = np.array([pnt["estimate"] for pnt in points])
    ses = np.array([pnt["stderr"] for pnt in points])
    fit, note = _fit_or_flag(xs, ys, ses)
    budgets = np.array([r["budget"] for r in rows])
    return RateReport(kind=f"lln_p{p}", x_label="eps", points=points, fit=fit,
                      admissible=_admissible(budgets),
                      meta={"p": p, "master_seed": master_seed, "note": note,
                            "T": lab.T, "n_interior": lab.n_interior})


def run_linf_experiment(lab: LabSetup, plan: Sequence[SchedulePoint],
                        master_seed: int, workers: int = 1,
                        _rows: Optional[list] = None) -> RateReport:
    """Expected uniform negative part  E sup (rho - M)_-  fitted against
    the drift budget  eps (sup F3 + sup divF2), plus the frequency of
    trajectories dipping below M/2."""
    rows = moment_statistics(lab, plan, master_seed, workers) if _rows is None else _rows
    grid = Grid(L=lab.L, n_interior=lab.n_interior)
    points = []
    xs = []
    for r in rows:
        sums = noise_summaries(dirichlet_eigenpairs(grid, r["K"]))
        x = r["eps"] * (sums.sup_F3 + sums.sup_divF2)
        xs.append(x)
        points.append({"eps": r["eps"], "K": r["K"], "n": r["n"],
                       "budget": r["budget"], "drift_budget": float(x),
                       "estimate": r["negpart"].mean, "stderr": r["negpart"].stderr,
                       "below_half_freq": r["below_half"].mean,
                       "below_half_stderr": r["below_half"].stderr,
                       "n_traj": r["n_traj"]})
    ys = np.array([pnt["estimate"] for pnt in points])
    ses = np.array([pnt["stderr"] for pnt in points])
    fit, note = _fit_or_flag(np.array(xs), ys, ses)
    budgets = np.array([r["budget"] for r in rows])
    return RateReport(kind="linf_negative_part", x_label="eps*(supF3+supdivF2)",
                      points=points, fit=fit, admissible=_admissible(budgets),
                      meta={"master_seed": master_seed, "note": note, "T": lab.T,
                            "n_interior": lab.n_interior})


# ---------------------------------------------------------------------------
# coupled linearization-error experiment
# ---------------------------------------------------------------------------

def _clt_chunk(task):
    (lab_t, eps, K, moll_n, s, k_drive, master_seed, point_idx, lo, hi) = task
    spec, L, n_int, T, alpha, save_frames, c_cfl = lab_t
    nset, moll, bd, grid, modes = _build(spec, moll_n, L, n_int, k_drive)
    cfg = SPDEConfig(eps=eps, K=K, n=moll_n, T=T, alpha=alpha,
                     save_frames=save_frames, c_cfl=c_cfl)
    rho0 = np.full(grid.n_nodes, bd.rho_boundary)
    n_steps, dt_eff, _ = planned_steps(cfg, nset, moll, modes, rho0)
    model = build_linear_model(nset, spec.M, modes, K_lin=k_drive, K_drive=k_drive)
    if dt_eff > model.stability_dt():
        raise ConfigurationError(
            "nonlinear step exceeds the linear Galerkin stability bound; "
            "lower K_drive or refine dt")
    from .basis import mode_matrices
    E, _, lam = mode_matrices(modes)
    w = grid.quad_weights()
    proj = (w[None, :] * E).T          # (n_nodes, k_drive)
    lam_w = lam[:k_drive] ** (-s)

    m = hi - lo
    err_sq = np.empty(m)
    err = np.empty(m)
    for j, i in enumerate(range(lo, hi)):
        rng = stream_generator(master_seed, point_idx, i)
        incr_full = rng.normal(0.0, np.sqrt(dt_eff), size=(n_steps, k_drive))
        incr_nl = np.ascontiguousarray(incr_full[:, :K])
        res = run_with_increments(cfg, nset, moll, modes, rho0, bd, incr_nl,
                                  retain_increments=False)
        lin = solve_linear_fluctuation(model, T, dt_eff,
                                       shared_increments=incr_full,
                                       save_frames=save_frames)
        v_nl = (res.trajectory.frames - bd.rho_boundary) / np.sqrt(eps)
        c_nl = v_nl @ proj
        diff = c_nl - lin.coefficients
        hs_sq = np.sum(lam_w * diff * diff, axis=1)
        err_sq[j] = np.trapezoid(hs_sq, res.trajectory.times)
        err[j] = np.sqrt(err_sq[j])
    return lo, err_sq, err


def run_clt_experiment(lab: LabSetup, plan: Sequence[SchedulePoint], s: float,
                       master_seed: int, workers: int = 1,
                       k_drive_factor: int = 4,
                       etas: Sequence[float] = (0.1, 0.05)) -> RateReport:
    """Coupled error  E || v_eps - v ||^2_{L^2 H^-s}  along the schedule.

    The nonlinear fluctuation field and its linear reference share the
    first K driving Brownian increments per step; the linear reference is
    driven by k_drive_factor * K modes in total, the extras independent.
    Reports the squared-error estimates, their monotone decrease, and the
    exceedance frequencies P(error > eta).
    """
    if s <= 1.5:
        raise DomainError(f"coupling norms need s > (d+2)/2 = 1.5, got s={s}")
    _warm(lab, plan)
    grid = Grid(L=lab.L, n_interior=lab.n_interior)
    budgets = point_budgets(plan, grid)
    points = []
    for j, pt in enumerate(plan):
        if pt.eps <= 0 or pt.K < 1:
            raise ConfigurationError("coupling experiment needs eps > 0 and K >= 1")
        k_drive = min(k_drive_factor * pt.K, grid.n_interior)
        tasks = [(_lab_tuple(lab), pt.eps, pt.K, pt.n, s, k_drive,
                  master_seed, j, lo, hi) for lo, hi in _chunks(pt.n_traj)]
        parts = _run_chunks(_clt_chunk, tasks, workers)
        parts.sort(key=lambda r: r[0])
        err_sq = np.concatenate([p[1] for p in parts])
        err = np.concatenate([p[2] for p in parts])
        mom = two_pass_moments(err_sq)
        row = {"eps": pt.eps, "K": pt.K, "n": pt.n, "k_drive": k_drive,
               "budget": float(budgets[j]), "estimate": mom.mean,
               "stderr": mom.stderr, "n_traj": pt.n_traj}
        for eta in etas:
            freq = two_pass_moments((err > eta).astype(float))
            row[f"exceed_{eta:g}"] = freq.mean
            row[f"exceed_{eta:g}_stderr"] = freq.stderr
        points.append(row)
    xs = np.array([p["budget"] for p in points])
    ys = np.array([p["estimate"] for p in points])
    ses = np.array([p["stderr"] for p in points])
    fit, note = _fit_or_flag(xs, ys, ses)
    return RateReport(kind="clt_coupled_error", x_label="budget", points=points,
                      fit=fit, admissible=_admissible(budgets),
                      meta={"s": s, "master_seed": master_seed, "note": note,
                            "etas": list(etas), "T": lab.T,
                            "n_interior": lab.n_interior,
                            "k_drive_factor": k_drive_factor})

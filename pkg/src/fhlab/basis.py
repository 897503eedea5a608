"""Spatial grid, Dirichlet-Laplacian eigenbasis, truncated noise fields.

The domain is the interval (0, L) discretized by ``n_interior`` equispaced
interior nodes plus the two endpoints.  The noise is built from the first K
eigenfunctions of the Dirichlet Laplacian,

    e_k(x) = sqrt(2/L) sin(k pi x / L),    lambda_k = (k pi / L)**2,

which are orthonormal in L2(0, L).  For a truncation level K the quadratic
summary fields of the noise are

    F1 = sum_k e_k^2,   F2 = sum_k e_k e_k',   F3 = sum_k (e_k')^2,

and the divergence of F2 satisfies the algebraic identity

    div F2 = F3 - sum_k lambda_k e_k^2,

which this module uses as the *definition* of the stored field.

All inner products are trapezoid quadrature on the grid.  On a uniform grid
the trapezoid rule enjoys exact discrete orthogonality of the sine modes
(up to float roundoff), so quadrature orthonormality holds to ~1e-13 even
at moderate resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class Grid:
    """Uniform 1D grid on [0, L] with both boundary nodes included."""

    L: float = 1.0
    n_interior: int = 128

    def __post_init__(self):
        if self.L <= 0:
            raise DomainError(f"domain length must be positive, got {self.L}")
        if self.n_interior < 1:
            raise DomainError(f"need at least one interior node, got {self.n_interior}")

    @property
    def h(self) -> float:
        return self.L / (self.n_interior + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_interior + 2

    @property
    def nodes(self) -> np.ndarray:
        x = np.linspace(0.0, self.L, self.n_nodes)
        x[0], x[-1] = 0.0, self.L
        return x

    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights including the boundary nodes."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Trapezoid L2(0, L) inner product of two nodal fields."""
        return float(np.sum(self.quad_weights() * np.asarray(f) * np.asarray(g)))


@dataclass(frozen=True)
class EigenMode:
    """One Dirichlet-Laplacian eigenpair sampled on a grid."""

    grid: Grid
    index: int
    eigenvalue: float
    values: np.ndarray            # e_k at all nodes, exactly 0 at both ends
    derivative_values: np.ndarray  # e_k' at all nodes


def dirichlet_eigenpairs(grid: Grid, K: int) -> list[EigenMode]:
    """Analytic sine eigenpairs e_1..e_K on ``grid``.

    K may not exceed n_interior: beyond that the sampled sine modes alias
    on the grid and quadrature orthogonality is lost.
    """
    if K < 1:
        raise DomainError(f"need K >= 1, got {K}")
    if K > grid.n_interior:
        raise ConfigurationError(
            f"K={K} exceeds the Nyquist limit of the grid "
            f"(n_interior={grid.n_interior}); refine the grid or lower K"
        )
    x = grid.nodes
    amp = np.sqrt(2.0 / grid.L)
    modes = []
    for k in range(1, K + 1):
        lam = (k * np.pi / grid.L) ** 2
        vals = amp * np.sin(k * np.pi * x / grid.L)
        vals[0] = 0.0
        vals[-1] = 0.0
        dvals = amp * (k * np.pi / grid.L) * np.cos(k * np.pi * x / grid.L)
        vals.flags.writeable = False
        dvals.flags.writeable = False
        modes.append(EigenMode(grid=grid, index=k, eigenvalue=lam,
                               values=vals, derivative_values=dvals))
    return modes


def mode_matrices(modes: Sequence[EigenMode]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack modes into (K, n_nodes) value/derivative arrays plus eigenvalues."""
    _require_common_grid(modes)
    E = np.stack([m.values for m in modes])
    D = np.stack([m.derivative_values for m in modes])
    lam = np.array([m.eigenvalue for m in modes])
    return E, D, lam


def _require_common_grid(modes: Sequence[EigenMode]) -> Grid:
    if not modes:
        raise ConfigurationError("empty mode list")
    g = modes[0].grid
    for m in modes[1:]:
        if m.grid != g:
            raise ConfigurationError(
                "modes were built on different grids; rebuild them on one grid"
            )
    return g


@dataclass(frozen=True)
class NoiseSummaries:
    """Truncation level K with the nodal summary fields of the noise."""

    grid: Grid
    K: int
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    divF2: np.ndarray
    sup_F1: float = field(init=False)
    sup_F2: float = field(init=False)
    sup_F3: float = field(init=False)
    sup_divF2: float = field(init=False)

    def __post_init__(self):
        # sup norms over the *closed* interval: F3 attains its maximum at the
        # boundary nodes for the sine basis, so the endpoints must count.
        object.__setattr__(self, "sup_F1", float(np.max(np.abs(self.F1))))
        object.__setattr__(self, "sup_F2", float(np.max(np.abs(self.F2))))
        object.__setattr__(self, "sup_F3", float(np.max(np.abs(self.F3))))
        object.__setattr__(self, "sup_divF2", float(np.max(np.abs(self.divF2))))


def noise_summaries(modes: Sequence[EigenMode]) -> NoiseSummaries:
    """Nodal F1, F2, F3 and div F2 for the truncation given by ``modes``."""
    grid = _require_common_grid(modes)
    E, D, lam = mode_matrices(modes)
    F1 = np.sum(E * E, axis=0)
    F2 = np.sum(E * D, axis=0)
    F3 = np.sum(D * D, axis=0)
    divF2 = F3 - np.sum(lam[:, None] * E * E, axis=0)
    return NoiseSummaries(grid=grid, K=len(modes), F1=F1, F2=F2, F3=F3, divF2=divF2)


class TailSum(NamedTuple):
    value: float
    upper_bound: float


def tail_decay_exponent(s: float, d: int = 1) -> float:
    """Predicted log-log slope of the tail sum in K: 1 - 2(s-1)/d."""
    return 1.0 - 2.0 * (s - 1.0) / d


def tail_sum(K: int, s: float, d: int = 1, L: float = 1.0) -> TailSum:
    """Tail sum  T_s(K) = sum_{k >= K} lambda_k^{-(s-1)}  of squared dual
    norms of the high modes, with lambda_k = (k pi / L)^2.

    Returns the evaluated value together with a guaranteed upper bound
    (partial sum plus integral remainder).  Requires s > (d+2)/2, below
    which the sum may diverge.
    """
    if d != 1:
        raise DomainError("closed-form eigenvalues are only available for d=1 here")
    if s <= (d + 2) / 2:
        raise DomainError(
            f"tail sum needs s > (d+2)/2 = {(d + 2) / 2}, got s={s} (sum may diverge)"
        )
    if K < 1:
        raise DomainError(f"need K >= 1, got {K}")
    a = 2.0 * (s - 1.0)          # k-exponent: lambda_k^-(s-1) = (pi/L)^(-2(s-1)) k^-a
    pref = (np.pi / L) ** (-2.0 * (s - 1.0))
    n_explicit = 4000
    ks = np.arange(K, K + n_explicit, dtype=float)
    partial = float(np.sum(ks ** (-a)))
    n_last = K + n_explicit - 1
    # midpoint-rule remainder estimate and a guaranteed overestimate
    remainder_mid = (n_last + 0.5) ** (1.0 - a) / (a - 1.0)
    remainder_hi = n_last ** (1.0 - a) / (a - 1.0)
    return TailSum(value=pref * (partial + remainder_mid),
                   upper_bound=pref * (partial + remainder_hi))


def scaling_budget(eps: float, sums: NoiseSummaries) -> float:
    """Joint-scaling budget  eps * (|F1|^2 + |F2|^2 + |F3|^2 + |divF2|^2)
    in sup norms.  Schedules are admissible when this decreases to zero."""
    if eps < 0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    return eps * (sums.sup_F1 ** 2 + sums.sup_F2 ** 2
                  + sums.sup_F3 ** 2 + sums.sup_divF2 ** 2)


def sample_noise_increment(modes: Sequence[EigenMode], dt: float,
                           rng: np.random.Generator) -> np.ndarray:
    """One nodal increment  sum_k e_k(x_i) dB_k  with dB_k ~ N(0, dt) iid.

    Boundary nodes receive exactly zero because every e_k vanishes there.
    """
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    E, _, _ = mode_matrices(modes)
    dB = rng.normal(0.0, np.sqrt(dt), size=len(modes))
    return dB @ E


class SpectralVector(NamedTuple):
    """Coefficients c_k = <u, e_k> for k = 1..K_spec."""

    coefficients: np.ndarray
    K_spec: int


def to_spectral(field_values: np.ndarray, modes: Sequence[EigenMode]) -> SpectralVector:
    """Quadrature projection of a nodal field onto the first K_spec modes."""
    grid = _require_common_grid(modes)
    E, _, _ = mode_matrices(modes)
    w = grid.quad_weights()
    coeffs = E @ (w * np.asarray(field_values))
    return SpectralVector(coefficients=coeffs, K_spec=len(modes))


def to_nodal(spec: SpectralVector, modes: Sequence[EigenMode]) -> np.ndarray:
    """Reconstruct the nodal projection  sum_k c_k e_k(x)."""
    E, _, _ = mode_matrices(modes)
    if spec.K_spec != len(modes):
        raise ConfigurationError(
            f"spectral vector has K_spec={spec.K_spec} but {len(modes)} modes were given"
        )
    return spec.coefficients @ E


class HsNorm(NamedTuple):
    """Spectrally truncated negative-Sobolev norm with its truncation level."""

    value: float
    s: float
    K_spec: int


def hs_dual_norm(field_values: np.ndarray, s: float,
                 modes: Sequence[EigenMode]) -> HsNorm:
    """Negative-Sobolev norm  ( sum_k lambda_k^-s <u, e_k>^2 )^(1/2),
    truncated at the K_spec modes supplied."""
    if s < 0:
        raise DomainError(f"need s >= 0, got {s}")
    grid = _require_common_grid(modes)
    E, _, lam = mode_matrices(modes)
    w = grid.quad_weights()
    coeffs = E @ (w * np.asarray(field_values))
    value = float(np.sqrt(np.sum(lam ** (-s) * coeffs ** 2)))
    return HsNorm(value=value, s=s, K_spec=len(modes))


def hs_norm_from_coefficients(coeffs: np.ndarray, lam: np.ndarray, s: float) -> float:
    """Same norm evaluated directly from known mode coefficients."""
    coeffs = np.asarray(coeffs)
    return float(np.sqrt(np.sum(lam[: coeffs.size] ** (-s) * coeffs ** 2)))

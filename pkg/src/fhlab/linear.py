"""Spectral Galerkin solver for the constant-coefficient linear fluctuation
equation

    d_t v = Lap(a v) - div( c xi_dot + b v ),    v = 0 on the boundary,
    v(0) = 0,

with a = Phi'(M), b = nu'(M), c = sigma(M) evaluated at the constant
background M.  Expanded in the Dirichlet eigenbasis the coefficient vector
solves the linear SDE  dv = A v dt + B dW  with

    A[k, j] = -a lambda_k delta_kj + b <e_j, e_k'>,
    B[k, j] = c <e_k', e_j>          for driving modes j <= K_drive,

where the driving noise is the spectral truncation of space-time white
noise at K_drive modes.  The <e_j, e_k'> pairings have the closed form
4 j k / (L (j^2 - k^2)) when j+k is odd and vanish otherwise; assembly is
by trapezoid quadrature and validated against that closed form in tests.

An independent stationary-covariance oracle solves the Lyapunov equation
A V + V A^T + B B^T = 0 directly (vectorized dense solve), giving the
Monte Carlo runs something to be checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .basis import EigenMode, Grid, mode_matrices
from .coefficients import NonlinearitySet
from .errors import ConfigurationError, DomainError
from .rng import stream_generator


@dataclass(frozen=True)
class LinearModel:
    """Constant-coefficient fluctuation model in the eigenbasis."""

    grid: Grid
    a: float                     # Phi'(M) > 0
    b: float                     # nu'(M)
    c: float                     # sigma(M) >= 0
    K_lin: int
    K_drive: int
    eigenvalues: np.ndarray      # (K_lin,)
    A: np.ndarray                # (K_lin, K_lin)
    B: np.ndarray                # (K_lin, K_drive)

    def stability_dt(self) -> float:
        return 1.0 / (2.0 * self.a * float(self.eigenvalues[-1]))


def grad_pairing_closed_form(j: int, k: int, L: float) -> float:
    """<e_j, e_k'> for the sine basis: 4jk/(L(j^2-k^2)) when j+k odd, else 0."""
    if (j + k) % 2 == 0:
        return 0.0
    return 4.0 * j * k / (L * (j * j - k * k))


def build_linear_model_raw(modes: Sequence[EigenMode], a: float, b: float,
                           c: float, K_lin: int,
                           K_drive: Optional[int] = None) -> LinearModel:
    """Assemble drift and noise-loading matrices by quadrature for given
    scalar coefficients (a, b, c)."""
    if K_drive is None:
        K_drive = min(4 * K_lin, len(modes))
    if K_lin > len(modes) or K_drive > len(modes):
        raise ConfigurationError(
            f"need max(K_lin={K_lin}, K_drive={K_drive}) <= {len(modes)} modes")
    if a <= 0:
        raise DomainError(f"need a > 0, got {a}")
    grid = modes[0].grid
    E, D, lam = mode_matrices(modes)
    w = grid.quad_weights()
    # pairing[k, j] = <e_j, e_k'> by trapezoid quadrature
    pairing = (D[:K_lin] * w) @ E[:max(K_lin, K_drive)].T
    A = -a * np.diag(lam[:K_lin]) + b * pairing[:, :K_lin]
    B = c * pairing[:, :K_drive]
    return LinearModel(grid=grid, a=a, b=b, c=c, K_lin=K_lin, K_drive=K_drive,
                       eigenvalues=lam[:K_lin].copy(), A=A, B=B)


def build_linear_model(nset: NonlinearitySet, M: float,
                       modes: Sequence[EigenMode], K_lin: int,
                       K_drive: Optional[int] = None) -> LinearModel:
    """Linearization about the constant background M: a = Phi'(M),
    b = nu'(M), c = sigma(M)."""
    a = float(nset.dPhi(np.array([M]))[0])
    b = float(nset.dnu(np.array([M]))[0])
    c = float(nset.sigma(np.array([M]))[0])
    return build_linear_model_raw(modes, a, b, c, K_lin, K_drive)


@dataclass
class SpectralTrajectory:
    """Coefficient paths v_k(t) at save times (frame 0 is t = 0)."""

    model: LinearModel
    times: np.ndarray            # (n_frames,)
    coefficients: np.ndarray     # (n_frames, K_lin)
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    def nodal_frames(self, modes: Sequence[EigenMode]) -> np.ndarray:
        E, _, _ = mode_matrices(modes[: self.model.K_lin])
        return self.coefficients @ E

    def hs_norm_per_frame(self, s: float) -> np.ndarray:
        lam = self.model.eigenvalues
        return np.sqrt(np.sum(lam ** (-s) * self.coefficients ** 2, axis=1))


def solve_linear_fluctuation(model: LinearModel, T: float, dt: float,
                             seed: Optional[int] = None,
                             shared_increments: Optional[np.ndarray] = None,
                             save_frames: int = 65) -> SpectralTrajectory:
    """Euler-Maruyama path of the Galerkin system from zero initial data.

    When ``shared_increments`` (n_steps, K_shared) is supplied, the first
    K_shared driving Brownian motions coincide with it and only the
    remaining K_drive - K_shared columns are drawn fresh; this is the
    coupling used to compare the nonlinear fluctuation field with its
    linear limit.
    """
    if dt > model.stability_dt() * (1 + 1e-12):
        raise ConfigurationError(
            f"dt={dt:g} violates the linear stability bound "
            f"{model.stability_dt():g} = 1/(2 a lambda_max)")
    if save_frames < 2:
        raise ConfigurationError("need at least 2 save frames")
    per = max(1, int(np.ceil(T / (dt * (save_frames - 1)))))
    n_steps = per * (save_frames - 1)
    dt_eff = T / n_steps

    if shared_increments is not None:
        shared = np.asarray(shared_increments, dtype=float)
        if shared.shape[0] != n_steps:
            raise ConfigurationError(
                f"shared increments cover {shared.shape[0]} steps, need {n_steps}")
        k_shared = min(shared.shape[1], model.K_drive)
        dB = np.empty((n_steps, model.K_drive))
        dB[:, :k_shared] = shared[:, :k_shared]
        if model.K_drive > k_shared:
            rng = stream_generator(seed if seed is not None else 0)
            dB[:, k_shared:] = rng.normal(0.0, np.sqrt(dt_eff),
                                          size=(n_steps, model.K_drive - k_shared))
    else:
        rng = stream_generator(seed if seed is not None else 0)
        dB = rng.normal(0.0, np.sqrt(dt_eff), size=(n_steps, model.K_drive))

    frames = np.zeros((save_frames, model.K_lin))
    _kernels.linear_run(model.A, model.B, n_steps, dt_eff, dB, per, frames)
    times = np.linspace(0.0, T, save_frames)
    return SpectralTrajectory(model=model, times=times, coefficients=frames,
                              seed=seed, metadata={"dt": dt_eff, "n_steps": n_steps})


def stationary_covariance_oracle(model: LinearModel) -> np.ndarray:
    """Stationary covariance V solving  A V + V A^T + B B^T = 0.

    Dense vectorized solve: (A (x) I + I (x) A) vec(V) = -vec(B B^T).
    Requires A Hurwitz, which is verified through its eigenvalues.
    """
    A = model.A
    K = A.shape[0]
    eigs = np.linalg.eigvals(A)
    if np.any(eigs.real >= 0):
        raise DomainError(
            f"drift matrix is not Hurwitz (max Re eigenvalue {eigs.real.max():g})")
    Q = model.B @ model.B.T
    I = np.eye(K)
    lhs = np.kron(A, I) + np.kron(I, A)
    V = np.linalg.solve(lhs, -Q.reshape(-1)).reshape(K, K)
    return 0.5 * (V + V.T)

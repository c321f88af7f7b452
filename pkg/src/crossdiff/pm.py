"""Perona-Malik baselines.

``denoise_pm_grad`` uses the same semi-implicit Q1 machinery and fixed-point
loop as the cross-diffusion model, with ``g(|grad u|)`` at the Gauss points.
``denoise_pm_lap`` is an explicit five-point finite-difference scheme with
``g(|lap u|)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import FixedPointStalled, TooSmall, UnstableTimeStep
from .image import as_image
from .model import EdgeDetector, StepRecord, n_steps


@dataclass(frozen=True)
class PmConfig:
    detector: EdgeDetector = EdgeDetector("exponential", 20.0)
    tau: float = 0.01
    t_final: float = 0.3
    fp_tol: float = 1e-3
    max_fp_iter: int = 50
    solver: fem.SolverConfig = fem.SolverConfig()
    on_stall: str = "accept"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if not self.fp_tol > 0 or self.max_fp_iter < 1:
            raise ValueError("fixed-point tolerance and iteration cap must be positive")
        if self.on_stall not in ("accept", "raise"):
            raise ValueError("on_stall must be 'accept' or 'raise'")

    @property
    def n_steps(self) -> int:
        return n_steps(self.t_final, self.tau)


def denoise_pm_grad(noisy, cfg: PmConfig = PmConfig(), records: list | None = None) -> np.ndarray:
    """Semi-implicit FEM Perona-Malik with a gradient-based detector.

    Step diagnostics are appended to ``records`` when a list is given.
    """
    noisy = as_image(noisy)
    grid = fem.grid_for(noisy)
    mass = fem.lumped_mass(grid)
    asm = fem.assembler_for(grid)
    c = mass / cfg.tau
    u = noisy.reshape(-1).copy()
    for step in range(1, cfg.n_steps + 1):
        rhs = c * u
        x = u
        residual = math.inf
        for k in range(1, cfg.max_fp_iter + 1):
            gx, gy = fem.gradient_at_quadrature(grid, x)
            g_q = cfg.detector(np.hypot(gx, gy))
            x_new = fem.solve_linear(asm.scalar(g_q, c), rhs, cfg.solver, x0=x)
            residual = float(np.linalg.norm(x_new - x))
            x = x_new
            if residual < cfg.fp_tol:
                break
        if residual >= cfg.fp_tol and cfg.on_stall == "raise":
            raise FixedPointStalled(f"step {step}: fixed point residual {residual:.3e} after {k} iterations")
        if records is not None:
            scale = float(mass @ np.abs(u)) or 1.0
            drift = abs(float(mass @ x) - float(mass @ u)) / scale
            records.append(StepRecord(step, k, residual, drift, float(mass @ (x * x))))
        u = x
    return u.reshape(grid.shape)


def laplacian_5pt(u: np.ndarray) -> np.ndarray:
    """Five-point Laplacian with mirrored (zero-flux) boundary."""
    p = np.pad(u, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * u


def explicit_step(u: np.ndarray, g_nodes: np.ndarray, tau: float) -> np.ndarray:
    """One explicit flux-form step ``u + tau * div(c grad u)``.

    Face coefficients are arithmetic means of adjacent nodal values;
    boundary faces carry no flux.
    """
    fx = 0.5 * (g_nodes[:, :-1] + g_nodes[:, 1:]) * (u[:, 1:] - u[:, :-1])
    fy = 0.5 * (g_nodes[:-1, :] + g_nodes[1:, :]) * (u[1:, :] - u[:-1, :])
    div = np.zeros_like(u)
    div[:, :-1] += fx
    div[:, 1:] -= fx
    div[:-1, :] += fy
    div[1:, :] -= fy
    return u + tau * div


def denoise_pm_lap(noisy, cfg: PmConfig = PmConfig(EdgeDetector("exponential", 10.0), t_final=0.8), records: list | None = None) -> np.ndarray:
    """Explicit Perona-Malik with a Laplacian-based detector.

    Requires ``tau * max g <= 1/4``; under it each step is a convex
    combination of neighbours and obeys the discrete maximum principle.
    """
    u = as_image(noisy).copy()
    if min(u.shape) < 3:
        raise TooSmall(f"Laplacian Perona-Malik needs at least 3x3 pixels, got {u.shape[1]}x{u.shape[0]}")
    if cfg.tau * cfg.detector.max_value > 0.25:
        raise UnstableTimeStep(f"tau * max g = {cfg.tau * cfg.detector.max_value:g} exceeds 1/4")
    for step in range(1, cfg.n_steps + 1):
        g = cfg.detector(np.abs(laplacian_5pt(u)))
        new = explicit_step(u, g, cfg.tau)
        if records is not None:
            scale = float(np.abs(u).sum()) or 1.0
            records.append(StepRecord(step, 0, 0.0, abs(float(new.sum()) - float(u.sum())) / scale, float((new * new).sum())))
        u = new
    return u

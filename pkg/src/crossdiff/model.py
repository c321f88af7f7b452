"""Cross-diffusion denoising: detectors, diffusion matrix, QSS time stepping.

Each time step solves the implicit (quasi-steady-state) system

    (1/tau + beta_i) M u_i + sum_j a_ij K_g u_j = (1/tau) M u_i^n + beta_i M u_i0

with ``M`` the lumped mass, ``K_g`` the Q1 stiffness weighted by the edge
detector evaluated on the auxiliary component ``u2``. The dependence of
``g`` on the unknown is handled by a lagged fixed-point loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem
from .errors import FixedPointStalled, HypothesisViolated
from .image import as_image

_TINY = np.finfo(np.float64).tiny

DETECTOR_KINDS = ("exponential", "rational", "constant")


@dataclass(frozen=True)
class EdgeDetector:
    """Scalar edge detector ``g``.

    Values are floored at the smallest positive normal double, so ``g``
    stays strictly positive even where ``exp(-s^2/lambda^2)`` underflows.
    """

    kind: str = "exponential"
    lam: float = 1.0
    const_value: float = 1.0

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError("detector scale lambda must be positive")
        if not self.const_value > 0:
            raise ValueError("constant detector value must be positive")

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "constant":
            return np.full(s.shape, float(self.const_value))
        r = (s / self.lam) ** 2
        out = np.exp(-r) if self.kind == "exponential" else 1.0 / (1.0 + r)
        return np.maximum(out, _TINY)

    @property
    def max_value(self) -> float:
        return float(self.const_value) if self.kind == "constant" else 1.0

    @classmethod
    def constant(cls, value: float = 1.0) -> "EdgeDetector":
        return cls("constant", 1.0, value)


@dataclass(frozen=True)
class DiffusionMatrix:
    a11: float
    a12: float
    a21: float
    a22: float

    @classmethod
    def rotation(cls, theta: float) -> "DiffusionMatrix":
        c, s = math.cos(theta), math.sin(theta)
        return cls(c, -s, s, c)

    @classmethod
    def from_array(cls, A) -> "DiffusionMatrix":
        A = np.asarray(A, dtype=np.float64)
        return cls(*A.reshape(-1).tolist())

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def alpha12(self) -> float:
        return self.a12 / self.a22

    @property
    def alpha21(self) -> float:
        return self.a21 / self.a11


def check_hypothesis(A: DiffusionMatrix) -> float:
    """Return ``a0``, the least eigenvalue of the symmetric part of ``A``.

    Raises :class:`HypothesisViolated` unless ``a_ii > |a_ji|`` for
    ``i != j`` and ``a0 > 0``.
    """
    if not all(math.isfinite(v) for v in (A.a11, A.a12, A.a21, A.a22)):
        raise HypothesisViolated("finite", "matrix entries must be finite")
    if not A.a11 > abs(A.a21):
        raise HypothesisViolated("dominance", f"a11 = {A.a11:g} is not > |a21| = {abs(A.a21):g}")
    if not A.a22 > abs(A.a12):
        raise HypothesisViolated("dominance", f"a22 = {A.a22:g} is not > |a12| = {abs(A.a12):g}")
    arr = A.as_array()
    a0 = float(np.linalg.eigvalsh(0.5 * (arr + arr.T))[0])
    if not a0 > 0:
        raise HypothesisViolated("coercivity", f"symmetric part has eigenvalue {a0:g} <= 0")
    return a0


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CdConfig:
    tau: float = 0.01
    t_final: float = 0.2
    fp_tol: float = 1e-3
    max_fp_iter: int = 50
    theta: float = math.pi / 30
    detector: EdgeDetector = EdgeDetector("exponential", 0.15)
    beta1: float = 0.0
    beta2: float = 0.0
    solver: fem.SolverConfig = fem.SolverConfig()
    on_stall: str = "accept"  # or "raise"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if not self.fp_tol > 0 or self.max_fp_iter < 1:
            raise ValueError("fixed-point tolerance and iteration cap must be positive")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("fidelity weights must be nonnegative")
        if self.on_stall not in ("accept", "raise"):
            raise ValueError("on_stall must be 'accept' or 'raise'")

    @property
    def matrix(self) -> DiffusionMatrix:
        return DiffusionMatrix.rotation(self.theta)

    @property
    def n_steps(self) -> int:
        return n_steps(self.t_final, self.tau)


def n_steps(t_final: float, tau: float) -> int:
    """ceil(t_final / tau), forgiving floating point noise in the ratio."""
    return max(0, math.ceil(t_final / tau - 1e-9))


@dataclass(frozen=True)
class CdState:
    u1: np.ndarray
    u2: np.ndarray
    step_index: int = 0
    fp_iterations_last: int = 0
    fp_residual_last: float = 0.0
    converged: bool = True


@dataclass(frozen=True)
class StepRecord:
    """One diagnostics line; field order is the CSV column order."""

    step: int
    fp_iters: int
    fp_residual: float
    mass_drift: float
    energy: float

    FIELDS = ("step", "fp_iters", "fp_residual", "mass_drift", "energy")


def lumped_energy(mass, u1, u2) -> float:
    return float(mass @ (u1 * u1) + mass @ (u2 * u2))


def mass_drift(mass, before: CdState, after: CdState) -> float:
    """Largest per-component change in lumped mass, relative to the lumped L1 size of the state."""
    scale = float(mass @ (np.abs(before.u1) + np.abs(before.u2)))
    if scale == 0.0:
        scale = 1.0
    d1 = abs(float(mass @ after.u1) - float(mass @ before.u1))
    d2 = abs(float(mass @ after.u2) - float(mass @ before.u2))
    return max(d1, d2) / scale


def _split(x, n):
    return x[:n], x[n:]


def qss_step(state: CdState, u10, u20, cfg: CdConfig, grid: fem.Grid) -> CdState:
    """Advance one time step with the lagged fixed-point loop.

    Stops when ``max_i |u_i^k - u_i^(k-1)|_2 < fp_tol`` (plain Euclidean norm
    over nodes). On hitting ``max_fp_iter`` the last iterate is returned
    with ``converged=False``, or :class:`FixedPointStalled` is raised when
    ``cfg.on_stall == "raise"``.
    """
    check_hypothesis(cfg.matrix)
    n = grid.n_nodes
    mass = fem.lumped_mass(grid)
    A = cfg.matrix.as_array()
    asm = fem.assembler_for(grid)
    u1, u2 = grid.check_field(state.u1), grid.check_field(state.u2)
    rhs = np.concatenate([mass * u1 / cfg.tau, mass * u2 / cfg.tau])
    if cfg.beta1 or cfg.beta2:
        rhs[:n] += cfg.beta1 * mass * grid.check_field(u10)
        rhs[n:] += cfg.beta2 * mass * grid.check_field(u20)
    c1 = (1.0 / cfg.tau + cfg.beta1) * mass
    c2 = (1.0 / cfg.tau + cfg.beta2) * mass

    x = np.concatenate([u1, u2])
    residual = math.inf
    for k in range(1, cfg.max_fp_iter + 1):
        g_q = cfg.detector(fem.interpolate_to_quadrature(grid, x[n:]))
        system = asm.coupled(g_q, A, c1, c2)
        x_new = fem.solve_linear(system, rhs, cfg.solver, x0=x)
        d1, d2 = _split(x_new - x, n)
        residual = max(float(np.linalg.norm(d1)), float(np.linalg.norm(d2)))
        x = x_new
        if residual < cfg.fp_tol:
            break
    new1, new2 = _split(x, n)
    converged = residual < cfg.fp_tol
    out = CdState(new1.copy(), new2.copy(), state.step_index + 1, k, residual, converged)
    if not converged and cfg.on_stall == "raise":
        raise FixedPointStalled(
            f"step {out.step_index}: fixed point residual {residual:.3e} after {k} iterations", state=out
        )
    return out


@dataclass
class CdResult:
    denoised: np.ndarray
    u2: np.ndarray
    records: list[StepRecord] = field(default_factory=list)

    @property
    def fp_iterations(self) -> list[int]:
        return [r.fp_iters for r in self.records]

    @property
    def fp_residuals(self) -> list[float]:
        return [r.fp_residual for r in self.records]


def denoise_cd(noisy, cfg: CdConfig = CdConfig(), callback=None) -> CdResult:
    """Run the cross-diffusion flow from ``(noisy, 0)`` up to ``t_final``.

    ``callback(state, record)`` is invoked after every step.
    """
    noisy = as_image(noisy)
    grid = fem.grid_for(noisy)
    mass = fem.lumped_mass(grid)
    u10 = noisy.reshape(-1).copy()
    u20 = np.zeros_like(u10)
    state = CdState(u10, u20)
    records = []
    for _ in range(cfg.n_steps):
        new = qss_step(state, u10, u20, cfg, grid)
        rec = StepRecord(
            new.step_index,
            new.fp_iterations_last,
            new.fp_residual_last,
            mass_drift(mass, state, new),
            lumped_energy(mass, new.u1, new.u2),
        )
        records.append(rec)
        if callback is not None:
            callback(new, rec)
        state = new
    return CdResult(state.u1.reshape(grid.shape), state.u2.reshape(grid.shape), records)


def rescale_for_display(field) -> np.ndarray:
    """Affine map of a field onto [0, 255] (constant fields map to 0)."""
    f = np.asarray(field, dtype=np.float64)
    lo, hi = float(f.min()), float(f.max())
    if hi == lo:
        return np.zeros_like(f)
    return (f - lo) * (255.0 / (hi - lo))


# ---------------------------------------------------------------------------
# Steady problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteadyProblem:
    gamma1: float
    gamma2: float
    G1: np.ndarray
    G2: np.ndarray

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ValueError("gamma_i must be positive")


@dataclass(frozen=True)
class SteadyResult:
    state: CdState
    linf_lhs: float
    linf_rhs: float

    @property
    def bound_holds(self) -> bool:
        return self.linf_lhs <= self.linf_rhs

    @property
    def bound_ratio(self) -> float:
        return self.linf_lhs / self.linf_rhs if self.linf_rhs > 0 else (0.0 if self.linf_lhs == 0 else math.inf)


def linf_bound(prob: SteadyProblem, A: DiffusionMatrix, u1, u2) -> tuple[float, float]:
    """Both sides of the a priori sup-norm estimate for the steady problem."""
    a21, a12 = abs(A.alpha21), abs(A.alpha12)
    lhs = prob.gamma1 * (1 - a21) * float(np.max(np.abs(u1))) + prob.gamma2 * (1 - a12) * float(np.max(np.abs(u2)))
    rhs = (1 + a21) * float(np.max(np.abs(prob.G1))) + (1 + a12) * float(np.max(np.abs(prob.G2)))
    return lhs, rhs


def solve_steady(
    prob: SteadyProblem,
    A: DiffusionMatrix,
    detector: EdgeDetector,
    grid: fem.Grid,
    fp_tol: float = 1e-3,
    max_fp_iter: int = 50,
    solver: fem.SolverConfig = fem.SolverConfig(),
    on_stall: str = "accept",
) -> SteadyResult:
    """Fixed-point solve of ``gamma_i u_i - div J_i(u) = G_i`` with zero flux.

    Starts from ``G_i / gamma_i`` and lags ``g(u2)`` one iteration.
    The sup-norm estimate is evaluated on the result and reported, not
    enforced.
    """
    check_hypothesis(A)
    n = grid.n_nodes
    mass = fem.lumped_mass(grid)
    G1, G2 = grid.check_field(prob.G1), grid.check_field(prob.G2)
    asm = fem.assembler_for(grid)
    arr = A.as_array()
    rhs = np.concatenate([mass * G1, mass * G2])
    x = np.concatenate([G1 / prob.gamma1, G2 / prob.gamma2])
    residual = math.inf
    for k in range(1, max_fp_iter + 1):
        g_q = detector(fem.interpolate_to_quadrature(grid, x[n:]))
        system = asm.coupled(g_q, arr, prob.gamma1 * mass, prob.gamma2 * mass)
        x_new = fem.solve_linear(system, rhs, solver, x0=x)
        d1, d2 = _split(x_new - x, n)
        residual = max(float(np.linalg.norm(d1)), float(np.linalg.norm(d2)))
        x = x_new
        if residual < fp_tol:
            break
    u1, u2 = _split(x, n)
    state = CdState(u1.copy(), u2.copy(), 0, k, residual, residual < fp_tol)
    if not state.converged and on_stall == "raise":
        raise FixedPointStalled(f"steady fixed point residual {residual:.3e} after {k} iterations", state=state)
    lhs, rhs_b = linf_bound(prob, A, u1, u2)
    return SteadyResult(state, lhs, rhs_b)


# ---------------------------------------------------------------------------
# Consistency probe
# ---------------------------------------------------------------------------


def lumped_laplacian(grid: fem.Grid, u) -> np.ndarray:
    """``L_h u = -diag(mass)^-1 K u`` with the unweighted Q1 stiffness."""
    u = grid.check_field(u)
    return -(fem.stiffness_matrix(grid) @ u) / fem.lumped_mass(grid)


def small_time_consistency(
    u10, theta: float, tau: float, grid: fem.Grid, solver: fem.SolverConfig = fem.SolverConfig("direct-sparse")
) -> float:
    """Relative gap between ``u2 / tau`` after one step and ``sin(theta) L_h u1``.

    Uses the constant detector ``g = 1`` and ``u2 = 0`` initially; the gap is
    O(tau).
    """
    u10 = grid.check_field(u10)
    lap = lumped_laplacian(grid, u10)
    scale = float(np.linalg.norm(lap))
    if scale == 0.0:
        return 0.0
    cfg = CdConfig(tau=tau, t_final=tau, theta=theta, detector=EdgeDetector.constant(1.0), solver=solver)
    new = qss_step(CdState(u10, np.zeros_like(u10)), u10, np.zeros_like(u10), cfg, grid)
    return float(np.linalg.norm(new.u2 / tau - math.sin(theta) * lap)) / scale


def with_detector_scale(cfg: CdConfig, lam: float) -> CdConfig:
    return replace(cfg, detector=replace(cfg.detector, lam=lam))

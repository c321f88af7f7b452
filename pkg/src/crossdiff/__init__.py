"""Cross-diffusion image denoising and reference filters."""
from .fem import Grid, SolverConfig, build_grid, lumped_mass, solve_linear
from .image import (
    NoiseSpec,
    QualityReport,
    add_gaussian_noise,
    load_pgm,
    ncc,
    psnr,
    save_pgm,
    snr,
    ssim,
)
from .model import (
    CdConfig,
    CdState,
    DiffusionMatrix,
    EdgeDetector,
    SteadyProblem,
    check_hypothesis,
    denoise_cd,
    qss_step,
    small_time_consistency,
    solve_steady,
)
from .patch import NlmConfig, YaroslavskyConfig, nlm, yaroslavsky
from .pm import PmConfig, denoise_pm_grad, denoise_pm_lap
from .synthetic import generate_synthetic

__all__ = [
    "CdConfig",
    "CdState",
    "DiffusionMatrix",
    "EdgeDetector",
    "Grid",
    "NlmConfig",
    "NoiseSpec",
    "PmConfig",
    "QualityReport",
    "SolverConfig",
    "SteadyProblem",
    "YaroslavskyConfig",
    "add_gaussian_noise",
    "build_grid",
    "check_hypothesis",
    "denoise_cd",
    "denoise_pm_grad",
    "denoise_pm_lap",
    "generate_synthetic",
    "load_pgm",
    "lumped_mass",
    "ncc",
    "nlm",
    "psnr",
    "qss_step",
    "save_pgm",
    "small_time_consistency",
    "snr",
    "solve_linear",
    "solve_steady",
    "ssim",
    "yaroslavsky",
]

"""Numerical laboratory for multidimensional BSDEs with uniformly continuous drivers."""

from ._kernels import BACKEND
from .decomposition import (DecompositionReport, LevelHit, coverage_check, decompose, decompose_levels,
                            level_hitting, pathological_h)
from .drivers import (Driver, TerminalCondition, builtin_catalog, lipschitz_probe, terminal_condition,
                      verify_moduli)
from .envelope import (BackwardOdeProblem, Envelope, OdeSolution, envelope_at, envelope_scaling_probe,
                       global_dominator, scaling_continuity, solve_backward, vanish_limit_check)
from .errors import (BsdeLabError, DivergentEnvelopeError, ModulusDegeneracyError, NonLipschitzDriverError,
                     StageError, WindowContractError)
from .girsanov import (DensityReport, GirsanovWindow, density, domination_check, drift_eta, novikov_window,
                       signed_z_combination)
from .harness import ExperimentConfig, export, load_config, run_convergence, run_uniqueness_probe
from .moduli import (Modulus, check_modulus, clipped_linear_modulus, linear_modulus, lipschitz_regularize,
                     modulus_by_name, osgood_check, osgood_modulus, sqrt_modulus, zero_modulus)
from .mollify import MollifierKernel, mollify, probe_distance
from .solver import (RegressionConfig, SolutionPair, replay, residual_check, solve_bsde, solve_deterministic,
                     step1_uniform_bound)
from .stochastic import (AdaptedProcess, PathEnsemble, TimeGrid, check_adapted, integrate_abs, ito_sum,
                         make_grid, sample_brownian, stopping_time)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DecompositionReport", "LevelHit", "coverage_check", "decompose", "decompose_levels",
    "level_hitting", "pathological_h", "Driver", "TerminalCondition", "builtin_catalog", "lipschitz_probe",
    "terminal_condition", "verify_moduli", "BackwardOdeProblem", "Envelope", "OdeSolution", "envelope_at",
    "envelope_scaling_probe", "global_dominator", "scaling_continuity", "solve_backward", "vanish_limit_check",
    "BsdeLabError", "DivergentEnvelopeError", "ModulusDegeneracyError", "NonLipschitzDriverError",
    "StageError", "WindowContractError", "DensityReport", "GirsanovWindow", "density", "domination_check",
    "drift_eta", "novikov_window", "signed_z_combination", "ExperimentConfig", "export", "load_config",
    "run_convergence", "run_uniqueness_probe", "Modulus", "check_modulus", "clipped_linear_modulus",
    "linear_modulus", "lipschitz_regularize", "modulus_by_name", "osgood_check", "osgood_modulus",
    "sqrt_modulus", "zero_modulus", "MollifierKernel", "mollify", "probe_distance", "RegressionConfig",
    "SolutionPair", "replay", "residual_check", "solve_bsde", "solve_deterministic", "step1_uniform_bound",
    "AdaptedProcess", "PathEnsemble", "TimeGrid", "check_adapted", "integrate_abs", "ito_sum", "make_grid",
    "sample_brownian", "stopping_time",
]

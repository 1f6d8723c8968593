"""Markov chains with a Wasserstein spectral gap: correctors, martingales and LIL audits."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .audit import (ConditionReport, LipschitzAudit, ZLaw, audit_h_lipschitz,
                    check_borel_cantelli, check_e1_e2, check_e3, check_h3, check_slln,
                    exit_code)
from .config import ExperimentConfig
from .corrector import (CANONICAL, LITERAL, Corrector, StationaryMeasure, build_corrector,
                        corrector_affine, corrector_finite, corrector_mc, stationary_empirical,
                        stationary_finite)
from .errors import (CenteringError, ConfigError, DegenerateVariance, DomainError,
                     LilchainError, NonUniqueStationary, NoGapCertified, ReplayError,
                     ValidationError)
from .experiment import ExperimentReport, replay, run_experiment
from .kernels import (ArKernel, FiniteKernel, IfsKernel, Initial, Observable, StateSpace,
                      Trajectory, TransitionKernel, apply_P, estimate_lipschitz, simulate,
                      simulate_ensemble, step)
from .martingale import (MartingaleSeries, VarianceEstimate, decompose, moment_check_H3,
                         sigma2_corrector, sigma2_green_kubo, variance_curve)
from .paths import (PolygonalPath, StrassenReport, build_eta, build_theta, cluster_tracker,
                    dist_to_K, functional_eval, path_energy, sup_distance)
from .wasserstein import (ContractionCertificate, FiniteMeasure, certify_contraction,
                          compute_n0, w1_empirical_1d, w1_finite)

__all__ = [
    "__version__",
    "ArKernel",
    "BACKEND",
    "CANONICAL",
    "CenteringError",
    "ConditionReport",
    "ConfigError",
    "ContractionCertificate",
    "Corrector",
    "DegenerateVariance",
    "DomainError",
    "ExperimentConfig",
    "ExperimentReport",
    "FiniteKernel",
    "FiniteMeasure",
    "IfsKernel",
    "Initial",
    "LITERAL",
    "LilchainError",
    "LipschitzAudit",
    "MartingaleSeries",
    "NoGapCertified",
    "NonUniqueStationary",
    "Observable",
    "PolygonalPath",
    "ReplayError",
    "StateSpace",
    "StationaryMeasure",
    "StrassenReport",
    "Trajectory",
    "TransitionKernel",
    "ValidationError",
    "VarianceEstimate",
    "ZLaw",
    "apply_P",
    "audit_h_lipschitz",
    "build_corrector",
    "build_eta",
    "build_theta",
    "certify_contraction",
    "check_borel_cantelli",
    "check_e1_e2",
    "check_e3",
    "check_h3",
    "check_slln",
    "cluster_tracker",
    "compute_n0",
    "corrector_affine",
    "corrector_finite",
    "corrector_mc",
    "decompose",
    "dist_to_K",
    "estimate_lipschitz",
    "exit_code",
    "functional_eval",
    "moment_check_H3",
    "path_energy",
    "replay",
    "run_experiment",
    "sigma2_corrector",
    "sigma2_green_kubo",
    "simulate",
    "simulate_ensemble",
    "stationary_empirical",
    "stationary_finite",
    "step",
    "sup_distance",
    "variance_curve",
    "w1_empirical_1d",
    "w1_finite",
]

"""Smooth empirical copulas, Stute remainders and rate experiments."""
from .copulas import (ClaytonCopula, Condition2Report, CopulaModel, FrankCopula, GumbelCopula,
                      IndependenceCopula, condition2_scan, copula_cdf, copula_partial,
                      copula_sample, make_copula)
from .empirical import (EmpiricalCopula, EvaluationGrid, PseudoObservations, RankMatrix,
                        TieError, compute_ranks, empirical_copula, empirical_process_alpha,
                        marginal_process_alpha_j, read_sample_csv, write_sample_csv)
from .harness import (ExperimentConfig, RateReport, emit_report, fit_loglog_slope,
                      read_report_csv, run_experiment)
from .processes import (DecompositionError, DecompositionTerms, GridEvaluator,
                        decomposition_terms, stute_remainder_classic, stute_remainder_smooth,
                        tilde_process_eval)
from .smoothing import (MonteCarloSpec, SmoothEmpiricalCopula, SmoothingScheme, VarianceAudit,
                        smooth_copula_closed, smooth_copula_enumerate, smooth_copula_mc,
                        smoothing_draw, variance_audit)
from .special import Accuracy, binom_tail, log_gamma, reg_inc_beta

__version__ = "0.1.0"

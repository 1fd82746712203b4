"""Masked two-layer ReLU networks trained with neuron perturbation."""
from .coeff import apply_coefficient_update, build_q_blocks, find_orthogonal_unit, update_coefficients
from .data import Dataset, generate_dataset, generate_linear_margin_dataset, generate_teacher, load_dataset, save_dataset
from .driver import TrainConfig, TrainReport, bound_report, init_params, test_error_estimate, train, training_error
from .errors import *  # noqa: F401,F403
from .gd import GDTrace, run_inner_gd, step_size
from .loss import LOGISTIC, CoeffVector, LossSpec, empirical_loss, grad_alpha, per_sample_derivs
from .network import MaskSeries, NetParams, Teacher, build_mask_series, forward, teacher_eval
from .oracle import OracleResult, oracle_max_g
from .perturb import (DirectionCandidate, check_termination, g_objective, perturb_inactive,
                      solve_exhaustive, solve_random_directions)

__version__ = "0.1.0"

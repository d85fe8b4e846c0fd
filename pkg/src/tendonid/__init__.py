"""System identification and model predictive control for a
tendon-driven snake arm, exercised against a synthetic physics plant.

The package covers the full loop: excitation design, plant simulation,
three identification methods (subspace, ARX, sparse nonlinear
regression), constant-ratio kinematic reconstruction, and constrained
receding-horizon control with an active-set QP solver.
"""

from .arx import arx_one_step, identify_arx
from .dataset import Dataset, TimeSeries, concat, load_csv, lowpass_filter, \
    save_csv, split
from .errors import ConfigError, DataError, DivergenceError, \
    InfeasibleError, NumericError, TendonidError
from .kinematics import ChainGeometry, JointRatios, forward_kinematics, \
    mean_euclidean_error, reconstruct_joints, trajectory_forward_kinematics
from .library import LibrarySpec, Term, build_library, evaluate_terms, \
    library_terms, term_jacobians
from .models import ArxModel, FitReport, ModelKind, SindyModel, \
    StateSpaceModel, estimate_initial_state, fit_percent, \
    initial_condition_for, load_model, markov_parameters, save_model, simulate
from .mpc import ClosedLoopLog, KalmanFilter, MpcConfig, MpcController, \
    Observer, build_qp, estimate_state, linear_mpc_step, nmpc_step, \
    petal_reference, run_closed_loop, sindy_mpc_step, step_reference
from .n4sid import N4sidConfig, block_hankel, estimate_order, identify_n4sid
from .plantsim import ExcitationSpec, PlantState, SnakePlantConfig, \
    generate_excitation, make_random_arx, make_random_lti, \
    make_sparse_nonlinear_truth, plant_energy, plant_rest, plant_step, \
    simulate_plant, tendon_to_torque
from .qp import QpSolution, QuadraticProgram, solve_qp, \
    solve_qp_projected_gradient
from .sindyc import identify_sindyc, stls

__version__ = "0.1.0"

__all__ = [
    "ArxModel", "ChainGeometry", "ClosedLoopLog", "ConfigError", "Dataset",
    "DataError", "DivergenceError", "ExcitationSpec", "FitReport",
    "InfeasibleError", "JointRatios", "KalmanFilter", "LibrarySpec",
    "ModelKind", "MpcConfig", "MpcController", "N4sidConfig", "NumericError",
    "Observer", "PlantState", "QpSolution", "QuadraticProgram", "SindyModel",
    "SnakePlantConfig", "StateSpaceModel", "TendonidError", "Term",
    "TimeSeries", "arx_one_step", "block_hankel", "build_library", "build_qp",
    "concat", "estimate_initial_state", "estimate_order", "estimate_state",
    "evaluate_terms", "fit_percent", "forward_kinematics",
    "generate_excitation", "identify_arx", "identify_n4sid",
    "identify_sindyc", "initial_condition_for", "library_terms",
    "linear_mpc_step", "load_csv", "load_model", "lowpass_filter",
    "make_random_arx", "make_random_lti", "make_sparse_nonlinear_truth",
    "markov_parameters", "mean_euclidean_error", "nmpc_step",
    "petal_reference", "plant_energy", "plant_rest", "plant_step",
    "reconstruct_joints", "run_closed_loop", "save_csv", "save_model",
    "simulate", "simulate_plant", "sindy_mpc_step", "solve_qp",
    "solve_qp_projected_gradient", "split", "step_reference", "stls",
    "tendon_to_torque", "term_jacobians", "trajectory_forward_kinematics",
]

"""Belief propagation on pairwise MRFs with quenched random fields.

Subpackages cover the model definition, an exact enumeration oracle,
loopy belief propagation, a replica-symmetric engine that averages the
Bethe free energy over field disorder analytically, Monte-Carlo
averaging, an exactly solvable mean-field check, and Bayesian image
restoration with an analytic error predictor.
"""

from . import cli, exact, graphs, lbp, meanfield, models, quench, restore, rlbp
from .exact import ExactResult
from .graphs import Graph, complete_graph, path_graph, random_regular, random_tree, square_lattice
from .lbp import BeliefSet, LbpReport, MessageState, bethe_free_energy, magnetization, run_lbp
from .meanfield import MeanFieldModel, SaddleSolution, solve_saddle, verify_rlbp_on_complete_graph
from .models import (
    FieldDistribution,
    InteractionEnsemble,
    MrfModel,
    PairPotential,
    StateSpace,
    UnaryPotential,
    sample_fields,
    sample_interactions,
)
from .quench import QuenchStats, mc_quenched_average
from .restore import (
    DegradedImage,
    Image,
    RestoreParams,
    dav_analytic,
    degrade,
    mse,
    mse_mc_average,
    read_image,
    restore_mpm,
    synthetic_color_image,
    write_image,
)
from .rlbp import (
    QuadratureRule,
    RlbpReport,
    RlbpState,
    build_quadrature,
    quenched_magnetization,
    run_rlbp,
    run_rlbp_best,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefSet",
    "DegradedImage",
    "ExactResult",
    "FieldDistribution",
    "Graph",
    "Image",
    "InteractionEnsemble",
    "LbpReport",
    "MeanFieldModel",
    "MessageState",
    "MrfModel",
    "PairPotential",
    "QuadratureRule",
    "QuenchStats",
    "RestoreParams",
    "RlbpReport",
    "RlbpState",
    "SaddleSolution",
    "StateSpace",
    "UnaryPotential",
    "bethe_free_energy",
    "build_quadrature",
    "cli",
    "complete_graph",
    "dav_analytic",
    "degrade",
    "exact",
    "graphs",
    "lbp",
    "magnetization",
    "mc_quenched_average",
    "meanfield",
    "models",
    "mse",
    "mse_mc_average",
    "path_graph",
    "quench",
    "quenched_magnetization",
    "random_regular",
    "random_tree",
    "read_image",
    "restore",
    "restore_mpm",
    "rlbp",
    "run_lbp",
    "run_rlbp",
    "run_rlbp_best",
    "sample_fields",
    "sample_interactions",
    "solve_saddle",
    "square_lattice",
    "synthetic_color_image",
    "verify_rlbp_on_complete_graph",
    "write_image",
]

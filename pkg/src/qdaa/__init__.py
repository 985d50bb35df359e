"""Quantitative discrete approximation automata for multi-affine ODE systems."""
from .bundled import BUNDLED, bundled_models, get_model
from .estimators import QDAAReachability, RectangularAbstraction
from .geometry import EntrySet, Facet, Tile
from .model import (BiochemicalSystem, ModelError, MultiAffineField, MultiAffineTerm, MultiAffinityError,
                    Partition, ReactionNetwork, check_multi_affine, compile_mass_action, eval_field, load_model,
                    parse_model, serialize_model)
from .qdaa import LOST, SINK, Qdaa, QdaaState, Transition, build, successors
from .reach import ReachReport, analyse, compare_with_rats, reachable, rectangle_heatmap, rho, variable_bounds
from .rats import RatsSystem, build_rats, rats_reach
from .sim import IntegrationError, SimParams, integrate_until_exit, sample_points

__version__ = "0.1.0"

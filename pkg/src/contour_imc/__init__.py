"""Time-varying internal-model contouring control for master/slave motion axes."""
from .contour_signals import ContourSpec, check_assumptions, reconstruct_angle, unwrap_rotational
from .errors import ContourIMCError
from .exosystem import build_exosystem_ct, discretize_along
from .internal_model import InternalModel, solve_sylvester, solve_sylvester_batch
from .plant import PlantDT, discretize_plant_zoh, fitted_paper_plants, paper_plants, to_observer_canonical
from .sdp import LmiProblem, MatrixVariable, solve_lmi_feasibility
from .simulation import Scenario, builtin_scenarios, contour_metrics, run_closed_loop
from .stabilizer import PolytopeGrid, sigma_weights, synthesize_gains

__version__ = "0.1.0"

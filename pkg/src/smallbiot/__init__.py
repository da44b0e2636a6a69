"""Small-Biot lumped approximations for transient heat conduction, with certified error estimates."""

__version__ = "0.1.0"

from .geometry import ShapeSpec, feature_F, measures, named_shape, shape_distance
from .mesh import Mesh, generate, refine_uniform
from .fem import MaterialField, UNIFORM, assemble, make_materials
from .sensitivity import SensitivityResult, dictionary, functionals_with_convergence, solve_xi, tensorize
from .lumped import LumpedInputs, error_estimators, u1_avg, u2p_avg, u2p_delta
from .dunking import DimensionalInput, DunkingConfig, DunkingTrace, nondimensionalize, solve_dunking, true_errors

__all__ = [
    "ShapeSpec", "feature_F", "measures", "named_shape", "shape_distance",
    "Mesh", "generate", "refine_uniform",
    "MaterialField", "UNIFORM", "assemble", "make_materials",
    "SensitivityResult", "dictionary", "functionals_with_convergence", "solve_xi", "tensorize",
    "LumpedInputs", "error_estimators", "u1_avg", "u2p_avg", "u2p_delta",
    "DimensionalInput", "DunkingConfig", "DunkingTrace", "nondimensionalize", "solve_dunking", "true_errors",
]

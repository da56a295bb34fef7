"""Discontinuous Galerkin solver for the Tricomi problem based on a Morawetz multiplier."""
from .geometry import DomainSpec
from .mesh import Mesh, build_mesh, load_mesh, save_mesh, quality
from .morawetz import Morawetz
from .problems import ManufacturedSolution, PolynomialSolution
from .spaces import DiscreteSpace, SpaceConfig, SpaceKind
from .assembly import PenaltyConfig, assemble, solve

__version__ = "0.1.0"

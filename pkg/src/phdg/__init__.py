"""Port-Hamiltonian discontinuous Galerkin discretization of the 2D wave equation."""

from .assembly import (BoundaryData, Constitutive, SemiDiscreteSystem, assemble_system,
                       boundary_pairing, discrete_energy)
from .harness import CaseSpec, compute_errors, exact_solution, run_case, run_convergence
from .kernels import backend_name
from .mesh import Mesh, build_structured_mesh
from .spaces import BrokenSpace, make_spaces, project_field
from .timeint import IntegratorConfig, integrate, rk4_step

__version__ = "0.1.0"

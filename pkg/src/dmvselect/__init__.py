"""Selection of admissible dissipative solutions for the 1D compressible Euler system."""
from .thermo import GasParams, StatePoint, Equilibrium, OUT_OF_DOMAIN
from .field import DataSpec, FluidState, Grid1D, Trajectory, YoungState, validate
from .solver import CandidateSet, SolverConfig, make_candidates, run
from .concat import LiftEvent, concatenate, entropy_lift, lift_and_continue
from .functionals import QuadratureSpec, F_D, F_E, F_S, equilibrium
from .selection import SelectionReport, select

__version__ = "0.1.0"

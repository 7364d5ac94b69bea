"""Nyström spectra of the convolution operator u - J*u restricted to bounded domains."""

from .domain import domain_from_dict
from .errors import ConvergenceError, InvariantViolation, NlspecError
from .kernel import KernelSpec, evaluate, make_kernel
from .operator import ContainerGrid, DiscreteOperator, assemble, lipschitz_bound, make_grid, operator_norm_diff
from .spectral import Spectrum, eigendecompose, rayleigh_lambda1

__version__ = "0.1.0"

__all__ = [
    "ContainerGrid", "ConvergenceError", "DiscreteOperator", "InvariantViolation", "KernelSpec", "NlspecError",
    "Spectrum", "assemble", "domain_from_dict", "eigendecompose", "evaluate", "lipschitz_bound", "make_grid",
    "make_kernel", "operator_norm_diff", "rayleigh_lambda1",
]

__version__ = "0.1.0"

from .core.torus import TorusLattice, Point, TranslationGroup
from .core.spectral import GridField
from .core.green import SymmetrizedGreen, constants_table, fit_expansion
from .core.solver import ProblemSpec, MinimizerState, minimize, continuation
from .core.blowup import diagnose
from .core.certificates import thm2_certificate, thm3_certificate
from .core.errors import MeanFieldError, ConfigurationError, ConvergenceError

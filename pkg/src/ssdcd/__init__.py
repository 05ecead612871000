"""Super-structure guided continuous causal discovery."""

from . import admm, dcd, graphs, metrics, scm, superstructure
from .admm import AdmmConfig, PrecisionDecomposition, SolverError
from .dcd import DcdConfig, DiscoveryResult
from .graphs import Dag, GroundTruth
from .metrics import EvalReport, evaluate
from .scm import Dataset, NoiseSpec, simulate
from .superstructure import SuperStructure

__version__ = "0.1.0"

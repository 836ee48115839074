"""Relaxation of coupled functionals ``int f1(u) f2(v) + W(grad u)``.

Modules:

* :mod:`relaxkit.funclib`: integrand presets, convex envelopes, recession functions.
* :mod:`relaxkit.measure1d`, :mod:`relaxkit.bv1d`, :mod:`relaxkit.meshfield`: data types.
* :mod:`relaxkit.relax`: relaxed-energy evaluators, the density ``g`` and the cell formula.
* :mod:`relaxkit.sequences`: recovery sequences and Gamma-limit probes.
* :mod:`relaxkit.cli`: scenario runner.
"""

from .bv1d import BV1D
from .errors import (DomainError, HypothesisViolation, NumericalError, PreconditionError,
                     RecessionEstimationError, RelaxkitError, RepresentationError,
                     UnsupportedDimension, UnsupportedIntegrand)
from .funclib import FunctionModel, check_growth, convex_envelope, get_preset, list_presets
from .measure1d import Measure1D
from .meshfield import NdMeasure, NodalField, RectMesh
from .relax import (EnergyReport, Integrands, evaluate_relaxed_1d, evaluate_relaxed_nd,
                    fw0_reduced, g_density, solve_cell_fw0)

__version__ = "0.1.0"

__all__ = [
    "BV1D", "Measure1D", "RectMesh", "NodalField", "NdMeasure", "FunctionModel",
    "Integrands", "EnergyReport", "check_growth", "convex_envelope", "get_preset",
    "list_presets", "evaluate_relaxed_1d", "evaluate_relaxed_nd", "fw0_reduced", "g_density",
    "solve_cell_fw0", "RelaxkitError", "HypothesisViolation", "UnsupportedDimension",
    "UnsupportedIntegrand", "RecessionEstimationError", "RepresentationError", "DomainError",
    "PreconditionError", "NumericalError",
]

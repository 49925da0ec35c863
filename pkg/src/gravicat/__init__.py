"""Schrodinger-Newton laboratory: solitons, cat states and nonlinearity tests."""

from .errors import (ConfigError, ConstructionError, ConvergenceError, DimensionError,
                     DivergenceError, GravicatError, ParameterError, ResolutionError,
                     SymmetryError)
from .field import (Grid, Params, PureEnsemble, WaveFunction, density_matrix_gram,
                    expectation_x, inner, lobe_separation, trace_distance)
from .potentials import (Janossy, Newton1DSoft, Newton3D, NoPotential, PotentialField,
                         StateDependentPotential, janossy_potential, newton_potential_1d,
                         newton_potential_3d)
from .propagators import (EvolutionTrace, SolitonProfile, SplitStepper, StepperConfig,
                          relax_imaginary, rescale_solution, step_real)
from .states import (CatSpec, ProjectorLR, build_cat, canonical_ensembles, measure_projector)

__version__ = "0.1.0"

"""Complex dimensions of self-similar fractals and heat content asymptotics."""

__version__ = "0.1.0"

from .errors import (AtPoleError, CoverageError, DivergenceError,
                     FitWindowError, FractalHeatError, GeometryError,
                     ResolutionError, ResourceLimitError, SolverError)
from .geometry import (GridDomain, Polyline, SelfSimilarSystem, Similitude,
                       gkf_system, prefractal_curve, rasterize,
                       self_avoidance_bound, snowflake)
from .series import TimeSeries, log_grid
from .zeta import (AdmissibilityReport, ComplexDimensionSet,
                   LatticeClassification, Pole, RatioProfile, Window,
                   admissibility_report, argument_principle_count,
                   classify_lattice, complex_dimensions, dirichlet_poly,
                   gkf_profile, gkf_structural_pairs, lower_dim_bound,
                   moran_dimension, residue_check, scaling_zeta, screen_bound)
from .mellin import (MellinValue, SampledFunction, sample_sfe_solution,
                     scaling_identity_residual, sfe_zeta_assemble,
                     synthetic_sfe_solve, truncated_mellin, xi_entire)
from .heat import (HeatRun, decomposition_remainder, fd_heat_solve,
                   mc_heat_content, remainder_order_fit)
from .tube import (TubeRun, compare_exponents, distance_transform, inradius,
                   minkowski_fit, tube_function, tube_zeta_eval)
from .expansion import (ExpansionFit, HeatZeta, antiderivative,
                        explicit_formula_eval, heat_residue, heat_zeta_eval,
                        logperiodic_fit, pochhammer)

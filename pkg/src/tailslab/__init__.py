"""tailslab: a numerical laboratory for late-time tails of semilinear waves.

Evolves Box_g phi = a(t_*, x) phi^p on stationary asymptotically flat
backgrounds in hyperboloidal slices, reads radiation fields off null
infinity, evaluates the closed-form leading tail coefficients (c0 for
cubic, d_X for quartic and higher nonlinearities), and verifies the
predicted inverse-polynomial decay against directly measured tails.
"""

from .angular import AngularField, SphereGrid, sphere_average
from .geometry import (HeightFunction, MetricModel, NonIntegrableError,
                       OperatorDecomposition, RadialGrid, SlicingError,
                       apply_box_zero, build_metric, tortoise,
                       volume_integral)
from .evolution import (ArrayData, BlowupError, EvolutionState,
                        ExpandedTailData, GaussianBump, InitialData,
                        NonlinearCoefficient, OutputPlan, ProblemSpec,
                        Trajectory, derive_system, evolve, flat_exact_oracle,
                        oracle_slice_data, step)
from .radiation import (RadiationSeries, extract_rad1, rad2_from_recursion,
                        rad3_from_recursion)
from .coefficients import (C0Result, CutoffSpec, DXResult, ForcingProfile,
                           MeanNotZeroError, TruncationError,
                           assemble_forcing, c0, c_angular, c_scale, dX,
                           d_angular, tilde_c)
from .kernels import (LogGridFunction, bode_leading, iplus_profile,
                      solve_bode, tail_kernel, tail_kernel_check,
                      umod_derivative, umod_log_coefficient)
from .tailfit import (AsymptoticReport, CoverageError, OscillatoryTailError,
                      TailFit, Verdict, fit_power_law, price_verdict,
                      profile_check)
from .pipeline import run_pipeline

__version__ = "0.1.0"

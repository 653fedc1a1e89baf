"""Data-enabled predictive control toolkit and benchmark harness.

Everything is organized around one object, the block Hankel matrix of
recorded input/output data, and one question: how cheaply can its column
space be used inside a receding-horizon controller. The package provides
the direct formulation, several reformulations that shrink the online
problem (multistep predictor, kernel coefficients, reduced order,
annihilator-built blocks, Gram form), a matrix-free FFT path, a
neighboring-extremal fast update, a model-based baseline, and a harness
that compares them on equal data.
"""

from .deene import DeeneGains, build_deene, deene_step, recover_multipliers
from .deepc import (DeepcConfig, DeepcGains, DeepcSolution, decomposed_step,
                    deepc_step, trajectory_mismatch, unconstrained_deepc_gains)
from .fft_hankel import FftHankelOperator, matfree_deepc_unconstrained
from .hankel import (DataBlocks, SvdReduction, build_hankel, build_mosaic,
                     min_data_length, numeric_rank, partition, pe_order,
                     svd_reduce)
from .harness import (ClosedLoopResult, ReferenceSpec, Scenario,
                      run_closed_loop, run_suite, summarize)
from .mpc import (BoxConstraints, CostWeights, MpcSolution, mpc_step,
                  unconstrained_mpc_gains)
from .plants import (Excitation, NoiseSpec, Pendulum, StateSpaceModel,
                     Trajectory, collect_dataset, estimate_state_from_history,
                     get_plant, impulse_toeplitz, lag, observability_matrix,
                     plant_registry, simulate)
from .qp import QpSolution, QuadProgram, solve_eq_qp, solve_qp_active_set
from .variants import (KernelRep, NullSpaceParam, RangeSpaceData, SpcPredictor,
                       build_kernel_rep, build_null_space, build_range_space,
                       fit_spc, kernel_step, null_space_step,
                       range_space_step, reduced_order_step, spc_step)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

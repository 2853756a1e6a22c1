"""Diagram-summation kernels and Monte Carlo engines for the spin-boson model.

Two fast inclusion-exclusion kernels replace factorial-cost diagram sums:
an O(2^m) evaluation of the sum over all pairings (the hafnian of the bath
correlation matrix) and an O(alpha^(m/2)) evaluation of the sum over linked
pairings only.  Both power working bare-dQMC and inchworm Monte Carlo
engines, with brute-force enumeration oracles and a benchmark harness.
"""

__version__ = "0.1.0"

from .errors import CapacityError, DiagsumError, OutputError, ValidationError
from .hafnian import hafnian_ie, hafnian_ie_batch, rectangular_box_ie, subset_iteration_order
from .linkedsum import dotted_box, enumerate_box_placements, rounded_box, SegmentCache
from .pairings import (
    count_dotted_configurations,
    direct_influence,
    direct_linked_sum,
    direct_rectangular_sum,
    enumerate_pairings,
    fill_count_table,
    is_linked,
    pairs_linked,
)
from .spinboson import (
    CASE1,
    CASE2,
    SpinBosonParams,
    bare_system_propagator,
    bath_correlation,
    contour_delta_tau,
    correlation_matrix,
    load_params,
    mode_discretization,
)
from .dqmc import (
    OrderDistribution,
    dqmc_observable,
    dqmc_series,
    dyson_integrand,
    exact_order_distribution,
    poisson_order_sample,
)
from .inchworm import PropagatorTable, full_propagator_functional, inchworm_rhs, \
    inchworm_series, solve_inchworm
from .series import ObservableSeries, emit_series, load_series_json
from .bench import BenchReport, bench_hafnian, bench_linked

__all__ = [name for name in dir() if not name.startswith("_")]

"""Online and offline matching on one-dimensional random geometric graphs."""
from __future__ import annotations

from .errors import (
    ConfigError,
    DegenerateState,
    EmptyEnsemble,
    FreeSetExhausted,
    GeomatchError,
    GridTooFine,
    InstanceTooLarge,
    IntegrationDiverged,
    NotOnGrid,
    SingularTime,
)
from .freeset import FreeSet
from .fluid import (
    FluidState,
    Law,
    Mode,
    competitive_ratio,
    init_fluid,
    integrate,
    matched_fraction,
    metric_second_moment,
    metric_total_length,
    solve,
)
from .instance import (
    GenMode,
    GeomInstance,
    PointSet,
    Topology,
    gen_ppp,
    gen_uniform,
    load_instance,
    make_instance,
    rounding_pipeline,
    save_instance,
)
from .offline import (
    brute_force_max_matching,
    run_generative_walk,
    small_first,
    theoretical_offline_fraction,
)
from .online import ClosestProcess, closest_cardinality, closest_metric, gap_histogram
from .rng import RngSeed

__version__ = "0.1.0"

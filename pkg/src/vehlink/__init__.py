"""Real-time vehicular link simulation from propagation paths to frame error rates."""
from .channel import (PathKind, PropagationPath, SampledCir, SamplingConfig,
                      StationarityRegion, path_delay_at, raised_cosine, sample_cir)
from .condense import (CondensedParams, CondensedParamsExtractor, EstimatorConfig, condense,
                       pdp_brute, pdp_fast)
from .doppler import DopplerEnv, analytic_rms_doppler, closed_form_exp_delay_spread
from .fertable import FerGrid, FerLookupTable, FerTable, FrameBudget, build_table
from .gscm import Scenario, compute_paths, load_scenario
from .sim import RunConfig, run_simulation
from .tdl import ExpPdpConfig, TdlConfig, draw_tdl_paths, exp_pdp

__version__ = "0.1.0"

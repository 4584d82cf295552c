"""Sensing-aware downlink beamformer design.

Minimizes a Bayesian estimation-error bound subject to per-user SINR
constraints, via a covariance relaxation and via a virtual-uplink duality
solver whose noise covariance may be indefinite.
"""

from .model import (ArrayGeometry, ScalarPrior, SensingMoments, steering,
                    steering_derivative, combined_response, compute_moments,
                    beam_pattern, ConfigurationError)
from .numerics import (HERM_TOL, LmiProblem, SdpSolution, StructuralError,
                       check_hermitian, hermitian_eig, is_psd, real_embed,
                       sdp_solve)
from .bfim import (Scenario, FisherDecomposition, prior_fim_c, data_fim_t,
                   fisher, bcrb, beta_star, q_beta, q_b_aoa, sinr_downlink)
from .sdr import (SdrResult, solve_bcrb_sdr, solve_weighted_power_sdr,
                  extract_rank_one, map_extended_sdr)
from .duality import (CouplingMatrix, MCertificate, DualState, build_coupling,
                      is_m_matrix, uplink_noise, recover_downlink_powers,
                      recover_uplink_powers, check_admissible,
                      admissibility_from_q, solve_fixed_pair, sweep_admissible)
from .maxmin import (SolveReport, PathResult, aoa_scalarize, aoa_unscalarize,
                     check_assumption1, solve_isac)

__version__ = "0.1.0"

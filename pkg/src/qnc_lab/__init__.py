"""Desk-scale simulator for one-step quantized network coding of correlated
near-sparse Gaussian messages, with compressed-sensing decoders, a routing
baseline and statistical audits of the coding-matrix theory."""

from .netgraph import (Edge, NetworkGraph, Route, DeploymentError,
                       generate_network, shortest_routes, draw_edge_pairs,
                       read_edge_list, write_edge_list)
from .messages import (MessageEnsemble, SourceModel, NormStatsReport,
                       norm_statistics, random_orthonormal, sample_ensemble)
from .quantize import UniformQuantizer, make_quantizer, near_lossless_quantizer
from .qnc import (CoefficientSet, DeliveredSet, MeasurementSystem, OneStepRun,
                  assemble, combine, draw_coefficients, kappa_theorem,
                  message_quantizers, packet_quantizers, phase1_broadcast,
                  run_one_step, select_and_deliver)
from .decoders import (DecodeResult, DecoderProblem, default_epsilon,
                       exact_mmse_oracle, l1_decode, l1_lp_oracle,
                       mixture_mmse_decode, pooled_snr_db, snr_db)
from .forwarding import (DeliverySchedule, progressive_estimate,
                         simulate_forwarding)
from .theory_checks import (TheoryConfig, audit_entry_law, audit_moments,
                            audit_recovery)
from .experiment import (ExperimentConfig, ExperimentRecord, best_L_envelope,
                         parse_config, run_sweep)

__version__ = "0.1.0"

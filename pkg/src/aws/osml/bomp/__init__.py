#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

# Telling flake8 to not flag errors in this file. It is normal that these classes are imported but not used in an
# __init__.py file.
# flake8: noqa

from .coding import ConvCode, CrcSpec, PacketCodec, SoftWord, conv_encode, crc_append, crc_check, viterbi_decode
from .comms import CommsInstance, CommsParams, IcbompResult, generate_comms_instance, run_icbomp
from .errors import (
    BompError,
    CodecError,
    ConfigError,
    DegenerateRegressionError,
    DomainError,
    ExhaustionError,
    ParameterError,
    SingularMatrixError,
    TrialError,
)
from .model import ModelParams, ProblemInstance, generate_instance, load_instance, save_instance
from .numerics import least_squares, make_rng, std_normal_inv_cdf
from .recovery import RecoveryResult, run_bomp
from .stopping import (
    DerivedThreshold,
    EnergyContext,
    MaxIterations,
    RelativeChange,
    ResidualEnergy,
    StopDecision,
    ThresholdParams,
    derived_threshold,
    residual_stats,
    should_stop,
)

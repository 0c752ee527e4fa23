"""srkit: bit-exact emulation of stochastic rounding.

Exact stochastic rounding, limited-precision variants with r random bits,
the P3109 stochastic variants, vendor-faithful conversion profiles, an
exhaustive distribution oracle, and a reproducible experiment harness, all
on top of an error-free dyadic value representation.
"""

from .entropy import (
    BitSource,
    CounterSource,
    DataBits,
    EntropyError,
    Lfsr,
    Xoroshiro128Plus,
    data_entropy,
    derive_stream,
)
from .formats import (
    BINARY16,
    BINARY32,
    CapacityError,
    DecodingError,
    DomainError,
    EncodingError,
    FloatFormat,
    FloatValue,
    ParseError,
    PRESETS,
    RangeOverflowError,
    RoundingCandidates,
    SpecialValue,
    WorkingReal,
    ZERO,
    decode_bits,
    encode_bits,
    format_decimal,
    format_hex,
    get_format,
    is_representable,
    neighbors,
    parse_working_real,
    round_up_fraction,
    ulp,
)
from .harness import (
    ExperimentResult,
    ExperimentSpec,
    PiDemoReport,
    run_experiment,
    run_gd,
    run_kernel_experiments,
    run_pi_demo,
    run_r_sweep,
    run_stagnation,
    run_sum_growth,
)
from .kernels import (
    ContractError,
    RD,
    RNE,
    RU,
    RZ,
    SrConfig,
    exact_op_then_round,
    p3109_round,
    round_deterministic,
    sr_exact,
    sr_limited,
    stochastic_round,
    two_stage_round,
)
from .oracle import BudgetError, DistributionReport, distribution, expected_sum_enumeration
from .profiles import (
    MXFP4,
    NVFP4,
    BlockFormatSpec,
    ConversionRule,
    UnknownVendorError,
    VendorProfile,
    block_dequantize,
    block_quantize,
    convert,
    convert_packed_pair,
    default_registry,
    load_registry,
    profile_lookup,
)

__version__ = "0.1.0"

"""Switching-robust L2 certificates for networks of dissipative agents."""

from ._qsrnet import (
    BenchRecord,
    BenchTable,
    Certificate,
    CertifyResult,
    CommonSupply,
    ConfigError,
    InvalidArgument,
    NetworkSpec,
    RecheckReport,
    RunConfig,
    SwitchingSignal,
    __version__,
    bench_table,
    build_network,
    care_sign,
    certify,
    coupling_matrices,
    derive_common_supply,
    gen_switching,
    l2_disturbance,
    load_config,
    lqr_gain,
    parse_config,
    recheck,
    simulate_network,
    uav_network,
)

__all__ = [
    "BenchRecord",
    "BenchTable",
    "Certificate",
    "CertifyResult",
    "CommonSupply",
    "ConfigError",
    "InvalidArgument",
    "NetworkSpec",
    "RecheckReport",
    "RunConfig",
    "SwitchingSignal",
    "__version__",
    "bench_table",
    "build_network",
    "care_sign",
    "certify",
    "coupling_matrices",
    "derive_common_supply",
    "gen_switching",
    "l2_disturbance",
    "load_config",
    "lqr_gain",
    "parse_config",
    "recheck",
    "simulate_network",
    "uav_network",
]

"""Output-feedback stochastic MPC with Bernoulli packet loss."""

from ._core import (
    ConfigError,
    ControlSpec,
    Controller,
    ControllerKind,
    Design,
    Error,
    Gains,
    InfeasibleAtStart,
    InitialBelief,
    SimConfig,
    SystemModel,
    load_config,
    parse_config,
    run_campaign,
    synthesize_gains,
)

__all__ = [
    "ConfigError",
    "ControlSpec",
    "Controller",
    "ControllerKind",
    "Design",
    "Error",
    "Gains",
    "InfeasibleAtStart",
    "InitialBelief",
    "SimConfig",
    "SystemModel",
    "load_config",
    "parse_config",
    "run_campaign",
    "synthesize_gains",
]

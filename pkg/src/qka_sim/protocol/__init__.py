"""Protocol engine, configuration and transcript layer."""

from .config import ConfigError, ProtocolConfig
from .engine import (
    DISTRIBUTOR,
    TDC,
    ClusterRegister,
    DecoyCheckResult,
    DecoyRecord,
    IdentityCheck,
    MeasurementAnomaly,
    MeasurementResult,
    PaddedSubsequence,
    Preparation,
    TransferInfo,
    VerificationReport,
    build_padded,
    chain_members,
    cyclic,
    decoy_check,
    distributor_measure,
    distributor_prepare,
    draw_challenge,
    identity_verification,
    participant_apply_key,
    party,
    run_protocol,
    tdc_recover,
)
from .transcript import Message, Transcript, TranscriptError, parse_transcript

__all__ = [
    "DISTRIBUTOR",
    "TDC",
    "ClusterRegister",
    "ConfigError",
    "DecoyCheckResult",
    "DecoyRecord",
    "IdentityCheck",
    "MeasurementAnomaly",
    "MeasurementResult",
    "Message",
    "PaddedSubsequence",
    "Preparation",
    "ProtocolConfig",
    "Transcript",
    "TranscriptError",
    "TransferInfo",
    "VerificationReport",
    "build_padded",
    "chain_members",
    "cyclic",
    "decoy_check",
    "distributor_measure",
    "distributor_prepare",
    "draw_challenge",
    "identity_verification",
    "parse_transcript",
    "participant_apply_key",
    "party",
    "run_protocol",
    "tdc_recover",
]

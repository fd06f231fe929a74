"""Byzantine agreement with classification predictions, as a round-based simulator."""

from .engine import Engine, ExecutionReport
from .predictions import GroundTruth, PredictionMatrix, generate_predictions
from .protocols import PROTOCOLS, SimConfig, audit_certificates, run_protocol, simulate

__all__ = [
    "Engine", "ExecutionReport", "GroundTruth", "PredictionMatrix", "generate_predictions",
    "PROTOCOLS", "SimConfig", "audit_certificates", "run_protocol", "simulate",
]

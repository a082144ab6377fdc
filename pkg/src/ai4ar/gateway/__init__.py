"""Frame-routing gateway: deterministic core plus a TCP front end."""
from .core import (GatewayConfig, GatewayCore, GatewayError, GatewayStats,
                   WorkerLatencyStats)
from .server import GatewayServer

__all__ = ["GatewayConfig", "GatewayCore", "GatewayError", "GatewayStats",
           "WorkerLatencyStats", "GatewayServer"]

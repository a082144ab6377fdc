"""Headset replay and scripted workers for closed-loop testing."""
from .mock_workers import (BBoxNoise, MockWorker, NoiseSpec, PoseNoise,
                           RegistrationRefused, TextNoise)
from .replay import LatencyReport, ReplayConfig, replay_sequence

__all__ = ["BBoxNoise", "MockWorker", "NoiseSpec", "PoseNoise",
           "RegistrationRefused", "TextNoise", "LatencyReport",
           "ReplayConfig", "replay_sequence"]

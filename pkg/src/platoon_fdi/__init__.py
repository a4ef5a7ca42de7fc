"""Fault localisation and driver-state identification for vehicle platoons.

A link failure hands one vehicle to a human driver; the library locates the
broken link and classifies the driver from the tail vehicle's measurements,
either with a full hypothesis bank or with a cheaper two-step blending
identifier.
"""

from .blender import (BlendConfig, BlendingIdentifier, BlendResult, BlendWeights, Integerization,
                      identify_blended)
from .driver import DriverKind, DriverParams, FaultScenario
from .identifier import (Hypothesis, IdentificationResult, IdentifierConfig, MultiModelIdentifier,
                         identify)
from .platoon import (Architecture, ControllerGains, PlatoonConfig, ReferenceProfile, Segment,
                      SimTrace, Simulator, simulate)
from .scenario import ScenarioSpec, catalog, load_scenario, parse_scenario, run

__version__ = "0.1.0"

__all__ = [
    "Architecture", "BlendConfig", "BlendResult", "BlendWeights", "BlendingIdentifier",
    "ControllerGains", "DriverKind", "DriverParams", "FaultScenario", "Hypothesis",
    "IdentificationResult", "IdentifierConfig", "Integerization", "MultiModelIdentifier",
    "PlatoonConfig", "ReferenceProfile", "ScenarioSpec", "Segment", "SimTrace", "Simulator",
    "catalog", "identify", "identify_blended", "load_scenario", "parse_scenario", "run",
    "simulate",
]

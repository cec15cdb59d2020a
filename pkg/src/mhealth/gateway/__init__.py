"""Tier 2: the personal server between the body sensor and the cloud."""

from mhealth.gateway.config import (
    Calibration,
    ConfigError,
    ForwardPolicy,
    SensorRegistration,
    SensorRegistry,
    SensorType,
    SessionConfig,
    should_forward,
)
from mhealth.gateway.link import HttpUplink, LinkScript, LinkSegment, ScriptedUplink
from mhealth.gateway.locator import CellDatabase, CellRecord, UnknownCell, resolve_location
from mhealth.gateway.outbox import LinkDown, Outbox, OutboxEntry, Uplink, flush
from mhealth.gateway.runner import EventKind, Gateway, GatewayEvent, GatewayStats, run_gateway

__all__ = [
    "Calibration", "ConfigError", "ForwardPolicy", "SensorRegistration", "SensorRegistry",
    "SensorType", "SessionConfig", "should_forward", "HttpUplink", "LinkScript", "LinkSegment",
    "ScriptedUplink", "CellDatabase", "CellRecord", "UnknownCell", "resolve_location",
    "LinkDown", "Outbox", "OutboxEntry", "Uplink", "flush", "EventKind", "Gateway",
    "GatewayEvent", "GatewayStats", "run_gateway",
]

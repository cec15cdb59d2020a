"""Tier 3 medical server: records, classification and alerting."""

from mhealth.server.service import (
    Accepted,
    AlertLogSink,
    CallbackSink,
    Duplicate,
    MedicalServer,
    NotFound,
    ServiceUplink,
    SinkError,
    Snapshot,
    TokenTable,
    Unauthorized,
    ValidationError,
    dispatch,
)
from mhealth.server.store import RecordEntry, RecordStore, SessionUpload

__all__ = [
    "Accepted", "AlertLogSink", "CallbackSink", "Duplicate", "MedicalServer", "NotFound",
    "ServiceUplink", "SinkError", "Snapshot", "TokenTable", "Unauthorized", "ValidationError",
    "dispatch", "RecordEntry", "RecordStore", "SessionUpload",
]

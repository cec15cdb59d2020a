"""Server settings from a flat config file and/or flags."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from mhealth.engine.mlp import load_model
from mhealth.server.service import AlertLogSink, MedicalServer, TokenTable
from mhealth.server.store import RecordStore


@dataclass(frozen=True)
class ServerConfig:
    tokens_path: Path
    data_dir: Path
    model_path: Optional[Path] = None
    host: str = "127.0.0.1"
    port: int = 8080

    @property
    def alert_log(self) -> Path:
        return self.data_dir / "alerts.ndjson"

    @classmethod
    def from_mapping(cls, m: dict[str, Any]) -> "ServerConfig":
        """Keys: tokens, data_dir, model, listen ("host:port")."""
        unknown = set(m) - {"tokens", "data_dir", "model", "listen"}
        if unknown:
            raise ValueError(f"unknown server settings: {', '.join(sorted(unknown))}")
        if "tokens" not in m or "data_dir" not in m:
            raise ValueError("server config needs tokens and data_dir")
        host, _, port = str(m.get("listen", "127.0.0.1:8080")).rpartition(":")
        return cls(
            tokens_path=Path(m["tokens"]),
            data_dir=Path(m["data_dir"]),
            model_path=None if m.get("model") in (None, "") else Path(m["model"]),
            host=host or "127.0.0.1",
            port=int(port),
        )

    def build(self, clock: Optional[Callable[[], int]] = None) -> MedicalServer:
        model = None if self.model_path is None else load_model(self.model_path)
        return MedicalServer(
            TokenTable.from_csv(self.tokens_path),
            model,
            RecordStore(self.data_dir),
            clock,
            [AlertLogSink(self.alert_log)],
        )

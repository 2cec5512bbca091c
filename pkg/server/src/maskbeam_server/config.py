"""Server configuration: which backend serves each endpoint.

A config file is a JSON object; each endpoint entry names a backend kind
plus its arguments. ``perplexity`` and ``grammar`` are optional; requests
against unconfigured endpoints get a 501.

Example:

    {
      "max_batch": 64,
      "classifier": {"kind": "keyword", "path": "demo_target.json"},
      "infiller": {"kind": "table", "path": "demo_infiller.json"},
      "similarity": {"kind": "embedding", "path": "demo_embeddings.json"},
      "grammar": {"kind": "toy"}
    }

Transformers-backed entries point at checkpoint directories instead:

    {"kind": "transformers", "path": "/ckpt/sentiment", "labels": ["neg", "pos"]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class ServerConfigError(Exception):
    pass


@dataclass(frozen=True)
class BackendSpec:
    kind: str
    path: str | None = None
    labels: tuple[str, ...] | None = None

    @classmethod
    def from_json(cls, data: dict, field: str) -> "BackendSpec":
        if not isinstance(data, dict) or "kind" not in data:
            raise ServerConfigError(f"{field}: expected an object with a 'kind'")
        labels = data.get("labels")
        return cls(
            kind=str(data["kind"]),
            path=data.get("path"),
            labels=tuple(labels) if labels else None,
        )


@dataclass(frozen=True)
class ServerConfig:
    classifier: BackendSpec
    infiller: BackendSpec
    similarity: BackendSpec
    perplexity: BackendSpec | None = None
    grammar: BackendSpec | None = None
    max_batch: int = 64
    host: str = "127.0.0.1"
    port: int = 8300

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        base = Path(path).parent
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ServerConfigError(f"{path}: invalid JSON: {exc}") from None

        def spec(field: str, required: bool) -> BackendSpec | None:
            if field not in data or data[field] is None:
                if required:
                    raise ServerConfigError(f"{path}: missing required backend {field!r}")
                return None
            out = BackendSpec.from_json(data[field], field)
            if out.path is not None and not Path(out.path).is_absolute():
                out = BackendSpec(out.kind, str(base / out.path), out.labels)
            return out

        return cls(
            classifier=spec("classifier", required=True),
            infiller=spec("infiller", required=True),
            similarity=spec("similarity", required=True),
            perplexity=spec("perplexity", required=False),
            grammar=spec("grammar", required=False),
            max_batch=int(data.get("max_batch", 64)),
            host=str(data.get("host", "127.0.0.1")),
            port=int(data.get("port", 8300)),
        )

"""Pluggable diagnosis/repair backends.

The offline oracle needs no configuration.  The remote backend speaks a
single vendor-neutral wire format: one HTTP POST per request carrying text
and PNG parts, answered by `{"text": "..."}`.  Endpoint, model id, and the
credential's environment variable name all come from configuration; nothing
vendor-specific is baked in.
"""

from dataclasses import dataclass
import json
import os
import urllib.error
import urllib.request

from .diagnose import (
    BackendUnavailable,
    FormatViolation,
    PromptBundle,
    build_prompt,
    diagnose,
    parse_diagnosis,
)
from .raster import keyframes


@dataclass
class BackendConfig:
    endpoint: str = ""
    model: str = "default"
    credential_env: str = "BLOCKMEND_API_KEY"
    timeout: float = 30.0
    keyframe_budget: int = 6
    max_format_retries: int = 2

    @classmethod
    def from_env(cls, **overrides):
        cfg = cls(
            endpoint=os.environ.get("BLOCKMEND_ENDPOINT", ""),
            model=os.environ.get("BLOCKMEND_MODEL", "default"),
            credential_env=os.environ.get("BLOCKMEND_CREDENTIAL_ENV", "BLOCKMEND_API_KEY"),
            timeout=float(os.environ.get("BLOCKMEND_TIMEOUT", "30")),
            keyframe_budget=int(os.environ.get("BLOCKMEND_KEYFRAMES", "6")),
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg


class HttpTransport:
    def __init__(self, config):
        self.config = config

    def complete(self, bundle):
        if not self.config.endpoint:
            raise BackendUnavailable("no backend endpoint configured")
        body = json.dumps({
            "model": self.config.model,
            "system": bundle.system_text,
            "parts": bundle.parts,
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.config.credential_env, "")
        if credential:
            headers["Authorization"] = "Bearer " + credential
        request = urllib.request.Request(
            self.config.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.config.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise BackendUnavailable("backend request failed: %s" % exc) from exc
        if not isinstance(payload, dict) or "text" not in payload:
            raise BackendUnavailable("backend reply has no 'text' field")
        return str(payload["text"])


class OracleDiagnosisBackend:
    name = "oracle"

    def diagnose(self, normalized, trace, history=None, hint=None):
        return diagnose(normalized, trace, history=history, hint=hint)


class RemoteDiagnosisBackend:
    """Sends the prompt bundle, parses the strict two-line reply, and re-asks
    (appending the violation) up to max_format_retries times."""

    name = "remote"

    def __init__(self, transport, config):
        self.transport = transport
        self.config = config

    def diagnose(self, normalized, trace, history=None, hint=None):
        frames = keyframes(trace, normalized.project, self.config.keyframe_budget)
        bundle = build_prompt(normalized, frames, history=history, hint=hint)
        parts = list(bundle.parts)
        last_violation = None
        for _attempt in range(1 + self.config.max_format_retries):
            text = self.transport.complete(
                PromptBundle(system_text=bundle.system_text, parts=parts))
            try:
                result = parse_diagnosis(text)
                result.backend = self.name
                return result
            except FormatViolation as exc:
                last_violation = exc
                parts = parts + [{
                    "kind": "text",
                    "text": "Format violation: %s. Reply again using exactly the "
                            "required output format." % exc,
                }]
        raise last_violation


def make_diagnosis_backend(kind, config=None):
    if kind == "oracle":
        return OracleDiagnosisBackend()
    if kind == "remote":
        config = config or BackendConfig.from_env()
        return RemoteDiagnosisBackend(HttpTransport(config), config)
    raise ValueError("unknown backend %r" % kind)


def make_repair_backend(kind, config=None, diagnosis=None):
    from .repair import OracleRepairBackend, RemoteRepairBackend

    if kind == "oracle":
        return OracleRepairBackend()
    if kind == "remote":
        config = config or BackendConfig.from_env()
        return RemoteRepairBackend(HttpTransport(config), diagnosis=diagnosis,
                                   max_format_retries=config.max_format_retries)
    raise ValueError("unknown backend %r" % kind)

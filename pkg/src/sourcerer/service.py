"""Local HTTP facade over one triage session.

Serves JSON state reads, accepts triage mutations, and optionally serves a
static review UI under /ui/.  Every response carries the state revision;
a GET with an If-Revision-Newer header parks until the state moves past that
revision or the poll window closes with 304, which is what lets a browser
follow along without busy-polling.  Mutations are applied and written to the
session file before they are acknowledged, so a crash cannot lose an
acknowledged decision.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable
from urllib.parse import parse_qs, urlsplit

from sourcerer import __version__
from sourcerer.errors import (
    BindFailure,
    IllegalTransition,
    InputError,
    InvariantError,
    UnknownEntity,
)
from sourcerer.jsonio import canonical_dumps
from sourcerer.model import AssetState, Verdict
from sourcerer.report import build_report, render_report
from sourcerer.session import (
    AssetDecision,
    FindingVerdict,
    TriageSession,
    apply_event,
    load_session,
    save_session,
)

API_SCHEMA = "sourcerer-api/1"
MAX_BODY_BYTES = 1 << 20
DEFAULT_POLL_MS = 25_000
MAX_POLL_MS = 60_000

log = logging.getLogger("sourcerer.service")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".map": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".txt": "text/plain; charset=utf-8",
}


def snapshot_views(session: TriageSession) -> tuple[dict, dict, dict]:
    """Pure projections of one session: asset list, ranked queue, full report.

    The ranked view carries impacted assets and mitigations per row, in the
    same order the session's ranking derived.
    """
    report = build_report(session)
    assets_view = {"assets": [a.to_dict() for a in session.assets_sorted()]}
    ranked_view = {"rows": report["rows"]}
    return assets_view, ranked_view, report


def session_summary(session: TriageSession) -> dict:
    return {
        "session_id": session.session_id,
        "app": {
            "app_id": session.profile.app_id,
            "name": session.profile.display_name,
            "package": session.manifest.package if session.manifest else None,
        },
        "tools": session.tools(),
        "threshold": session.config.threshold,
        "granularity": session.config.granularity.value,
        "counts": {
            "assets": len(session.assets),
            "accepted_assets": len(session.accepted_assets()),
            "candidate_assets": sum(
                1 for a in session.assets.values() if a.state is AssetState.CANDIDATE
            ),
            "consolidated": len(session.consolidated),
            "residue": len(session.residue),
            "quarantined": sum(len(v) for v in session.quarantine.values()),
            "events": len(session.events),
        },
    }


class TriageService:
    """Thread-safe single-session state: one writer at a time, durable acks."""

    def __init__(self, session: TriageSession, session_path: str | Path, ui_dir: str | Path | None = None):
        self._session = session
        self._path = Path(session_path)
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self._cond = threading.Condition()
        self._revision = 0

    def read(self, builder: Callable[[TriageSession], Any]) -> tuple[int, Any]:
        with self._cond:
            return self._revision, builder(self._session)

    def mutate(self, event, builder: Callable[[TriageSession], Any]) -> tuple[int, Any]:
        """Apply one event, persist it, then bump the revision and wake pollers."""
        with self._cond:
            apply_event(self._session, event)
            try:
                save_session(self._session, self._path)
            except Exception:
                # The in-memory event must not outlive a failed write; fall
                # back to what the file actually holds.
                self._session = load_session(self._path)
                raise
            self._revision += 1
            self._cond.notify_all()
            return self._revision, builder(self._session)

    def wait_newer(self, last_seen: int, timeout_s: float) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self._revision > last_seen, timeout=timeout_s)


class _Handler(BaseHTTPRequestHandler):
    service: TriageService  # assigned on the per-server subclass

    server_version = f"sourcerer/{__version__}"
    protocol_version = "HTTP/1.1"

    def log_message(self, format: str, *args) -> None:
        log.debug("%s " + format, self.address_string(), *args)

    # ------------------------------------------------------------------ io

    def _send_bytes(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-store")
        self.end_headers()
        self.wfile.write(body)

    def _send_envelope(self, status: int, revision: int, payload: Any = None, error: str | None = None) -> None:
        doc: dict[str, Any] = {"schema_version": API_SCHEMA, "state_revision": revision}
        if error is None:
            doc["payload"] = payload
        else:
            doc["error"] = error
        self._send_bytes(status, canonical_dumps(doc).encode("utf-8") + b"\n", "application/json; charset=utf-8")

    def _send_not_modified(self, revision: int) -> None:
        self.send_response(304)
        self.send_header("X-State-Revision", str(revision))
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _error(self, status: int, message: str) -> None:
        revision, _ = self.service.read(lambda s: None)
        self._send_envelope(status, revision, error=message)

    def _read_body(self) -> dict | None:
        length = self.headers.get("Content-Length")
        try:
            size = int(length)
        except (TypeError, ValueError):
            self._error(400, "Content-Length required")
            return None
        if not 0 <= size <= MAX_BODY_BYTES:
            self._error(400, f"body must be at most {MAX_BODY_BYTES} bytes")
            return None
        raw = self.rfile.read(size)
        try:
            doc = json.loads(raw)
        except ValueError:
            self._error(400, "body is not valid JSON")
            return None
        if not isinstance(doc, dict):
            self._error(400, "body must be a JSON object")
            return None
        return doc

    # --------------------------------------------------------------- routes

    def do_GET(self) -> None:
        url = urlsplit(self.path)
        segments = [s for s in url.path.split("/") if s]
        query = parse_qs(url.query)

        if segments[:1] == ["ui"]:
            self._serve_ui("/".join(segments[1:]))
            return

        if not segments:
            if self.service.ui_dir is not None:
                self.send_response(302)
                self.send_header("Location", "/ui/")
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            revision, payload = self.service.read(session_summary)
            self._send_envelope(200, revision, payload)
            return

        if segments == ["health"]:
            revision, _ = self.service.read(lambda s: None)
            self._send_envelope(200, revision, {"status": "ok"})
            return

        if not self._long_poll_gate(query):
            return

        if segments == ["session"]:
            def session_view(s: TriageSession) -> dict:
                view = session_summary(s)
                view["assets"] = snapshot_views(s)[0]["assets"]
                return view

            revision, payload = self.service.read(session_view)
            self._send_envelope(200, revision, payload)
        elif segments == ["assets"]:
            revision, payload = self.service.read(lambda s: snapshot_views(s)[0])
            self._send_envelope(200, revision, payload)
        elif segments == ["findings", "ranked"]:
            revision, payload = self.service.read(lambda s: snapshot_views(s)[1])
            self._send_envelope(200, revision, payload)
        elif segments == ["report"]:
            fmt = (query.get("format") or ["json"])[0]
            if fmt == "text":
                revision, text = self.service.read(lambda s: render_report(s, "text"))
                self._send_bytes(200, text.encode("utf-8"), "text/plain; charset=utf-8")
            elif fmt == "json":
                revision, payload = self.service.read(lambda s: snapshot_views(s)[2])
                self._send_envelope(200, revision, payload)
            else:
                self._error(400, f"unknown report format {fmt!r}")
        else:
            self._error(404, f"no such resource: {url.path}")

    def _long_poll_gate(self, query: dict) -> bool:
        """Park until state moves past If-Revision-Newer; False means 304 sent."""
        header = self.headers.get("If-Revision-Newer")
        if header is None:
            return True
        try:
            last_seen = int(header)
        except ValueError:
            self._error(400, "If-Revision-Newer must be an integer")
            return False
        try:
            timeout_ms = int((query.get("timeout_ms") or [DEFAULT_POLL_MS])[0])
        except ValueError:
            self._error(400, "timeout_ms must be an integer")
            return False
        timeout_ms = max(0, min(timeout_ms, MAX_POLL_MS))
        if self.service.wait_newer(last_seen, timeout_ms / 1000):
            return True
        revision, _ = self.service.read(lambda s: None)
        self._send_not_modified(revision)
        return False

    def do_POST(self) -> None:
        segments = [s for s in urlsplit(self.path).path.split("/") if s]

        if len(segments) == 3 and segments[0] == "assets" and segments[2] == "decision":
            body = self._read_body()
            if body is None:
                return
            try:
                state = AssetState(body.get("state"))
            except ValueError:
                known = ", ".join(s.value for s in AssetState)
                self._error(400, f"'state' must be one of: {known}")
                return
            asset_id = segments[1]
            self._apply(
                AssetDecision(asset_id=asset_id, state=state),
                lambda s: {"asset": s.assets[asset_id].to_dict()},
            )
            return

        if len(segments) == 3 and segments[0] == "findings" and segments[2] == "verdict":
            body = self._read_body()
            if body is None:
                return
            try:
                verdict = Verdict(body.get("verdict"))
            except ValueError:
                known = ", ".join(v.value for v in Verdict)
                self._error(400, f"'verdict' must be one of: {known}")
                return
            finding_id = segments[1]
            self._apply(
                FindingVerdict(finding_id=finding_id, verdict=verdict),
                lambda s: {"finding": s.finding(finding_id).to_dict()},
            )
            return

        self._error(404, f"no such resource: {self.path}")

    def _apply(self, event, builder: Callable[[TriageSession], Any]) -> None:
        try:
            revision, payload = self.service.mutate(event, builder)
        except UnknownEntity as exc:
            self._error(404, str(exc))
            return
        except IllegalTransition as exc:
            self._error(409, str(exc))
            return
        except (InputError, InvariantError) as exc:
            self._error(400, str(exc))
            return
        self._send_envelope(200, revision, payload)

    # ------------------------------------------------------------------ ui

    def _serve_ui(self, relative: str) -> None:
        root = self.service.ui_dir
        if root is None:
            self._error(404, "no UI directory configured; start with --ui DIR")
            return
        target = (root / relative).resolve() if relative else root
        if target != root and root not in target.parents:
            self._error(404, "not found")
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._error(404, "not found")
            return
        content_type = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send_bytes(200, target.read_bytes(), content_type)


def make_server(
    session_path: str | Path,
    *,
    host: str = "127.0.0.1",
    port: int = 0,
    ui_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Load the session and bind the HTTP server without starting it."""
    session = load_session(session_path)
    service = TriageService(session, session_path, ui_dir)
    handler = type("SessionHandler", (_Handler,), {"service": service})
    try:
        return ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{port}: {exc}") from None


def run_service(
    session_path: str | Path,
    *,
    host: str = "127.0.0.1",
    port: int = 8799,
    ui_dir: str | Path | None = None,
) -> int:
    server = make_server(session_path, host=host, port=port, ui_dir=ui_dir)
    bound_host, bound_port = server.server_address[:2]
    if host not in ("127.0.0.1", "::1", "localhost"):
        log.warning(
            "binding %s exposes the unauthenticated triage API beyond this machine", host
        )
    log.info("serving triage API on http://%s:%s/ (Ctrl+C to stop)", bound_host, bound_port)
    if ui_dir:
        log.info("review UI at http://%s:%s/ui/", bound_host, bound_port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0

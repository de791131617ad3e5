"""HTTP back end for the human curation loop.

Plain JSON over HTTP; the manifest file is the single source of truth, so
verdicts survive restarts. All manifest mutations are funneled through one
lock-guarded writer (atomic write-temp-rename) and every verdict also lands
in a sibling append-only audit log (manifest.audit.jsonl). Reads serve
snapshots taken under the same lock.

Endpoints:
    GET  /api/candidates?status=pending|all
    GET  /api/candidates/{id}/image?overlay=true|false
    POST /api/candidates/{id}/verdict   {"decision": "accepted"|"rejected", "note": "..."}
    GET  /api/export
    GET  /            static review UI (built frontend assets)
"""

from __future__ import annotations

import io
import json
import logging
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from PIL import Image

from . import annotation, pipeline, raster

log = logging.getLogger(__name__)

VERDICTS = ("accepted", "rejected")
_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


class ManifestStore:
    """Thread-safe view over a manifest.jsonl with serialized verdict writes."""

    def __init__(self, manifest_path):
        self.path = Path(manifest_path)
        self.root = self.path.parent
        self.audit_path = self.path.with_name(self.path.stem + ".audit.jsonl")
        self._lock = threading.Lock()
        self.entries = pipeline.load_manifest(self.path)

    def snapshot(self) -> list[pipeline.ManifestEntry]:
        with self._lock:
            return list(self.entries)

    def get(self, idx: int) -> pipeline.ManifestEntry | None:
        with self._lock:
            if 0 <= idx < len(self.entries):
                return self.entries[idx]
        return None

    def set_verdict(self, idx: int, decision: str, note: str | None) -> pipeline.ManifestEntry:
        if decision not in VERDICTS:
            raise ValueError(f"decision must be one of {VERDICTS}, got {decision!r}")
        with self._lock:
            if not 0 <= idx < len(self.entries):
                raise KeyError(idx)
            entry = self.entries[idx]
            entry.verdict = decision
            entry.note = note
            pipeline.save_manifest(self.path, self.entries)
            audit = {
                "ts": datetime.now(timezone.utc).isoformat(),
                "id": idx,
                "decision": decision,
                "note": note,
            }
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(audit) + "\n")
            return entry


def _candidate_json(entry: pipeline.ManifestEntry) -> dict:
    return {
        "id": entry.index,
        "source": entry.source_image,
        "stem": entry.stem,
        "variant": entry.variant,
        "flags": entry.screening,
        "verdict": entry.verdict,
        "note": entry.note,
        "nonconverged_fraction": entry.nonconverged_fraction,
        "dropped": entry.dropped,
    }


class ReviewHandler(BaseHTTPRequestHandler):
    server_version = "docwarp-review"

    # the ThreadingHTTPServer instance carries .store and .static_dir
    @property
    def store(self) -> ManifestStore:
        return self.server.store

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, obj, status: int = 200) -> None:
        body = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, body: bytes, content_type: str, status: int = 200) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        query = parse_qs(url.query)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/api/candidates":
                status = query.get("status", ["pending"])[0]
                entries = self.store.snapshot()
                if status == "pending":
                    entries = [e for e in entries if e.verdict == "pending"]
                elif status != "all":
                    return self._send_json({"error": f"unknown status {status!r}"}, 400)
                return self._send_json([_candidate_json(e) for e in entries])
            if len(parts) == 4 and parts[:2] == ["api", "candidates"] and parts[3] == "image":
                return self._image(parts[2], query)
            if url.path == "/api/export":
                return self._export()
            return self._static(url.path)
        except BrokenPipeError:
            pass
        except Exception as exc:  # noqa: BLE001 - surface as 500, keep serving
            log.exception("GET %s failed", self.path)
            self._send_json({"error": str(exc)}, 500)

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if len(parts) == 4 and parts[:2] == ["api", "candidates"] and parts[3] == "verdict":
                try:
                    idx = int(parts[2])
                except ValueError:
                    return self._send_json({"error": "bad candidate id"}, 404)
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    return self._send_json({"error": "body must be JSON"}, 400)
                decision = payload.get("decision")
                if decision not in VERDICTS:
                    return self._send_json(
                        {"error": f"decision must be one of {list(VERDICTS)}"}, 400
                    )
                try:
                    self.store.set_verdict(idx, decision, payload.get("note"))
                except KeyError:
                    return self._send_json({"error": f"unknown candidate {idx}"}, 404)
                return self._send_json({"id": idx, "decision": decision})
            self._send_json({"error": "not found"}, 404)
        except BrokenPipeError:
            pass
        except Exception as exc:  # noqa: BLE001
            log.exception("POST %s failed", self.path)
            self._send_json({"error": str(exc)}, 500)

    def _image(self, id_str: str, query) -> None:
        try:
            idx = int(id_str)
        except ValueError:
            return self._send_json({"error": "bad candidate id"}, 404)
        entry = self.store.get(idx)
        if entry is None:
            return self._send_json({"error": f"unknown candidate {idx}"}, 404)
        image_path = self.store.root / entry.image_path
        overlay = query.get("overlay", ["false"])[0].lower() == "true"
        if not overlay:
            return self._send_bytes(image_path.read_bytes(), "image/png")
        img = raster.read_image(image_path)
        doc = annotation.parse_labelme((self.store.root / entry.annotation_path).read_text())
        rendered = raster.render_overlay(img, [(s.label.value, s.polygon) for s in doc.shapes])
        buf = io.BytesIO()
        Image.fromarray(rendered).save(buf, format="PNG")
        self._send_bytes(buf.getvalue(), "image/png")

    def _export(self) -> None:
        entries = self.store.snapshot()
        self._send_json(
            {
                "accepted": [e.image_path for e in entries if e.verdict == "accepted"],
                "rejected": [e.image_path for e in entries if e.verdict == "rejected"],
                "pending": sum(1 for e in entries if e.verdict == "pending"),
            }
        )

    def _static(self, path: str) -> None:
        static_dir: Path = self.server.static_dir
        name = "index.html" if path in ("/", "") else path.lstrip("/")
        target = (static_dir / name).resolve()
        if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
            return self._send_json({"error": "not found"}, 404)
        ctype = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
        self._send_bytes(target.read_bytes(), ctype)


def create_server(manifest_path, host: str = "127.0.0.1", port: int = 8750, static_dir=None) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), ReviewHandler)
    server.store = ManifestStore(manifest_path)
    server.static_dir = Path(static_dir) if static_dir else Path(__file__).parent / "review_static"
    return server


def serve(manifest_path, host: str = "127.0.0.1", port: int = 8750, static_dir=None) -> None:
    server = create_server(manifest_path, host=host, port=port, static_dir=static_dir)
    print(f"review server on http://{host}:{server.server_address[1]}/  (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()

"""Parsers for the inputs a triage session is built from.

Tool findings arrive in one JSON interchange shape regardless of which
analyzer produced them: {tool, tool_version, findings: [{native_id, severity,
file, class, method, line, message}]}.  The adapter id picks the severity
vocabulary (MobSF, AndroBugs, and QARK label severities differently), and the
``generic`` adapter accepts any other tool using the canonical four labels.
Severity is resolved to the shared scale at parse time, so a RawFinding never
carries a tool-specific label.
"""

from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from sourcerer.errors import (
    MalformedManifest,
    MalformedProfile,
    UnknownTool,
    UnsupportedReport,
)
from sourcerer.model import CodeLocation, Severity

ANDROID_NS = "http://schemas.android.com/apk/res/android"

# Adapter ids accepted by parse_tool_report.  "generic" reads the real slug
# from the payload itself.
ADAPTER_NAMES = ("androbugs", "generic", "mobsf", "qark")

_SLUG_RE = re.compile(r"^[a-z0-9][a-z0-9_.-]*$")

log = logging.getLogger("sourcerer.ingest")


@dataclass(frozen=True)
class RawFinding:
    """One tool-reported issue, before category normalization."""

    native_id: str
    severity: Severity
    location: CodeLocation | None
    evidence: str = ""

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "native_id": self.native_id,
            "severity": self.severity.value,
        }
        if self.location is not None:
            data["location"] = self.location.to_dict()
        if self.evidence:
            data["evidence"] = self.evidence
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RawFinding:
        location = data.get("location")
        return cls(
            native_id=data["native_id"],
            severity=Severity(data["severity"]),
            location=CodeLocation.from_dict(location) if location else None,
            evidence=data.get("evidence", ""),
        )


@dataclass(frozen=True)
class ToolReport:
    """All findings one tool reported for one app."""

    tool: str
    findings: tuple[RawFinding, ...]
    tool_version: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool": self.tool,
            "tool_version": self.tool_version,
            "findings": [f.to_dict() for f in self.findings],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ToolReport:
        return cls(
            tool=data["tool"],
            findings=tuple(RawFinding.from_dict(f) for f in data["findings"]),
            tool_version=data.get("tool_version", ""),
        )


@dataclass(frozen=True)
class ManifestInfo:
    """The slice of AndroidManifest.xml the pipeline consumes."""

    package: str
    permissions: tuple[str, ...] = ()
    exported_components: tuple[str, ...] = ()
    debuggable: bool = False
    allow_backup: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "package": self.package,
            "permissions": list(self.permissions),
            "exported_components": list(self.exported_components),
            "debuggable": self.debuggable,
            "allow_backup": self.allow_backup,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ManifestInfo:
        return cls(
            package=data["package"],
            permissions=tuple(data.get("permissions", ())),
            exported_components=tuple(data.get("exported_components", ())),
            debuggable=data.get("debuggable", False),
            allow_backup=data.get("allow_backup", True),
        )


@dataclass(frozen=True)
class AppProfile:
    """Store-listing metadata for the app under review."""

    app_id: str
    display_name: str
    description: str
    domain_tag: str | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "app_id": self.app_id,
            "name": self.display_name,
            "description": self.description,
        }
        if self.domain_tag is not None:
            data["domain"] = self.domain_tag
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AppProfile:
        return cls(
            app_id=data["app_id"],
            display_name=data.get("name", data["app_id"]),
            description=data["description"],
            domain_tag=data.get("domain"),
        )


def normalize_description(text: str) -> str:
    """Collapse all whitespace runs so keyword offsets are reproducible."""
    return " ".join(text.split())


def load_app_profile(path: str | Path) -> AppProfile:
    """Read a profile JSON file ({app_id, name?, domain?, description})."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise MalformedProfile(f"cannot read profile {path}: {exc}") from None
    try:
        doc = json.loads(payload)
    except ValueError as exc:
        raise MalformedProfile(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedProfile(f"{path}: expected a JSON object")
    app_id = doc.get("app_id")
    if not isinstance(app_id, str) or not app_id.strip():
        raise MalformedProfile(f"{path}: 'app_id' must be a non-empty string")
    description = doc.get("description")
    if not isinstance(description, str):
        raise MalformedProfile(f"{path}: 'description' must be a string")
    name = doc.get("name", app_id)
    if not isinstance(name, str) or not name.strip():
        raise MalformedProfile(f"{path}: 'name' must be a non-empty string")
    domain = doc.get("domain")
    if domain is not None and not isinstance(domain, str):
        raise MalformedProfile(f"{path}: 'domain' must be a string")
    return AppProfile(
        app_id=app_id.strip(),
        display_name=name.strip(),
        description=normalize_description(description),
        domain_tag=domain,
    )


def _local_tag(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _android_attr(el: ET.Element, name: str) -> str | None:
    value = el.get(f"{{{ANDROID_NS}}}{name}")
    if value is None:
        value = el.get(name)
    return value


def _bool_attr(el: ET.Element, name: str, default: bool, source: str) -> bool:
    value = _android_attr(el, name)
    if value is None:
        return default
    if value == "true":
        return True
    if value == "false":
        return False
    raise MalformedManifest(f"{source}: android:{name} must be 'true' or 'false', got {value!r}")


_COMPONENT_TAGS = {"activity", "activity-alias", "service", "receiver", "provider"}


def parse_manifest(xml_text: str | bytes, *, source: str = "<manifest>") -> ManifestInfo:
    """Extract package, permissions, and exported components from manifest XML.

    A component without an explicit android:exported attribute counts as
    exported when it declares at least one intent filter.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedManifest(f"{source}: {exc}") from None
    if _local_tag(root.tag) != "manifest":
        raise MalformedManifest(f"{source}: root element is <{_local_tag(root.tag)}>, expected <manifest>")
    package = root.get("package")
    if not package or not package.strip():
        raise MalformedManifest(f"{source}: <manifest> lacks a package attribute")

    permissions: list[str] = []
    for el in root.iter():
        if _local_tag(el.tag) != "uses-permission":
            continue
        name = _android_attr(el, "name")
        if not name or not name.strip():
            raise MalformedManifest(f"{source}: <uses-permission> lacks android:name")
        name = name.strip()
        if name not in permissions:
            permissions.append(name)

    application = None
    for child in root:
        if _local_tag(child.tag) == "application":
            application = child
            break

    debuggable = False
    allow_backup = True
    exported: list[str] = []
    if application is not None:
        debuggable = _bool_attr(application, "debuggable", False, source)
        allow_backup = _bool_attr(application, "allowBackup", True, source)
        for el in application.iter():
            if _local_tag(el.tag) not in _COMPONENT_TAGS:
                continue
            name = _android_attr(el, "name")
            if not name or not name.strip():
                raise MalformedManifest(f"{source}: <{_local_tag(el.tag)}> lacks android:name")
            explicit = _android_attr(el, "exported")
            if explicit is None:
                is_exported = any(_local_tag(sub.tag) == "intent-filter" for sub in el)
            elif explicit in ("true", "false"):
                is_exported = explicit == "true"
            else:
                raise MalformedManifest(f"{source}: android:exported must be 'true' or 'false', got {explicit!r}")
            name = name.strip()
            if is_exported and name not in exported:
                exported.append(name)

    return ManifestInfo(
        package=package.strip(),
        permissions=tuple(permissions),
        exported_components=tuple(exported),
        debuggable=debuggable,
        allow_backup=allow_backup,
    )


def load_manifest(path: str | Path) -> ManifestInfo:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MalformedManifest(f"cannot read manifest {path}: {exc}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedManifest(f"{path}: not UTF-8 text: {exc}") from None
    return parse_manifest(text, source=str(path))


# Severity vocabulary per adapter.  Labels a tool does not document fall back
# to medium with a logged warning rather than failing the whole report.
_SEVERITY_SCALES: dict[str, dict[str, Severity]] = {
    "mobsf": {
        "high": Severity.HIGH,
        "warning": Severity.MEDIUM,
        "info": Severity.INFO,
        "secure": Severity.INFO,
    },
    "androbugs": {
        "critical": Severity.CRITICAL,
        "warning": Severity.MEDIUM,
        "notice": Severity.INFO,
        "info": Severity.INFO,
    },
    "qark": {
        "error": Severity.HIGH,
        "warning": Severity.MEDIUM,
        "info": Severity.INFO,
    },
    "generic": {
        "critical": Severity.CRITICAL,
        "high": Severity.HIGH,
        "medium": Severity.MEDIUM,
        "info": Severity.INFO,
    },
}


def _resolve_severity(adapter: str, label: Any, where: str) -> Severity:
    if not isinstance(label, str):
        raise UnsupportedReport(f"{where}: severity must be a string")
    severity = _SEVERITY_SCALES[adapter].get(label.lower())
    if severity is None:
        log.warning("%s: unknown %s severity %r, treating as medium", where, adapter, label)
        return Severity.MEDIUM
    return severity


def _require_str(item: dict[str, Any], key: str, where: str) -> str:
    value = item.get(key)
    if not isinstance(value, str) or not value.strip():
        raise UnsupportedReport(f"{where}: {key!r} must be a non-empty string")
    return value.strip()


def _opt_str(item: dict[str, Any], key: str, where: str) -> str | None:
    value = item.get(key)
    if value is None:
        return None
    if not isinstance(value, str) or not value.strip():
        raise UnsupportedReport(f"{where}: {key!r} must be a non-empty string when present")
    return value.strip()


def _build_location(item: dict[str, Any], where: str) -> CodeLocation | None:
    file = _opt_str(item, "file", where)
    class_name = _opt_str(item, "class", where)
    method_name = _opt_str(item, "method", where)
    line = item.get("line")
    if line is not None and (type(line) is not int or line <= 0):
        raise UnsupportedReport(f"{where}: line must be a positive integer")
    if file is None and class_name is None and method_name is None and line is None:
        return None
    if file is None and class_name is None:
        raise UnsupportedReport(f"{where}: a location needs at least a file or a class")
    return CodeLocation(file=file, class_name=class_name, method_name=method_name, line=line)


def parse_tool_report(tool: str, payload: bytes | str, *, source: str = "<report>") -> ToolReport:
    """Parse one tool's interchange report into a ToolReport.

    ``tool`` selects the adapter.  For the named adapters the payload's own
    "tool" field must agree; the generic adapter instead takes that field as
    the slug that keys category-map lookups later.
    """
    if tool not in _SEVERITY_SCALES:
        known = ", ".join(sorted(_SEVERITY_SCALES))
        raise UnknownTool(f"unknown tool {tool!r} (expected one of: {known})")
    try:
        doc = json.loads(payload)
    except ValueError as exc:
        raise UnsupportedReport(f"{source}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UnsupportedReport(f"{source}: expected a JSON object")

    slug = _require_str(doc, "tool", source)
    if tool == "generic":
        if not _SLUG_RE.match(slug):
            raise UnsupportedReport(
                f"{source}: 'tool' must be a lowercase slug ([a-z0-9_.-]), got {slug!r}"
            )
        if slug in _SEVERITY_SCALES and slug != "generic":
            raise UnsupportedReport(
                f"{source}: slug {slug!r} belongs to a named adapter; parse it as {slug!r}"
            )
    elif slug != tool:
        raise UnsupportedReport(f"{source}: payload says tool {slug!r}, expected {tool!r}")

    version = doc.get("tool_version", "")
    if not isinstance(version, str):
        raise UnsupportedReport(f"{source}: 'tool_version' must be a string")

    raw_findings = doc.get("findings")
    if not isinstance(raw_findings, list):
        raise UnsupportedReport(f"{source}: 'findings' must be a list")
    findings = []
    for i, raw in enumerate(raw_findings):
        where = f"{source}: findings[{i}]"
        if not isinstance(raw, dict):
            raise UnsupportedReport(f"{where}: expected a JSON object")
        message = raw.get("message", "")
        if not isinstance(message, str):
            raise UnsupportedReport(f"{where}: 'message' must be a string")
        findings.append(
            RawFinding(
                native_id=_require_str(raw, "native_id", where),
                severity=_resolve_severity(tool, raw.get("severity"), where),
                location=_build_location(raw, where),
                evidence=" ".join(message.split()),
            )
        )
    return ToolReport(tool=slug, findings=tuple(findings), tool_version=version.strip())


def load_tool_report(tool: str, path: str | Path) -> ToolReport:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise UnsupportedReport(f"cannot read report {path}: {exc}") from None
    return parse_tool_report(tool, payload, source=str(path))

"""Shared vocabulary types: asset families, severities, categories, findings.

Everything here is value data with dict round-trips; mutation happens only
through session events.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import total_ordering

from .errors import MalformedDataFile
from .jsonio import content_id, parse_json_object


class AssetFamily(Enum):
    USER = "user"
    APPLICATION = "application"
    PLATFORM = "platform"


FamilySet = frozenset  # frozenset[AssetFamily]; empty set marks "unclassified"


def families_from_names(names) -> FamilySet:
    return frozenset(AssetFamily(n) for n in names)


def family_names(families: FamilySet) -> list[str]:
    return sorted(f.value for f in families)


@total_ordering
class Severity(Enum):
    CRITICAL = "critical"
    HIGH = "high"
    MEDIUM = "medium"
    INFO = "info"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]

    def __lt__(self, other):
        if not isinstance(other, Severity):
            return NotImplemented
        return self.rank < other.rank


_SEVERITY_RANK = {
    Severity.INFO: 1,
    Severity.MEDIUM: 2,
    Severity.HIGH: 3,
    Severity.CRITICAL: 4,
}


class ThreatClass(Enum):
    UNTRUSTED_CODE_EXECUTION = "untrusted-code-execution"
    UNTRUSTED_CONTENT = "untrusted-content"
    UNTRUSTED_NETWORK = "untrusted-network"


class Provenance(Enum):
    DESCRIPTION_KEYWORD = "description-keyword"
    MANIFEST_PERMISSION = "manifest-permission"
    MANUAL = "manual"


class AssetState(Enum):
    CANDIDATE = "candidate"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class Verdict(Enum):
    UNVERIFIED = "unverified"
    VERIFIED = "verified"
    FALSE_POSITIVE = "false-positive"


@dataclass(frozen=True)
class AssetEvidence:
    source: str  # "description" | "manifest" | "manual"
    text: str

    def to_dict(self) -> dict:
        return {"source": self.source, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "AssetEvidence":
        return cls(source=d["source"], text=d["text"])


def asset_id(name: str, provenance: Provenance) -> str:
    """Content-addressed id: stable across session reloads."""
    return content_id("a", name, provenance.value)


@dataclass
class Asset:
    id: str
    name: str
    families: FamilySet
    provenance: Provenance
    criticality: int  # 1 (low) .. 3 (critical)
    state: AssetState = AssetState.CANDIDATE
    evidence: list = field(default_factory=list)  # list[AssetEvidence]

    @property
    def unclassified(self) -> bool:
        """No asset family assigned yet; needs manual review before acceptance."""
        return not self.families

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "families": family_names(self.families),
            "provenance": self.provenance.value,
            "criticality": self.criticality,
            "state": self.state.value,
            "evidence": [e.to_dict() for e in self.evidence],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Asset":
        return cls(
            id=d["id"],
            name=d["name"],
            families=families_from_names(d["families"]),
            provenance=Provenance(d["provenance"]),
            criticality=int(d["criticality"]),
            state=AssetState(d["state"]),
            evidence=[AssetEvidence.from_dict(e) for e in d.get("evidence", [])],
        )


@dataclass(frozen=True)
class CodeLocation:
    file: str | None = None
    class_name: str | None = None
    method_name: str | None = None
    line: int | None = None

    def sort_key(self) -> tuple:
        return (self.file or "", self.class_name or "", self.method_name or "", self.line or 0)

    def to_dict(self) -> dict:
        d = {}
        if self.file is not None:
            d["file"] = self.file
        if self.class_name is not None:
            d["class"] = self.class_name
        if self.method_name is not None:
            d["method"] = self.method_name
        if self.line is not None:
            d["line"] = self.line
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CodeLocation":
        return cls(
            file=d.get("file"),
            class_name=d.get("class"),
            method_name=d.get("method"),
            line=d.get("line"),
        )

    def __str__(self) -> str:
        base = self.class_name or self.file or "?"
        if self.method_name:
            base += f"#{self.method_name}"
        if self.line:
            base += f":{self.line}"
        return base


def location_violations(loc: CodeLocation, owner: str) -> list[str]:
    out = []
    if loc.file is None and loc.class_name is None:
        out.append(f"{owner}: location needs at least one of file/class")
    if loc.line is not None and loc.line <= 0:
        out.append(f"{owner}: location line must be positive")
    return out


@dataclass(frozen=True)
class CanonicalCategory:
    id: str
    display_name: str
    default_severity: Severity
    threat_class: ThreatClass

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "default_severity": self.default_severity.value,
            "threat_class": self.threat_class.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CanonicalCategory":
        return cls(
            id=d["id"],
            display_name=d["display_name"],
            default_severity=Severity(d["default_severity"]),
            threat_class=ThreatClass(d["threat_class"]),
        )


class Taxonomy:
    """The tool-independent vulnerability categories, loaded from a data file."""

    def __init__(self, version: str, categories: list):
        self.version = version
        self.categories: dict[str, CanonicalCategory] = {}
        for cat in categories:
            if cat.id in self.categories:
                raise MalformedDataFile(f"taxonomy: duplicate category id {cat.id!r}")
            self.categories[cat.id] = cat

    def __contains__(self, category_id: str) -> bool:
        return category_id in self.categories

    def __iter__(self):
        return iter(self.categories.values())

    def get(self, category_id: str) -> CanonicalCategory | None:
        return self.categories.get(category_id)

    def require(self, category_id: str) -> CanonicalCategory:
        cat = self.categories.get(category_id)
        if cat is None:
            raise MalformedDataFile(f"unknown category {category_id!r}")
        return cat

    def display_name(self, category_id: str) -> str:
        cat = self.categories.get(category_id)
        return cat.display_name if cat else category_id

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Taxonomy)
            and self.version == other.version
            and self.categories == other.categories
        )

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "categories": [c.to_dict() for c in self.categories.values()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Taxonomy":
        try:
            cats = [CanonicalCategory.from_dict(c) for c in d["categories"]]
            return cls(version=str(d["version"]), categories=cats)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDataFile(f"taxonomy: {exc}") from exc

    @classmethod
    def from_bytes(cls, payload: bytes) -> "Taxonomy":
        return cls.from_dict(parse_json_object(payload, MalformedDataFile, "taxonomy"))


@dataclass(frozen=True)
class NormalizedFinding:
    """A tool warning lifted into the canonical taxonomy."""

    tool: str
    category: str
    severity: Severity
    location: CodeLocation | None  # None = app-wide warning
    evidence: str
    native_id: str

    def sort_key(self) -> tuple:
        loc = self.location.sort_key() if self.location else ("", "", "", 0)
        return (self.tool, self.native_id) + loc + (self.evidence,)

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "category": self.category,
            "severity": self.severity.value,
            "location": self.location.to_dict() if self.location else None,
            "evidence": self.evidence,
            "native_id": self.native_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizedFinding":
        loc = d.get("location")
        return cls(
            tool=d["tool"],
            category=d["category"],
            severity=Severity(d["severity"]),
            location=CodeLocation.from_dict(loc) if loc is not None else None,
            evidence=d["evidence"],
            native_id=d["native_id"],
        )


@dataclass
class ConsolidatedFinding:
    """Cross-tool merged finding: one location-equivalence class with vote support."""

    id: str
    category: str
    locations: tuple  # tuple[CodeLocation, ...], deduplicated, sorted
    support: frozenset  # frozenset[str], the supporting tool ids
    severity: Severity  # max over members
    members: tuple  # tuple[NormalizedFinding, ...], sorted
    verdict: Verdict = Verdict.UNVERIFIED

    def first_location_key(self) -> tuple:
        return self.locations[0].sort_key() if self.locations else ("", "", "", 0)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "locations": [l.to_dict() for l in self.locations],
            "support": sorted(self.support),
            "severity": self.severity.value,
            "members": [m.to_dict() for m in self.members],
            "verdict": self.verdict.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConsolidatedFinding":
        return cls(
            id=d["id"],
            category=d["category"],
            locations=tuple(CodeLocation.from_dict(l) for l in d["locations"]),
            support=frozenset(d["support"]),
            severity=Severity(d["severity"]),
            members=tuple(NormalizedFinding.from_dict(m) for m in d["members"]),
            verdict=Verdict(d["verdict"]),
        )

"""Mitigation knowledge base keyed by finding category.

Entries carry OWASP mobile-verification control ids (MSTG-<AREA>-<N>) plus a
short actionable summary.  Lookups return every control that applies to a
category, ordered by control area then number, so reports and the review UI
render the same list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from sourcerer.errors import DanglingCategory, MalformedKB
from sourcerer.jsonio import parse_json_object, read_path_or_packaged
from sourcerer.model import Taxonomy

_CONTROL_ID_RE = re.compile(r"^MSTG-([A-Z]+)-([0-9]+)$")


def _control_sort_key(control_id: str) -> tuple[str, int]:
    match = _CONTROL_ID_RE.match(control_id)
    assert match is not None
    return match.group(1), int(match.group(2))


@dataclass(frozen=True)
class Mitigation:
    """One verification control and the finding categories it addresses."""

    masvs_id: str
    title: str
    summary: str
    guideline_ref: str
    applies_to: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "masvs_id": self.masvs_id,
            "title": self.title,
            "summary": self.summary,
            "guideline_ref": self.guideline_ref,
            "applies_to": list(self.applies_to),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Mitigation:
        return cls(
            masvs_id=data["masvs_id"],
            title=data["title"],
            summary=data["summary"],
            guideline_ref=data.get("guideline_ref", ""),
            applies_to=tuple(data["applies_to"]),
        )


class MitigationKB:
    """All known mitigations, indexed by the categories they apply to."""

    def __init__(self, version: str, entries: Iterable[Mitigation]):
        self.version = version
        self.entries = tuple(sorted(entries, key=lambda e: _control_sort_key(e.masvs_id)))
        self._by_category: dict[str, list[Mitigation]] = {}
        for entry in self.entries:
            for category in entry.applies_to:
                self._by_category.setdefault(category, []).append(entry)

    @classmethod
    def from_bytes(
        cls,
        payload: bytes,
        *,
        source: str = "<mitigation kb>",
        taxonomy: Taxonomy | None = None,
    ) -> MitigationKB:
        doc = parse_json_object(payload, MalformedKB, source)
        raw_entries = doc.get("entries")
        if not isinstance(raw_entries, list):
            raise MalformedKB(f"{source}: 'entries' must be a list")
        entries = []
        seen_ids: set[str] = set()
        for i, raw in enumerate(raw_entries):
            where = f"{source}: entries[{i}]"
            if not isinstance(raw, dict):
                raise MalformedKB(f"{where}: expected an object")
            control_id = raw.get("masvs_id")
            if not isinstance(control_id, str) or not _CONTROL_ID_RE.match(control_id):
                raise MalformedKB(f"{where}: 'masvs_id' must look like MSTG-<AREA>-<N>, got {control_id!r}")
            if control_id in seen_ids:
                raise MalformedKB(f"{where}: duplicate control id {control_id!r}")
            seen_ids.add(control_id)
            title = raw.get("title")
            summary = raw.get("summary")
            if not isinstance(title, str) or not title.strip():
                raise MalformedKB(f"{where}: 'title' must be a non-empty string")
            if not isinstance(summary, str) or not summary.strip():
                raise MalformedKB(f"{where}: 'summary' must be a non-empty string")
            guideline_ref = raw.get("guideline_ref", "")
            if not isinstance(guideline_ref, str):
                raise MalformedKB(f"{where}: 'guideline_ref' must be a string")
            applies_to = raw.get("applies_to")
            if (
                not isinstance(applies_to, list)
                or not applies_to
                or not all(isinstance(c, str) and c.strip() for c in applies_to)
            ):
                raise MalformedKB(f"{where}: 'applies_to' must be a non-empty list of category ids")
            categories = tuple(c.strip() for c in applies_to)
            if taxonomy is not None:
                unknown = sorted(c for c in categories if c not in taxonomy)
                if unknown:
                    raise DanglingCategory(
                        f"{where}: control {control_id} names categories not in the"
                        f" taxonomy: {', '.join(unknown)}"
                    )
            entries.append(
                Mitigation(
                    masvs_id=control_id,
                    title=title.strip(),
                    summary=summary.strip(),
                    guideline_ref=guideline_ref,
                    applies_to=categories,
                )
            )
        version = doc.get("version", "")
        if not isinstance(version, str):
            raise MalformedKB(f"{source}: 'version' must be a string")
        return cls(version=version, entries=entries)

    def lookup(self, category: str) -> list[Mitigation]:
        """Controls applying to a category, in (area, number) order."""
        return list(self._by_category.get(category, ()))

    def covered_categories(self) -> frozenset[str]:
        return frozenset(self._by_category)

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {"version": self.version, "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, data: dict) -> MitigationKB:
        return cls(
            version=data.get("version", ""),
            entries=[Mitigation.from_dict(e) for e in data["entries"]],
        )


def load_kb(path: str | Path | None = None, *, taxonomy: Taxonomy | None = None) -> MitigationKB:
    payload, source = read_path_or_packaged(path, "mitigations.json", MalformedKB)
    return MitigationKB.from_bytes(payload, source=source, taxonomy=taxonomy)


def lookup(category: str, kb: MitigationKB) -> list[Mitigation]:
    """Controls applying to a category, in (area, number) order."""
    return kb.lookup(category)

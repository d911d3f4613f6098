"""Asset identification from the app's store description and manifest.

A lexicon of domain phrases maps description text to named assets; a catalog
of Android permissions maps manifest declarations to the assets those
permissions guard.  Candidates from both sources are merged by asset name and
classified into families (user / application / platform).  Everything here
produces candidates only: accepting or rejecting them is a triage decision.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from sourcerer.errors import MalformedDataFile
from sourcerer.ingest import AppProfile, ManifestInfo
from sourcerer.jsonio import canonical_bytes, parse_json_object, read_path_or_packaged
from sourcerer.model import (
    Asset,
    AssetEvidence,
    AssetFamily,
    FamilySet,
    Provenance,
    asset_id,
    families_from_names,
    family_names,
)

PROTECTION_LEVELS = ("dangerous", "normal", "signature")


def _compile_pattern(pattern: str) -> re.Pattern[str]:
    """Compile a lexicon phrase: ``*`` matches a word tail, whole words only."""
    body = r"\w*".join(re.escape(part) for part in pattern.split("*"))
    first = pattern[0]
    if first.isalnum() or first == "_":
        body = r"\b" + body
    last = pattern[-1]
    if last.isalnum() or last in "_*":
        body += r"\b"
    return re.compile(body, re.IGNORECASE)


@dataclass(frozen=True)
class LexiconEntry:
    patterns: tuple[str, ...]
    asset_name: str
    families: FamilySet
    criticality: int


class AssetLexicon:
    """Domain phrase book: description phrases to asset names and families."""

    def __init__(self, version: str, domain: str, entries: Iterable[LexiconEntry]):
        self.version = version
        self.domain = domain
        self.entries = tuple(entries)
        self._compiled = [
            [_compile_pattern(pattern) for pattern in entry.patterns]
            for entry in self.entries
        ]

    @classmethod
    def from_bytes(cls, payload: bytes, *, source: str = "<lexicon>") -> AssetLexicon:
        doc = parse_json_object(payload, MalformedDataFile, source)
        raw_entries = doc.get("entries")
        if not isinstance(raw_entries, list) or not raw_entries:
            raise MalformedDataFile(f"{source}: 'entries' must be a non-empty list")
        entries = []
        for i, raw in enumerate(raw_entries):
            where = f"{source}: entries[{i}]"
            if not isinstance(raw, dict):
                raise MalformedDataFile(f"{where}: expected an object")
            patterns = raw.get("patterns")
            if (
                not isinstance(patterns, list)
                or not patterns
                or not all(isinstance(p, str) and p.strip() for p in patterns)
            ):
                raise MalformedDataFile(f"{where}: 'patterns' must be a list of non-empty strings")
            name = raw.get("asset")
            if not isinstance(name, str) or not name.strip():
                raise MalformedDataFile(f"{where}: 'asset' must be a non-empty string")
            families = raw.get("families")
            if not isinstance(families, list) or not families:
                raise MalformedDataFile(f"{where}: 'families' must be a non-empty list")
            try:
                family_set = families_from_names(families)
            except ValueError as exc:
                raise MalformedDataFile(f"{where}: {exc}") from None
            criticality = raw.get("criticality")
            if type(criticality) is not int or not 1 <= criticality <= 3:
                raise MalformedDataFile(f"{where}: 'criticality' must be an integer in 1..3")
            entries.append(
                LexiconEntry(
                    patterns=tuple(p.strip() for p in patterns),
                    asset_name=name.strip(),
                    families=family_set,
                    criticality=criticality,
                )
            )
        version = doc.get("version", "")
        domain = doc.get("domain", "")
        if not isinstance(version, str) or not isinstance(domain, str):
            raise MalformedDataFile(f"{source}: 'version' and 'domain' must be strings")
        return cls(version=version, domain=domain, entries=entries)

    def entries_for_name(self, asset_name: str) -> list[LexiconEntry]:
        return [e for e in self.entries if e.asset_name == asset_name]

    def produced_by(self, asset_name: str, texts: Iterable[str]) -> list[LexiconEntry]:
        """Entries for this asset whose patterns hit any of the given texts."""
        texts = list(texts)
        produced = []
        for entry, compiled in zip(self.entries, self._compiled):
            if entry.asset_name != asset_name:
                continue
            if any(regex.search(text) for regex in compiled for text in texts):
                produced.append(entry)
        return produced

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "domain": self.domain,
            "entries": [
                {
                    "patterns": list(e.patterns),
                    "asset": e.asset_name,
                    "families": family_names(e.families),
                    "criticality": e.criticality,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> AssetLexicon:
        return cls.from_bytes(canonical_bytes(data), source="embedded lexicon")

    def matches(self, text: str) -> list[tuple[LexiconEntry, list[tuple[int, str]]]]:
        """All entries that hit ``text``, with (offset, matched text) pairs."""
        hits = []
        for entry, compiled in zip(self.entries, self._compiled):
            spans: list[tuple[int, str]] = []
            for regex in compiled:
                spans.extend((m.start(), m.group(0)) for m in regex.finditer(text))
            if spans:
                hits.append((entry, spans))
        return hits


def load_lexicon(path: str | Path | None = None) -> AssetLexicon:
    payload, source = read_path_or_packaged(path, "lexicon_fintech.json")
    return AssetLexicon.from_bytes(payload, source=source)


class PermissionCatalog:
    """Permission catalog: permission name to protection level and guarded asset."""

    def __init__(self, version: str, entries: dict[str, tuple[str, str, int]]):
        self.version = version
        self._entries = dict(entries)

    @classmethod
    def from_bytes(cls, payload: bytes, *, source: str = "<catalog>") -> PermissionCatalog:
        doc = parse_json_object(payload, MalformedDataFile, source)
        raw = doc.get("permissions")
        if not isinstance(raw, dict) or not raw:
            raise MalformedDataFile(f"{source}: 'permissions' must be a non-empty object")
        entries: dict[str, tuple[str, str, int]] = {}
        for name, spec in raw.items():
            where = f"{source}: permissions[{name!r}]"
            if not isinstance(spec, dict):
                raise MalformedDataFile(f"{where}: expected an object")
            level = spec.get("level")
            if level not in PROTECTION_LEVELS:
                known = ", ".join(PROTECTION_LEVELS)
                raise MalformedDataFile(f"{where}: 'level' must be one of: {known}")
            asset = spec.get("asset")
            if not isinstance(asset, str) or not asset.strip():
                raise MalformedDataFile(f"{where}: 'asset' must be a non-empty string")
            criticality = spec.get("criticality")
            if type(criticality) is not int or not 1 <= criticality <= 3:
                raise MalformedDataFile(f"{where}: 'criticality' must be an integer in 1..3")
            entries[name] = (level, asset.strip(), criticality)
        version = doc.get("version", "")
        if not isinstance(version, str):
            raise MalformedDataFile(f"{source}: 'version' must be a string")
        return cls(version=version, entries=entries)

    def __contains__(self, permission: str) -> bool:
        return permission in self._entries

    def get(self, permission: str) -> tuple[str, str, int] | None:
        """(level, asset name, criticality) for a cataloged permission."""
        return self._entries.get(permission)

    def is_dangerous(self, permission: str) -> bool:
        entry = self._entries.get(permission)
        return entry is not None and entry[0] == "dangerous"

    def __len__(self) -> int:
        return len(self._entries)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "permissions": {
                name: {"level": level, "asset": asset, "criticality": criticality}
                for name, (level, asset, criticality) in sorted(self._entries.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> PermissionCatalog:
        return cls.from_bytes(canonical_bytes(data), source="embedded permission catalog")


def load_permission_catalog(path: str | Path | None = None) -> PermissionCatalog:
    payload, source = read_path_or_packaged(path, "permission_catalog.json")
    return PermissionCatalog.from_bytes(payload, source=source)


def extract_asset_candidates(profile: AppProfile, lexicon: AssetLexicon) -> list[Asset]:
    """Phrase-match the description; one candidate per distinct asset name.

    Evidence quotes every matched occurrence in text order; two patterns
    hitting the same span count once.  Families and criticality aggregate
    over every entry that hit.
    """
    per_asset: dict[str, dict] = {}
    for entry, spans in lexicon.matches(profile.description):
        bucket = per_asset.setdefault(
            entry.asset_name,
            {"families": set(), "criticality": 0, "spans": set()},
        )
        bucket["families"] |= entry.families
        bucket["criticality"] = max(bucket["criticality"], entry.criticality)
        bucket["spans"].update(spans)

    candidates = []
    for name in sorted(per_asset):
        bucket = per_asset[name]
        evidence = [
            AssetEvidence(source="description", text=text)
            for _, text in sorted(bucket["spans"], key=lambda s: (s[0], -len(s[1]), s[1]))
        ]
        candidates.append(
            Asset(
                id=asset_id(name, Provenance.DESCRIPTION_KEYWORD),
                name=name,
                families=frozenset(bucket["families"]),
                provenance=Provenance.DESCRIPTION_KEYWORD,
                criticality=bucket["criticality"],
                evidence=evidence,
            )
        )
    return candidates


def permissions_to_assets(manifest: ManifestInfo, catalog: PermissionCatalog) -> list[Asset]:
    """One candidate per declared dangerous permission, in declaration order.

    The permission itself evidences platform mediation, so candidates start in
    the platform family; classify_families may widen that from the lexicon.
    Normal- and signature-level permissions guard nothing an attacker values
    here and yield no candidates.
    """
    candidates = []
    for permission in manifest.permissions:
        entry = catalog.get(permission)
        if entry is None or entry[0] != "dangerous":
            continue
        _, name, criticality = entry
        candidates.append(
            Asset(
                id=asset_id(name, Provenance.MANIFEST_PERMISSION),
                name=name,
                families=frozenset({AssetFamily.PLATFORM}),
                provenance=Provenance.MANIFEST_PERMISSION,
                criticality=criticality,
                evidence=[AssetEvidence(source="manifest", text=permission)],
            )
        )
    return candidates


def merge_candidates(
    description_assets: Iterable[Asset], permission_assets: Iterable[Asset]
) -> list[Asset]:
    """Merge the two candidate streams by asset name.

    When both sources name the same asset, description evidence leads and the
    candidate keeps description-keyword provenance; families union and
    criticality takes the max.  Same-named permission candidates fold into
    one merged asset as well.
    """
    merged: dict[str, Asset] = {}
    for asset in description_assets:
        merged[asset.name] = asset
    for asset in permission_assets:
        existing = merged.get(asset.name)
        if existing is None:
            merged[asset.name] = asset
            continue
        existing.families = existing.families | asset.families
        existing.criticality = max(existing.criticality, asset.criticality)
        existing.evidence = list(existing.evidence) + list(asset.evidence)
    return [merged[name] for name in sorted(merged)]


def classify_families(asset: Asset, lexicon: AssetLexicon) -> FamilySet:
    """The asset's families plus those of every lexicon entry that produced it.

    An entry produced the candidate when one of its patterns hits a quoted
    description evidence text.  Permission-derived candidates keep their
    platform membership; an empty result marks the asset unclassified and
    flags it for manual review.
    """
    families = set(asset.families)
    description_texts = [e.text for e in asset.evidence if e.source == "description"]
    if description_texts:
        for entry in lexicon.produced_by(asset.name, description_texts):
            families |= entry.families
    return frozenset(families)

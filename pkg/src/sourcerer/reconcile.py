"""Cross-tool consolidation of normalized findings.

Each tool's native finding ids are first mapped onto the shared category
taxonomy; findings whose id has no mapping are quarantined, never dropped.
Within a category, findings whose code locations agree at the configured
granularity are grouped transitively, and a group survives when at least
``threshold`` distinct tools back it.  Everything below threshold is residue:
kept, reported, but not part of the prioritized queue.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from sourcerer.errors import ConfigInvalid, DuplicateTool, MalformedDataFile
from sourcerer.ingest import RawFinding, ToolReport
from sourcerer.jsonio import content_id, packaged_data, parse_json_object
from sourcerer.model import (
    CodeLocation,
    ConsolidatedFinding,
    NormalizedFinding,
    Taxonomy,
)


class MatchGranularity(enum.Enum):
    """How precisely two locations must agree to count as the same spot."""

    METHOD = "method"
    CLASS = "class"
    FILE = "file"


class CategoryMap:
    """One tool's native finding ids mapped onto canonical categories."""

    def __init__(self, tool: str, version: str, mapping: dict[str, str]):
        self.tool = tool
        self.version = version
        self.mapping = dict(mapping)

    @classmethod
    def from_bytes(
        cls,
        payload: bytes,
        *,
        source: str = "<category map>",
        taxonomy: Taxonomy | None = None,
    ) -> CategoryMap:
        doc = parse_json_object(payload, MalformedDataFile, source)
        tool = doc.get("tool")
        if not isinstance(tool, str) or not tool.strip():
            raise MalformedDataFile(f"{source}: 'tool' must be a non-empty string")
        raw_map = doc.get("map")
        if not isinstance(raw_map, dict) or not raw_map:
            raise MalformedDataFile(f"{source}: 'map' must be a non-empty object")
        mapping: dict[str, str] = {}
        for native_id, canonical in raw_map.items():
            if not isinstance(canonical, str) or not canonical.strip():
                raise MalformedDataFile(f"{source}: map[{native_id!r}] must be a non-empty string")
            canonical = canonical.strip()
            if taxonomy is not None and canonical not in taxonomy:
                raise MalformedDataFile(
                    f"{source}: map[{native_id!r}] names unknown category {canonical!r}"
                )
            mapping[native_id] = canonical
        version = doc.get("version", "")
        if not isinstance(version, str):
            raise MalformedDataFile(f"{source}: 'version' must be a string")
        return cls(tool=tool.strip(), version=version, mapping=mapping)

    def canonical_for(self, native_id: str) -> str | None:
        return self.mapping.get(native_id)

    def to_dict(self) -> dict:
        return {"tool": self.tool, "version": self.version, "map": dict(self.mapping)}

    @classmethod
    def from_dict(cls, data: dict) -> CategoryMap:
        return cls(tool=data["tool"], version=data.get("version", ""), mapping=data["map"])


def load_category_map(
    tool: str,
    path: str | Path | None = None,
    *,
    taxonomy: Taxonomy | None = None,
) -> CategoryMap | None:
    """Load a tool's category map: explicit path, else the packaged one, else None."""
    if path is not None:
        path = Path(path)
        try:
            payload = path.read_bytes()
        except OSError as exc:
            raise MalformedDataFile(f"cannot read category map {path}: {exc}") from None
        return CategoryMap.from_bytes(payload, source=str(path), taxonomy=taxonomy)
    try:
        payload = packaged_data("category_maps", f"{tool}.json")
    except FileNotFoundError:
        return None
    return CategoryMap.from_bytes(
        payload, source=f"packaged category_maps/{tool}.json", taxonomy=taxonomy
    )


def normalize_findings(
    report: ToolReport,
    category_map: CategoryMap,
    taxonomy: Taxonomy | None = None,
) -> tuple[list[NormalizedFinding], list[RawFinding]]:
    """Map a report onto the taxonomy; unmapped native ids go to quarantine.

    With a taxonomy given, a mapping that targets a category the taxonomy
    does not know quarantines the finding as well instead of failing.
    """
    normalized: list[NormalizedFinding] = []
    quarantined: list[RawFinding] = []
    for raw in report.findings:
        canonical = category_map.canonical_for(raw.native_id)
        if canonical is None or (taxonomy is not None and canonical not in taxonomy):
            quarantined.append(raw)
            continue
        normalized.append(
            NormalizedFinding(
                tool=report.tool,
                category=canonical,
                severity=raw.severity,
                location=raw.location,
                evidence=raw.evidence,
                native_id=raw.native_id,
            )
        )
    return normalized, quarantined


def locations_match(a: CodeLocation, b: CodeLocation, granularity: MatchGranularity) -> bool:
    """Whether two locations agree at the given granularity.

    A location missing the field the granularity keys on matches nothing,
    itself included.
    """
    if granularity is MatchGranularity.METHOD:
        if None in (a.class_name, a.method_name, b.class_name, b.method_name):
            return False
        return a.class_name == b.class_name and a.method_name == b.method_name
    if granularity is MatchGranularity.CLASS:
        if a.class_name is None or b.class_name is None:
            return False
        return a.class_name == b.class_name
    if a.file is None or b.file is None:
        return False
    return a.file == b.file


def _same_spot(a: NormalizedFinding, b: NormalizedFinding, granularity: MatchGranularity) -> bool:
    if a.location is None or b.location is None:
        return a.location is None and b.location is None
    return locations_match(a.location, b.location, granularity)


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _group_by_spot(
    members: list[NormalizedFinding], granularity: MatchGranularity
) -> list[list[NormalizedFinding]]:
    parent = list(range(len(members)))
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            if _same_spot(members[i], members[j], granularity):
                ri, rj = _find(parent, i), _find(parent, j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[NormalizedFinding]] = defaultdict(list)
    order: list[int] = []
    for i, member in enumerate(members):
        root = _find(parent, i)
        if root not in groups:
            order.append(root)
        groups[root].append(member)
    return [groups[root] for root in order]


def _build_consolidated(
    category: str, members: list[NormalizedFinding], support: frozenset[str]
) -> ConsolidatedFinding:
    members_sorted = tuple(sorted(members, key=lambda m: m.sort_key()))
    locations = tuple(
        sorted(
            {m.location for m in members_sorted if m.location is not None},
            key=lambda loc: loc.sort_key(),
        )
    )
    member_keys = ["\x1f".join(str(part) for part in m.sort_key()) for m in members_sorted]
    return ConsolidatedFinding(
        id=content_id("f", category, *member_keys),
        category=category,
        locations=locations,
        support=support,
        severity=max(m.severity for m in members_sorted),
        members=members_sorted,
    )


def consolidate(
    findings_by_tool: Iterable[Iterable[NormalizedFinding]],
    *,
    threshold: int,
    granularity: MatchGranularity = MatchGranularity.CLASS,
) -> tuple[list[ConsolidatedFinding], list[NormalizedFinding]]:
    """Majority-vote consolidation over one list of findings per tool.

    Findings of one category are grouped transitively by location agreement
    (app-wide findings group only with other app-wide findings of that
    category).  A group becomes one ConsolidatedFinding when it spans at least
    ``threshold`` distinct tools; otherwise its members land in the residue.
    Output is sorted by (category, first location) and independent of input
    order.
    """
    if threshold < 1:
        raise ConfigInvalid(f"threshold must be at least 1, got {threshold}")
    flat: list[NormalizedFinding] = []
    seen_tools: set[str] = set()
    for tool_findings in findings_by_tool:
        batch = list(tool_findings)
        batch_tools = {f.tool for f in batch}
        overlap = batch_tools & seen_tools
        if overlap:
            raise DuplicateTool(f"tool(s) appear in more than one report: {', '.join(sorted(overlap))}")
        seen_tools |= batch_tools
        flat.extend(batch)

    items = sorted(flat, key=lambda f: (f.category, *f.sort_key()))
    by_category: dict[str, list[NormalizedFinding]] = defaultdict(list)
    for item in items:
        by_category[item.category].append(item)

    consolidated: list[ConsolidatedFinding] = []
    residue: list[NormalizedFinding] = []
    for category in sorted(by_category):
        for members in _group_by_spot(by_category[category], granularity):
            support = frozenset(m.tool for m in members)
            if len(support) >= threshold:
                consolidated.append(_build_consolidated(category, members, support))
            else:
                residue.extend(members)
    consolidated.sort(key=lambda f: (f.category, f.first_location_key(), f.id))
    return consolidated, residue


@dataclass(frozen=True)
class ToolReduction:
    """How much consolidation shrank one tool's category list."""

    category_count: int
    reduction: float | None  # (count - prioritized) / count; None when count is 0

    def to_dict(self) -> dict:
        return {"category_count": self.category_count, "reduction": self.reduction}


@dataclass(frozen=True)
class ReductionStats:
    per_tool: dict  # tool id -> ToolReduction
    prioritized_count: int

    def to_dict(self) -> dict:
        return {
            "per_tool": {tool: tr.to_dict() for tool, tr in sorted(self.per_tool.items())},
            "prioritized_count": self.prioritized_count,
        }


def reduction_stats(
    categories_by_tool: Mapping[str, Iterable[str]],
    prioritized: Iterable[str],
) -> ReductionStats:
    """Per-tool category reduction against the final prioritized category set.

    A tool that reported fewer distinct categories than survived consolidation
    gets a negative reduction; a tool with zero categories gets None.
    """
    prioritized_count = len(set(prioritized))
    per_tool: dict[str, ToolReduction] = {}
    for tool, categories in categories_by_tool.items():
        count = len(set(categories))
        reduction = (count - prioritized_count) / count if count > 0 else None
        per_tool[tool] = ToolReduction(category_count=count, reduction=reduction)
    return ReductionStats(per_tool=per_tool, prioritized_count=prioritized_count)

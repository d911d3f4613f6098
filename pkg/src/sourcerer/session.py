"""Persistent triage session: event-sourced state over the pipeline output.

A session file stores only the inputs (profile, manifest, tool reports, the
full configuration data) plus the ordered event log; everything else is
derived.  Loading replays the pipeline and the events, so a session can never
disagree with its own inputs, and saving the reloaded session reproduces the
file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import ClassVar, Iterable

from sourcerer.assets import (
    AssetLexicon,
    PermissionCatalog,
    classify_families,
    extract_asset_candidates,
    load_lexicon,
    load_permission_catalog,
    merge_candidates,
    permissions_to_assets,
)
from sourcerer.errors import (
    ConfigInvalid,
    CorruptSession,
    DuplicateTool,
    IllegalTransition,
    InputError,
    InvalidSession,
    SourcererError,
    UnknownEntity,
)
from sourcerer.impact import (
    AssetImpact,
    ImpactRules,
    PriorityWeights,
    load_impact_rules,
    load_weights,
    map_to_assets,
    priority_score,
    rank_findings,
)
from sourcerer.ingest import AppProfile, ManifestInfo, RawFinding, ToolReport
from sourcerer.jsonio import (
    atomic_write,
    canonical_bytes,
    canonical_dumps,
    content_id,
    parse_json_object,
    read_path_or_packaged,
    sha256_hex,
)
from sourcerer.mitigations import MitigationKB, load_kb
from sourcerer.model import (
    Asset,
    AssetEvidence,
    AssetState,
    ConsolidatedFinding,
    FamilySet,
    NormalizedFinding,
    Provenance,
    Taxonomy,
    Verdict,
    asset_id,
    families_from_names,
    family_names,
    location_violations,
)
from sourcerer.reconcile import (
    CategoryMap,
    MatchGranularity,
    consolidate,
    load_category_map,
    normalize_findings,
)

SESSION_SCHEMA = "sourcerer-session/1"

# Tools with a category map shipped in the package.
PACKAGED_MAPS = ("androbugs", "generic", "mobsf", "qark")

_EVIDENCE_SOURCES = ("description", "manifest", "manual")


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# events


@dataclass(frozen=True)
class AssetDecision:
    """Analyst moved an asset between candidate / accepted / rejected."""

    KIND: ClassVar[str] = "asset-decision"

    asset_id: str
    state: AssetState
    at: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.KIND, "asset_id": self.asset_id, "state": self.state.value, "at": self.at}

    @classmethod
    def from_dict(cls, d: dict) -> AssetDecision:
        return cls(asset_id=d["asset_id"], state=AssetState(d["state"]), at=d.get("at"))


@dataclass(frozen=True)
class FindingVerdict:
    """Analyst verdict on a consolidated finding."""

    KIND: ClassVar[str] = "finding-verdict"

    finding_id: str
    verdict: Verdict
    at: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.KIND, "finding_id": self.finding_id, "verdict": self.verdict.value, "at": self.at}

    @classmethod
    def from_dict(cls, d: dict) -> FindingVerdict:
        return cls(finding_id=d["finding_id"], verdict=Verdict(d["verdict"]), at=d.get("at"))


@dataclass(frozen=True)
class ManualAsset:
    """Analyst added an asset the automatic identification missed."""

    KIND: ClassVar[str] = "manual-asset"

    name: str
    families: FamilySet
    criticality: int
    note: str = ""
    at: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.KIND,
            "name": self.name,
            "families": family_names(self.families),
            "criticality": self.criticality,
            "note": self.note,
            "at": self.at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ManualAsset:
        return cls(
            name=d["name"],
            families=families_from_names(d["families"]),
            criticality=int(d["criticality"]),
            note=d.get("note", ""),
            at=d.get("at"),
        )


@dataclass(frozen=True)
class Note:
    """Free-form annotation, optionally attached to an asset or finding."""

    KIND: ClassVar[str] = "note"

    text: str
    subject_id: str | None = None
    at: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.KIND, "text": self.text, "subject_id": self.subject_id, "at": self.at}

    @classmethod
    def from_dict(cls, d: dict) -> Note:
        return cls(text=d["text"], subject_id=d.get("subject_id"), at=d.get("at"))


EVENT_KINDS = {
    AssetDecision.KIND: AssetDecision,
    FindingVerdict.KIND: FindingVerdict,
    ManualAsset.KIND: ManualAsset,
    Note.KIND: Note,
}

SessionEvent = AssetDecision | FindingVerdict | ManualAsset | Note


def event_from_dict(d: dict) -> SessionEvent:
    kind = d.get("kind")
    cls = EVENT_KINDS.get(kind)
    if cls is None:
        raise CorruptSession(f"unknown event kind {kind!r}")
    try:
        return cls.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSession(f"bad {kind} event: {exc}") from None


# --------------------------------------------------------------------------
# configuration


@dataclass
class SessionConfig:
    """Everything a session derives state from, embedded so files stand alone."""

    taxonomy: Taxonomy
    lexicon: AssetLexicon
    catalog: PermissionCatalog
    category_maps: dict[str, CategoryMap]
    rules: ImpactRules
    kb: MitigationKB
    weights: PriorityWeights
    threshold: int = 2
    granularity: MatchGranularity = MatchGranularity.CLASS

    @classmethod
    def load(
        cls,
        *,
        threshold: int = 2,
        granularity: MatchGranularity | str = MatchGranularity.CLASS,
        taxonomy_path: str | Path | None = None,
        lexicon_path: str | Path | None = None,
        catalog_path: str | Path | None = None,
        rules_path: str | Path | None = None,
        kb_path: str | Path | None = None,
        weights_path: str | Path | None = None,
    ) -> SessionConfig:
        if not isinstance(threshold, int) or threshold < 1:
            raise ConfigInvalid(f"threshold must be a positive integer, got {threshold!r}")
        if isinstance(granularity, str):
            try:
                granularity = MatchGranularity(granularity)
            except ValueError:
                known = ", ".join(g.value for g in MatchGranularity)
                raise ConfigInvalid(f"granularity must be one of: {known}") from None
        payload, _ = read_path_or_packaged(taxonomy_path, "taxonomy.json")
        taxonomy = Taxonomy.from_bytes(payload)
        maps: dict[str, CategoryMap] = {}
        for slug in PACKAGED_MAPS:
            cmap = load_category_map(slug, taxonomy=taxonomy)
            if cmap is not None:
                maps[cmap.tool] = cmap
        return cls(
            taxonomy=taxonomy,
            lexicon=load_lexicon(lexicon_path),
            catalog=load_permission_catalog(catalog_path),
            category_maps=maps,
            rules=load_impact_rules(rules_path, taxonomy=taxonomy),
            kb=load_kb(kb_path, taxonomy=taxonomy),
            weights=load_weights(weights_path),
            threshold=threshold,
            granularity=granularity,
        )

    def map_for(self, tool: str) -> CategoryMap | None:
        """The tool's own category map, else the generic one."""
        return self.category_maps.get(tool) or self.category_maps.get("generic")

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "granularity": self.granularity.value,
            "taxonomy": self.taxonomy.to_dict(),
            "lexicon": self.lexicon.to_dict(),
            "permission_catalog": self.catalog.to_dict(),
            "category_maps": {slug: m.to_dict() for slug, m in sorted(self.category_maps.items())},
            "impact_rules": self.rules.to_dict(),
            "mitigation_kb": self.kb.to_dict(),
            "weights": self.weights.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SessionConfig:
        taxonomy = Taxonomy.from_dict(d["taxonomy"])
        threshold = d["threshold"]
        if not isinstance(threshold, int) or threshold < 1:
            raise ConfigInvalid(f"threshold must be a positive integer, got {threshold!r}")
        return cls(
            taxonomy=taxonomy,
            lexicon=AssetLexicon.from_dict(d["lexicon"]),
            catalog=PermissionCatalog.from_dict(d["permission_catalog"]),
            category_maps={
                slug: CategoryMap.from_dict(m) for slug, m in d["category_maps"].items()
            },
            rules=ImpactRules.from_dict(d["impact_rules"], taxonomy=taxonomy),
            kb=MitigationKB.from_dict(d["mitigation_kb"]),
            weights=PriorityWeights.from_dict(d["weights"]),
            threshold=threshold,
            granularity=MatchGranularity(d["granularity"]),
        )


# --------------------------------------------------------------------------
# session state


@dataclass
class TriageSession:
    session_id: str
    profile: AppProfile
    manifest: ManifestInfo | None
    config: SessionConfig
    tool_reports: tuple[ToolReport, ...]
    events: list = field(default_factory=list)
    # Derived state, maintained by _recompute / apply_event.
    assets: dict[str, Asset] = field(default_factory=dict)
    normalized: list = field(default_factory=list)
    quarantine: dict = field(default_factory=dict)
    consolidated: list = field(default_factory=list)
    residue: list = field(default_factory=list)
    impacts: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    ranked: list = field(default_factory=list)
    unmapped_categories: list = field(default_factory=list)

    def tools(self) -> list[str]:
        return [r.tool for r in self.tool_reports]

    def asset(self, asset_id_: str) -> Asset | None:
        return self.assets.get(asset_id_)

    def finding(self, finding_id: str) -> ConsolidatedFinding | None:
        for f in self.consolidated:
            if f.id == finding_id:
                return f
        return None

    def accepted_assets(self) -> list[Asset]:
        return [a for a in self.assets.values() if a.state is AssetState.ACCEPTED]

    def assets_sorted(self) -> list[Asset]:
        return sorted(self.assets.values(), key=lambda a: (a.name, a.id))


def _session_fingerprint(
    profile: AppProfile,
    manifest: ManifestInfo | None,
    reports: Iterable[ToolReport],
    config: SessionConfig,
) -> str:
    return canonical_dumps(
        {
            "profile": profile.to_dict(),
            "manifest": manifest.to_dict() if manifest else None,
            "reports": [r.to_dict() for r in reports],
            "config": config.to_dict(),
        }
    )


def create_session(
    profile: AppProfile,
    manifest: ManifestInfo | None,
    tool_reports: Iterable[ToolReport],
    config: SessionConfig,
) -> TriageSession:
    """Run the full pipeline over the inputs and wrap the result in a session.

    Tool reports are kept sorted by slug so supplying them in a different
    order cannot change a single derived byte.
    """
    reports = tuple(sorted(tool_reports, key=lambda r: r.tool))
    slugs = [r.tool for r in reports]
    duplicates = sorted({s for s in slugs if slugs.count(s) > 1})
    if duplicates:
        raise DuplicateTool(f"more than one report for: {', '.join(duplicates)}")
    if reports and config.threshold > len(reports):
        raise ConfigInvalid(
            f"threshold {config.threshold} can never be met by {len(reports)} tool report(s)"
        )

    description_assets = extract_asset_candidates(profile, config.lexicon)
    permission_assets = permissions_to_assets(manifest, config.catalog) if manifest else []
    candidates = merge_candidates(description_assets, permission_assets)
    for asset in candidates:
        asset.families = classify_families(asset, config.lexicon)

    normalized: list[NormalizedFinding] = []
    per_tool: list[list[NormalizedFinding]] = []
    quarantine: dict[str, list[RawFinding]] = {}
    for report in reports:
        cmap = config.map_for(report.tool)
        if cmap is None:
            quarantine[report.tool] = list(report.findings)
            continue
        norm, quarantined = normalize_findings(report, cmap, config.taxonomy)
        normalized.extend(norm)
        per_tool.append(norm)
        if quarantined:
            quarantine[report.tool] = quarantined

    consolidated, residue = consolidate(
        per_tool, threshold=config.threshold, granularity=config.granularity
    )

    session = TriageSession(
        session_id=content_id("s", _session_fingerprint(profile, manifest, reports, config)),
        profile=profile,
        manifest=manifest,
        config=config,
        tool_reports=reports,
        assets={a.id: a for a in candidates},
        normalized=normalized,
        quarantine=quarantine,
        consolidated=consolidated,
        residue=residue,
    )
    _recompute(session)
    return session


def _recompute(session: TriageSession) -> None:
    """Re-derive impacts, scores, ranking, and review flags from scratch."""
    accepted = session.accepted_assets()
    impacts: dict[str, list[AssetImpact]] = {}
    scores: dict[str, float] = {}
    for finding in session.consolidated:
        finding_impacts = map_to_assets(finding.category, accepted, session.config.rules)
        impacts[finding.id] = finding_impacts
        scores[finding.id] = priority_score(
            finding, finding_impacts, session.assets, session.config.weights
        )
    session.impacts = impacts
    session.scores = scores
    session.ranked = rank_findings(session.consolidated, scores)
    session.unmapped_categories = sorted(
        {f.category for f in session.consolidated} - session.config.rules.covered_categories()
    )


def apply_event(session: TriageSession, event: SessionEvent) -> SessionEvent:
    """Validate, apply, log, and recompute.  Returns the timestamped event.

    Validation happens before any state is touched, so a rejected event
    leaves the session exactly as it was.
    """
    if isinstance(event, AssetDecision):
        asset = session.assets.get(event.asset_id)
        if asset is None:
            raise UnknownEntity(f"no asset with id {event.asset_id!r}")
        if event.state is AssetState.ACCEPTED and asset.unclassified:
            raise IllegalTransition(
                f"asset {asset.name!r} is unclassified (no families); it cannot be accepted"
            )
        stamped = event if event.at else replace(event, at=_utc_now())
        asset.state = event.state
    elif isinstance(event, FindingVerdict):
        finding = session.finding(event.finding_id)
        if finding is None:
            raise UnknownEntity(f"no finding with id {event.finding_id!r}")
        stamped = event if event.at else replace(event, at=_utc_now())
        finding.verdict = event.verdict
    elif isinstance(event, ManualAsset):
        name = event.name.strip()
        if not name:
            raise IllegalTransition("manual asset needs a non-empty name")
        if any(a.name == name for a in session.assets.values()):
            raise IllegalTransition(f"an asset named {name!r} already exists")
        if not event.families:
            raise IllegalTransition(f"manual asset {name!r} needs at least one family")
        if not 1 <= event.criticality <= 3:
            raise IllegalTransition(f"manual asset criticality must be 1..3, got {event.criticality}")
        stamped = event if event.at else replace(event, at=_utc_now())
        asset = Asset(
            id=asset_id(name, Provenance.MANUAL),
            name=name,
            families=event.families,
            provenance=Provenance.MANUAL,
            criticality=event.criticality,
            state=AssetState.ACCEPTED,
            evidence=[AssetEvidence(source="manual", text=event.note or name)],
        )
        asset.families = classify_families(asset, session.config.lexicon)
        session.assets[asset.id] = asset
    elif isinstance(event, Note):
        if event.subject_id is not None:
            known = event.subject_id in session.assets or session.finding(event.subject_id)
            if not known:
                raise UnknownEntity(f"note subject {event.subject_id!r} does not exist")
        stamped = event if event.at else replace(event, at=_utc_now())
    else:
        raise UnknownEntity(f"unsupported event type {type(event).__name__}")

    session.events.append(stamped)
    _recompute(session)
    return stamped


def accept_all_candidates(session: TriageSession) -> int:
    """Accept every classifiable candidate; unclassified ones stay candidates."""
    count = 0
    for asset in session.assets_sorted():
        if asset.state is AssetState.CANDIDATE and not asset.unclassified:
            apply_event(session, AssetDecision(asset_id=asset.id, state=AssetState.ACCEPTED))
            count += 1
    return count


def auto_verify_findings(session: TriageSession) -> int:
    """Mark every unverified consolidated finding as verified."""
    count = 0
    for finding in list(session.consolidated):
        if finding.verdict is Verdict.UNVERIFIED:
            apply_event(session, FindingVerdict(finding_id=finding.id, verdict=Verdict.VERIFIED))
            count += 1
    return count


# --------------------------------------------------------------------------
# persistence


def session_body(session: TriageSession) -> dict:
    return {
        "session_id": session.session_id,
        "profile": session.profile.to_dict(),
        "manifest": session.manifest.to_dict() if session.manifest else None,
        "config": session.config.to_dict(),
        "tool_reports": [r.to_dict() for r in session.tool_reports],
        "events": [e.to_dict() for e in session.events],
    }


def session_envelope_bytes(session: TriageSession) -> bytes:
    body = session_body(session)
    envelope = {
        "schema": SESSION_SCHEMA,
        "checksum": sha256_hex(canonical_bytes(body)),
        "body": body,
    }
    return canonical_dumps(envelope).encode("utf-8") + b"\n"


def save_session(session: TriageSession, path: str | Path) -> None:
    atomic_write(Path(path), session_envelope_bytes(session))


def loads_session(data: bytes, *, source: str = "<session>") -> TriageSession:
    """Parse session bytes: verify, rebuild the pipeline, replay the events."""
    doc = parse_json_object(data, CorruptSession, source)
    if doc.get("schema") != SESSION_SCHEMA:
        raise CorruptSession(f"{source}: schema is {doc.get('schema')!r}, expected {SESSION_SCHEMA!r}")
    body = doc.get("body")
    if not isinstance(body, dict):
        raise CorruptSession(f"{source}: 'body' must be an object")
    if sha256_hex(canonical_bytes(body)) != doc.get("checksum"):
        raise CorruptSession(f"{source}: checksum mismatch; the file was modified after writing")

    try:
        profile = AppProfile.from_dict(body["profile"])
        manifest = ManifestInfo.from_dict(body["manifest"]) if body.get("manifest") else None
        config = SessionConfig.from_dict(body["config"])
        reports = [ToolReport.from_dict(r) for r in body["tool_reports"]]
        events = [event_from_dict(e) for e in body["events"]]
        stored_id = body["session_id"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSession(f"{source}: malformed body: {exc!r}") from None
    except InputError as exc:
        raise CorruptSession(f"{source}: malformed body: {exc}") from None

    try:
        session = create_session(profile, manifest, reports, config)
    except InputError as exc:
        raise CorruptSession(f"{source}: stored inputs no longer build: {exc}") from None
    if session.session_id != stored_id:
        raise CorruptSession(f"{source}: session id mismatch; body does not hash to {stored_id}")
    for i, event in enumerate(events):
        try:
            apply_event(session, event)
        except SourcererError as exc:
            raise CorruptSession(f"{source}: events[{i}] cannot replay: {exc}") from None
    return session


def load_session(path: str | Path) -> TriageSession:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorruptSession(f"cannot read session {path}: {exc}") from None
    return loads_session(raw, source=str(path))


# --------------------------------------------------------------------------
# validation


def validate_session(session: TriageSession) -> list[str]:
    """Every violated invariant as a human-readable string; empty means healthy."""
    v: list[str] = []
    config = session.config
    tools = set(session.tools())

    if config.threshold < 1:
        v.append(f"config: threshold {config.threshold} is not positive")
    elif session.tool_reports and config.threshold > len(session.tool_reports):
        v.append(
            f"config: threshold {config.threshold} exceeds the {len(session.tool_reports)}"
            " tool report(s) present"
        )

    names: dict[str, str] = {}
    for key, asset in session.assets.items():
        owner = f"asset {asset.name!r}"
        if key != asset.id:
            v.append(f"{owner}: stored under key {key!r} but has id {asset.id!r}")
        if asset.id != asset_id(asset.name, asset.provenance):
            v.append(f"{owner}: id does not match its name and provenance")
        if not 1 <= asset.criticality <= 3:
            v.append(f"{owner}: criticality {asset.criticality} outside 1..3")
        if asset.state is AssetState.ACCEPTED and asset.unclassified:
            v.append(f"{owner}: accepted while unclassified")
        if asset.name in names:
            v.append(f"{owner}: duplicate asset name")
        names[asset.name] = asset.id
        for ev in asset.evidence:
            if ev.source not in _EVIDENCE_SOURCES:
                v.append(f"{owner}: evidence source {ev.source!r} is not recognized")

    seen_ids: set[str] = set()
    member_total = 0
    for finding in session.consolidated:
        owner = f"finding {finding.id}"
        if finding.id in seen_ids:
            v.append(f"{owner}: duplicate finding id")
        seen_ids.add(finding.id)
        if finding.category not in config.taxonomy:
            v.append(f"{owner}: category {finding.category!r} not in taxonomy")
        if not finding.members:
            v.append(f"{owner}: no members")
            continue
        member_total += len(finding.members)
        member_tools = frozenset(m.tool for m in finding.members)
        if finding.support != member_tools:
            v.append(f"{owner}: support does not equal its members' tools")
        if not finding.support <= tools:
            v.append(f"{owner}: support names tools with no report")
        if len(finding.support) < config.threshold:
            v.append(f"{owner}: support {len(finding.support)} below threshold {config.threshold}")
        if finding.severity != max(m.severity for m in finding.members):
            v.append(f"{owner}: severity is not the max over members")
        expected_locations = tuple(
            sorted(
                {m.location for m in finding.members if m.location is not None},
                key=lambda loc: loc.sort_key(),
            )
        )
        if tuple(finding.locations) != expected_locations:
            v.append(f"{owner}: locations do not equal the deduplicated member locations")
        for loc in finding.locations:
            v.extend(location_violations(loc, owner))

    for report in session.tool_reports:
        normalized_count = sum(1 for f in session.normalized if f.tool == report.tool)
        quarantined_count = len(session.quarantine.get(report.tool, []))
        if normalized_count + quarantined_count != len(report.findings):
            v.append(
                f"tool {report.tool}: {normalized_count} normalized + {quarantined_count}"
                f" quarantined != {len(report.findings)} raw findings"
            )
    if member_total + len(session.residue) != len(session.normalized):
        v.append(
            f"consolidation lost findings: {member_total} members + {len(session.residue)}"
            f" residue != {len(session.normalized)} normalized"
        )

    accepted = session.accepted_assets()
    accepted_ids = {a.id for a in accepted}
    expected_impacts: dict[str, list[AssetImpact]] = {}
    expected_scores: dict[str, float] = {}
    for finding in session.consolidated:
        finding_impacts = map_to_assets(finding.category, accepted, config.rules)
        expected_impacts[finding.id] = finding_impacts
        expected_scores[finding.id] = priority_score(
            finding, finding_impacts, session.assets, config.weights
        )
    for fid, finding_impacts in session.impacts.items():
        for impact in finding_impacts:
            if impact.asset_id not in accepted_ids:
                v.append(f"finding {fid}: impact references non-accepted asset {impact.asset_id!r}")
    if session.impacts != expected_impacts:
        v.append("derived impacts are stale; recompute required")
    if session.scores != expected_scores:
        v.append("derived scores are stale; recompute required")
    if session.ranked != rank_findings(session.consolidated, expected_scores):
        v.append("ranking is stale; recompute required")
    expected_unmapped = sorted(
        {f.category for f in session.consolidated} - config.rules.covered_categories()
    )
    if session.unmapped_categories != expected_unmapped:
        v.append("unmapped category list is stale; recompute required")

    for i, event in enumerate(session.events):
        if type(event) not in EVENT_KINDS.values():
            v.append(f"events[{i}]: unknown event type {type(event).__name__}")
        elif event.at is None:
            v.append(f"events[{i}]: missing timestamp")

    return v


def check_session(session: TriageSession) -> None:
    violations = validate_session(session)
    if violations:
        raise InvalidSession(violations)

"""Property suites: consolidation algebra, ranking stability, session replay.

Each suite runs 1,000 generated cases. Inputs draw from small fixed pools so
case generation stays cheap and collisions (same category, same spot, several
tools) happen often enough to exercise every grouping path.
"""

from __future__ import annotations

import dataclasses
import random

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sourcerer.impact import PriorityWeights
from sourcerer.ingest import load_app_profile, load_manifest, load_tool_report
from sourcerer.model import (
    AssetState,
    CodeLocation,
    NormalizedFinding,
    Severity,
    Verdict,
)
from sourcerer.reconcile import MatchGranularity, consolidate
from sourcerer.session import (
    AssetDecision,
    FindingVerdict,
    Note,
    SessionConfig,
    accept_all_candidates,
    apply_event,
    create_session,
    loads_session,
    session_envelope_bytes,
)
from conftest import A2_DIR

PROFILE = load_app_profile(A2_DIR / "profile.json")
MANIFEST = load_manifest(A2_DIR / "AndroidManifest.xml")
REPORTS = [
    load_tool_report(tool, A2_DIR / f"{tool}.json")
    for tool in ("mobsf", "androbugs", "qark")
]
CONFIG = SessionConfig.load()

_CANON = create_session(PROFILE, MANIFEST, REPORTS, CONFIG)
ASSET_IDS = sorted(_CANON.assets)
FINDING_IDS = [f.id for f in _CANON.consolidated]

AT = "2026-08-19T12:00:00Z"

FULL = settings(
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)


def fresh_session():
    return create_session(PROFILE, MANIFEST, REPORTS, CONFIG)


# --- consolidation inputs ---

TOOLS = ("mobsf", "androbugs", "qark", "scana")
CATEGORIES = ("sql-injection", "hardcoded-secret", "tracking-library")
SEVERITIES = ("info", "medium", "high", "critical")
LOCATION_POOL = (
    None,
    {"file": "A.java", "class": "A", "method": "m1", "line": 3},
    {"file": "A.java", "class": "A", "method": "m2"},
    {"file": "B.java", "class": "B", "method": "m1"},
    {"file": "C.java"},
    {"class": "D", "method": "m"},
    {"file": "A.java", "class": "A"},
)

finding_rows = st.lists(
    st.tuples(
        st.sampled_from(TOOLS),
        st.sampled_from(CATEGORIES),
        st.integers(0, len(LOCATION_POOL) - 1),
        st.sampled_from(SEVERITIES),
    ),
    max_size=16,
)

granularities = st.sampled_from(list(MatchGranularity))


def to_findings(rows):
    findings = []
    for i, (tool, category, loc_index, severity) in enumerate(rows):
        raw = LOCATION_POOL[loc_index]
        location = (
            None
            if raw is None
            else CodeLocation(
                file=raw.get("file"),
                class_name=raw.get("class"),
                method_name=raw.get("method"),
                line=raw.get("line"),
            )
        )
        findings.append(
            NormalizedFinding(
                tool=tool,
                category=category,
                severity=Severity(severity),
                location=location,
                evidence="",
                native_id=f"n{i}",
            )
        )
    return findings


def by_tool(findings):
    tools = {}
    for finding in findings:
        tools.setdefault(finding.tool, []).append(finding)
    return list(tools.values())


def kept_projection(consolidated):
    return {
        (f.category, tuple(sorted(m.sort_key() for m in f.members))): (
            f.severity,
            tuple(sorted(f.support)),
        )
        for f in consolidated
    }


def member_keys(consolidated):
    return {m.sort_key() for f in consolidated for m in f.members}


# --- consolidation properties ---


@FULL
@given(
    rows=finding_rows,
    seed=st.integers(0, 2**32 - 1),
    threshold=st.integers(1, 3),
    granularity=granularities,
)
def test_consolidation_ignores_input_order(rows, seed, threshold, granularity):
    findings = to_findings(rows)
    shuffled = list(findings)
    random.Random(seed).shuffle(shuffled)
    kept_a, residue_a = consolidate(by_tool(findings), threshold=threshold, granularity=granularity)
    kept_b, residue_b = consolidate(by_tool(shuffled), threshold=threshold, granularity=granularity)
    assert [f.id for f in kept_a] == [f.id for f in kept_b]
    assert kept_projection(kept_a) == kept_projection(kept_b)
    assert sorted(m.sort_key() for m in residue_a) == sorted(m.sort_key() for m in residue_b)


@FULL
@given(rows=finding_rows, threshold=st.integers(1, 3), granularity=granularities)
def test_raising_threshold_only_narrows(rows, threshold, granularity):
    findings = to_findings(rows)
    loose_kept, loose_residue = consolidate(
        by_tool(findings), threshold=threshold, granularity=granularity
    )
    strict_kept, strict_residue = consolidate(
        by_tool(findings), threshold=threshold + 1, granularity=granularity
    )
    loose = kept_projection(loose_kept)
    strict = kept_projection(strict_kept)
    assert set(strict) <= set(loose)
    assert all(strict[key] == loose[key] for key in strict)
    assert {m.sort_key() for m in loose_residue} <= {m.sort_key() for m in strict_residue}


@FULL
@given(rows=finding_rows, granularity=granularities)
def test_threshold_one_keeps_every_finding(rows, granularity):
    findings = to_findings(rows)
    kept, residue = consolidate(by_tool(findings), threshold=1, granularity=granularity)
    assert residue == []
    assert sorted(member_keys(kept)) == sorted(f.sort_key() for f in findings)


@FULL
@given(rows=finding_rows, threshold=st.integers(1, 4))
def test_method_grouping_keeps_subset_of_class_grouping(rows, threshold):
    findings = to_findings(rows)
    fine, _ = consolidate(by_tool(findings), threshold=threshold, granularity=MatchGranularity.METHOD)
    coarse, _ = consolidate(by_tool(findings), threshold=threshold, granularity=MatchGranularity.CLASS)
    assert member_keys(fine) <= member_keys(coarse)


@FULL
@given(rows=finding_rows, threshold=st.integers(1, 4), granularity=granularities)
def test_every_finding_lands_exactly_once(rows, threshold, granularity):
    findings = to_findings(rows)
    kept, residue = consolidate(by_tool(findings), threshold=threshold, granularity=granularity)
    landed = sorted(
        [m.sort_key() for f in kept for m in f.members] + [m.sort_key() for m in residue]
    )
    assert landed == sorted(f.sort_key() for f in findings)


# --- ranking properties ---

SCALES = (0.25, 0.5, 2.0, 4.0, 16.0)


@FULL
@given(
    accepted=st.sets(st.sampled_from(ASSET_IDS)),
    scale=st.sampled_from(SCALES),
    mode=st.sampled_from(("severity", "family", "both")),
)
def test_scaling_weights_preserves_queue_order(accepted, scale, mode):
    base = fresh_session()
    for asset_id in sorted(accepted):
        apply_event(base, AssetDecision(asset_id=asset_id, state=AssetState.ACCEPTED, at=AT))

    severity_scale = scale if mode in ("severity", "both") else 1.0
    family_scale = scale if mode in ("family", "both") else 1.0
    scaled = PriorityWeights(
        severity={k: v * severity_scale for k, v in CONFIG.weights.severity.items()},
        family={k: v * family_scale for k, v in CONFIG.weights.family.items()},
    )
    other = create_session(
        PROFILE, MANIFEST, REPORTS, dataclasses.replace(CONFIG, weights=scaled)
    )
    for asset_id in sorted(accepted):
        apply_event(other, AssetDecision(asset_id=asset_id, state=AssetState.ACCEPTED, at=AT))

    assert other.ranked == base.ranked
    factor = severity_scale * family_scale
    assert all(other.scores[fid] == score * factor for fid, score in base.scores.items())


@FULL
@given(false_positives=st.sets(st.sampled_from(FINDING_IDS)))
def test_false_positives_only_leave_the_queue(false_positives):
    session = fresh_session()
    accept_all_candidates(session)
    before = list(session.ranked)
    for finding_id in sorted(false_positives):
        apply_event(
            session,
            FindingVerdict(finding_id=finding_id, verdict=Verdict.FALSE_POSITIVE, at=AT),
        )
    assert session.ranked == [fid for fid in before if fid not in false_positives]


@FULL
@given(accepted=st.sets(st.sampled_from(ASSET_IDS), min_size=1), data=st.data())
def test_rejecting_an_asset_never_raises_scores(accepted, data):
    session = fresh_session()
    for asset_id in sorted(accepted):
        apply_event(session, AssetDecision(asset_id=asset_id, state=AssetState.ACCEPTED, at=AT))
    before = dict(session.scores)
    victim = data.draw(st.sampled_from(sorted(accepted)))
    apply_event(session, AssetDecision(asset_id=victim, state=AssetState.REJECTED, at=AT))
    assert all(session.scores[fid] <= before[fid] for fid in before)
    assert sorted(session.ranked) == sorted(before)


# --- session replay properties ---


@st.composite
def event_sequences(draw):
    count = draw(st.integers(0, 8))
    events = []
    for i in range(count):
        stamp = f"2026-08-19T12:{i:02d}:00Z"
        kind = draw(st.integers(0, 3))
        if kind == 0:
            events.append(
                AssetDecision(
                    asset_id=draw(st.sampled_from(ASSET_IDS)),
                    state=draw(st.sampled_from(list(AssetState))),
                    at=stamp,
                )
            )
        elif kind == 1:
            events.append(
                FindingVerdict(
                    finding_id=draw(st.sampled_from(FINDING_IDS)),
                    verdict=draw(st.sampled_from(list(Verdict))),
                    at=stamp,
                )
            )
        elif kind == 2:
            events.append(Note(text=f"note {i}", at=stamp))
        else:
            events.append(
                Note(
                    text=f"note {i}",
                    subject_id=draw(st.sampled_from(ASSET_IDS + FINDING_IDS)),
                    at=stamp,
                )
            )
    return events


def state_projection(session):
    return (
        {asset_id: a.state.value for asset_id, a in session.assets.items()},
        {f.id: f.verdict.value for f in session.consolidated},
        dict(session.scores),
        list(session.ranked),
        [e.to_dict() for e in session.events],
    )


@FULL
@given(events=event_sequences())
def test_replaying_the_event_log_rebuilds_the_state(events):
    live = fresh_session()
    for event in events:
        apply_event(live, event)
    replayed = loads_session(session_envelope_bytes(live))
    assert state_projection(replayed) == state_projection(live)


@FULL
@given(events=event_sequences())
def test_save_load_round_trip_is_byte_identical(events):
    live = fresh_session()
    for event in events:
        apply_event(live, event)
    blob = session_envelope_bytes(live)
    assert session_envelope_bytes(loads_session(blob)) == blob

"""Normalization and majority-vote consolidation, checked against a frozen oracle."""

from __future__ import annotations

import itertools
import json
import random
import time

import pytest

from oracle_consolidate import consolidate_oracle, finding_key
from sourcerer.errors import ConfigInvalid, DuplicateTool, MalformedDataFile
from sourcerer.model import CodeLocation, NormalizedFinding, Severity
from sourcerer.reconcile import (
    CategoryMap,
    MatchGranularity,
    ReductionStats,
    consolidate,
    load_category_map,
    locations_match,
    normalize_findings,
    reduction_stats,
)


def nf(
    tool: str,
    category: str,
    location: dict | None,
    severity: str = "high",
    native_id: str | None = None,
    evidence: str = "",
) -> NormalizedFinding:
    return NormalizedFinding(
        tool=tool,
        category=category,
        severity=Severity(severity),
        location=CodeLocation(
            file=location.get("file"),
            class_name=location.get("class"),
            method_name=location.get("method"),
            line=location.get("line"),
        )
        if location is not None
        else None,
        evidence=evidence,
        native_id=native_id or f"{tool}_{category}",
    )


def by_tool(findings: list[NormalizedFinding]) -> list[list[NormalizedFinding]]:
    tools: dict[str, list[NormalizedFinding]] = {}
    for finding in findings:
        tools.setdefault(finding.tool, []).append(finding)
    return list(tools.values())


def to_oracle(finding: NormalizedFinding) -> dict:
    loc = finding.location
    return {
        "tool": finding.tool,
        "native_id": finding.native_id,
        "category": finding.category,
        "severity": finding.severity.value,
        "location": None
        if loc is None
        else {
            k: v
            for k, v in (
                ("file", loc.file),
                ("class", loc.class_name),
                ("method", loc.method_name),
                ("line", loc.line),
            )
            if v is not None
        },
        "evidence": finding.evidence,
    }


def run_both(findings: list[NormalizedFinding], threshold: int, granularity: MatchGranularity):
    """Run production consolidate and the oracle on the same findings.

    Returns ((kept_prod, residue_prod), (kept_oracle, residue_oracle)) in the
    oracle's comparable representation.
    """
    consolidated, residue = consolidate(
        by_tool(findings), threshold=threshold, granularity=granularity
    )
    kept_prod = {}
    for cf in consolidated:
        members = tuple(sorted(finding_key(to_oracle(m)) for m in cf.members))
        kept_prod[(cf.category, members)] = {
            "members": members,
            "tools": tuple(sorted(cf.support)),
            "severity": cf.severity.value,
            "locations": tuple(
                sorted(
                    (loc.file, loc.class_name, loc.method_name, loc.line)
                    for loc in cf.locations
                )
            ),
        }
    residue_prod = sorted(finding_key(to_oracle(m)) for m in residue)
    oracle = consolidate_oracle([to_oracle(f) for f in findings], threshold, granularity.value)
    return (kept_prod, residue_prod), oracle


def assert_matches_oracle(findings, threshold, granularity):
    (kept_prod, residue_prod), (kept_oracle, residue_oracle) = run_both(
        findings, threshold, granularity
    )
    assert kept_prod == kept_oracle
    assert residue_prod == residue_oracle


# --- category maps ---


def test_packaged_maps_target_known_categories(base_config):
    taxonomy = base_config.taxonomy
    for tool in ("mobsf", "androbugs", "qark", "generic"):
        cmap = load_category_map(tool, taxonomy=taxonomy)
        assert cmap is not None and cmap.tool == tool


def test_generic_map_is_identity(base_config):
    cmap = load_category_map("generic", taxonomy=base_config.taxonomy)
    assert len(cmap.mapping) == 11
    assert all(native == canonical for native, canonical in cmap.mapping.items())


def test_load_category_map_unknown_tool_is_none():
    assert load_category_map("nonexistent-scanner") is None


@pytest.mark.parametrize(
    "doc",
    [
        {"map": {"a": "b"}},
        {"tool": "t", "map": {}},
        {"tool": "t", "map": {"a": 3}},
        {"tool": "t", "map": {"a": ""}},
        {"tool": "t", "map": {"a": "b"}, "version": 1},
    ],
)
def test_category_map_rejects_bad_documents(doc):
    with pytest.raises(MalformedDataFile):
        CategoryMap.from_bytes(json.dumps(doc).encode())


def test_category_map_rejects_unknown_category_against_taxonomy(base_config):
    doc = {"tool": "t", "map": {"x": "not-a-category"}}
    with pytest.raises(MalformedDataFile):
        CategoryMap.from_bytes(json.dumps(doc).encode(), taxonomy=base_config.taxonomy)


def test_category_map_round_trip(base_config):
    cmap = load_category_map("mobsf", taxonomy=base_config.taxonomy)
    assert CategoryMap.from_dict(cmap.to_dict()).to_dict() == cmap.to_dict()


# --- normalization ---


def test_normalize_a2_reports(a2_reports, base_config):
    taxonomy = base_config.taxonomy
    expected = {"mobsf": (10, 0, 9), "androbugs": (8, 1, 8), "qark": (6, 1, 6)}
    for report in a2_reports:
        cmap = load_category_map(report.tool, taxonomy=taxonomy)
        normalized, quarantined = normalize_findings(report, cmap, taxonomy)
        n_normalized, n_quarantined, n_categories = expected[report.tool]
        assert len(normalized) == n_normalized
        assert len(quarantined) == n_quarantined
        assert len({f.category for f in normalized}) == n_categories


def test_normalize_quarantines_unmapped_ids(a2_reports, base_config):
    androbugs = a2_reports[1]
    cmap = load_category_map("androbugs", taxonomy=base_config.taxonomy)
    _, quarantined = normalize_findings(androbugs, cmap, base_config.taxonomy)
    assert [raw.native_id for raw in quarantined] == ["HTTP_CLEARTEXT_TRAFFIC"]


def test_normalize_quarantines_category_unknown_to_taxonomy(a2_reports, base_config):
    mobsf = a2_reports[0]
    rogue = CategoryMap(tool="mobsf", version="t", mapping={"android_sql_raw_query": "bogus"})
    with_taxonomy, quarantined = normalize_findings(mobsf, rogue, base_config.taxonomy)
    assert with_taxonomy == []
    assert len(quarantined) == len(mobsf.findings)
    unchecked, _ = normalize_findings(mobsf, rogue)
    assert {f.category for f in unchecked} == {"bogus"}


def test_normalize_carries_fields_through(a2_reports, base_config):
    qark = a2_reports[2]
    cmap = load_category_map("qark", taxonomy=base_config.taxonomy)
    normalized, _ = normalize_findings(qark, cmap, base_config.taxonomy)
    by_native = {f.native_id: f for f in normalized}
    sql = by_native["sql_injection_raw"]
    assert sql.tool == "qark"
    assert sql.category == "sql-injection"
    assert sql.severity is Severity.HIGH
    assert sql.location.class_name == "TransactionStore"


# --- location matching ---


LOC_FULL = CodeLocation(file="A.java", class_name="A", method_name="run", line=5)
LOC_SAME_CLASS = CodeLocation(file="A.java", class_name="A", method_name="init", line=9)
LOC_OTHER = CodeLocation(file="B.java", class_name="B", method_name="run", line=5)
LOC_NO_CLASS = CodeLocation(file="A.java")
LOC_NO_FILE = CodeLocation(class_name="A", method_name="run")


@pytest.mark.parametrize(
    ("a", "b", "granularity", "expect"),
    [
        (LOC_FULL, LOC_FULL, MatchGranularity.METHOD, True),
        (LOC_FULL, LOC_SAME_CLASS, MatchGranularity.METHOD, False),
        (LOC_FULL, LOC_SAME_CLASS, MatchGranularity.CLASS, True),
        (LOC_FULL, LOC_OTHER, MatchGranularity.CLASS, False),
        (LOC_FULL, LOC_OTHER, MatchGranularity.METHOD, False),
        (LOC_FULL, LOC_SAME_CLASS, MatchGranularity.FILE, True),
        (LOC_FULL, LOC_OTHER, MatchGranularity.FILE, False),
        (LOC_NO_CLASS, LOC_FULL, MatchGranularity.CLASS, False),
        (LOC_NO_CLASS, LOC_NO_CLASS, MatchGranularity.CLASS, False),
        (LOC_NO_CLASS, LOC_NO_CLASS, MatchGranularity.FILE, True),
        (LOC_NO_FILE, LOC_NO_FILE, MatchGranularity.FILE, False),
        (LOC_NO_FILE, LOC_FULL, MatchGranularity.METHOD, True),
        (CodeLocation(class_name="A"), LOC_FULL, MatchGranularity.METHOD, False),
    ],
)
def test_locations_match_table(a, b, granularity, expect):
    assert locations_match(a, b, granularity) is expect
    assert locations_match(b, a, granularity) is expect


def test_line_numbers_do_not_affect_matching():
    a = CodeLocation(file="A.java", class_name="A", method_name="run", line=1)
    b = CodeLocation(file="A.java", class_name="A", method_name="run", line=999)
    for granularity in MatchGranularity:
        assert locations_match(a, b, granularity)


# --- consolidation unit behavior ---


STORE = {"file": "Store.java", "class": "Store", "method": "query", "line": 10}
OTHER = {"file": "Other.java", "class": "Other", "method": "run", "line": 20}


def test_two_of_three_vote():
    findings = [
        nf("t1", "sql-injection", STORE),
        nf("t2", "sql-injection", STORE),
        nf("t3", "sql-injection", OTHER),
    ]
    consolidated, residue = consolidate(by_tool(findings), threshold=2)
    assert len(consolidated) == 1
    assert consolidated[0].support == frozenset({"t1", "t2"})
    assert [r.tool for r in residue] == ["t3"]


def test_unanimous_vote():
    findings = [nf(t, "sql-injection", STORE) for t in ("t1", "t2", "t3")]
    consolidated, residue = consolidate(by_tool(findings), threshold=3)
    assert len(consolidated) == 1
    assert consolidated[0].support == frozenset({"t1", "t2", "t3"})
    assert residue == []


def test_single_tool_repeats_do_not_vote():
    findings = [
        nf("t1", "sql-injection", STORE, native_id="a"),
        nf("t1", "sql-injection", STORE, native_id="b"),
    ]
    consolidated, residue = consolidate(by_tool(findings), threshold=2)
    assert consolidated == []
    assert len(residue) == 2


def test_threshold_one_keeps_everything():
    findings = [nf("t1", "sql-injection", STORE), nf("t2", "hardcoded-secret", OTHER)]
    consolidated, residue = consolidate(by_tool(findings), threshold=1)
    assert len(consolidated) == 2
    assert residue == []


def test_app_wide_findings_group_together():
    findings = [
        nf("t1", "insecure-network-validation", None),
        nf("t2", "insecure-network-validation", None),
        nf("t3", "insecure-network-validation", STORE),
    ]
    consolidated, residue = consolidate(by_tool(findings), threshold=2)
    assert len(consolidated) == 1
    assert consolidated[0].support == frozenset({"t1", "t2"})
    assert consolidated[0].locations == ()
    assert [r.tool for r in residue] == ["t3"]


def test_categories_never_mix():
    findings = [nf("t1", "sql-injection", STORE), nf("t2", "hardcoded-secret", STORE)]
    consolidated, residue = consolidate(by_tool(findings), threshold=2)
    assert consolidated == []
    assert len(residue) == 2


def test_consolidated_severity_is_member_max():
    findings = [
        nf("t1", "sql-injection", STORE, severity="medium"),
        nf("t2", "sql-injection", STORE, severity="critical"),
    ]
    consolidated, _ = consolidate(by_tool(findings), threshold=2)
    assert consolidated[0].severity is Severity.CRITICAL


def test_consolidated_locations_deduped_and_sorted():
    loc_b = {"file": "Store.java", "class": "Store", "method": "insert", "line": 30}
    findings = [
        nf("t1", "sql-injection", loc_b),
        nf("t2", "sql-injection", STORE),
        nf("t3", "sql-injection", STORE),
    ]
    consolidated, _ = consolidate(by_tool(findings), threshold=2, granularity=MatchGranularity.CLASS)
    [cf] = consolidated
    assert [loc.method_name for loc in cf.locations] == ["insert", "query"]


def test_consolidated_ids_stable_across_runs():
    findings = [nf("t1", "sql-injection", STORE), nf("t2", "sql-injection", STORE)]
    first, _ = consolidate(by_tool(findings), threshold=2)
    second, _ = consolidate(by_tool(list(reversed(findings))), threshold=2)
    assert first[0].id == second[0].id
    assert first[0].id.startswith("f-")


def test_duplicate_tool_across_reports_rejected():
    batches = [[nf("t1", "sql-injection", STORE)], [nf("t1", "sql-injection", OTHER)]]
    with pytest.raises(DuplicateTool):
        consolidate(batches, threshold=1)


def test_threshold_below_one_rejected():
    with pytest.raises(ConfigInvalid):
        consolidate([], threshold=0)


def test_threshold_above_tool_count_yields_only_residue():
    findings = [nf("t1", "sql-injection", STORE), nf("t2", "sql-injection", STORE)]
    consolidated, residue = consolidate(by_tool(findings), threshold=3)
    assert consolidated == []
    assert len(residue) == 2


def test_output_order_is_category_then_location():
    findings = [
        nf("t1", "sql-injection", OTHER),
        nf("t2", "sql-injection", OTHER),
        nf("t1", "hardcoded-secret", STORE),
        nf("t2", "hardcoded-secret", STORE),
        nf("t1", "sql-injection", STORE),
        nf("t2", "sql-injection", STORE),
    ]
    consolidated, _ = consolidate(by_tool(findings), threshold=2)
    keys = [(cf.category, cf.locations[0].file) for cf in consolidated]
    assert keys == [
        ("hardcoded-secret", "Store.java"),
        ("sql-injection", "Other.java"),
        ("sql-injection", "Store.java"),
    ]


# --- oracle equivalence sweeps ---


SWEEP_LOCATIONS = [
    {"file": "A.java", "class": "A", "method": "m1", "line": 1},
    {"file": "A.java", "class": "A", "method": "m2", "line": 2},
    {"file": "B.java", "class": "B", "method": "m1", "line": 3},
]

RANDOM_LOCATIONS = SWEEP_LOCATIONS + [
    {"file": "B.java", "class": "C", "method": "m3", "line": 4},
    {"file": "C.java", "class": "A", "method": "m1", "line": 5},
    {"file": "D.java"},
    {"class": "D", "method": "m4"},
    None,
]


def sweep_cases(tools, categories, locations):
    """Every subset of the (tool, category, location) grid as a finding list."""
    cells = list(itertools.product(tools, categories, range(len(locations))))
    for mask in range(1 << len(cells)):
        findings = [
            nf(tool, category, locations[loc], native_id=f"n{i}")
            for i, (tool, category, loc) in enumerate(cells)
            if mask >> i & 1
        ]
        yield findings


def test_sweep_single_category_all_granularities():
    for findings in sweep_cases(("t1", "t2", "t3"), ("sql-injection",), SWEEP_LOCATIONS):
        for granularity in MatchGranularity:
            for threshold in (1, 2, 3):
                assert_matches_oracle(findings, threshold, granularity)


def test_sweep_three_categories_one_location():
    categories = ("sql-injection", "hardcoded-secret", "insecure-webview-xss")
    for findings in sweep_cases(("t1", "t2", "t3"), categories, SWEEP_LOCATIONS[:1]):
        for threshold in (1, 2, 3):
            assert_matches_oracle(findings, threshold, MatchGranularity.CLASS)


def test_sweep_two_by_two_grid():
    categories = ("sql-injection", "hardcoded-secret")
    for findings in sweep_cases(("t1", "t2", "t3"), categories, SWEEP_LOCATIONS[:2]):
        for threshold in (1, 2, 3):
            assert_matches_oracle(findings, threshold, MatchGranularity.CLASS)


def test_sweep_randomized_larger_cases():
    rng = random.Random(20260819)
    categories = (
        "sql-injection",
        "hardcoded-secret",
        "insecure-webview-xss",
        "weak-crypto-hash",
        "insecure-ipc-export",
    )
    tools = ("t1", "t2", "t3", "t4")
    granularities = list(MatchGranularity)
    for case in range(1000):
        count = rng.randint(1, 24)
        findings = [
            nf(
                rng.choice(tools),
                rng.choice(categories),
                rng.choice(RANDOM_LOCATIONS),
                severity=rng.choice(("info", "medium", "high", "critical")),
                native_id=f"n{case}_{i}",
                evidence=f"e{rng.randint(0, 3)}",
            )
            for i in range(count)
        ]
        assert_matches_oracle(findings, rng.randint(1, 4), rng.choice(granularities))


def test_sweep_runtime_budget():
    start = time.monotonic()
    for findings in sweep_cases(("t1", "t2"), ("sql-injection",), SWEEP_LOCATIONS[:2]):
        assert_matches_oracle(findings, 2, MatchGranularity.CLASS)
    assert time.monotonic() - start < 10.0


# --- conservation spot check ---


def test_every_input_lands_exactly_once():
    findings = [
        nf("t1", "sql-injection", STORE),
        nf("t2", "sql-injection", STORE),
        nf("t3", "sql-injection", None),
        nf("t1", "hardcoded-secret", OTHER),
    ]
    consolidated, residue = consolidate(by_tool(findings), threshold=2)
    placed = [m for cf in consolidated for m in cf.members] + list(residue)
    assert sorted(f.sort_key() for f in placed) == sorted(f.sort_key() for f in findings)


# --- reduction arithmetic ---


def test_reduction_fractions():
    stats = reduction_stats(
        {"tool9": [f"c{i}" for i in range(9)],
         "tool19": [f"c{i}" for i in range(19)],
         "tool49": [f"c{i}" for i in range(49)]},
        [f"p{i}" for i in range(7)],
    )
    assert stats.prioritized_count == 7
    assert abs(stats.per_tool["tool9"].reduction - 0.222) < 1e-3
    assert abs(stats.per_tool["tool19"].reduction - 0.632) < 1e-3
    assert abs(stats.per_tool["tool49"].reduction - 0.857) < 1e-3


def test_reduction_counts_distinct_categories():
    stats = reduction_stats({"t": ["a", "a", "b"]}, ["a", "a"])
    assert stats.per_tool["t"].category_count == 2
    assert stats.prioritized_count == 1
    assert stats.per_tool["t"].reduction == 0.5


def test_reduction_edge_values():
    stats = reduction_stats({"none": [], "even": ["a"], "all": ["a", "b"]}, [])
    assert stats.per_tool["none"].category_count == 0
    assert stats.per_tool["none"].reduction is None
    assert stats.per_tool["even"].reduction == 1.0
    assert stats.per_tool["all"].reduction == 1.0
    equal = reduction_stats({"t": ["a", "b"]}, ["a", "b"])
    assert equal.per_tool["t"].reduction == 0.0


def test_reduction_can_go_negative():
    stats = reduction_stats({"t": ["a", "b", "c"]}, ["a", "b", "c", "d"])
    assert stats.per_tool["t"].reduction == pytest.approx(-1 / 3)


def test_reduction_stats_to_dict_sorted():
    stats = reduction_stats({"zeta": ["a"], "alpha": ["a", "b"]}, ["a"])
    data = stats.to_dict()
    assert list(data["per_tool"]) == ["alpha", "zeta"]
    assert data["prioritized_count"] == 1
    assert isinstance(stats, ReductionStats)

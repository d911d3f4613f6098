"""Rendering a triage session into a security report, plus corpus statistics.

The report keeps the three-column shape of the triage workflow: the accepted
asset inventory grouped by family, the ranked vulnerability-to-asset map, and
the mitigation list per finding.  Appendices surface everything filtered out
along the way (residue below the vote threshold, quarantined native ids,
unclassified assets, categories without an impact rule), so nothing is
silently dropped.  Percentages round half-up, never banker's.
"""

from __future__ import annotations

from collections import Counter
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from sourcerer.errors import EmptyCorpus
from sourcerer.impact import assign_threat_class
from sourcerer.jsonio import canonical_dumps
from sourcerer.model import AssetFamily, AssetState, Verdict, family_names
from sourcerer.reconcile import reduction_stats
from sourcerer.session import TriageSession, check_session

REPORT_SCHEMA = "sourcerer-report/1"
CORPUS_SCHEMA = "sourcerer-corpus-stats/1"

NO_MITIGATION_MARKER = "no mitigation known"
EMPTY_QUEUE_NOTE = "no prioritized vulnerabilities"

_FAMILY_ORDER = (AssetFamily.USER, AssetFamily.APPLICATION, AssetFamily.PLATFORM)


def percent_int(numerator: int, denominator: int) -> int:
    """Whole-number percentage, half-up: 23 of 36 is 64."""
    pct = (Decimal(numerator) * 100 / Decimal(denominator)).quantize(
        Decimal("1"), rounding=ROUND_HALF_UP
    )
    return int(pct)


def percent_1dp(numerator: int, denominator: int) -> float:
    """One-decimal percentage, half-up: 2 of 9 is 22.2."""
    pct = (Decimal(numerator) * 100 / Decimal(denominator)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    return float(pct)


def build_report(session: TriageSession) -> dict:
    """The full report as a JSON-ready dict; render_report serializes it."""
    cfg = session.config
    findings_by_id = {f.id: f for f in session.consolidated}
    unmapped = set(session.unmapped_categories)

    rows = []
    for position, fid in enumerate(session.ranked, start=1):
        finding = findings_by_id[fid]
        impacted = []
        for impact in session.impacts.get(fid, []):
            asset = session.assets[impact.asset_id]
            impacted.append(
                {
                    "asset_id": asset.id,
                    "name": asset.name,
                    "families": family_names(asset.families),
                    "criticality": asset.criticality,
                    "rule_id": impact.rule_id,
                }
            )
        score = session.scores[fid]
        rows.append(
            {
                "rank": position,
                "finding": finding.to_dict(),
                "display_name": cfg.taxonomy.display_name(finding.category),
                "threat_class": assign_threat_class(finding.category, cfg.taxonomy).value,
                "score": score,
                "impacted_assets": impacted,
                "mitigations": [m.to_dict() for m in cfg.kb.lookup(finding.category)],
                "needs_review": score == 0.0,
                "unmapped": finding.category in unmapped,
            }
        )

    false_positives = sorted(
        (f for f in session.consolidated if f.verdict is Verdict.FALSE_POSITIVE),
        key=lambda f: (f.category, f.id),
    )

    accepted_by_family: dict[str, list] = {f.value: [] for f in _FAMILY_ORDER}
    for asset in session.accepted_assets():
        for family in _FAMILY_ORDER:
            if family in asset.families:
                accepted_by_family[family.value].append(asset.to_dict())
    assets_by_state: dict[str, list] = {state.value: [] for state in AssetState}
    for asset in session.assets_sorted():
        assets_by_state[asset.state.value].append(asset.to_dict())
    unclassified = [a.to_dict() for a in session.assets_sorted() if a.unclassified]

    categories_by_tool: dict[str, set] = {tool: set() for tool in session.tools()}
    for nf in session.normalized:
        categories_by_tool.setdefault(nf.tool, set()).add(nf.category)
    prioritized_categories = {findings_by_id[fid].category for fid in session.ranked}
    reduction = reduction_stats(categories_by_tool, prioritized_categories)

    quarantined_total = sum(len(items) for items in session.quarantine.values())
    return {
        "schema": REPORT_SCHEMA,
        "session_id": session.session_id,
        "app": {
            "app_id": session.profile.app_id,
            "name": session.profile.display_name,
            "package": session.manifest.package if session.manifest else None,
        },
        "config": {
            "threshold": cfg.threshold,
            "granularity": cfg.granularity.value,
            "tools": session.tools(),
        },
        "assets": {
            "accepted_by_family": accepted_by_family,
            "by_state": assets_by_state,
        },
        "rows": rows,
        "false_positives": [f.to_dict() for f in false_positives],
        "appendices": {
            "residue": [f.to_dict() for f in session.residue],
            "quarantine": {
                tool: [raw.to_dict() for raw in items]
                for tool, items in sorted(session.quarantine.items())
            },
            "unclassified_assets": unclassified,
            "unmapped_categories": list(session.unmapped_categories),
        },
        "reduction": reduction.to_dict(),
        "totals": {
            "raw_findings": sum(len(r.findings) for r in session.tool_reports),
            "normalized": len(session.normalized),
            "quarantined": quarantined_total,
            "consolidated": len(session.consolidated),
            "residue": len(session.residue),
            "assets": len(session.assets),
            "accepted_assets": len(session.accepted_assets()),
        },
    }


def _text_location(finding: dict) -> str:
    locations = finding.get("locations", [])
    if not locations:
        return "app-wide"
    first = locations[0]
    where = first.get("class") or first.get("file") or "?"
    if first.get("method"):
        where += f"#{first['method']}"
    if first.get("line"):
        where += f":{first['line']}"
    if len(locations) > 1:
        where += f" (+{len(locations) - 1} more)"
    return where


def render_text(report: dict) -> str:
    lines: list[str] = []
    app = report["app"]
    cfg = report["config"]
    lines.append(f"# Security report: {app['name']} ({app['app_id']})")
    package = app["package"] or "unknown package"
    lines.append(
        f"{package} | tools: {', '.join(cfg['tools']) or 'none'}"
        f" | threshold {cfg['threshold']} at {cfg['granularity']} granularity"
    )
    lines.append(f"session {report['session_id']}")
    lines.append("")

    lines.append("## Assets")
    by_family = report["assets"]["accepted_by_family"]
    for family in ("user", "application", "platform"):
        bucket = by_family[family]
        lines.append(f"{family} assets ({len(bucket)}):")
        if not bucket:
            lines.append("  none")
        for asset in bucket:
            lines.append(f"  {asset['name']} (criticality {asset['criticality']})")
    by_state = report["assets"]["by_state"]
    for state in ("candidate", "rejected"):
        bucket = by_state[state]
        if bucket:
            names = ", ".join(a["name"] for a in bucket)
            lines.append(f"{state} ({len(bucket)}): {names}")
    unclassified = report["appendices"]["unclassified_assets"]
    if unclassified:
        names = ", ".join(a["name"] for a in unclassified)
        lines.append(f"needs classification: {names}")
    lines.append("")

    rows = report["rows"]
    lines.append(f"## Prioritized vulnerabilities ({len(rows)})")
    if not rows:
        lines.append(f"  {EMPTY_QUEUE_NOTE}")
    for row in rows:
        finding = row["finding"]
        support = ", ".join(finding["support"])
        lines.append(
            f"  #{row['rank']} [{finding['severity']}] {row['display_name']}"
            f" | {row['threat_class']} | score {row['score']:g} | {support}"
        )
        lines.append(f"      where: {_text_location(finding)}")
        if row["impacted_assets"]:
            names = ", ".join(a["name"] for a in row["impacted_assets"])
            lines.append(f"      assets: {names}")
        flags = []
        if row["needs_review"]:
            flags.append("needs-review")
        if row["unmapped"]:
            flags.append("no-impact-rule")
        if finding["verdict"] != "unverified":
            flags.append(finding["verdict"])
        if flags:
            lines.append(f"      flags: {', '.join(flags)}")
    lines.append("")

    lines.append("## Mitigations")
    if not rows:
        lines.append("  none")
    for row in rows:
        lines.append(f"  #{row['rank']} {row['display_name']}:")
        if not row["mitigations"]:
            lines.append(f"      {NO_MITIGATION_MARKER}")
        for mitigation in row["mitigations"]:
            lines.append(f"      {mitigation['masvs_id']}: {mitigation['title']}")
    lines.append("")

    lines.append("## Appendices")
    if report["false_positives"]:
        lines.append(f"Set aside as false positives: {len(report['false_positives'])}")
        for finding in report["false_positives"]:
            lines.append(
                f"  [{finding['severity']}] {finding['category']} at {_text_location(finding)}"
            )

    residue = report["appendices"]["residue"]
    lines.append(f"Residue below the vote threshold ({len(residue)}):")
    for finding in residue:
        loc = finding.get("location")
        where = _text_location({"locations": [loc] if loc else []})
        lines.append(f"  {finding['tool']}: {finding['category']} at {where}")

    quarantine = report["appendices"]["quarantine"]
    total_quarantined = sum(len(v) for v in quarantine.values())
    lines.append(f"Quarantined native ids ({total_quarantined}):")
    for tool, items in quarantine.items():
        ids = ", ".join(sorted({raw["native_id"] for raw in items}))
        lines.append(f"  {tool}: {ids}")

    unmapped = report["appendices"]["unmapped_categories"]
    if unmapped:
        lines.append(f"Categories without an impact rule: {', '.join(unmapped)}")

    lines.append("Per-tool category reduction:")
    per_tool = report["reduction"]["per_tool"]
    prioritized = report["reduction"]["prioritized_count"]
    for tool in sorted(per_tool):
        entry = per_tool[tool]
        fraction = entry["reduction"]
        pct_text = f"{fraction * 100:.1f}%" if fraction is not None else "n/a"
        lines.append(
            f"  {tool}: {entry['category_count']} categories"
            f" -> {prioritized} prioritized ({pct_text})"
        )
    totals = report["totals"]
    lines.append(
        f"Totals: {totals['raw_findings']} raw, {totals['normalized']} normalized,"
        f" {totals['quarantined']} quarantined, {totals['consolidated']} consolidated,"
        f" {totals['residue']} residue; {totals['accepted_assets']}/{totals['assets']}"
        " assets accepted"
    )
    return "\n".join(lines) + "\n"


def render_report(session: TriageSession, fmt: str = "text") -> str:
    check_session(session)
    report = build_report(session)
    if fmt == "json":
        return canonical_dumps(report) + "\n"
    return render_text(report)


def corpus_stats(sessions: Sequence[TriageSession], *, pre_triage: bool = False) -> dict:
    """Cross-app aggregates: how widespread each category and permission is.

    An app counts as affected by a category when one of its prioritized
    findings (verdict other than false positive) carries it; pre_triage counts
    every consolidated finding instead, before any verdicts.
    """
    if not sessions:
        raise EmptyCorpus("corpus statistics need at least one session")
    n = len(sessions)
    category_apps: Counter = Counter()
    permission_apps: Counter = Counter()
    for session in sessions:
        if pre_triage:
            categories = {f.category for f in session.consolidated}
        else:
            categories = {
                f.category
                for f in session.consolidated
                if f.verdict is not Verdict.FALSE_POSITIVE
            }
        for category in categories:
            category_apps[category] += 1
        if session.manifest is not None:
            declared = set()
            for permission in session.manifest.permissions:
                if session.config.catalog.is_dangerous(permission):
                    declared.add(permission)
            for permission in declared:
                permission_apps[permission] += 1
    return {
        "schema": CORPUS_SCHEMA,
        "total_apps": n,
        "pre_triage": pre_triage,
        "categories": {
            category: {"affected_count": count, "percentage": percent_int(count, n)}
            for category, count in sorted(category_apps.items())
        },
        "permissions": {
            permission: {"declared_count": count, "percentage": percent_int(count, n)}
            for permission, count in sorted(permission_apps.items())
        },
    }


def render_corpus_stats(stats: dict, fmt: str = "text") -> str:
    if fmt == "json":
        return canonical_dumps(stats) + "\n"
    scope = "pre-triage" if stats["pre_triage"] else "post-triage"
    lines = [f"Corpus: {stats['total_apps']} app(s), {scope}"]
    lines.append("Categories by app coverage:")
    ordered = sorted(
        stats["categories"].items(), key=lambda kv: (-kv[1]["affected_count"], kv[0])
    )
    for category, entry in ordered:
        lines.append(
            f"  {category}: {entry['affected_count']} app(s), {entry['percentage']}%"
        )
    lines.append("Dangerous permissions by app coverage:")
    ordered = sorted(
        stats["permissions"].items(), key=lambda kv: (-kv[1]["declared_count"], kv[0])
    )
    for permission, entry in ordered:
        lines.append(
            f"  {permission}: {entry['declared_count']} app(s), {entry['percentage']}%"
        )
    return "\n".join(lines) + "\n"

"""Command line interface.

Exit codes: 0 success, 1 unusable input, 2 broken session invariant.
Phase timings go to stderr so captured stdout stays deterministic.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from sourcerer import __version__
from sourcerer.errors import InputError, InvariantError, SourcererError, UnknownEntity
from sourcerer.ingest import AppProfile, load_app_profile, load_manifest, load_tool_report
from sourcerer.jsonio import canonical_dumps
from sourcerer.model import AssetState, Verdict, families_from_names, family_names
from sourcerer.reconcile import MatchGranularity
from sourcerer.report import corpus_stats, render_corpus_stats, render_report
from sourcerer.session import (
    AssetDecision,
    FindingVerdict,
    ManualAsset,
    Note,
    SessionConfig,
    TriageSession,
    accept_all_candidates,
    apply_event,
    auto_verify_findings,
    check_session,
    create_session,
    load_session,
    save_session,
)

log = logging.getLogger("sourcerer")


def _parse_report_specs(values: list[str]) -> list[tuple[str, str]]:
    specs = []
    for value in values:
        tool, sep, path = value.partition("=")
        if not sep or not tool.strip() or not path.strip():
            raise InputError(f"--report expects TOOL=PATH, got {value!r}")
        specs.append((tool.strip(), path.strip()))
    return specs


def _load_inputs(args) -> tuple:
    profile = load_app_profile(args.profile)
    manifest = load_manifest(args.manifest) if args.manifest else None
    reports = [load_tool_report(tool, path) for tool, path in _parse_report_specs(args.report)]
    return profile, manifest, reports


def _config_from_args(args) -> SessionConfig:
    return SessionConfig.load(
        threshold=args.threshold,
        granularity=args.granularity,
        lexicon_path=args.lexicon,
        kb_path=args.kb,
        weights_path=args.weights,
    )


def cmd_init(args) -> int:
    started = time.perf_counter()
    profile, manifest, reports = _load_inputs(args)
    log.info("parsed inputs in %.0f ms", (time.perf_counter() - started) * 1000)

    phase = time.perf_counter()
    session = create_session(profile, manifest, reports, _config_from_args(args))
    log.info(
        "identified %d asset(s), consolidated %d finding(s) in %.0f ms",
        len(session.assets),
        len(session.consolidated),
        (time.perf_counter() - phase) * 1000,
    )

    if args.accept_all_assets:
        accepted = accept_all_candidates(session)
        log.info("accepted %d classifiable candidate asset(s)", accepted)
    if args.auto_verify:
        verified = auto_verify_findings(session)
        log.info("marked %d finding(s) verified", verified)

    check_session(session)
    save_session(session, args.session)
    print(f"session {session.session_id} -> {args.session}")
    print(
        f"{len(session.assets)} asset(s), {len(session.consolidated)} consolidated,"
        f" {len(session.residue)} residue,"
        f" {sum(len(v) for v in session.quarantine.values())} quarantined"
    )
    return 0


def _asset_line(asset) -> str:
    families = ", ".join(family_names(asset.families)) or "unclassified"
    return f"  {asset.id}  {asset.name} [{families}] crit {asset.criticality}"


def cmd_assets(args) -> int:
    session = load_session(args.session)
    if args.format == "json":
        doc = {"session_id": session.session_id, "assets": [a.to_dict() for a in session.assets_sorted()]}
        sys.stdout.write(canonical_dumps(doc) + "\n")
        return 0
    for state in AssetState:
        bucket = [a for a in session.assets_sorted() if a.state is state]
        print(f"{state.value} ({len(bucket)}):")
        for asset in bucket:
            print(_asset_line(asset))
    return 0


def cmd_consolidate(args) -> int:
    reports = [load_tool_report(tool, path) for tool, path in _parse_report_specs(args.report)]
    config = SessionConfig.load(threshold=args.threshold, granularity=args.granularity)
    placeholder = AppProfile(app_id="adhoc", display_name="adhoc", description="")
    session = create_session(placeholder, None, reports, config)
    consolidated_categories = {f.category for f in session.consolidated}
    if args.format == "json":
        doc = {
            "schema": "sourcerer-consolidation/1",
            "tools": session.tools(),
            "threshold": config.threshold,
            "granularity": config.granularity.value,
            "consolidated": [f.to_dict() for f in session.consolidated],
            "residue": [f.to_dict() for f in session.residue],
            "quarantine": {
                tool: [raw.to_dict() for raw in items]
                for tool, items in sorted(session.quarantine.items())
            },
            "consolidated_category_count": len(consolidated_categories),
        }
        sys.stdout.write(canonical_dumps(doc) + "\n")
        return 0
    print(
        f"{len(session.consolidated)} consolidated finding(s) across"
        f" {len(consolidated_categories)} category(ies);"
        f" {len(session.residue)} residue,"
        f" {sum(len(v) for v in session.quarantine.values())} quarantined"
    )
    for finding in session.consolidated:
        where = str(finding.locations[0]) if finding.locations else "app-wide"
        print(
            f"  [{finding.severity.value}] {finding.category} @ {where}"
            f" | {len(finding.support)} tool(s): {', '.join(sorted(finding.support))}"
        )
    return 0


def _resolve_asset(session: TriageSession, ref: str) -> str:
    if ref in session.assets:
        return ref
    matches = [a.id for a in session.assets.values() if a.name == ref]
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise UnknownEntity(f"no asset with id or name {ref!r}")
    raise UnknownEntity(f"asset name {ref!r} is ambiguous; use an id")


def _resolve_finding(session: TriageSession, ref: str) -> str:
    if session.finding(ref) is not None:
        return ref
    matches = [f.id for f in session.consolidated if f.category == ref]
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise UnknownEntity(f"no finding with id or category {ref!r}")
    raise UnknownEntity(f"category {ref!r} has several findings; use an id")


def _save_and_confirm(session: TriageSession, path: str, message: str) -> int:
    check_session(session)
    save_session(session, path)
    print(message)
    return 0


def cmd_triage_decision(args) -> int:
    session = load_session(args.session)
    target = _resolve_asset(session, args.asset)
    apply_event(session, AssetDecision(asset_id=target, state=AssetState(args.state)))
    asset = session.assets[target]
    return _save_and_confirm(session, args.session, f"{asset.name}: {asset.state.value}")


def cmd_triage_verdict(args) -> int:
    session = load_session(args.session)
    target = _resolve_finding(session, args.finding)
    apply_event(session, FindingVerdict(finding_id=target, verdict=Verdict(args.verdict)))
    finding = session.finding(target)
    return _save_and_confirm(
        session, args.session, f"{finding.category} ({target}): {finding.verdict.value}"
    )


def cmd_triage_add_asset(args) -> int:
    session = load_session(args.session)
    names = [n.strip() for n in args.families.split(",") if n.strip()]
    try:
        families = families_from_names(names)
    except ValueError:
        raise InputError(
            f"--families expects a comma-separated subset of user,application,platform,"
            f" got {args.families!r}"
        ) from None
    event = ManualAsset(
        name=args.name, families=families, criticality=args.criticality, note=args.note
    )
    apply_event(session, event)
    return _save_and_confirm(session, args.session, f"added asset {args.name!r} (accepted)")


def cmd_triage_note(args) -> int:
    session = load_session(args.session)
    apply_event(session, Note(text=args.text, subject_id=args.subject))
    return _save_and_confirm(session, args.session, "note recorded")


def cmd_report(args) -> int:
    session = load_session(args.session)
    sys.stdout.write(render_report(session, args.format))
    return 0


def cmd_corpus_stats(args) -> int:
    sessions = [load_session(path) for path in args.sessions]
    stats = corpus_stats(sessions, pre_triage=args.pre_triage)
    sys.stdout.write(render_corpus_stats(stats, args.format))
    return 0


def cmd_serve(args) -> int:
    from sourcerer.service import run_service

    return run_service(
        args.session, host=args.host, port=args.port, ui_dir=args.ui
    )


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threshold", type=int, default=2, help="distinct tools a finding needs (default 2)")
    parser.add_argument(
        "--granularity",
        choices=[g.value for g in MatchGranularity],
        default="class",
        help="how precisely locations must agree (default class)",
    )
    parser.add_argument("--lexicon", metavar="PATH", help="asset lexicon JSON (default: packaged fintech lexicon)")
    parser.add_argument("--kb", metavar="PATH", help="mitigation KB JSON (default: packaged)")
    parser.add_argument("--weights", metavar="PATH", help="priority weights JSON (default: packaged)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sourcerer",
        description="Asset-centric triage of Android static-analysis reports.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="build a triage session from profile, manifest, and reports")
    p.add_argument("--profile", required=True, metavar="PATH")
    p.add_argument("--manifest", metavar="PATH")
    p.add_argument("--report", action="append", default=[], metavar="TOOL=PATH",
                   help="repeatable; TOOL is mobsf, androbugs, qark, or generic")
    _add_config_flags(p)
    p.add_argument("--session", required=True, metavar="PATH", help="session file to write")
    p.add_argument("--accept-all-assets", action="store_true",
                   help="accept every classifiable candidate asset")
    p.add_argument("--auto-verify", action="store_true",
                   help="mark every consolidated finding verified")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("assets", help="list the session's assets by state")
    p.add_argument("--session", required=True, metavar="PATH")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_assets)

    p = sub.add_parser("consolidate", help="cross-tool consolidation without a session")
    p.add_argument("--report", action="append", required=True, metavar="TOOL=PATH")
    p.add_argument("--threshold", type=int, default=2)
    p.add_argument(
        "--granularity", choices=("method", "class", "file"), default="class"
    )
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_consolidate)

    p = sub.add_parser("triage", help="record a triage decision in a session")
    p.add_argument("--session", required=True, metavar="PATH")
    actions = p.add_subparsers(dest="action", required=True)
    for action, state in (("accept", "accepted"), ("reject", "rejected"), ("restore", "candidate")):
        a = actions.add_parser(action, help=f"mark an asset {state}")
        a.add_argument("asset", help="asset id or exact name")
        a.set_defaults(func=cmd_triage_decision, state=state)
    a = actions.add_parser("verdict", help="verdict a consolidated finding")
    a.add_argument("finding", help="finding id or category (if unambiguous)")
    a.add_argument("verdict", choices=[v.value for v in Verdict])
    a.set_defaults(func=cmd_triage_verdict)
    a = actions.add_parser("add-asset", help="add an asset the identification missed")
    a.add_argument("--name", required=True)
    a.add_argument("--families", required=True, metavar="F1,F2",
                   help="comma-separated: user, application, platform")
    a.add_argument("--criticality", type=int, default=2, choices=(1, 2, 3))
    a.add_argument("--note", default="")
    a.set_defaults(func=cmd_triage_add_asset)
    a = actions.add_parser("note", help="attach a note to the session")
    a.add_argument("--text", required=True)
    a.add_argument("--subject", metavar="ID", help="asset or finding id")
    a.set_defaults(func=cmd_triage_note)

    p = sub.add_parser("report", help="render the security report")
    p.add_argument("--session", required=True, metavar="PATH")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("corpus-stats", help="aggregate statistics over many sessions")
    p.add_argument("sessions", nargs="*", metavar="SESSION")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--pre-triage", action="store_true",
                   help="count every consolidated finding, ignoring verdicts")
    p.set_defaults(func=cmd_corpus_stats)

    p = sub.add_parser("serve", help="serve the triage API (and optional UI) over HTTP")
    p.add_argument("--session", required=True, metavar="PATH")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8799)
    p.add_argument("--ui", metavar="DIR", help="directory of static UI files to serve at /ui/")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SourcererError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

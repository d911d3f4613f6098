"""Shared fixtures: the A2 walkthrough inputs, a reusable config, corpus builder."""

from __future__ import annotations

from pathlib import Path

import pytest

from sourcerer.ingest import (
    AppProfile,
    ManifestInfo,
    load_app_profile,
    load_manifest,
    load_tool_report,
    parse_tool_report,
)
from sourcerer.jsonio import canonical_dumps
from sourcerer.session import SessionConfig, create_session

FIXTURES = Path(__file__).parent / "fixtures"
A2_DIR = FIXTURES / "a2"


@pytest.fixture(scope="session")
def a2_profile():
    return load_app_profile(A2_DIR / "profile.json")


@pytest.fixture(scope="session")
def a2_manifest():
    return load_manifest(A2_DIR / "AndroidManifest.xml")


@pytest.fixture(scope="session")
def a2_reports():
    return [
        load_tool_report("mobsf", A2_DIR / "mobsf.json"),
        load_tool_report("androbugs", A2_DIR / "androbugs.json"),
        load_tool_report("qark", A2_DIR / "qark.json"),
    ]


@pytest.fixture(scope="session")
def base_config():
    """Packaged data with the default threshold/granularity; loaded once."""
    return SessionConfig.load()


@pytest.fixture()
def a2_session(a2_profile, a2_manifest, a2_reports, base_config):
    """A fresh A2 session per test; sessions are mutable."""
    return create_session(a2_profile, a2_manifest, a2_reports, base_config)


def generic_report(slug: str, rows: list[dict]):
    """An interchange report for an ad-hoc tool, parsed through the real adapter."""
    payload = canonical_dumps({"tool": slug, "tool_version": "0", "findings": rows})
    return parse_tool_report("generic", payload.encode("utf-8"))


def build_corpus(config: SessionConfig, total: int = 36, affected: int = 23, flagged: int = 23):
    """Synthetic corpus: `affected` sessions with consolidated sql-injection,
    the rest with consolidated tracking-library, and `flagged` manifests
    declaring READ_PHONE_STATE."""
    sessions = []
    for i in range(total):
        profile = AppProfile(
            app_id=f"corp{i:02d}", display_name=f"Corpus App {i:02d}", description=""
        )
        permissions = ["android.permission.INTERNET"]
        if i < flagged:
            permissions.append("android.permission.READ_PHONE_STATE")
        manifest = ManifestInfo(package=f"com.corpus.app{i:02d}", permissions=tuple(permissions))
        category = "sql-injection" if i < affected else "tracking-library"
        row = {
            "native_id": category,
            "severity": "high",
            "file": "Store.java",
            "class": "Store",
            "method": "run",
            "line": 10,
            "message": "seeded corpus finding",
        }
        reports = [generic_report("scana", [row]), generic_report("scanb", [row])]
        sessions.append(create_session(profile, manifest, reports, config))
    return sessions


@pytest.fixture()
def corpus36(base_config):
    return build_corpus(base_config)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = {}
    for outcome, reports in terminalreporter.stats.items():
        if outcome not in ("passed", "failed", "error"):
            continue
        for rep in reports:
            nodeid = str(getattr(rep, "nodeid", ""))
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            status = "PASS" if outcome == "passed" else "FAIL"
            if lines.get(name) != "FAIL":
                lines[name] = status
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(lines):
        terminalreporter.write_line(f"{lines[name]}  {name}")

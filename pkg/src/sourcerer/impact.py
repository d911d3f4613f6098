"""Mapping consolidated findings onto assets and ranking by what they reach.

Impact rules connect a finding category to the assets it can plausibly
touch, selected by asset family.  A finding's priority combines its severity
with the criticality of every distinct accepted asset it impacts; findings
whose category has no rule, or which reach no accepted asset, score zero and
sink to the bottom of the queue flagged for manual review.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from sourcerer.errors import MalformedDataFile
from sourcerer.jsonio import canonical_bytes, parse_json_object, read_path_or_packaged
from sourcerer.model import (
    Asset,
    AssetFamily,
    ConsolidatedFinding,
    Severity,
    Taxonomy,
    ThreatClass,
    Verdict,
)

_SELECTOR = "by-family"


@dataclass(frozen=True)
class ImpactRule:
    """One 'category C can reach assets of family F' statement."""

    id: str
    category: str
    family: AssetFamily
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "selector": _SELECTOR,
            "value": self.family.value,
            "rationale": self.rationale,
        }


class ImpactRules:
    """All impact rules, looked up by category in file order."""

    def __init__(self, version: str, rules: Iterable[ImpactRule]):
        self.version = version
        self.rules = tuple(rules)
        self._by_category: dict[str, list[ImpactRule]] = {}
        for rule in self.rules:
            self._by_category.setdefault(rule.category, []).append(rule)

    @classmethod
    def from_bytes(
        cls,
        payload: bytes,
        *,
        source: str = "<impact rules>",
        taxonomy: Taxonomy | None = None,
    ) -> ImpactRules:
        doc = parse_json_object(payload, MalformedDataFile, source)
        raw_rules = doc.get("rules")
        if not isinstance(raw_rules, list) or not raw_rules:
            raise MalformedDataFile(f"{source}: 'rules' must be a non-empty list")
        rules = []
        seen_ids: set[str] = set()
        for i, raw in enumerate(raw_rules):
            where = f"{source}: rules[{i}]"
            if not isinstance(raw, dict):
                raise MalformedDataFile(f"{where}: expected an object")
            rule_id = raw.get("id")
            if not isinstance(rule_id, str) or not rule_id.strip():
                raise MalformedDataFile(f"{where}: 'id' must be a non-empty string")
            rule_id = rule_id.strip()
            if rule_id in seen_ids:
                raise MalformedDataFile(f"{where}: duplicate rule id {rule_id!r}")
            seen_ids.add(rule_id)
            category = raw.get("category")
            if not isinstance(category, str) or not category.strip():
                raise MalformedDataFile(f"{where}: 'category' must be a non-empty string")
            category = category.strip()
            if taxonomy is not None and category not in taxonomy:
                raise MalformedDataFile(f"{where}: unknown category {category!r}")
            if raw.get("selector") != _SELECTOR:
                raise MalformedDataFile(f"{where}: 'selector' must be {_SELECTOR!r}")
            value = raw.get("value")
            try:
                family = AssetFamily(value)
            except ValueError:
                raise MalformedDataFile(f"{where}: 'value' names unknown family {value!r}") from None
            rationale = raw.get("rationale", "")
            if not isinstance(rationale, str):
                raise MalformedDataFile(f"{where}: 'rationale' must be a string")
            rules.append(ImpactRule(id=rule_id, category=category, family=family, rationale=rationale))
        version = doc.get("version", "")
        if not isinstance(version, str):
            raise MalformedDataFile(f"{source}: 'version' must be a string")
        return cls(version=version, rules=rules)

    def rules_for(self, category: str) -> tuple[ImpactRule, ...]:
        return tuple(self._by_category.get(category, ()))

    def covered_categories(self) -> frozenset[str]:
        return frozenset(self._by_category)

    def to_dict(self) -> dict:
        return {"version": self.version, "rules": [r.to_dict() for r in self.rules]}

    @classmethod
    def from_dict(cls, data: dict, *, taxonomy: Taxonomy | None = None) -> ImpactRules:
        return cls.from_bytes(canonical_bytes(data), source="embedded impact rules", taxonomy=taxonomy)


def load_impact_rules(
    path: str | Path | None = None, *, taxonomy: Taxonomy | None = None
) -> ImpactRules:
    payload, source = read_path_or_packaged(path, "impact_rules.json")
    return ImpactRules.from_bytes(payload, source=source, taxonomy=taxonomy)


@dataclass(frozen=True)
class AssetImpact:
    """One (finding reaches asset) edge, with the rule that asserted it."""

    asset_id: str
    rule_id: str

    def to_dict(self) -> dict:
        return {"asset_id": self.asset_id, "rule_id": self.rule_id}

    @classmethod
    def from_dict(cls, data: dict) -> AssetImpact:
        return cls(asset_id=data["asset_id"], rule_id=data["rule_id"])


def map_to_assets(
    category: str, assets: Iterable[Asset], rules: ImpactRules
) -> list[AssetImpact]:
    """Assets a category reaches, deduplicated in rule-then-asset-name order."""
    impacts: list[AssetImpact] = []
    seen: set[str] = set()
    ordered = sorted(assets, key=lambda a: (a.name, a.id))
    for rule in rules.rules_for(category):
        for asset in ordered:
            if rule.family in asset.families and asset.id not in seen:
                seen.add(asset.id)
                impacts.append(AssetImpact(asset_id=asset.id, rule_id=rule.id))
    return impacts


def assign_threat_class(category: str, taxonomy: Taxonomy) -> ThreatClass:
    return taxonomy.require(category).threat_class


class PriorityWeights:
    """Positive weights for severity levels and asset families."""

    def __init__(self, severity: Mapping[Severity, float], family: Mapping[AssetFamily, float]):
        self.severity = dict(severity)
        self.family = dict(family)

    @classmethod
    def from_bytes(cls, payload: bytes, *, source: str = "<weights>") -> PriorityWeights:
        doc = parse_json_object(payload, MalformedDataFile, source)
        severity = cls._weight_table(doc, "severity", [s.value for s in Severity], source)
        family = cls._weight_table(doc, "family", [f.value for f in AssetFamily], source)
        return cls(
            severity={Severity(k): v for k, v in severity.items()},
            family={AssetFamily(k): v for k, v in family.items()},
        )

    @staticmethod
    def _weight_table(doc: dict, key: str, expected: list[str], source: str) -> dict[str, float]:
        raw = doc.get(key)
        if not isinstance(raw, dict):
            raise MalformedDataFile(f"{source}: {key!r} must be an object")
        missing = sorted(set(expected) - set(raw))
        extra = sorted(set(raw) - set(expected))
        if missing or extra:
            raise MalformedDataFile(
                f"{source}: {key!r} must have exactly keys {sorted(expected)}"
                f" (missing: {missing}, unexpected: {extra})"
            )
        table = {}
        for name, value in raw.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise MalformedDataFile(f"{source}: {key}[{name!r}] must be a positive number")
            table[name] = float(value)
        return table

    def to_dict(self) -> dict:
        return {
            "severity": {s.value: self.severity[s] for s in Severity},
            "family": {f.value: self.family[f] for f in AssetFamily},
        }

    @classmethod
    def from_dict(cls, data: dict) -> PriorityWeights:
        return cls(
            severity={Severity(k): float(v) for k, v in data["severity"].items()},
            family={AssetFamily(k): float(v) for k, v in data["family"].items()},
        )


def load_weights(path: str | Path | None = None) -> PriorityWeights:
    payload, source = read_path_or_packaged(path, "weights.json")
    return PriorityWeights.from_bytes(payload, source=source)


def priority_score(
    finding: ConsolidatedFinding,
    impacts: Iterable[AssetImpact],
    assets_by_id: Mapping[str, Asset],
    weights: PriorityWeights,
) -> float:
    """Severity weight times the summed weighted criticality of impacted assets."""
    total = 0.0
    for impact in impacts:
        asset = assets_by_id[impact.asset_id]
        if not asset.families:
            continue
        family_weight = max(weights.family[f] for f in asset.families)
        total += asset.criticality * family_weight
    return weights.severity[finding.severity] * total


def rank_findings(
    findings: Iterable[ConsolidatedFinding], scores: Mapping[str, float]
) -> list[str]:
    """Queue order: score desc, support desc, category asc, id asc.

    Findings verdicted false-positive leave the queue entirely.
    """
    eligible = [f for f in findings if f.verdict is not Verdict.FALSE_POSITIVE]
    eligible.sort(key=lambda f: (-scores.get(f.id, 0.0), -len(f.support), f.category, f.id))
    return [f.id for f in eligible]

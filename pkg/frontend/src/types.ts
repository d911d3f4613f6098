// Payload shapes mirroring the triage service API. The UI renders these
// verbatim; it never derives scores or ordering on its own.

export interface ApiEnvelope<T> {
  schema_version: string;
  state_revision: number;
  payload?: T;
  error?: string;
}

export interface AppInfo {
  app_id: string;
  name: string;
  package: string | null;
}

export interface SessionCounts {
  assets: number;
  candidate_assets: number;
  accepted_assets: number;
  consolidated: number;
  residue: number;
  quarantined: number;
  events: number;
}

export interface EvidenceItem {
  source: string;
  text: string;
}

export type AssetState = "candidate" | "accepted" | "rejected";

export interface AssetView {
  id: string;
  name: string;
  families: string[];
  provenance: string;
  criticality: number;
  state: AssetState;
  evidence: EvidenceItem[];
}

export interface SessionView {
  session_id: string;
  app: AppInfo;
  tools: string[];
  threshold: number;
  granularity: string;
  counts: SessionCounts;
  assets: AssetView[];
}

export interface LocationView {
  file: string | null;
  class: string | null;
  method: string | null;
  line: number | null;
}

export type Verdict = "unverified" | "verified" | "false-positive";

export interface FindingView {
  id: string;
  category: string;
  severity: string;
  support: string[];
  locations: LocationView[];
  members: unknown[];
  verdict: Verdict;
}

export interface ImpactedAssetView {
  asset_id: string;
  name: string;
  families: string[];
  criticality: number;
  rule_id: string;
}

export interface MitigationView {
  masvs_id: string;
  title: string;
  summary: string;
  guideline_ref: string;
  applies_to: string[];
}

export interface RankedRow {
  rank: number;
  finding: FindingView;
  display_name: string;
  threat_class: string;
  score: number;
  impacted_assets: ImpactedAssetView[];
  mitigations: MitigationView[];
  needs_review: boolean;
  unmapped: boolean;
}

export interface RankedView {
  rows: RankedRow[];
}

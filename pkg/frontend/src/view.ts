import type { Store } from "./state";
import type {
  AssetView,
  LocationView,
  MitigationView,
  RankedRow,
  SessionView,
} from "./types";

const FAMILY_ORDER = ["user", "application", "platform"];

const FAMILY_LABELS: Record<string, string> = {
  user: "User assets",
  application: "Application assets",
  platform: "Platform assets",
};

export const NO_MITIGATION_TEXT = "no mitigation known";
export const OFFLINE_TEXT = "Triage service unreachable. Retrying…";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

// Scores come from the service as-is; the UI only turns the JSON number
// back into text, it never recomputes or rounds.
export function formatScore(score: number): string {
  return String(score);
}

function describeLocation(loc: LocationView): string {
  const parts: string[] = [];
  if (loc.class) {
    parts.push(loc.method ? `${loc.class}.${loc.method}` : loc.class);
  } else if (loc.file) {
    parts.push(loc.file);
  } else {
    parts.push("app-wide");
  }
  if (loc.line !== null && loc.line !== undefined) {
    parts.push(`line ${loc.line}`);
  }
  return parts.join(", ");
}

function button(
  label: string,
  className: string,
  disabled: boolean,
  onClick: () => void,
): HTMLButtonElement {
  const b = el("button", className, label);
  b.type = "button";
  b.disabled = disabled;
  b.addEventListener("click", (ev) => {
    ev.stopPropagation();
    onClick();
  });
  return b;
}

function inlineErrorBox(store: Store, targetId: string): HTMLElement | null {
  const err = store.inlineError;
  if (!err || err.targetId !== targetId) {
    return null;
  }
  const box = el("div", "inline-error");
  box.dataset.role = "inline-error";
  box.appendChild(el("span", "inline-error-text", err.message));
  box.appendChild(button("Retry", "retry", store.busy, err.retry));
  return box;
}

function renderHeader(store: Store, session: SessionView): HTMLElement {
  const header = el("header", "topbar");
  const title = el("h1", "", session.app.name);
  if (session.app.package) {
    title.appendChild(el("span", "pkg", session.app.package));
  }
  header.appendChild(title);
  const meta = el("div", "meta");
  meta.appendChild(el("span", "", `session ${session.session_id}`));
  meta.appendChild(el("span", "", `tools: ${session.tools.join(", ")}`));
  meta.appendChild(
    el("span", "", `vote threshold ${session.threshold} (${session.granularity})`),
  );
  const rev = el("span", "revision", `revision ${store.revision}`);
  rev.dataset.role = "revision";
  meta.appendChild(rev);
  header.appendChild(meta);
  return header;
}

function renderAssetCard(store: Store, asset: AssetView): HTMLElement {
  const card = el("article", `asset state-${asset.state}`);
  card.dataset.assetId = asset.id;
  card.dataset.state = asset.state;

  const head = el("div", "asset-head");
  head.appendChild(el("span", "asset-name", asset.name));
  head.appendChild(el("span", "asset-crit", `crit ${asset.criticality}`));
  const state = el("span", `asset-state ${asset.state}`, asset.state);
  state.dataset.role = "asset-state";
  head.appendChild(state);
  card.appendChild(head);

  if (asset.evidence.length > 0) {
    const list = el("ul", "evidence");
    for (const ev of asset.evidence) {
      const item = el("li", "evidence-item");
      item.appendChild(el("span", "evidence-source", ev.source));
      item.appendChild(el("span", "evidence-text", `“${ev.text}”`));
      list.appendChild(item);
    }
    card.appendChild(list);
  }

  const actions = el("div", "asset-actions");
  if (asset.state !== "accepted") {
    actions.appendChild(
      button("Accept", "accept", store.busy, () => void store.decideAsset(asset.id, "accepted")),
    );
  }
  if (asset.state !== "rejected") {
    actions.appendChild(
      button("Reject", "reject", store.busy, () => void store.decideAsset(asset.id, "rejected")),
    );
  }
  if (asset.state !== "candidate") {
    actions.appendChild(
      button("Restore", "restore", store.busy, () => void store.decideAsset(asset.id, "candidate")),
    );
  }
  card.appendChild(actions);

  const err = inlineErrorBox(store, asset.id);
  if (err) {
    card.appendChild(err);
  }
  return card;
}

function renderAssets(store: Store, session: SessionView): HTMLElement {
  const section = el("section", "assets");
  section.dataset.role = "assets";
  const accepted = session.counts.accepted_assets;
  section.appendChild(
    el("h2", "", `Assets (${accepted}/${session.counts.assets} accepted)`),
  );

  const families = FAMILY_ORDER.filter((f) =>
    session.assets.some((a) => a.families.includes(f)),
  );
  for (const extra of new Set(session.assets.flatMap((a) => a.families))) {
    if (!families.includes(extra)) {
      families.push(extra);
    }
  }

  for (const family of families) {
    const members = session.assets
      .filter((a) => a.families.includes(family))
      .sort((a, b) => (a.name < b.name ? -1 : a.name > b.name ? 1 : 0));
    if (members.length === 0) {
      continue;
    }
    const group = el("section", "family-group");
    group.dataset.family = family;
    group.appendChild(
      el("h3", "", `${FAMILY_LABELS[family] ?? family} (${members.length})`),
    );
    for (const asset of members) {
      group.appendChild(renderAssetCard(store, asset));
    }
    section.appendChild(group);
  }

  const loose = session.assets.filter((a) => a.families.length === 0);
  if (loose.length > 0) {
    const group = el("section", "family-group");
    group.dataset.family = "unclassified";
    group.appendChild(el("h3", "", `Unclassified (${loose.length})`));
    for (const asset of loose) {
      group.appendChild(renderAssetCard(store, asset));
    }
    section.appendChild(group);
  }
  return section;
}

function renderFindingCard(store: Store, row: RankedRow): HTMLElement {
  const card = el("article", "finding");
  card.dataset.findingId = row.finding.id;
  card.dataset.rank = String(row.rank);
  card.dataset.category = row.finding.category;
  if (row.finding.id === store.selectedFindingId) {
    card.classList.add("selected");
  }
  card.addEventListener("click", () => store.select(row.finding.id));

  const head = el("div", "finding-head");
  head.appendChild(el("span", "rank", `#${row.rank}`));
  head.appendChild(el("span", "finding-title", row.display_name));
  const badge = el("span", `badge threat-${row.threat_class}`, row.threat_class);
  badge.dataset.role = "threat-class";
  head.appendChild(badge);
  const score = el("span", "score", formatScore(row.score));
  score.dataset.role = "score";
  head.appendChild(score);
  card.appendChild(head);

  const detail = el("div", "finding-detail");
  detail.appendChild(el("span", "severity", row.finding.severity));
  for (const tool of row.finding.support) {
    detail.appendChild(el("span", "chip tool", tool));
  }
  if (row.finding.locations.length > 0) {
    detail.appendChild(
      el("span", "location", describeLocation(row.finding.locations[0])),
    );
  }
  card.appendChild(detail);

  const impacts = el("div", "impacts");
  impacts.dataset.role = "impacts";
  if (row.impacted_assets.length > 0) {
    impacts.appendChild(el("span", "impacts-label", "impacts:"));
    for (const asset of row.impacted_assets) {
      impacts.appendChild(el("span", "chip impact", asset.name));
    }
  } else {
    impacts.appendChild(el("span", "impacts-label", "no accepted assets impacted"));
  }
  card.appendChild(impacts);

  if (row.needs_review || row.unmapped) {
    const flags = el("div", "flags");
    if (row.needs_review) {
      flags.appendChild(el("span", "flag needs-review", "needs review"));
    }
    if (row.unmapped) {
      flags.appendChild(el("span", "flag unmapped", "no impact rule"));
    }
    card.appendChild(flags);
  }

  const actions = el("div", "finding-actions");
  const verdict = row.finding.verdict;
  if (verdict !== "verified") {
    actions.appendChild(
      button("Verified", "verify", store.busy, () =>
        void store.setVerdict(row.finding.id, "verified"),
      ),
    );
  }
  actions.appendChild(
    button("False positive", "false-positive", store.busy, () =>
      void store.setVerdict(row.finding.id, "false-positive"),
    ),
  );
  if (verdict !== "unverified") {
    actions.appendChild(
      button("Reset", "reset", store.busy, () =>
        void store.setVerdict(row.finding.id, "unverified"),
      ),
    );
  }
  if (verdict !== "unverified") {
    const mark = el("span", `verdict ${verdict}`, verdict);
    mark.dataset.role = "verdict";
    actions.appendChild(mark);
  }
  card.appendChild(actions);

  const err = inlineErrorBox(store, row.finding.id);
  if (err) {
    card.appendChild(err);
  }
  return card;
}

function renderQueue(store: Store, rows: RankedRow[]): HTMLElement {
  const section = el("section", "queue");
  section.dataset.role = "queue";
  section.appendChild(el("h2", "", `Ranked findings (${rows.length})`));

  if (rows.length === 0) {
    const note = el("p", "queue-note", "No consolidated findings to review.");
    note.dataset.role = "empty-note";
    section.appendChild(note);
    return section;
  }

  if (rows.every((r) => r.score === 0)) {
    const note = el(
      "p",
      "queue-note",
      "Every score is 0; the queue needs review once assets are accepted.",
    );
    note.dataset.role = "zero-note";
    section.appendChild(note);
  }

  for (const row of rows) {
    section.appendChild(renderFindingCard(store, row));
  }
  return section;
}

function renderMitigations(store: Store, rows: RankedRow[]): HTMLElement {
  const panel = el("aside", "mitigation-panel");
  panel.dataset.role = "mitigation-panel";
  panel.appendChild(el("h2", "", "Mitigations"));

  const selected = rows.find((r) => r.finding.id === store.selectedFindingId);
  if (!selected) {
    panel.appendChild(
      el("p", "mitigation-hint", "Select a finding to see mitigation guidance."),
    );
    return panel;
  }

  panel.appendChild(el("h3", "", selected.display_name));
  if (selected.mitigations.length === 0) {
    const none = el("p", "no-mitigation", NO_MITIGATION_TEXT);
    none.dataset.role = "no-mitigation";
    panel.appendChild(none);
    return panel;
  }
  for (const entry of selected.mitigations) {
    panel.appendChild(renderMitigationEntry(entry));
  }
  return panel;
}

function renderMitigationEntry(entry: MitigationView): HTMLElement {
  const box = el("article", "mitigation-entry");
  const id = el("span", "masvs-id", entry.masvs_id);
  id.dataset.role = "masvs-id";
  box.appendChild(id);
  box.appendChild(el("strong", "mitigation-title", entry.title));
  box.appendChild(el("p", "mitigation-summary", entry.summary));
  box.appendChild(el("span", "mitigation-ref", entry.guideline_ref));
  return box;
}

export function renderApp(store: Store): HTMLElement {
  const root = el("div", "app");

  if (store.offline) {
    const banner = el("div", "banner offline", OFFLINE_TEXT);
    banner.dataset.role = "offline-banner";
    root.appendChild(banner);
  }

  if (!store.snapshot) {
    if (!store.offline) {
      root.appendChild(el("p", "loading", "Loading session…"));
    }
    return root;
  }

  const { session, rows } = store.snapshot;
  root.appendChild(renderHeader(store, session));

  const main = el("main", "columns");
  main.appendChild(renderAssets(store, session));
  main.appendChild(renderQueue(store, rows));
  main.appendChild(renderMitigations(store, rows));
  root.appendChild(main);
  return root;
}

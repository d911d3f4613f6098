import type {
  ApiEnvelope,
  AssetState,
  RankedRow,
  RankedView,
  SessionView,
  Verdict,
} from "./types";

// Raised when the service answers with an error envelope (400/404/409).
// The message is the service's own wording so it can be shown inline.
export class ApiError extends Error {
  status: number;
  revision: number;

  constructor(status: number, revision: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.revision = revision;
  }
}

export interface Snapshot {
  revision: number;
  session: SessionView;
  rows: RankedRow[];
}

async function readEnvelope<T>(resp: Response): Promise<{ revision: number; payload: T }> {
  const envelope = (await resp.json()) as ApiEnvelope<T>;
  if (!resp.ok || envelope.payload === undefined) {
    throw new ApiError(resp.status, envelope.state_revision, envelope.error ?? `HTTP ${resp.status}`);
  }
  return { revision: envelope.state_revision, payload: envelope.payload };
}

export class ApiClient {
  base: string;

  constructor(base: string) {
    this.base = base.replace(/\/$/, "");
  }

  private async get<T>(path: string): Promise<{ revision: number; payload: T }> {
    const resp = await fetch(this.base + path, { headers: { Accept: "application/json" } });
    return readEnvelope<T>(resp);
  }

  private async post<T>(path: string, body: unknown): Promise<{ revision: number; payload: T }> {
    const resp = await fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return readEnvelope<T>(resp);
  }

  // Both views in one place so callers always render asset list and queue
  // from the same pass; the snapshot revision is the higher of the two.
  async fetchSnapshot(): Promise<Snapshot> {
    const sess = await this.get<SessionView>("/session");
    const ranked = await this.get<RankedView>("/findings/ranked");
    return {
      revision: Math.max(sess.revision, ranked.revision),
      session: sess.payload,
      rows: ranked.payload.rows,
    };
  }

  async decideAsset(assetId: string, state: AssetState): Promise<number> {
    const { revision } = await this.post(`/assets/${assetId}/decision`, { state });
    return revision;
  }

  async setVerdict(findingId: string, verdict: Verdict): Promise<number> {
    const { revision } = await this.post(`/findings/${findingId}/verdict`, { verdict });
    return revision;
  }

  // Long-poll the ranked view. Resolves with null when the service answered
  // 304 (nothing newer than `after` within the timeout), with a fresh
  // snapshot otherwise.
  async pollNewer(after: number, timeoutMs: number): Promise<Snapshot | null> {
    const resp = await fetch(`${this.base}/findings/ranked?timeout_ms=${timeoutMs}`, {
      headers: { Accept: "application/json", "If-Revision-Newer": String(after) },
    });
    if (resp.status === 304) {
      return null;
    }
    await readEnvelope<RankedView>(resp);
    return this.fetchSnapshot();
  }
}

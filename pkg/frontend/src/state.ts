import { ApiClient, ApiError, Snapshot } from "./api";
import type { AssetState, Verdict } from "./types";

export type Listener = () => void;

export interface InlineError {
  targetId: string;
  message: string;
  retry: () => void;
}

// Holds the last acknowledged server state plus transient UI state. All
// mutations go through mutate(), which serializes them: at most one POST is
// in flight, and the views are refetched after the ack so the DOM never
// shows anything the service has not confirmed.
export class Store {
  api: ApiClient;
  snapshot: Snapshot | null = null;
  revision = -1;
  busy = false;
  offline = false;
  loaded = false;
  inlineError: InlineError | null = null;
  selectedFindingId: string | null = null;

  private listeners: Listener[] = [];

  constructor(api: ApiClient) {
    this.api = api;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  notify(): void {
    for (const fn of this.listeners) {
      fn();
    }
  }

  // Reads may overlap a mutation; a snapshot older than the last
  // acknowledged revision is dropped rather than rendered.
  adopt(snap: Snapshot): void {
    if (snap.revision >= this.revision) {
      this.snapshot = snap;
      this.revision = snap.revision;
    }
    this.offline = false;
    this.loaded = true;
  }

  setOffline(value: boolean): void {
    if (this.offline !== value) {
      this.offline = value;
      this.notify();
    }
  }

  select(findingId: string | null): void {
    this.selectedFindingId = findingId;
    this.notify();
  }

  async refresh(): Promise<void> {
    try {
      this.adopt(await this.api.fetchSnapshot());
    } catch {
      this.offline = true;
    }
    this.notify();
  }

  decideAsset(assetId: string, state: AssetState): Promise<boolean> {
    return this.mutate(assetId, () => this.api.decideAsset(assetId, state));
  }

  setVerdict(findingId: string, verdict: Verdict): Promise<boolean> {
    return this.mutate(findingId, () => this.api.setVerdict(findingId, verdict));
  }

  // Returns false when another mutation is still pending; the click is
  // ignored, not queued, so the user re-issues it against fresh state.
  private async mutate(targetId: string, op: () => Promise<number>): Promise<boolean> {
    if (this.busy) {
      return false;
    }
    this.busy = true;
    this.inlineError = null;
    this.notify();
    try {
      const revision = await op();
      if (revision > this.revision) {
        this.revision = revision;
      }
      try {
        this.adopt(await this.api.fetchSnapshot());
      } catch {
        this.offline = true;
      }
    } catch (err) {
      const message =
        err instanceof ApiError ? err.message : "triage service unreachable";
      if (!(err instanceof ApiError)) {
        this.offline = true;
      }
      this.inlineError = {
        targetId,
        message,
        retry: () => {
          void this.mutate(targetId, op);
        },
      };
    } finally {
      this.busy = false;
      this.notify();
    }
    return true;
  }
}

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";

// vitest runs with frontend/ as the working directory.
export const FIXTURE_DIR = resolve(process.cwd(), "..", "tests", "fixtures", "a2");

export interface LiveService {
  base: string;
  sessionPath: string;
  stop(): void;
}

// Builds a fresh A2 session with the real CLI and serves it on an ephemeral
// port, so the UI tests exercise the service end to end.
export async function startLiveService(): Promise<LiveService> {
  const dir = mkdtempSync(join(tmpdir(), "sourcerer-ui-"));
  const sessionPath = join(dir, "session.json");
  execFileSync(
    "sourcerer",
    [
      "init",
      "--profile", join(FIXTURE_DIR, "profile.json"),
      "--manifest", join(FIXTURE_DIR, "AndroidManifest.xml"),
      "--report", `mobsf=${join(FIXTURE_DIR, "mobsf.json")}`,
      "--report", `androbugs=${join(FIXTURE_DIR, "androbugs.json")}`,
      "--report", `qark=${join(FIXTURE_DIR, "qark.json")}`,
      "--session", sessionPath,
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );

  const child = spawn("sourcerer", ["serve", "--session", sessionPath, "--port", "0"], {
    stdio: ["ignore", "ignore", "pipe"],
  });
  const base = await waitForServeUrl(child);
  return {
    base,
    sessionPath,
    stop: () => {
      child.kill("SIGTERM");
      rmSync(dir, { recursive: true, force: true });
    },
  };
}

function waitForServeUrl(child: ChildProcess): Promise<string> {
  return new Promise((resolve, reject) => {
    let buffered = "";
    const timer = setTimeout(() => {
      child.kill("SIGTERM");
      reject(new Error(`service did not come up; stderr so far:\n${buffered}`));
    }, 15000);
    child.stderr!.on("data", (chunk: Buffer) => {
      buffered += chunk.toString();
      const m = buffered.match(/serving triage API on (http:\/\/[^/\s]+)\//);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]);
      }
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited early (code ${code}); stderr:\n${buffered}`));
    });
  });
}

export async function waitFor(
  check: () => boolean,
  what: string,
  timeoutMs = 5000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (check()) {
      return;
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
  throw new Error(`timed out waiting for ${what}`);
}

export function queueOrder(root: HTMLElement): string[] {
  return Array.from(
    root.querySelectorAll<HTMLElement>("[data-role='queue'] [data-finding-id]"),
  ).map((n) => n.dataset.findingId!);
}

export async function serviceRankedIds(base: string): Promise<{ revision: number; ids: string[] }> {
  const resp = await fetch(`${base}/findings/ranked`);
  const envelope = await resp.json();
  return {
    revision: envelope.state_revision,
    ids: envelope.payload.rows.map((r: { finding: { id: string } }) => r.finding.id),
  };
}

export function assetCardByName(root: HTMLElement, name: string): HTMLElement {
  const cards = Array.from(root.querySelectorAll<HTMLElement>("[data-asset-id]"));
  const card = cards.find(
    (c) => c.querySelector(".asset-name")?.textContent === name,
  );
  if (!card) {
    throw new Error(`no asset card named ${name}`);
  }
  return card;
}

export function clickButton(scope: HTMLElement, className: string): void {
  const btn = scope.querySelector<HTMLButtonElement>(`button.${className}`);
  if (!btn) {
    throw new Error(`no ${className} button in scope`);
  }
  btn.click();
}

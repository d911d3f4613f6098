import { ApiClient } from "./api";
import { Store } from "./state";
import { renderApp } from "./view";

export interface AppOptions {
  // Long-poll the service for changes made elsewhere (another tab, the
  // CLI). Tests turn this off and drive refreshes explicitly.
  watch?: boolean;
  pollMs?: number;
  retryMs?: number;
}

export interface AppController {
  store: Store;
  refresh(): Promise<void>;
  stop(): void;
}

function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export function startApp(
  root: HTMLElement,
  base = "",
  options: AppOptions = {},
): AppController {
  const api = new ApiClient(base);
  const store = new Store(api);
  const pollMs = options.pollMs ?? 25000;
  const retryMs = options.retryMs ?? 2000;
  let stopped = false;

  store.subscribe(() => {
    root.replaceChildren(renderApp(store));
  });
  root.replaceChildren(renderApp(store));

  const ready = store.refresh();

  if (options.watch !== false) {
    void (async () => {
      await ready;
      while (!stopped) {
        try {
          const snap = await store.api.pollNewer(store.revision, pollMs);
          if (stopped) {
            return;
          }
          if (snap) {
            store.adopt(snap);
          } else {
            store.setOffline(false);
          }
          store.notify();
        } catch {
          if (stopped) {
            return;
          }
          store.setOffline(true);
          await delay(retryMs);
        }
      }
    })();
  }

  return {
    store,
    refresh: () => store.refresh(),
    stop: () => {
      stopped = true;
    },
  };
}

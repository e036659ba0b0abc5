// Wiring: one UI event loop, one poll timer, at most one in-flight
// poll. All state lives in the model; the DOM is re-rendered from it
// after every change.

import { ApiError, type ApiClient } from "./api.js";
import {
  applyEvents,
  applyRegistry,
  commandFailed,
  commandSent,
  initialModel,
  setBanner,
  type PanelModel,
} from "./model.js";
import { render } from "./view.js";

const UNREACHABLE = "controller unreachable, retrying";

export interface RootLike {
  innerHTML: string;
  addEventListener(type: string, listener: (ev: Event) => void): void;
}

export interface AppOptions {
  api: ApiClient;
  root: RootLike;
  pollIntervalMs?: number;
  renderFn?: (model: PanelModel) => string;
}

export interface App {
  model(): PanelModel;
  start(): Promise<void>;
  stop(): void;
  tick(): Promise<void>;
  click(nodeId: string, thing: string, action: string): Promise<void>;
  idle(): Promise<void>;
}

export function createApp(options: AppOptions): App {
  const api = options.api;
  const root = options.root;
  const renderFn = options.renderFn ?? render;
  const interval = options.pollIntervalMs ?? 1000;

  let model = initialModel();
  let timer: ReturnType<typeof setInterval> | null = null;
  let polling = false;
  const pending = new Set<Promise<void>>();

  function paint(): void {
    root.innerHTML = renderFn(model);
  }

  function track(work: Promise<void>): Promise<void> {
    pending.add(work);
    void work.finally(() => pending.delete(work));
    return work;
  }

  async function loadRegistry(): Promise<void> {
    model = applyRegistry(model, await api.getNodes());
  }

  async function tick(): Promise<void> {
    if (polling) return;
    polling = true;
    try {
      if (!model.loaded) await loadRegistry();
      const { events } = await api.getEvents(model.cursor);
      if (events.length > 0) model = applyEvents(model, events);
      model = setBanner(model, null);
    } catch {
      // transient: keep the cursor, surface the outage, retry next tick
      model = setBanner(model, UNREACHABLE);
    } finally {
      polling = false;
      paint();
    }
  }

  async function click(nodeId: string, thing: string, action: string): Promise<void> {
    try {
      const { ticket } = await api.postCommand(nodeId, thing, action);
      model = commandSent(model, ticket, nodeId, thing, action);
    } catch (err) {
      const text =
        err instanceof ApiError ? `command failed: ${err.message}` : "command failed";
      model = commandFailed(model, text);
    }
    paint();
  }

  root.addEventListener("click", (ev) => {
    const target = ev.target as { closest?: (sel: string) => Element | null } | null;
    const button = target?.closest?.("button[data-action]");
    if (!button) return;
    const nodeId = button.getAttribute("data-node");
    const thing = button.getAttribute("data-thing");
    const action = button.getAttribute("data-action");
    if (nodeId && thing && action) void track(click(nodeId, thing, action));
  });

  return {
    model: () => model,

    async start(): Promise<void> {
      try {
        await loadRegistry();
      } catch {
        model = setBanner(model, UNREACHABLE);
      }
      paint();
      if (interval > 0) {
        timer = setInterval(() => void track(tick()), interval);
      }
    },

    stop(): void {
      if (timer !== null) clearInterval(timer);
      timer = null;
    },

    tick: () => track(tick()),
    click: (nodeId, thing, action) => track(click(nodeId, thing, action)),

    // settles once every in-flight click/poll has finished
    async idle(): Promise<void> {
      while (pending.size > 0) {
        await Promise.all([...pending]);
      }
    },
  };
}

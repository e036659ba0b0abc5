// Thin typed client over the controller JSON API. The fetch
// implementation is injectable so tests can run against a scripted
// controller.

import type { EventRecord, RegistryPayload } from "./model.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ApiClient {
  getNodes(): Promise<RegistryPayload>;
  postCommand(nodeId: string, thing: string, action: string): Promise<{ ticket: string }>;
  getEvents(since: number): Promise<{ events: EventRecord[] }>;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export function makeApi(baseUrl = "", fetchImpl?: FetchLike): ApiClient {
  const doFetch: FetchLike = fetchImpl ?? ((url, init) => fetch(url, init));

  async function request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await doFetch(baseUrl + path, init);
    let body: unknown = null;
    try {
      body = await res.json();
    } catch {
      // non-JSON body; the status check below decides what to do
    }
    if (!res.ok) {
      const message =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : `http ${res.status}`;
      throw new ApiError(res.status, message);
    }
    return body as T;
  }

  return {
    getNodes: () => request<RegistryPayload>("/api/nodes"),
    postCommand: (nodeId, thing, action) =>
      request<{ ticket: string }>(
        `/api/nodes/${encodeURIComponent(nodeId)}/things/${encodeURIComponent(thing)}/command`,
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ action }),
        },
      ),
    getEvents: (since) => request<{ events: EventRecord[] }>(`/api/events?since=${since}`),
  };
}

// Pure panel state. Every reducer returns a fresh model and touches no
// clocks or globals, so replaying the same inputs always lands on the
// same model.

export type TicketState = "sent" | "acked" | "timed_out";

export interface ThingView {
  name: string;
  actions: string[];
  state: string | null;
  updatedAt: number | null;
}

export interface NodeView {
  nodeId: string;
  things: ThingView[];
}

export interface Ticket {
  id: string;
  nodeId: string;
  thing: string;
  action: string;
  state: TicketState;
}

export interface Notice {
  id: string;
  kind: "info" | "error";
  text: string;
}

export interface PanelModel {
  loaded: boolean;
  nodes: NodeView[];
  tickets: Record<string, Ticket>;
  cursor: number;
  notices: Notice[];
  noticeSeq: number;
  banner: string | null;
}

export interface RegistryPayload {
  nodes: Array<{
    node_id: string;
    things: Array<{
      name: string;
      actions: string[];
      last_known_state: string | null;
      last_update: number | null;
    }>;
  }>;
}

export interface EventRecord {
  event_seq: number;
  kind: string;
  ts: number;
  payload: Record<string, unknown>;
}

const NOTICE_LIMIT = 6;

export function initialModel(): PanelModel {
  return {
    loaded: false,
    nodes: [],
    tickets: {},
    cursor: 0,
    notices: [],
    noticeSeq: 0,
    banner: null,
  };
}

export function applyRegistry(model: PanelModel, payload: RegistryPayload): PanelModel {
  const nodes = payload.nodes.map((n) => ({
    nodeId: n.node_id,
    things: n.things.map((t) => ({
      name: t.name,
      actions: [...t.actions],
      state: t.last_known_state,
      updatedAt: t.last_update,
    })),
  }));
  return { ...model, loaded: true, nodes, banner: null };
}

function pushNotice(model: PanelModel, id: string, kind: Notice["kind"], text: string): PanelModel {
  const notices = [...model.notices, { id, kind, text }].slice(-NOTICE_LIMIT);
  return { ...model, notices };
}

export function commandSent(
  model: PanelModel,
  ticket: string,
  nodeId: string,
  thing: string,
  action: string,
): PanelModel {
  const seq = model.noticeSeq + 1;
  const tickets = {
    ...model.tickets,
    [ticket]: { id: ticket, nodeId, thing, action, state: "sent" as const },
  };
  const next = { ...model, tickets, noticeSeq: seq };
  return pushNotice(next, `click-${seq}`, "info", `command sent: ${thing} ${action}`);
}

export function commandFailed(model: PanelModel, text: string): PanelModel {
  const seq = model.noticeSeq + 1;
  return pushNotice({ ...model, noticeSeq: seq }, `click-${seq}`, "error", text);
}

export function setBanner(model: PanelModel, text: string | null): PanelModel {
  return model.banner === text ? model : { ...model, banner: text };
}

function updateThing(
  nodes: NodeView[],
  nodeId: string,
  thing: string,
  state: string,
  ts: number,
): NodeView[] {
  return nodes.map((n) =>
    n.nodeId !== nodeId
      ? n
      : {
          ...n,
          things: n.things.map((t) =>
            t.name !== thing ? t : { ...t, state, updatedAt: ts },
          ),
        },
  );
}

function resolveTicket(
  tickets: Record<string, Ticket>,
  id: string,
  state: TicketState,
): Record<string, Ticket> {
  const known = tickets[id];
  if (!known || known.state !== "sent") return tickets;
  return { ...tickets, [id]: { ...known, state } };
}

/** Fold API events newer than the cursor into the model, in order. */
export function applyEvents(model: PanelModel, events: EventRecord[]): PanelModel {
  let next = model;
  for (const ev of events) {
    if (ev.event_seq <= next.cursor) {
      throw new Error(`event sequence regressed: ${ev.event_seq} after ${next.cursor}`);
    }
    next = { ...next, cursor: ev.event_seq };
    const p = ev.payload;
    if (ev.kind === "sent") {
      const id = p["ticket"] as string;
      if (!next.tickets[id]) {
        next = {
          ...next,
          tickets: {
            ...next.tickets,
            [id]: {
              id,
              nodeId: p["node_id"] as string,
              thing: p["thing"] as string,
              action: p["action"] as string,
              state: "sent",
            },
          },
        };
      }
    } else if (ev.kind === "status") {
      next = {
        ...next,
        nodes: updateThing(
          next.nodes,
          p["node_id"] as string,
          p["thing"] as string,
          p["state"] as string,
          ev.ts,
        ),
      };
      const id = p["ticket"];
      if (typeof id === "string") {
        next = { ...next, tickets: resolveTicket(next.tickets, id, "acked") };
      }
    } else if (ev.kind === "timeout") {
      const id = p["ticket"] as string;
      next = { ...next, tickets: resolveTicket(next.tickets, id, "timed_out") };
      next = pushNotice(
        next,
        `ev-${ev.event_seq}`,
        "error",
        `command timed out: ${p["thing"]}`,
      );
    } else if (ev.kind === "drop_observed") {
      next = pushNotice(
        next,
        `ev-${ev.event_seq}`,
        "error",
        `drop observed: ${p["reason"]} from ${p["sender"]}`,
      );
    }
    // unknown kinds advance the cursor and nothing else
  }
  return next;
}

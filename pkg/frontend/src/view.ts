// Rendering is a pure function of the model: same model, same markup.

import type { PanelModel, Ticket } from "./model.js";

function esc(value: unknown): string {
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function badge(thing: string, state: string | null): string {
  const label = state ?? "unknown";
  return `<span class="badge badge-${esc(label)}" data-badge="${esc(thing)}">${esc(label)}</span>`;
}

function buttons(nodeId: string, thing: string, actions: string[]): string {
  return actions
    .map(
      (a) =>
        `<button data-node="${esc(nodeId)}" data-thing="${esc(thing)}" data-action="${esc(a)}">${esc(a)}</button>`,
    )
    .join(" ");
}

function ticketRow(t: Ticket): string {
  return `<li class="ticket ticket-${esc(t.state)}">${esc(t.thing)} ${esc(t.action)}: ${esc(t.state)}</li>`;
}

export function render(model: PanelModel): string {
  const parts: string[] = [];
  if (model.banner) {
    parts.push(`<div class="banner">${esc(model.banner)}</div>`);
  }
  if (!model.loaded) {
    parts.push(`<p class="loading">loading registry...</p>`);
    return parts.join("\n");
  }
  if (model.nodes.length === 0) {
    parts.push(`<p class="empty">no nodes registered</p>`);
  }
  for (const node of model.nodes) {
    const rows = node.things
      .map(
        (t) =>
          `<tr class="thing" data-row="${esc(node.nodeId)}/${esc(t.name)}">` +
          `<td>${esc(t.name)}</td>` +
          `<td>${badge(t.name, t.state)}</td>` +
          `<td>${buttons(node.nodeId, t.name, t.actions)}</td></tr>`,
      )
      .join("\n");
    parts.push(
      `<section class="node"><h2>${esc(node.nodeId)}</h2>` +
        `<table><thead><tr><th>thing</th><th>status</th><th>actions</th></tr></thead>` +
        `<tbody>\n${rows}\n</tbody></table></section>`,
    );
  }
  const tickets = Object.values(model.tickets);
  if (tickets.length > 0) {
    parts.push(
      `<section class="tickets"><h2>commands</h2><ul>` +
        tickets.map(ticketRow).join("") +
        `</ul></section>`,
    );
  }
  if (model.notices.length > 0) {
    parts.push(
      `<ul class="notices">` +
        model.notices
          .map((n) => `<li class="notice notice-${esc(n.kind)}">${esc(n.text)}</li>`)
          .join("") +
        `</ul>`,
    );
  }
  return parts.join("\n");
}

// Edit history dialog: chronological diff timeline, newest first.
// Insertions render green, deletions red; non-text events (ratings,
// deletes, creation markers) are labeled entries without hunks.

import type { DiffHunk, HistoryEntry } from "./types";

const EDIT_TYPE_LABELS: Record<HistoryEntry["edit_type"], string> = {
  direct_edit: "Direct edit",
  prompt_regeneration: "Prompt regeneration",
  context_generation: "Generated from context",
  delete: "Deleted",
  rating: "Rated",
};

export function relativeTime(iso: string, now: Date = new Date()): string {
  const then = new Date(iso).getTime();
  const seconds = Math.max(0, Math.round((now.getTime() - then) / 1000));
  if (seconds < 60) return `${seconds}s ago`;
  const minutes = Math.round(seconds / 60);
  if (minutes < 60) return `${minutes}m ago`;
  const hours = Math.round(minutes / 60);
  if (hours < 24) return `${hours}h ago`;
  return `${Math.round(hours / 24)}d ago`;
}

export function renderHunks(hunks: DiffHunk[], doc: Document): HTMLElement {
  const container = doc.createElement("div");
  container.className = "diff-hunks";
  for (const hunk of hunks) {
    let node: HTMLElement;
    if (hunk.op === "insert") {
      node = doc.createElement("ins");
      node.className = "hunk-insert";
    } else if (hunk.op === "delete") {
      node = doc.createElement("del");
      node.className = "hunk-delete";
    } else {
      node = doc.createElement("span");
      node.className = "hunk-equal";
    }
    node.textContent = hunk.text;
    container.appendChild(node);
  }
  return container;
}

export function entryLabel(entry: HistoryEntry): string {
  const base = EDIT_TYPE_LABELS[entry.edit_type];
  if (entry.edit_type === "rating") {
    return `${base} ${entry.new_value}/5`;
  }
  if (
    entry.edit_type === "direct_edit" ||
    entry.edit_type === "prompt_regeneration"
  ) {
    return `${base} - ${entry.field_name}`;
  }
  return base;
}

export function renderHistory(
  entries: HistoryEntry[],
  doc: Document,
  now: Date = new Date(),
): HTMLElement {
  const list = doc.createElement("div");
  list.className = "history-timeline";
  if (entries.length === 0) {
    const empty = doc.createElement("p");
    empty.className = "history-empty";
    empty.textContent = "No edits yet.";
    list.appendChild(empty);
    return list;
  }
  // Server sends chronological ascending; the timeline shows newest first.
  const newestFirst = [...entries].reverse();
  for (const entry of newestFirst) {
    const item = doc.createElement("section");
    item.className = `history-entry history-${entry.edit_type}`;
    item.dataset.editId = entry.id;

    const header = doc.createElement("header");
    const label = doc.createElement("span");
    label.className = "history-label";
    label.textContent = entryLabel(entry);
    const when = doc.createElement("time");
    when.className = "history-when";
    when.dateTime = entry.created_at;
    when.textContent = relativeTime(entry.created_at, now);
    header.append(label, when);
    item.appendChild(header);

    if (entry.user_prompt) {
      const prompt = doc.createElement("p");
      prompt.className = "history-user-prompt";
      prompt.textContent = `"${entry.user_prompt}"`;
      item.appendChild(prompt);
    }
    if (entry.hunks && entry.hunks.length > 0) {
      item.appendChild(renderHunks(entry.hunks, doc));
    }
    list.appendChild(item);
  }
  return list;
}

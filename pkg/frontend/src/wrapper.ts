// Content wrapper: one generated artifact with its interaction affordances.
//
// Badges live in the DOM permanently and are revealed purely by CSS
// :hover / :focus-within rules (see styles.css) — no scripted reveal.
// Color semantics are fixed: blue = direct edit, purple = prompt
// regeneration, amber = context generation, neutral = history.
//
// Modes: viewing -> editing (inline textarea) -> viewing, and
// viewing -> regenerating (per-entity spinner; siblings stay interactive).

import { ApiClient, ApiError } from "./api";
import { renderHistory } from "./history";
import { showToast } from "./toast";
import type { EditableField, FieldScope, QuestionView } from "./types";

export type WrapperMode = "viewing" | "editing" | "regenerating";

export interface ContentWrapperOptions {
  client: ApiClient;
  question: QuestionView;
  document?: Document;
  /** Fired after any server-confirmed change to the artifact. */
  onChange?: (question: QuestionView) => void;
  /** Wired by the host to trigger a context-based generation task. */
  onContextGenerate?: () => void;
}

const FIELD_LABELS: Record<EditableField, string> = {
  question: "Research Question",
  contribution: "Contribution Summary",
};

export class ContentWrapper {
  readonly root: HTMLElement;
  question: QuestionView;
  mode: WrapperMode = "viewing";
  pendingSave = false;

  private readonly client: ApiClient;
  private readonly doc: Document;
  private readonly onChange?: (question: QuestionView) => void;
  private readonly onContextGenerate?: () => void;

  constructor(options: ContentWrapperOptions) {
    this.client = options.client;
    this.question = options.question;
    this.doc = options.document ?? document;
    this.onChange = options.onChange;
    this.onContextGenerate = options.onContextGenerate;
    this.root = this.doc.createElement("article");
    this.root.className = "ai-content-wrapper";
    this.root.dataset.entityId = this.question.id;
    this.root.tabIndex = 0; // keyboard focus reveals the badge rail
    this.render();
  }

  // -- rendering ------------------------------------------------------------

  private setMode(mode: WrapperMode): void {
    this.mode = mode;
    this.root.dataset.mode = mode;
    const spinner = this.root.querySelector<HTMLElement>(".spinner");
    if (spinner) {
      spinner.hidden = mode !== "regenerating";
    }
    this.root.classList.toggle("is-regenerating", mode === "regenerating");
  }

  private fieldValue(field: EditableField): string {
    return field === "question"
      ? this.question.current_question
      : this.question.current_contribution;
  }

  private render(): void {
    this.root.innerHTML = "";
    this.root.dataset.deleted = String(this.question.deleted);

    const rail = this.doc.createElement("div");
    rail.className = "badge-rail";
    rail.appendChild(
      this.badge("badge-regenerate", "Regenerate", () => this.openRegenerateDialog()),
    );
    rail.appendChild(
      this.badge("badge-context", "Context", () => this.onContextGenerate?.()),
    );
    rail.appendChild(this.badge("badge-history", "History", () => this.openHistoryDialog()));
    this.root.appendChild(rail);

    const content = this.doc.createElement("div");
    content.className = "content";
    for (const field of ["question", "contribution"] as EditableField[]) {
      content.appendChild(this.renderField(field));
    }
    this.root.appendChild(content);

    const controls = this.doc.createElement("div");
    controls.className = "controls";
    controls.appendChild(this.renderRating());
    const del = this.doc.createElement("button");
    del.type = "button";
    del.className = "delete-button";
    del.textContent = "Delete";
    del.addEventListener("click", () => void this.softDelete());
    controls.appendChild(del);
    this.root.appendChild(controls);

    const spinner = this.doc.createElement("div");
    spinner.className = "spinner";
    spinner.setAttribute("aria-label", "regenerating");
    spinner.hidden = true;
    this.root.appendChild(spinner);

    this.setMode(this.mode);
  }

  private badge(kind: string, label: string, onClick: () => void): HTMLButtonElement {
    const button = this.doc.createElement("button");
    button.type = "button";
    button.className = `badge ${kind}`;
    button.textContent = label;
    button.addEventListener("click", () => {
      if (this.question.deleted || this.mode === "regenerating") return;
      onClick();
    });
    return button;
  }

  private renderField(field: EditableField): HTMLElement {
    const section = this.doc.createElement("section");
    section.className = "field";
    section.dataset.field = field;

    const heading = this.doc.createElement("h3");
    heading.textContent = FIELD_LABELS[field];
    section.appendChild(heading);

    const edit = this.badge("badge-edit", "Edit", () => this.startInlineEdit(field));
    edit.classList.add("field-edit");
    section.appendChild(edit);

    const text = this.doc.createElement("p");
    text.className = "field-text";
    text.textContent = this.fieldValue(field);
    section.appendChild(text);
    return section;
  }

  private renderRating(): HTMLElement {
    const rating = this.doc.createElement("div");
    rating.className = "rating";
    rating.setAttribute("role", "radiogroup");
    rating.setAttribute("aria-label", "quality rating");
    for (let value = 1; value <= 5; value += 1) {
      const star = this.doc.createElement("button");
      star.type = "button";
      star.className = "star";
      star.dataset.value = String(value);
      star.setAttribute(
        "aria-checked",
        String(this.question.quality_rating === value),
      );
      star.classList.toggle(
        "star-active",
        this.question.quality_rating !== null && value <= this.question.quality_rating,
      );
      star.textContent = "*";
      star.addEventListener("click", () => void this.rate(value));
      rating.appendChild(star);
    }
    return rating;
  }

  private fieldText(field: EditableField): HTMLElement {
    const node = this.root.querySelector<HTMLElement>(
      `.field[data-field="${field}"] .field-text`,
    );
    if (!node) throw new Error(`field ${field} not rendered`);
    return node;
  }

  private applyQuestion(question: QuestionView): void {
    this.question = question;
    this.render();
    this.onChange?.(question);
  }

  // -- inline editing --------------------------------------------------------

  startInlineEdit(field: EditableField): void {
    if (this.mode !== "viewing" || this.question.deleted) return;
    this.setMode("editing");
    const section = this.root.querySelector<HTMLElement>(
      `.field[data-field="${field}"]`,
    )!;
    const text = this.fieldText(field);
    text.hidden = true;

    const editor = this.doc.createElement("div");
    editor.className = "inline-editor";
    const area = this.doc.createElement("textarea");
    area.value = this.fieldValue(field);
    const save = this.doc.createElement("button");
    save.type = "button";
    save.className = "editor-save";
    save.textContent = "Save";
    const cancel = this.doc.createElement("button");
    cancel.type = "button";
    cancel.className = "editor-cancel";
    cancel.textContent = "Cancel";
    editor.append(area, save, cancel);
    section.appendChild(editor);
    area.focus();

    const close = () => {
      editor.remove();
      text.hidden = false;
      this.setMode("viewing");
    };
    cancel.addEventListener("click", close);
    save.addEventListener("click", () => {
      const newValue = area.value;
      close();
      void this.saveEdit(field, newValue);
    });
  }

  /** Optimistic save: the UI shows the new value before the server acks. */
  async saveEdit(field: EditableField, newValue: string): Promise<void> {
    const original = this.fieldValue(field);
    this.fieldText(field).textContent = newValue; // optimistic render
    this.pendingSave = true;
    this.root.dataset.pending = "true";
    try {
      const updated = await this.client.directEdit(
        this.question.id,
        field,
        original,
        newValue,
      );
      this.applyQuestion(updated);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // Stale original: roll back to the server's current value.
        const fresh = await this.client.reloadQuestion(
          this.question.paper_id,
          this.question.id,
        );
        this.applyQuestion(fresh);
        showToast(
          "Edit conflict: this text changed elsewhere; reloaded the latest version.",
          "conflict",
          this.doc,
        );
      } else {
        this.fieldText(field).textContent = original;
        showToast(`Save failed: ${(error as Error).message}`, "error", this.doc);
      }
    } finally {
      this.pendingSave = false;
      delete this.root.dataset.pending;
    }
  }

  // -- prompt regeneration ---------------------------------------------------

  openRegenerateDialog(): HTMLElement {
    const overlay = this.doc.createElement("div");
    overlay.className = "dialog-overlay regen-dialog";
    const dialog = this.doc.createElement("div");
    dialog.className = "dialog";
    dialog.setAttribute("role", "dialog");
    dialog.setAttribute("aria-label", "Prompt-based regeneration");

    const title = this.doc.createElement("h2");
    title.textContent = "Prompt-based regeneration";
    const area = this.doc.createElement("textarea");
    area.className = "regen-prompt";
    area.placeholder =
      "Describe how the AI should rewrite this (e.g. make it specific to eye-tracking)";

    const scopeRow = this.doc.createElement("div");
    scopeRow.className = "regen-scope";
    for (const scope of ["question", "contribution", "both"] as FieldScope[]) {
      const label = this.doc.createElement("label");
      const radio = this.doc.createElement("input");
      radio.type = "radio";
      radio.name = `regen-scope-${this.question.id}`;
      radio.value = scope;
      radio.checked = scope === "question";
      label.append(radio, this.doc.createTextNode(scope));
      scopeRow.appendChild(label);
    }

    const actions = this.doc.createElement("div");
    actions.className = "dialog-actions";
    const cancel = this.doc.createElement("button");
    cancel.type = "button";
    cancel.className = "dialog-cancel";
    cancel.textContent = "Cancel";
    const submit = this.doc.createElement("button");
    submit.type = "button";
    submit.className = "dialog-submit";
    submit.textContent = "Regenerate";
    actions.append(cancel, submit);

    dialog.append(title, area, scopeRow, actions);
    overlay.appendChild(dialog);
    this.doc.body.appendChild(overlay);

    cancel.addEventListener("click", () => overlay.remove());
    submit.addEventListener("click", () => {
      const scope = overlay.querySelector<HTMLInputElement>(
        "input[type=radio]:checked",
      )?.value as FieldScope;
      const prompt = area.value;
      overlay.remove();
      void this.regenerate(prompt, scope ?? "question");
    });
    return overlay;
  }

  async regenerate(userPrompt: string, scope: FieldScope = "question"): Promise<void> {
    if (!userPrompt.trim()) {
      showToast("Regeneration needs an instruction.", "error", this.doc);
      return;
    }
    this.setMode("regenerating");
    try {
      const { question } = await this.client.regenerate(
        this.question.id,
        userPrompt,
        scope,
      );
      this.setMode("viewing");
      this.applyQuestion(question);
    } catch (error) {
      this.setMode("viewing");
      showToast(
        `Regeneration failed: ${(error as Error).message}`,
        "error",
        this.doc,
      );
    }
  }

  // -- history ---------------------------------------------------------------

  async openHistoryDialog(): Promise<HTMLElement> {
    const { history } = await this.client.history(this.question.id);
    const overlay = this.doc.createElement("div");
    overlay.className = "dialog-overlay history-dialog";
    const dialog = this.doc.createElement("div");
    dialog.className = "dialog";
    dialog.setAttribute("role", "dialog");
    dialog.setAttribute("aria-label", "Edit history");
    const title = this.doc.createElement("h2");
    title.textContent = "Edit history";
    const close = this.doc.createElement("button");
    close.type = "button";
    close.className = "dialog-cancel";
    close.textContent = "Close";
    close.addEventListener("click", () => overlay.remove());
    dialog.append(title, renderHistory(history, this.doc), close);
    overlay.appendChild(dialog);
    this.doc.body.appendChild(overlay);
    return overlay;
  }

  // -- rating / delete ---------------------------------------------------------

  async rate(value: number): Promise<void> {
    if (this.question.deleted) return;
    try {
      const updated = await this.client.rate(this.question.id, value);
      this.applyQuestion(updated);
    } catch (error) {
      showToast(`Rating failed: ${(error as Error).message}`, "error", this.doc);
    }
  }

  async softDelete(): Promise<void> {
    if (this.question.deleted) return;
    try {
      const updated = await this.client.remove(this.question.id);
      this.applyQuestion(updated);
    } catch (error) {
      showToast(`Delete failed: ${(error as Error).message}`, "error", this.doc);
    }
  }
}

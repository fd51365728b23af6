// Page bootstrap: paper picker, question list with content wrappers, and
// the generate-questions flow (fire the task, poll until terminal, render).

import { ApiClient } from "./api";
import { pollTask } from "./poller";
import { showToast } from "./toast";
import type { QuestionView } from "./types";
import { ContentWrapper } from "./wrapper";

export interface AppOptions {
  client: ApiClient;
  root: HTMLElement;
  sessionId: string;
  participantId: string;
  document?: Document;
}

export class QuestionBoard {
  private readonly client: ApiClient;
  private readonly root: HTMLElement;
  private readonly doc: Document;
  private readonly sessionId: string;
  private readonly participantId: string;
  private paperId: string | null = null;
  readonly wrappers: ContentWrapper[] = [];

  constructor(options: AppOptions) {
    this.client = options.client;
    this.root = options.root;
    this.doc = options.document ?? document;
    this.sessionId = options.sessionId;
    this.participantId = options.participantId;
  }

  async showPaper(paperId: string): Promise<void> {
    this.paperId = paperId;
    const { questions } = await this.client.paperQuestions(paperId);
    this.renderQuestions(questions);
  }

  private renderQuestions(questions: QuestionView[]): void {
    this.root.innerHTML = "";
    this.wrappers.length = 0;
    const live = questions.filter((q) => !q.deleted).length;
    const header = this.doc.createElement("header");
    header.className = "board-header";
    const counter = this.doc.createElement("span");
    counter.className = "question-counter";
    counter.textContent = `${live} of ${questions.length} Questions`;
    const generate = this.doc.createElement("button");
    generate.type = "button";
    generate.className = "generate-more";
    generate.textContent = questions.length ? "Generate More" : "Generate Questions";
    generate.addEventListener("click", () => void this.generate());
    header.append(counter, generate);
    this.root.appendChild(header);

    for (const question of questions) {
      const wrapper = new ContentWrapper({
        client: this.client,
        question,
        document: this.doc,
        onChange: () => this.refreshCounter(),
        onContextGenerate: () => void this.generate(),
      });
      this.wrappers.push(wrapper);
      this.root.appendChild(wrapper.root);
    }
  }

  private refreshCounter(): void {
    const counter = this.root.querySelector<HTMLElement>(".question-counter");
    if (!counter) return;
    const live = this.wrappers.filter((w) => !w.question.deleted).length;
    counter.textContent = `${live} of ${this.wrappers.length} Questions`;
  }

  async generate(): Promise<void> {
    if (!this.paperId) return;
    const button = this.root.querySelector<HTMLButtonElement>(".generate-more");
    if (button) button.disabled = true;
    try {
      const { task_id } = await this.client.createTask(
        "generate_evaluation_questions",
        {
          paper_id: this.paperId,
          session_id: this.sessionId,
          participant_id: this.participantId,
        },
      );
      const task = await pollTask(this.client, task_id);
      if (task.status === "failed") {
        showToast(`Generation failed: ${task.error_message}`, "error", this.doc);
        return;
      }
      await this.showPaper(this.paperId);
    } catch (error) {
      showToast(`Generation failed: ${(error as Error).message}`, "error", this.doc);
    } finally {
      if (button) button.disabled = false;
    }
  }
}

// Typed client for the editloop HTTP API. Covers exactly the server's
// route inventory; nothing else.

import type {
  EditableField,
  FieldScope,
  HistoryEntry,
  KnowledgeEntryView,
  PaperView,
  QuestionView,
  TaskView,
} from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

interface RequestOptions {
  method?: string;
  body?: unknown;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private readonly participantId?: string,
  ) {}

  private async request<T>(path: string, options: RequestOptions = {}): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.participantId) {
      headers["X-Participant-Id"] = this.participantId;
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: options.method ?? "GET",
      headers,
      body: options.body === undefined ? undefined : JSON.stringify(options.body),
    });
    if (!response.ok) {
      let code = "internal_error";
      let message = `${response.status}`;
      let field: string | undefined;
      try {
        const body = (await response.json()) as {
          code?: string;
          message?: string;
          field?: string;
        };
        code = body.code ?? code;
        message = body.message ?? message;
        field = body.field;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, message, field);
    }
    return (await response.json()) as T;
  }

  listPapers(): Promise<{ papers: PaperView[] }> {
    return this.request("/papers");
  }

  createPaper(body: {
    title: string;
    authors?: string;
    abstract?: string;
    full_text?: string;
    source_url?: string | null;
  }): Promise<{ paper: PaperView; task_id: string | null }> {
    return this.request("/papers", { method: "POST", body });
  }

  paperQuestions(paperId: string): Promise<{ questions: QuestionView[] }> {
    return this.request(`/papers/${paperId}/questions`);
  }

  directEdit(
    questionId: string,
    fieldName: EditableField,
    originalValue: string,
    newValue: string,
  ): Promise<QuestionView> {
    return this.request(`/questions/${questionId}`, {
      method: "PATCH",
      body: {
        field_name: fieldName,
        original_value: originalValue,
        new_value: newValue,
      },
    });
  }

  regenerate(
    questionId: string,
    userPrompt: string,
    fieldScope: FieldScope = "question",
  ): Promise<{ question: QuestionView; edit_ids: string[] }> {
    return this.request(`/questions/${questionId}/regenerate`, {
      method: "POST",
      body: { user_prompt: userPrompt, field_scope: fieldScope },
    });
  }

  rate(questionId: string, rating: number): Promise<QuestionView> {
    return this.request(`/questions/${questionId}/rating`, {
      method: "POST",
      body: { rating },
    });
  }

  remove(questionId: string): Promise<QuestionView> {
    return this.request(`/questions/${questionId}`, { method: "DELETE" });
  }

  history(questionId: string): Promise<{ history: HistoryEntry[] }> {
    return this.request(`/questions/${questionId}/history`);
  }

  createTask(
    taskType: string,
    inputData: Record<string, unknown>,
  ): Promise<{ task_id: string }> {
    return this.request("/tasks", {
      method: "POST",
      body: { task_type: taskType, input_data: inputData },
    });
  }

  getTask(taskId: string): Promise<TaskView> {
    return this.request(`/tasks/${taskId}`);
  }

  projectKnowledge(projectId: string): Promise<{ entries: KnowledgeEntryView[] }> {
    return this.request(`/projects/${projectId}/knowledge`);
  }

  projectStats(projectId: string): Promise<Record<string, unknown>> {
    return this.request(`/projects/${projectId}/stats`);
  }

  /** Re-read one question by scanning its paper's question list. */
  async reloadQuestion(paperId: string, questionId: string): Promise<QuestionView> {
    const { questions } = await this.paperQuestions(paperId);
    const found = questions.find((q) => q.id === questionId);
    if (!found) {
      throw new ApiError(404, "not_found", `question ${questionId} not found`);
    }
    return found;
  }
}

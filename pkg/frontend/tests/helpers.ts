import type { FetchLike } from "../src/api";
import type { HistoryEntry, QuestionView } from "../src/types";

export interface RecordedCall {
  method: string;
  url: string;
  body: unknown;
}

type RouteResult = { status?: number; body: unknown };
type Responder =
  | RouteResult
  | ((body: unknown, url: string) => RouteResult | Promise<RouteResult>);

interface Route {
  method: string;
  matcher: string | RegExp;
  respond: Responder;
  once: boolean;
}

/** Scripted fetch double that records every call it serves. */
export class FetchStub {
  readonly calls: RecordedCall[] = [];
  private routes: Route[] = [];

  on(method: string, matcher: string | RegExp, respond: Responder): this {
    this.routes.push({ method, matcher, respond, once: false });
    return this;
  }

  once(method: string, matcher: string | RegExp, respond: Responder): this {
    this.routes.push({ method, matcher, respond, once: true });
    return this;
  }

  callsTo(method: string, matcher: string | RegExp): RecordedCall[] {
    return this.calls.filter(
      (c) =>
        c.method === method &&
        (typeof matcher === "string" ? c.url === matcher : matcher.test(c.url)),
    );
  }

  readonly fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ method, url, body });
    const index = this.routes.findIndex(
      (r) =>
        r.method === method &&
        (typeof r.matcher === "string" ? r.matcher === url : r.matcher.test(url)),
    );
    if (index === -1) {
      throw new Error(`FetchStub: no route for ${method} ${url}`);
    }
    const route = this.routes[index]!;
    if (route.once) {
      this.routes.splice(index, 1);
    }
    const result =
      typeof route.respond === "function"
        ? await route.respond(body, url)
        : route.respond;
    return new Response(JSON.stringify(result.body), {
      status: result.status ?? 200,
      headers: { "Content-Type": "application/json" },
    });
  };
}

export function makeQuestion(overrides: Partial<QuestionView> = {}): QuestionView {
  return {
    id: "q1",
    paper_id: "paper-1",
    session_id: "s1",
    position: 1,
    initial_question: "How can visualization systems assist users?",
    current_question: "How can visualization systems assist users?",
    initial_contribution: "It would map assistance patterns.",
    current_contribution: "It would map assistance patterns.",
    quality_rating: null,
    deleted: false,
    dist_q_chars: 0,
    dist_q_words: 0,
    dist_c_chars: 0,
    dist_c_words: 0,
    knowledge_processed: false,
    created_at: "2026-01-05T09:00:00+00:00",
    ...overrides,
  };
}

export function makeHistoryEntry(
  overrides: Partial<HistoryEntry> = {},
): HistoryEntry {
  return {
    id: "e1",
    entity_type: "research_question",
    entity_id: "q1",
    edit_type: "direct_edit",
    field_name: "question",
    original_value: "a",
    new_value: "b",
    user_prompt: null,
    created_at: "2026-01-05T09:01:00+00:00",
    processed: false,
    hunks: null,
    ...overrides,
  };
}

/** Deferred promise for holding a response open mid-test. */
export function deferred<T>() {
  let resolve!: (value: T) => void;
  let reject!: (reason?: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

/** Server-computed hunks for the fixture edit, frozen from the backend:
 * compute_diff("How can visualization systems assist users?",
 *              "How can interactive visualization systems assist low-vision users?")
 */
export const SERVER_DIFF_FIXTURE = [
  { op: "equal", text: "How can" },
  { op: "insert", text: " interactive" },
  { op: "equal", text: " visualization systems assist " },
  { op: "insert", text: "low-vision " },
  { op: "equal", text: "users?" },
] as const;

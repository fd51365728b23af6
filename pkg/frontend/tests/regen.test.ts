import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { ContentWrapper } from "../src/wrapper";
import { deferred, FetchStub, makeQuestion } from "./helpers";

const REGENERATED = "How do eye-tracking methods adapt dashboards in real time?";

function buildPair(stub: FetchStub) {
  const client = new ApiClient("", stub.fetch);
  const first = new ContentWrapper({ client, question: makeQuestion(), document });
  const sibling = new ContentWrapper({
    client,
    question: makeQuestion({ id: "q2", position: 2 }),
    document,
  });
  document.body.append(first.root, sibling.root);
  return { first, sibling };
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("regeneration dialog flow", () => {
  it("cancel closes the dialog with zero network calls", () => {
    const stub = new FetchStub();
    const { first } = buildPair(stub);
    first.root.querySelector<HTMLButtonElement>(".badge-regenerate")!.click();
    const overlay = document.querySelector<HTMLElement>(".regen-dialog");
    expect(overlay).not.toBeNull();
    overlay!.querySelector<HTMLButtonElement>(".dialog-cancel")!.click();
    expect(document.querySelector(".regen-dialog")).toBeNull();
    expect(stub.calls).toHaveLength(0);
  });

  it("shows a per-entity spinner while the sibling stays editable", async () => {
    const gate = deferred<void>();
    const stub = new FetchStub().on(
      "POST",
      "/questions/q1/regenerate",
      async (body) => {
        await gate.promise;
        return {
          body: {
            question: makeQuestion({ current_question: REGENERATED, dist_q_chars: 30 }),
            edit_ids: ["e9"],
          },
        };
      },
    );
    const { first, sibling } = buildPair(stub);
    first.root.querySelector<HTMLButtonElement>(".badge-regenerate")!.click();
    const overlay = document.querySelector<HTMLElement>(".regen-dialog")!;
    overlay.querySelector<HTMLTextAreaElement>(".regen-prompt")!.value =
      "make it more specific to eye-tracking";
    overlay.querySelector<HTMLButtonElement>(".dialog-submit")!.click();

    // The targeted entity is regenerating...
    expect(first.root.dataset.mode).toBe("regenerating");
    expect(first.root.querySelector<HTMLElement>(".spinner")!.hidden).toBe(false);
    // ...while the sibling accepts an inline edit.
    sibling.startInlineEdit("question");
    expect(sibling.root.dataset.mode).toBe("editing");
    expect(
      sibling.root.querySelector(".inline-editor textarea"),
    ).not.toBeNull();

    gate.resolve();
    await new Promise((r) => setTimeout(r, 0));
    expect(first.root.dataset.mode).toBe("viewing");
    expect(
      first.root.querySelector('[data-field="question"] .field-text')!.textContent,
    ).toBe(REGENERATED);
    const call = stub.callsTo("POST", "/questions/q1/regenerate")[0]!;
    expect(call.body).toEqual({
      user_prompt: "make it more specific to eye-tracking",
      field_scope: "question",
    });
  });

  it("restores viewing with an error toast when the task fails", async () => {
    const stub = new FetchStub().on("POST", "/questions/q1/regenerate", {
      status: 502,
      body: { code: "gateway_error", message: "regeneration failed: downstream" },
    });
    const { first } = buildPair(stub);
    const before = first.question.current_question;
    await first.regenerate("anything");
    expect(first.root.dataset.mode).toBe("viewing");
    expect(
      first.root.querySelector('[data-field="question"] .field-text')!.textContent,
    ).toBe(before);
    expect(document.querySelector(".toast-error")).not.toBeNull();
  });

  it("rejects an empty instruction without a network call", async () => {
    const stub = new FetchStub();
    const { first } = buildPair(stub);
    await first.regenerate("   ");
    expect(stub.calls).toHaveLength(0);
    expect(document.querySelector(".toast-error")).not.toBeNull();
  });
});

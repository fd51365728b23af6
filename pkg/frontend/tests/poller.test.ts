import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { PollTimeoutError, pollTask } from "../src/poller";
import { FetchStub } from "./helpers";

function taskBody(status: string) {
  return {
    task_id: "t1",
    task_type: "generate_evaluation_questions",
    status,
    output_data: status === "completed" ? { question_ids: ["a", "b", "c"] } : null,
    error_message: status === "failed" ? "boom" : null,
    attempts: 1,
    logs: [],
  };
}

function clientWithStatuses(statuses: string[]) {
  const stub = new FetchStub();
  for (const status of statuses) {
    stub.once("GET", "/tasks/t1", { body: taskBody(status) });
  }
  return new ApiClient("", stub.fetch);
}

describe("pollTask", () => {
  it("polls until the task completes, backing off 1.5s toward 5s", async () => {
    const delays: number[] = [];
    const client = clientWithStatuses([
      "queued",
      "running",
      "running",
      "running",
      "completed",
    ]);
    const task = await pollTask(client, "t1", {
      sleep: async (ms) => {
        delays.push(ms);
      },
    });
    expect(task.status).toBe("completed");
    expect(delays).toEqual([1500, 3000, 5000, 5000]);
  });

  it("resolves on failed too, leaving handling to the caller", async () => {
    const client = clientWithStatuses(["running", "failed"]);
    const task = await pollTask(client, "t1", { sleep: async () => {} });
    expect(task.status).toBe("failed");
    expect(task.error_message).toBe("boom");
  });

  it("raises after maxPolls without a terminal status", async () => {
    const client = clientWithStatuses(["queued", "queued", "queued"]);
    await expect(
      pollTask(client, "t1", { sleep: async () => {}, maxPolls: 3 }),
    ).rejects.toBeInstanceOf(PollTimeoutError);
  });

  it("reports intermediate views through onUpdate", async () => {
    const seen: string[] = [];
    const client = clientWithStatuses(["queued", "completed"]);
    await pollTask(client, "t1", {
      sleep: async () => {},
      onUpdate: (t) => seen.push(t.status),
    });
    expect(seen).toEqual(["queued", "completed"]);
  });
});

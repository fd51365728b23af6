// Task progress channel: the server pushes nothing, clients poll.

import type { ApiClient } from "./api";
import type { TaskView } from "./types";

export interface PollOptions {
  /** First delay between polls; backs off from here. */
  intervalMs?: number;
  /** Backoff ceiling. */
  maxIntervalMs?: number;
  /** Give up after this many polls (0 = unbounded). */
  maxPolls?: number;
  /** Injectable for tests. */
  sleep?: (ms: number) => Promise<void>;
  /** Called after each poll with the latest view. */
  onUpdate?: (task: TaskView) => void;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class PollTimeoutError extends Error {
  constructor(readonly taskId: string, polls: number) {
    super(`task ${taskId} not terminal after ${polls} polls`);
    this.name = "PollTimeoutError";
  }
}

/** Poll until the task reaches completed or failed; returns the final view. */
export async function pollTask(
  client: ApiClient,
  taskId: string,
  options: PollOptions = {},
): Promise<TaskView> {
  const intervalMs = options.intervalMs ?? 1500;
  const maxIntervalMs = options.maxIntervalMs ?? 5000;
  const sleep = options.sleep ?? defaultSleep;
  let delay = intervalMs;
  let polls = 0;
  for (;;) {
    const task = await client.getTask(taskId);
    polls += 1;
    options.onUpdate?.(task);
    if (task.status === "completed" || task.status === "failed") {
      return task;
    }
    if (options.maxPolls && polls >= options.maxPolls) {
      throw new PollTimeoutError(taskId, polls);
    }
    await sleep(delay);
    delay = Math.min(delay * 2, maxIntervalMs);
  }
}

export { ApiClient, ApiError } from "./api";
export { QuestionBoard } from "./app";
export { entryLabel, relativeTime, renderHistory, renderHunks } from "./history";
export { PollTimeoutError, pollTask } from "./poller";
export { showToast } from "./toast";
export { ContentWrapper } from "./wrapper";
export type {
  DiffHunk,
  EditableField,
  FieldScope,
  HistoryEntry,
  KnowledgeEntryView,
  PaperView,
  QuestionView,
  TaskView,
} from "./types";

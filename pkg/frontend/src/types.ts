// Server view shapes, mirroring the API's JSON serialization.

export interface QuestionView {
  id: string;
  paper_id: string;
  session_id: string;
  position: number;
  initial_question: string;
  current_question: string;
  initial_contribution: string;
  current_contribution: string;
  quality_rating: number | null;
  deleted: boolean;
  dist_q_chars: number;
  dist_q_words: number;
  dist_c_chars: number;
  dist_c_words: number;
  knowledge_processed: boolean;
  created_at: string;
}

export interface PaperView {
  id: string;
  title: string;
  authors: string;
  abstract: string;
  full_text: string;
  source_url: string | null;
  created_at: string;
}

export type DiffOp = "equal" | "insert" | "delete";

export interface DiffHunk {
  op: DiffOp;
  text: string;
}

export interface HistoryEntry {
  id: string;
  entity_type: string;
  entity_id: string;
  edit_type:
    | "direct_edit"
    | "prompt_regeneration"
    | "context_generation"
    | "delete"
    | "rating";
  field_name: string;
  original_value: string;
  new_value: string;
  user_prompt: string | null;
  created_at: string;
  processed: boolean;
  hunks: DiffHunk[] | null;
}

export interface TaskLogView {
  task_id: string;
  sequence_no: number;
  log_type: string;
  message: string;
  created_at: string;
}

export interface TaskView {
  task_id: string;
  task_type: string;
  status: "queued" | "running" | "completed" | "failed";
  output_data: Record<string, unknown> | null;
  error_message: string | null;
  attempts: number;
  logs: TaskLogView[];
}

export interface KnowledgeEntryView {
  id: string;
  text: string;
  category: string;
  scope: string;
  scope_id: string | null;
  source_question_ids: string[];
  created_by: string;
  created_at: string;
}

export type EditableField = "question" | "contribution";
export type FieldScope = "question" | "contribution" | "both";

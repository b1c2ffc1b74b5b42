// Wire types for the labeling service HTTP API.

export type VariableKind = "single_choice" | "multi_choice" | "count" | "free_text";

export interface OptionDef {
  code: string;
  label: string;
  definition: string;
  reference_image_url?: string;
}

export interface VariableDef {
  key: string;
  label: string;
  kind: VariableKind;
  required: boolean;
  options?: OptionDef[];
  min_count?: number;
  max_count?: number;
}

export interface Codebook {
  schema_id: string;
  version: string;
  draft?: boolean;
  variables: VariableDef[];
}

export interface Task {
  task_id: string;
  point_id: string;
  lat: number;
  lon: number;
  image_url: string;
  gsv_url: string;
  replication_k: number;
}

// Answers use the server's single-key tagged encoding.
export type AnswerJson =
  | { choice: string }
  | { choices: string[] }
  | { count: number }
  | { text: string };

export type AnswersMap = Record<string, AnswerJson>;

export interface Violation {
  variable_key: string;
  reason: string;
}

export interface SubmitPayload {
  task_id: string;
  rater_id: string;
  answers: AnswersMap;
  duration_s?: number;
  no_coverage?: boolean;
}

export interface SubmitOutcome {
  status: "accepted" | "conflict" | "rejected";
  response_id?: string;
  reason?: string;
  violations?: Violation[];
}

export interface Progress {
  total_tasks: number;
  total_expected_responses: number;
  responses_received: number;
  per_rater: Record<string, { assigned: number; completed: number }>;
  mean_duration_s: number | null;
}

/** Wire types for the /v1/ HTTP+JSON API. */

export interface HealthInfo {
  status: string;
  now: string;
  test_mode: boolean;
  events: number;
}

export interface GuidelineSummary {
  guideline_id: string;
  title: string;
  version: number;
  document_version: string;
  tasks: number;
}

export interface WorkItemView {
  item_id: string;
  case_id: string;
  task_id: string;
  role: string;
  state: WorkItemState;
  created_at: string;
  deadline: string | null;
  assignee: string | null;
  payload: Record<string, unknown>;
}

export type WorkItemState =
  | "Notified"
  | "InProgress"
  | "Completed"
  | "Cancelled"
  | "Expired";

export interface PendingTimer {
  timer_id: number;
  purpose: string;
  task_id: string;
  due_at: string;
  [key: string]: unknown;
}

export interface CaseView {
  case_id: string;
  guideline_id: string;
  deployment_version: number;
  document_version: string;
  patient_ref: string;
  status: "Running" | "Completed" | "Aborted";
  outcome: string | null;
  created_at: string;
  updated_at: string;
  event_count: number;
  task_states: Record<string, string>;
  bindings: Record<string, unknown>;
  result_flags: Record<string, string>;
  taken_branches: Record<string, string>;
  work_items: WorkItemView[];
  pending_timers: PendingTimer[];
}

export interface SceneQuestion {
  id: string;
  prompt: string;
  options: string[];
}

/** Survey position: one question per scene, or the completion scene. */
export interface SceneView {
  active: boolean;
  kind?: "Scene" | "SurveyComplete";
  index?: number;
  total?: number;
  transitions?: number;
  question?: SceneQuestion;
}

export interface EventEntry {
  global_seq: number;
  case_id: string;
  case_seq: number;
  kind: string;
  at: string;
  actor: string | null;
  payload: Record<string, unknown>;
  annotations: Record<string, unknown>;
  raw_hl7: string | null;
}

export interface LatencyMetrics {
  count: number;
  p50_ms: number | null;
  p95_ms: number | null;
  max_ms: number | null;
}

export interface ValidationFinding {
  severity: string;
  code: string;
  message: string;
  where: string;
}

export interface ValidationReport {
  deployable: boolean;
  errors: ValidationFinding[];
  warnings: ValidationFinding[];
}

/** A notification banner; stays up until explicitly dismissed. */
export interface Notification {
  id: string;
  caseId: string;
  seq: number;
  at: string;
  level: string;
  reason: string;
  message: string;
  role: string | null;
  dismissed: boolean;
}

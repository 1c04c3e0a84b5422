/** Console state and its reducer.
 *
 * The whole UI renders from one `AppState`, and the state is a pure
 * function of what the server said: REST responses arrive as
 * authoritative snapshots, stream entries as incremental deltas, and
 * the only local inputs are selections and notification dismissals.
 * Reloading the page and replaying the same responses reconstructs
 * the same view.
 */

import type {
  CaseView,
  EventEntry,
  Notification,
  SceneView,
  WorkItemState,
  WorkItemView,
} from "./types.js";
import type { StreamStatus } from "./sse.js";

export interface AppState {
  cases: Record<string, CaseView>;
  workItems: Record<string, WorkItemView>;
  notifications: Notification[];
  selectedCaseId: string | null;
  survey: SceneView | null;
  role: string;
  actor: string;
  streamStatus: StreamStatus;
  /** Highest stream sequence folded in; guards against replays. */
  appliedSeq: number;
  lastError: string | null;
}

export function initialState(): AppState {
  return {
    cases: {},
    workItems: {},
    notifications: [],
    selectedCaseId: null,
    survey: null,
    role: "doctor",
    actor: "console",
    streamStatus: "connecting",
    appliedSeq: 0,
    lastError: null,
  };
}

export type Action =
  | { type: "cases-loaded"; views: CaseView[] }
  | { type: "case-snapshot"; view: CaseView }
  | { type: "work-items-loaded"; items: WorkItemView[] }
  | { type: "survey-loaded"; caseId: string; scene: SceneView }
  | { type: "stream-entry"; entry: EventEntry }
  | { type: "stream-status"; status: StreamStatus }
  | { type: "select-case"; caseId: string | null }
  | { type: "dismiss-notification"; id: string }
  | { type: "identity"; role: string; actor: string }
  | { type: "error"; message: string | null };

export function reduce(state: AppState, action: Action): AppState {
  switch (action.type) {
    case "cases-loaded": {
      const cases = { ...state.cases };
      let workItems = { ...state.workItems };
      for (const view of action.views) {
        cases[view.case_id] = view;
        workItems = mergeItems(workItems, view.work_items);
      }
      return { ...state, cases, workItems };
    }
    case "case-snapshot": {
      const view = action.view;
      return {
        ...state,
        cases: { ...state.cases, [view.case_id]: view },
        workItems: mergeItems(state.workItems, view.work_items),
      };
    }
    case "work-items-loaded":
      return { ...state, workItems: mergeItems(state.workItems, action.items) };
    case "survey-loaded":
      if (action.caseId !== state.selectedCaseId) return state;
      return { ...state, survey: action.scene };
    case "stream-entry":
      return applyEntry(state, action.entry);
    case "stream-status":
      return { ...state, streamStatus: action.status };
    case "select-case":
      if (action.caseId === state.selectedCaseId) return state;
      return { ...state, selectedCaseId: action.caseId, survey: null };
    case "dismiss-notification":
      return {
        ...state,
        notifications: state.notifications.map((n) =>
          n.id === action.id ? { ...n, dismissed: true } : n,
        ),
      };
    case "identity":
      return { ...state, role: action.role, actor: action.actor };
    case "error":
      return { ...state, lastError: action.message };
  }
}

function mergeItems(
  existing: Record<string, WorkItemView>,
  incoming: WorkItemView[],
): Record<string, WorkItemView> {
  const merged = { ...existing };
  for (const item of incoming) merged[item.item_id] = item;
  return merged;
}

// -- stream entries -----------------------------------------------------------

function applyEntry(state: AppState, entry: EventEntry): AppState {
  if (entry.global_seq <= state.appliedSeq) return state;
  let next: AppState = { ...state, appliedSeq: entry.global_seq };
  const p = entry.payload;
  switch (entry.kind) {
    case "CaseStarted":
      next = touchCase(next, entry, (view) => view);
      break;
    case "TaskEnabled":
      next = setTaskState(next, entry, str(p.task_id), "Enabled");
      break;
    case "TaskCompleted":
      next = setTaskState(next, entry, str(p.task_id), "Completed");
      break;
    case "TaskSkipped":
      next = setTaskState(next, entry, str(p.task_id), "Skipped");
      break;
    case "WorkItemCreated": {
      const item: WorkItemView = {
        item_id: str(p.item_id),
        case_id: entry.case_id,
        task_id: str(p.task_id),
        role: str(p.role),
        state: "Notified",
        created_at: entry.at,
        deadline: typeof p.deadline === "string" ? p.deadline : null,
        assignee: null,
        payload: isRecord(p.payload) ? p.payload : {},
      };
      next = { ...next, workItems: { ...next.workItems, [item.item_id]: item } };
      break;
    }
    case "WorkItemStarted":
      next = setItemState(next, str(p.item_id), "InProgress", (item) => ({
        ...item,
        assignee: typeof p.assignee === "string" ? p.assignee : item.assignee,
      }));
      break;
    case "WorkItemCompleted":
      next = setItemState(next, str(p.item_id), "Completed");
      break;
    case "WorkItemCancelled":
      next = setItemState(next, str(p.item_id), "Cancelled");
      break;
    case "WorkItemExpired":
      next = setItemState(next, str(p.item_id), "Expired");
      break;
    case "NotificationRaised": {
      const note: Notification = {
        id: `${entry.case_id}#${entry.global_seq}`,
        caseId: entry.case_id,
        seq: entry.global_seq,
        at: entry.at,
        level: typeof p.level === "string" ? p.level : "info",
        reason: typeof p.reason === "string" ? p.reason : "",
        message: typeof p.message === "string" ? p.message : "",
        role: typeof p.role === "string" ? p.role : null,
        dismissed: false,
      };
      next = { ...next, notifications: [...next.notifications, note] };
      break;
    }
    case "DataBound":
      next = touchCase(next, entry, (view) => ({
        ...view,
        bindings: { ...view.bindings, [str(p.item)]: p.value },
      }));
      break;
    case "DecisionTaken":
      next = touchCase(next, entry, (view) => ({
        ...view,
        taken_branches: {
          ...view.taken_branches,
          [str(p.task_id)]: str(p.branch),
        },
      }));
      break;
    case "CaseCompleted":
      next = touchCase(next, entry, (view) => ({
        ...view,
        status: "Completed",
        outcome: typeof p.outcome === "string" ? p.outcome : view.outcome,
      }));
      break;
    case "CaseAborted":
      next = touchCase(next, entry, (view) => ({
        ...view,
        status: "Aborted",
      }));
      break;
    default:
      break; // timers, scene answers, orders: nothing the console tracks live
  }
  return bumpCaseClock(next, entry);
}

function touchCase(
  state: AppState,
  entry: EventEntry,
  update: (view: CaseView) => CaseView,
): AppState {
  const existing = state.cases[entry.case_id] ?? stubCase(entry);
  return {
    ...state,
    cases: { ...state.cases, [entry.case_id]: update(existing) },
  };
}

function stubCase(entry: EventEntry): CaseView {
  const p = entry.payload;
  return {
    case_id: entry.case_id,
    guideline_id: typeof p.guideline_id === "string" ? p.guideline_id : "",
    deployment_version:
      typeof p.deployment_version === "number" ? p.deployment_version : 0,
    document_version:
      typeof p.document_version === "string" ? p.document_version : "",
    patient_ref: typeof p.patient_ref === "string" ? p.patient_ref : "",
    status: "Running",
    outcome: null,
    created_at: entry.at,
    updated_at: entry.at,
    event_count: 0,
    task_states: {},
    bindings: {},
    result_flags: {},
    taken_branches: {},
    work_items: [],
    pending_timers: [],
  };
}

function setTaskState(
  state: AppState,
  entry: EventEntry,
  taskId: string,
  value: string,
): AppState {
  return touchCase(state, entry, (view) => ({
    ...view,
    task_states: { ...view.task_states, [taskId]: value },
  }));
}

function setItemState(
  state: AppState,
  itemId: string,
  value: WorkItemState,
  extra?: (item: WorkItemView) => WorkItemView,
): AppState {
  const item = state.workItems[itemId];
  if (item === undefined) return state;
  let updated: WorkItemView = { ...item, state: value };
  if (extra) updated = extra(updated);
  return { ...state, workItems: { ...state.workItems, [itemId]: updated } };
}

function bumpCaseClock(state: AppState, entry: EventEntry): AppState {
  const view = state.cases[entry.case_id];
  if (view === undefined) return state;
  return {
    ...state,
    cases: {
      ...state.cases,
      [entry.case_id]: {
        ...view,
        updated_at: entry.at,
        event_count: Math.max(view.event_count, entry.case_seq),
      },
    },
  };
}

function str(value: unknown): string {
  return typeof value === "string" ? value : "";
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

// -- selectors ----------------------------------------------------------------

const LIVE_STATES: ReadonlySet<WorkItemState> = new Set([
  "Notified",
  "InProgress",
  "Expired",
]);

/** Open work items for a role (completed and cancelled ones drop out). */
export function activeWorkItems(
  state: AppState,
  role?: string,
): WorkItemView[] {
  return Object.values(state.workItems)
    .filter((item) => LIVE_STATES.has(item.state))
    .filter((item) => role === undefined || item.role === role)
    .sort(
      (a, b) =>
        a.created_at.localeCompare(b.created_at) ||
        a.item_id.localeCompare(b.item_id),
    );
}

/** Banners still on screen: not dismissed, addressed to this role (or all). */
export function visibleNotifications(
  state: AppState,
  role?: string,
): Notification[] {
  return state.notifications
    .filter((n) => !n.dismissed)
    .filter((n) => role === undefined || n.role === null || n.role === role)
    .sort((a, b) => a.seq - b.seq);
}

export function caseList(state: AppState): CaseView[] {
  return Object.values(state.cases).sort(
    (a, b) =>
      a.created_at.localeCompare(b.created_at) ||
      a.case_id.localeCompare(b.case_id),
  );
}

export function selectedCase(state: AppState): CaseView | null {
  if (state.selectedCaseId === null) return null;
  return state.cases[state.selectedCaseId] ?? null;
}

/** DOM renderers: plain functions from view models to elements.
 *
 * No framework and no hidden state — every renderer rebuilds its
 * region from the current `AppState` projection, so what is on screen
 * is exactly what the reducer holds.
 */

import type { CaseView, Notification, WorkItemView } from "./types.js";
import type { PathwayProposal, WizardView } from "./survey.js";
import type { LatencySummary } from "./latency.js";
import type { StreamStatus } from "./sse.js";

type Child = Node | string;

export function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

// -- notifications --------------------------------------------------------------

export function renderNotifications(
  notes: Notification[],
  onDismiss: (id: string) => void,
): HTMLElement {
  const root = el("div", { class: "notifications" });
  for (const note of notes) {
    const dismiss = el("button", { class: "dismiss", type: "button" }, ["Dismiss"]);
    dismiss.addEventListener("click", () => onDismiss(note.id));
    root.append(
      el(
        "div",
        {
          class: `banner banner-${note.level}`,
          role: "alert",
          "data-notification-id": note.id,
        },
        [
          el("span", { class: "banner-reason" }, [note.reason]),
          el("span", { class: "banner-message" }, [note.message]),
          el("span", { class: "banner-case" }, [note.caseId]),
          dismiss,
        ],
      ),
    );
  }
  return root;
}

// -- survey wizard ----------------------------------------------------------------

export function renderWizard(
  vm: WizardView,
  proposal: PathwayProposal | null,
  onAnswer: (questionId: string, option: string) => void,
): HTMLElement {
  const root = el("section", { class: "wizard" });
  if (vm.kind === "inactive") {
    root.append(el("p", { class: "wizard-idle" }, ["No survey in progress."]));
    return root;
  }
  if (vm.kind === "question") {
    root.append(
      el("p", { class: "wizard-progress" }, [vm.progressLabel]),
      el("h3", { class: "wizard-prompt" }, [vm.prompt]),
    );
    const options = el("div", { class: "wizard-options" });
    for (const option of vm.options) {
      const button = el(
        "button",
        { class: "option", type: "button", "data-option": option },
        [option],
      );
      button.addEventListener("click", () => onAnswer(vm.questionId, option));
      options.append(button);
    }
    root.append(options);
    return root;
  }
  root.append(
    el("h3", { class: "wizard-done" }, ["Survey complete"]),
    el("p", { class: "wizard-transitions" }, [
      `${vm.transitions} scene transition(s)`,
    ]),
  );
  if (proposal !== null) {
    root.append(renderProposal(proposal));
  }
  return root;
}

export function renderProposal(proposal: PathwayProposal): HTMLElement {
  const root = el("div", { class: "proposal" }, [
    el("h4", {}, ["Proposed pathway"]),
  ]);
  if (proposal.bindings.length > 0) {
    const list = el("ul", { class: "proposal-bindings" });
    for (const { item, value } of proposal.bindings) {
      list.append(el("li", {}, [`${item} = ${JSON.stringify(value)}`]));
    }
    root.append(list);
  }
  for (const decision of proposal.decisions) {
    root.append(
      el("p", { class: "proposal-decision" }, [
        `${decision.taskId} → ${decision.branch}`,
      ]),
    );
  }
  const next = el("ul", { class: "proposal-next" });
  for (const taskId of proposal.nextTasks) {
    next.append(el("li", { "data-task": taskId }, [taskId]));
  }
  if (proposal.nextTasks.length > 0) {
    root.append(el("p", {}, ["Next tasks:"]), next);
  } else if (proposal.outcome !== null) {
    root.append(
      el("p", { class: "proposal-outcome" }, [`Outcome: ${proposal.outcome}`]),
    );
  }
  return root;
}

// -- work items ---------------------------------------------------------------------

export interface WorkItemHandlers {
  onStart: (itemId: string) => void;
  onComplete: (itemId: string, outputs: Record<string, unknown>) => void;
}

export function renderWorkItems(
  items: WorkItemView[],
  handlers: WorkItemHandlers,
): HTMLElement {
  const root = el("section", { class: "work-items" });
  if (items.length === 0) {
    root.append(el("p", { class: "work-items-empty" }, ["No open work items."]));
    return root;
  }
  for (const item of items) {
    root.append(renderWorkItem(item, handlers));
  }
  return root;
}

function renderWorkItem(
  item: WorkItemView,
  handlers: WorkItemHandlers,
): HTMLElement {
  const card = el("div", {
    class: `work-item state-${item.state.toLowerCase()}`,
    "data-item-id": item.item_id,
  });
  card.append(
    el("span", { class: "item-task" }, [item.task_id]),
    el("span", { class: "item-badge" }, [item.state]),
    el("span", { class: "item-case" }, [item.case_id]),
    el("span", { class: "item-role" }, [item.role]),
  );
  if (item.deadline !== null) {
    card.append(el("span", { class: "item-deadline" }, [`due ${item.deadline}`]));
  }
  if (item.assignee !== null) {
    card.append(el("span", { class: "item-assignee" }, [item.assignee]));
  }
  if (item.state === "Notified" || item.state === "Expired") {
    const start = el("button", { class: "item-start", type: "button" }, ["Start"]);
    start.addEventListener("click", () => handlers.onStart(item.item_id));
    card.append(start);
  }
  if (item.state !== "Completed" && item.state !== "Cancelled") {
    card.append(renderCompletionForm(item, handlers));
  }
  return card;
}

function renderCompletionForm(
  item: WorkItemView,
  handlers: WorkItemHandlers,
): HTMLElement {
  const form = el("form", { class: "item-complete-form" });
  const outputNames = declaredOutputs(item);
  const fields = new Map<string, HTMLInputElement>();
  for (const name of outputNames) {
    const input = el("input", {
      type: "text",
      name,
      placeholder: name,
      "data-output": name,
    }) as HTMLInputElement;
    fields.set(name, input);
    form.append(el("label", {}, [`${name}: `, input]));
  }
  const submit = el("button", { class: "item-finish", type: "submit" }, [
    "Complete",
  ]);
  form.append(submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const outputs: Record<string, unknown> = {};
    for (const [name, input] of fields) {
      if (input.value !== "") outputs[name] = coerce(input.value);
    }
    handlers.onComplete(item.item_id, outputs);
  });
  return form;
}

function declaredOutputs(item: WorkItemView): string[] {
  const outputs = item.payload["outputs"];
  if (Array.isArray(outputs)) {
    return outputs.filter((o): o is string => typeof o === "string");
  }
  return [];
}

/** Free-text field values: numbers and JSON literals pass through typed. */
export function coerce(text: string): unknown {
  try {
    return JSON.parse(text);
  } catch {
    return text;
  }
}

// -- case chrome -------------------------------------------------------------------

export function renderCaseHeader(
  view: CaseView,
  role: string,
  onAbort: () => void,
): HTMLElement {
  const root = el("header", { class: "case-header" }, [
    el("h2", {}, [`${view.patient_ref} — ${view.guideline_id}`]),
    el("span", { class: `status status-${view.status.toLowerCase()}` }, [
      view.status,
    ]),
  ]);
  if (view.outcome !== null) {
    root.append(el("span", { class: "outcome" }, [view.outcome]));
  }
  if (role === "doctor" && view.status === "Running") {
    const abort = el("button", { class: "abort", type: "button" }, [
      "Abort case",
    ]);
    abort.addEventListener("click", onAbort);
    root.append(abort);
  }
  return root;
}

export function renderCaseList(
  cases: CaseView[],
  selectedId: string | null,
  onSelect: (caseId: string) => void,
): HTMLElement {
  const root = el("ul", { class: "case-list" });
  for (const view of cases) {
    const row = el(
      "li",
      {
        class: view.case_id === selectedId ? "case selected" : "case",
        "data-case-id": view.case_id,
      },
      [
        el("span", { class: "case-patient" }, [view.patient_ref]),
        el("span", { class: "case-status" }, [view.status]),
      ],
    );
    row.addEventListener("click", () => onSelect(view.case_id));
    root.append(row);
  }
  return root;
}

export function renderStreamStatus(status: StreamStatus): HTMLElement {
  return el("span", { class: `stream stream-${status}` }, [
    status === "open" ? "live" : status,
  ]);
}

export function renderLatencyPanel(summary: LatencySummary): HTMLElement {
  const body =
    summary.count === 0
      ? "no scene changes measured yet"
      : `${summary.count} scene(s): p50 ${fmt(summary.p50Ms)} ms, ` +
        `p95 ${fmt(summary.p95Ms)} ms, max ${fmt(summary.maxMs)} ms`;
  return el("div", { class: "latency" }, [`Scene latency (client): ${body}`]);
}

function fmt(value: number | null): string {
  return value === null ? "–" : value.toFixed(1);
}

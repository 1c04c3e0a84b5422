import { describe, expect, it } from "vitest";
import {
  type Action,
  type AppState,
  activeWorkItems,
  caseList,
  initialState,
  reduce,
  selectedCase,
  visibleNotifications,
} from "../src/state.js";
import type { CaseView, EventEntry } from "../src/types.js";

let seq = 0;

function entry(
  kind: string,
  payload: Record<string, unknown>,
  caseId = "C1",
): EventEntry {
  seq += 1;
  return {
    global_seq: seq,
    case_id: caseId,
    case_seq: seq,
    kind,
    at: `2024-01-01T08:00:${String(seq).padStart(2, "0")}Z`,
    actor: null,
    payload,
    annotations: {},
    raw_hl7: null,
  };
}

function run(state: AppState, ...actions: Action[]): AppState {
  return actions.reduce(reduce, state);
}

function caseView(overrides: Partial<CaseView> = {}): CaseView {
  return {
    case_id: "C1",
    guideline_id: "chest-pain-v1",
    deployment_version: 1,
    document_version: "1.0",
    patient_ref: "PAT-1",
    status: "Running",
    outcome: null,
    created_at: "2024-01-01T08:00:00Z",
    updated_at: "2024-01-01T08:00:00Z",
    event_count: 3,
    task_states: { survey: "Enabled" },
    bindings: {},
    result_flags: {},
    taken_branches: {},
    work_items: [],
    pending_timers: [],
    ...overrides,
  };
}

describe("reducer: snapshots", () => {
  it("folds case snapshots in as authority", () => {
    const state = run(initialState(), {
      type: "case-snapshot",
      view: caseView(),
    });
    expect(caseList(state).map((c) => c.case_id)).toEqual(["C1"]);
    expect(state.cases["C1"]?.task_states["survey"]).toBe("Enabled");
  });

  it("merges snapshot work items into the item table", () => {
    const view = caseView({
      work_items: [
        {
          item_id: "WI-1",
          case_id: "C1",
          task_id: "survey",
          role: "doctor",
          state: "Notified",
          created_at: "2024-01-01T08:00:00Z",
          deadline: null,
          assignee: null,
          payload: {},
        },
      ],
    });
    const state = run(initialState(), { type: "case-snapshot", view });
    expect(activeWorkItems(state).map((i) => i.item_id)).toEqual(["WI-1"]);
  });

  it("is pure: inputs are never mutated", () => {
    const before = initialState();
    const frozen = Object.freeze(before);
    const out = reduce(frozen, { type: "case-snapshot", view: caseView() });
    expect(out).not.toBe(before);
    expect(before.cases).toEqual({});
  });
});

describe("reducer: stream entries", () => {
  it("builds a case from its start event", () => {
    const state = run(initialState(), {
      type: "stream-entry",
      entry: entry("CaseStarted", {
        guideline_id: "chest-pain-v1",
        deployment_version: 1,
        document_version: "1.0",
        patient_ref: "PAT-7",
      }),
    });
    const view = state.cases["C1"];
    expect(view?.patient_ref).toBe("PAT-7");
    expect(view?.status).toBe("Running");
  });

  it("tracks task states across enable/complete/skip", () => {
    const state = run(
      initialState(),
      { type: "stream-entry", entry: entry("CaseStarted", {}) },
      { type: "stream-entry", entry: entry("TaskEnabled", { task_id: "survey" }) },
      {
        type: "stream-entry",
        entry: entry("TaskCompleted", { task_id: "survey" }),
      },
      {
        type: "stream-entry",
        entry: entry("TaskSkipped", { task_id: "low-risk-exit" }),
      },
    );
    expect(state.cases["C1"]?.task_states).toEqual({
      survey: "Completed",
      "low-risk-exit": "Skipped",
    });
  });

  it("walks a work item through its lifecycle and out of the active list", () => {
    let state = run(initialState(), {
      type: "stream-entry",
      entry: entry("WorkItemCreated", {
        item_id: "WI-9",
        task_id: "initial-tests",
        role: "staff",
        deadline: "2024-01-01T14:00:00Z",
        payload: { outputs: ["done"] },
      }),
    });
    expect(activeWorkItems(state, "staff")).toHaveLength(1);
    expect(activeWorkItems(state, "doctor")).toHaveLength(0);
    expect(state.workItems["WI-9"]?.deadline).toBe("2024-01-01T14:00:00Z");

    state = run(state, {
      type: "stream-entry",
      entry: entry("WorkItemStarted", { item_id: "WI-9", assignee: "kim" }),
    });
    expect(state.workItems["WI-9"]?.state).toBe("InProgress");
    expect(state.workItems["WI-9"]?.assignee).toBe("kim");

    state = run(state, {
      type: "stream-entry",
      entry: entry("WorkItemCompleted", { item_id: "WI-9", outputs: {} }),
    });
    expect(state.workItems["WI-9"]?.state).toBe("Completed");
    expect(activeWorkItems(state, "staff")).toHaveLength(0);
  });

  it("keeps expired items visible as actionable", () => {
    const state = run(
      initialState(),
      {
        type: "stream-entry",
        entry: entry("WorkItemCreated", {
          item_id: "WI-2",
          task_id: "repeat-tests",
          role: "staff",
          deadline: "2024-01-01T20:00:00Z",
          payload: {},
        }),
      },
      {
        type: "stream-entry",
        entry: entry("WorkItemExpired", { item_id: "WI-2" }),
      },
    );
    expect(activeWorkItems(state, "staff").map((i) => i.state)).toEqual([
      "Expired",
    ]);
  });

  it("replays are no-ops: same entry twice changes nothing", () => {
    const e = entry("WorkItemCreated", {
      item_id: "WI-3",
      task_id: "survey",
      role: "doctor",
      deadline: null,
      payload: {},
    });
    const once = run(initialState(), { type: "stream-entry", entry: e });
    const twice = run(once, { type: "stream-entry", entry: e });
    expect(twice).toBe(once);
  });

  it("applies bindings and branch decisions", () => {
    const state = run(
      initialState(),
      { type: "stream-entry", entry: entry("CaseStarted", {}) },
      {
        type: "stream-entry",
        entry: entry("DataBound", { item: "troponin-1", value: 0.02 }),
      },
      {
        type: "stream-entry",
        entry: entry("DecisionTaken", {
          task_id: "risk-gate",
          branch: "intermediate-high",
        }),
      },
    );
    expect(state.cases["C1"]?.bindings["troponin-1"]).toBe(0.02);
    expect(state.cases["C1"]?.taken_branches["risk-gate"]).toBe(
      "intermediate-high",
    );
  });

  it("closes cases on completion and abort", () => {
    let state = run(
      initialState(),
      { type: "stream-entry", entry: entry("CaseStarted", {}) },
      {
        type: "stream-entry",
        entry: entry("CaseCompleted", { outcome: "discharged", task_id: "end" }),
      },
    );
    expect(state.cases["C1"]?.status).toBe("Completed");
    expect(state.cases["C1"]?.outcome).toBe("discharged");

    state = run(
      initialState(),
      { type: "stream-entry", entry: entry("CaseStarted", {}, "C2") },
      {
        type: "stream-entry",
        entry: entry("CaseAborted", { reason: "x" }, "C2"),
      },
    );
    expect(state.cases["C2"]?.status).toBe("Aborted");
  });
});

describe("reducer: notifications", () => {
  function withNote(role: string | null): AppState {
    return run(initialState(), {
      type: "stream-entry",
      entry: entry("NotificationRaised", {
        level: "info",
        reason: "result-available",
        message: "result available: troponin-1 = 0.02",
        ...(role === null ? {} : { role }),
      }),
    });
  }

  it("keeps a banner up until it is explicitly dismissed", () => {
    let state = withNote("doctor");
    const visible = visibleNotifications(state, "doctor");
    expect(visible).toHaveLength(1);
    const note = visible[0]!;
    expect(note.message).toContain("troponin-1");

    // Unrelated actions do not clear it.
    state = run(state, { type: "stream-status", status: "open" });
    expect(visibleNotifications(state, "doctor")).toHaveLength(1);

    state = run(state, { type: "dismiss-notification", id: note.id });
    expect(visibleNotifications(state, "doctor")).toHaveLength(0);
    // Dismissal is recorded, not deleted.
    expect(state.notifications[0]?.dismissed).toBe(true);
  });

  it("routes role-addressed banners away from other roles", () => {
    const state = withNote("doctor");
    expect(visibleNotifications(state, "doctor")).toHaveLength(1);
    expect(visibleNotifications(state, "staff")).toHaveLength(0);
  });

  it("shows unaddressed banners to every role", () => {
    const state = withNote(null);
    expect(visibleNotifications(state, "doctor")).toHaveLength(1);
    expect(visibleNotifications(state, "staff")).toHaveLength(1);
  });
});

describe("reducer: selection and survey", () => {
  it("clears the survey when switching cases", () => {
    let state = run(initialState(), { type: "select-case", caseId: "C1" });
    state = run(state, {
      type: "survey-loaded",
      caseId: "C1",
      scene: { active: true, kind: "Scene", index: 1, total: 4, transitions: 0 },
    });
    expect(state.survey?.index).toBe(1);
    state = run(state, { type: "select-case", caseId: "C2" });
    expect(state.survey).toBeNull();
  });

  it("drops survey responses for cases no longer selected", () => {
    let state = run(initialState(), { type: "select-case", caseId: "C2" });
    state = run(state, {
      type: "survey-loaded",
      caseId: "C1",
      scene: { active: true, kind: "Scene", index: 2, total: 4, transitions: 1 },
    });
    expect(state.survey).toBeNull();
  });

  it("selectedCase resolves through the case table", () => {
    let state = run(initialState(), {
      type: "case-snapshot",
      view: caseView(),
    });
    expect(selectedCase(state)).toBeNull();
    state = run(state, { type: "select-case", caseId: "C1" });
    expect(selectedCase(state)?.patient_ref).toBe("PAT-1");
  });
});

describe("reload reconstruction", () => {
  it("replaying the same inputs yields the same state", () => {
    const inputs: Action[] = [
      { type: "stream-entry", entry: entry("CaseStarted", { patient_ref: "P" }) },
      {
        type: "stream-entry",
        entry: entry("TaskEnabled", { task_id: "survey" }),
      },
      {
        type: "stream-entry",
        entry: entry("WorkItemCreated", {
          item_id: "WI-1",
          task_id: "survey",
          role: "doctor",
          deadline: null,
          payload: {},
        }),
      },
      { type: "select-case", caseId: "C1" },
    ];
    const a = run(initialState(), ...inputs);
    const b = run(initialState(), ...inputs);
    expect(b).toEqual(a);
  });
});

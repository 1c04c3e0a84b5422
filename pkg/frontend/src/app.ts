/** Console bootstrap: wires the API client, the single event-stream
 * subscription, the reducer, and the renderers together.
 *
 * Flow: every server response and stream entry is dispatched into the
 * reducer, and the screen is re-rendered from the resulting state.
 * Nothing renders from ad-hoc variables, so a page reload rebuilds the
 * identical view from the same endpoints.
 */

import { ApiError, ConsoleApi } from "./api.js";
import { StreamClient } from "./sse.js";
import {
  type Action,
  type AppState,
  activeWorkItems,
  caseList,
  initialState,
  reduce,
  selectedCase,
  visibleNotifications,
} from "./state.js";
import { pathwayProposal, wizardView } from "./survey.js";
import { SceneLatencyLog } from "./latency.js";
import {
  el,
  renderCaseHeader,
  renderCaseList,
  renderLatencyPanel,
  renderNotifications,
  renderStreamStatus,
  renderWizard,
  renderWorkItems,
} from "./render.js";
import type { EventEntry } from "./types.js";

interface Mounts {
  notifications: HTMLElement;
  caseList: HTMLElement;
  caseHeader: HTMLElement;
  wizard: HTMLElement;
  workItems: HTMLElement;
  latency: HTMLElement;
  streamStatus: HTMLElement;
  error: HTMLElement;
}

export interface AppOptions {
  api?: ConsoleApi;
  confirmImpl?: (message: string) => boolean;
}

function findMounts(root: Document): Mounts {
  function need(id: string): HTMLElement {
    const node = root.getElementById(id);
    if (node === null) throw new Error(`missing mount point #${id}`);
    return node;
  }
  return {
    notifications: need("notifications"),
    caseList: need("case-list"),
    caseHeader: need("case-header"),
    wizard: need("wizard"),
    workItems: need("work-items"),
    latency: need("latency"),
    streamStatus: need("stream-status"),
    error: need("error"),
  };
}

export async function startApp(
  root: Document,
  options: AppOptions = {},
): Promise<void> {
  const api = options.api ?? new ConsoleApi("");
  const confirmImpl =
    options.confirmImpl ?? ((message: string) => window.confirm(message));
  const latencyLog = new SceneLatencyLog();

  let state: AppState = initialState();
  const mounts = findMounts(root);

  function dispatch(action: Action): void {
    state = reduce(state, action);
    render();
  }

  function identity() {
    return { actor: state.actor, role: state.role };
  }

  async function guarded(work: () => Promise<void>): Promise<void> {
    try {
      await work();
      if (state.lastError !== null) dispatch({ type: "error", message: null });
    } catch (err) {
      const message =
        err instanceof ApiError ? err.message : `request failed: ${String(err)}`;
      dispatch({ type: "error", message });
    }
  }

  // -- handlers --------------------------------------------------------------

  async function selectCase(caseId: string): Promise<void> {
    dispatch({ type: "select-case", caseId });
    await guarded(async () => {
      const view = await api.getCase(caseId);
      dispatch({ type: "case-snapshot", view });
      const scene = await api.getSurvey(caseId);
      dispatch({ type: "survey-loaded", caseId, scene });
    });
  }

  async function answer(questionId: string, option: string): Promise<void> {
    const caseId = state.selectedCaseId;
    if (caseId === null) return;
    latencyLog.answerSent(caseId, state.survey?.index ?? 0);
    await guarded(async () => {
      const scene = await api.answer(caseId, questionId, option, identity());
      const view = await api.getCase(caseId);
      dispatch({ type: "case-snapshot", view });
      dispatch({ type: "survey-loaded", caseId, scene });
      const sample = latencyLog.sceneShown(caseId);
      if (sample !== null) {
        console.info(
          `scene latency: case=${sample.caseId} from scene ${sample.fromIndex} ` +
            `→ next in ${sample.ms.toFixed(1)} ms`,
        );
      }
    });
    if (state.lastError !== null) latencyLog.cancel();
  }

  async function startItem(itemId: string): Promise<void> {
    await guarded(async () => {
      const item = await api.startWorkItem(itemId, identity());
      dispatch({ type: "work-items-loaded", items: [item] });
    });
  }

  async function completeItem(
    itemId: string,
    outputs: Record<string, unknown>,
  ): Promise<void> {
    await guarded(async () => {
      const view = await api.completeWorkItem(itemId, outputs, identity());
      dispatch({ type: "case-snapshot", view });
      if (view.case_id === state.selectedCaseId) {
        const scene = await api.getSurvey(view.case_id);
        dispatch({ type: "survey-loaded", caseId: view.case_id, scene });
      }
    });
  }

  async function abortSelected(): Promise<void> {
    const view = selectedCase(state);
    if (view === null) return;
    if (!confirmImpl(`Abort case ${view.case_id} (${view.patient_ref})?`)) {
      return;
    }
    await guarded(async () => {
      const updated = await api.abortCase(
        view.case_id,
        "aborted from console",
        identity(),
      );
      dispatch({ type: "case-snapshot", view: updated });
    });
  }

  async function startNewCase(
    guidelineId: string,
    patientRef: string,
  ): Promise<void> {
    await guarded(async () => {
      const view = await api.startCase(guidelineId, patientRef, identity());
      dispatch({ type: "case-snapshot", view });
      await selectCase(view.case_id);
    });
  }

  function onStreamEntry(entry: EventEntry): void {
    dispatch({ type: "stream-entry", entry });
    // Another operator answering the selected case's survey moves the
    // scene; refresh it so both consoles show the same question.
    if (
      entry.case_id === state.selectedCaseId &&
      (entry.kind === "SceneAnswered" || entry.kind === "WorkItemCreated")
    ) {
      void guarded(async () => {
        const scene = await api.getSurvey(entry.case_id);
        dispatch({ type: "survey-loaded", caseId: entry.case_id, scene });
      });
    }
  }

  // -- rendering ---------------------------------------------------------------

  function render(): void {
    const view = selectedCase(state);
    replace(
      mounts.notifications,
      renderNotifications(visibleNotifications(state, state.role), (id) =>
        dispatch({ type: "dismiss-notification", id }),
      ),
    );
    replace(
      mounts.caseList,
      renderCaseList(caseList(state), state.selectedCaseId, (caseId) => {
        void selectCase(caseId);
      }),
    );
    if (view !== null) {
      replace(
        mounts.caseHeader,
        renderCaseHeader(view, state.role, () => {
          void abortSelected();
        }),
      );
      const vm = wizardView(state.survey);
      replace(
        mounts.wizard,
        renderWizard(
          vm,
          vm.kind === "complete" ? pathwayProposal(view) : null,
          (questionId, option) => {
            void answer(questionId, option);
          },
        ),
      );
    } else {
      mounts.caseHeader.replaceChildren(
        el("p", { class: "idle" }, ["Select or start a case."]),
      );
      mounts.wizard.replaceChildren();
    }
    replace(
      mounts.workItems,
      renderWorkItems(activeWorkItems(state, state.role), {
        onStart: (itemId) => {
          void startItem(itemId);
        },
        onComplete: (itemId, outputs) => {
          void completeItem(itemId, outputs);
        },
      }),
    );
    replace(mounts.latency, renderLatencyPanel(latencyLog.summary()));
    replace(mounts.streamStatus, renderStreamStatus(state.streamStatus));
    mounts.error.textContent = state.lastError ?? "";
  }

  function replace(mount: HTMLElement, node: HTMLElement): void {
    mount.replaceChildren(node);
  }

  // -- identity & new-case controls -------------------------------------------

  const roleSelect = root.getElementById("role") as HTMLSelectElement | null;
  const actorInput = root.getElementById("actor") as HTMLInputElement | null;
  function pushIdentity(): void {
    dispatch({
      type: "identity",
      role: roleSelect?.value ?? "doctor",
      actor: actorInput?.value ?? "console",
    });
  }
  roleSelect?.addEventListener("change", pushIdentity);
  actorInput?.addEventListener("change", pushIdentity);

  const newCaseForm = root.getElementById("new-case") as HTMLFormElement | null;
  const guidelineSelect = root.getElementById(
    "guideline",
  ) as HTMLSelectElement | null;
  const patientInput = root.getElementById("patient") as HTMLInputElement | null;
  newCaseForm?.addEventListener("submit", (event) => {
    event.preventDefault();
    const guidelineId = guidelineSelect?.value ?? "";
    const patientRef = patientInput?.value ?? "";
    if (guidelineId !== "" && patientRef !== "") {
      void startNewCase(guidelineId, patientRef);
    }
  });

  // -- bootstrap ----------------------------------------------------------------

  pushIdentity();
  const health = await api.health();
  const stream = new StreamClient({
    url: (after) => api.streamUrl(after),
    onEntry: onStreamEntry,
    onStatus: (status) => dispatch({ type: "stream-status", status }),
  });
  void stream.run(health.events);
  window.addEventListener("beforeunload", () => stream.stop());

  await guarded(async () => {
    const guidelines = await api.listGuidelines();
    if (guidelineSelect !== null) {
      guidelineSelect.replaceChildren(
        ...guidelines.map((g) =>
          el("option", { value: g.guideline_id }, [
            `${g.title} (v${g.version})`,
          ]),
        ),
      );
    }
    const views = await api.listCases();
    dispatch({ type: "cases-loaded", views });
    const items = await api.listWorkItems({ includeClosed: true });
    dispatch({ type: "work-items-loaded", items });
    const first = caseList(state)[0];
    if (first !== undefined) await selectCase(first.case_id);
  });
  render();
}

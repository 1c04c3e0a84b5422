/** View models for the survey wizard and the post-survey proposal.
 *
 * The wizard shows exactly one question per scene. When the survey
 * completes, the console summarizes what the engine decided: the
 * bindings the answers produced, the branch each decision took, and
 * the tasks that are now enabled — the proposed pathway.
 */

import type { CaseView, SceneView } from "./types.js";

export interface WizardQuestion {
  kind: "question";
  questionId: string;
  prompt: string;
  options: string[];
  /** 1-based position, e.g. "Question 2 of 4". */
  index: number;
  total: number;
  progressLabel: string;
}

export interface WizardComplete {
  kind: "complete";
  transitions: number;
}

export interface WizardInactive {
  kind: "inactive";
}

export type WizardView = WizardQuestion | WizardComplete | WizardInactive;

export function wizardView(scene: SceneView | null): WizardView {
  if (scene === null) return { kind: "inactive" };
  if (scene.kind === "SurveyComplete") {
    return { kind: "complete", transitions: scene.transitions ?? 0 };
  }
  if (!scene.active || scene.question === undefined) {
    return { kind: "inactive" };
  }
  const index = scene.index ?? 1;
  const total = scene.total ?? 1;
  return {
    kind: "question",
    questionId: scene.question.id,
    prompt: scene.question.prompt,
    options: scene.question.options,
    index,
    total,
    progressLabel: `Question ${index} of ${total}`,
  };
}

export interface PathwayProposal {
  bindings: Array<{ item: string; value: unknown }>;
  decisions: Array<{ taskId: string; branch: string }>;
  nextTasks: string[];
  caseStatus: string;
  outcome: string | null;
}

/** What the engine proposes to do next, read straight from the case snapshot. */
export function pathwayProposal(view: CaseView): PathwayProposal {
  return {
    bindings: Object.entries(view.bindings).map(([item, value]) => ({
      item,
      value,
    })),
    decisions: Object.entries(view.taken_branches).map(([taskId, branch]) => ({
      taskId,
      branch,
    })),
    nextTasks: Object.entries(view.task_states)
      .filter(([, state]) => state === "Enabled")
      .map(([taskId]) => taskId)
      .sort(),
    caseStatus: view.status,
    outcome: view.outcome,
  };
}

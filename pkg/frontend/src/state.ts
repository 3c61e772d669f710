/**
 * Session view state, derived exclusively from API events and responses plus
 * the user's local drafts. The reducer is idempotent over event sequence
 * numbers, so replaying a stream after a disconnect never duplicates data.
 */

import type { ApiEvent, ClarificationQuestion, Plan } from './api.js';

export interface CoveragePoint {
  iteration: number;
  coverage: number;
}

export interface SessionView {
  phase: string;
  questions: ClarificationQuestion[];
  answerDrafts: Record<string, string>;
  plan: Plan | null;
  coverageSeries: Record<string, CoveragePoint[]>;
  decisionPending: boolean;
  reportReady: boolean;
  failureReason: string | null;
  conflict: string | null;
  lastSeq: number;
}

export function initialView(): SessionView {
  return {
    phase: 'Created',
    questions: [],
    answerDrafts: {},
    plan: null,
    coverageSeries: {},
    decisionPending: false,
    reportReady: false,
    failureReason: null,
    conflict: null,
    lastSeq: 0,
  };
}

export function applyEvent(view: SessionView, event: ApiEvent): SessionView {
  if (event.seq <= view.lastSeq) {
    return view; // already applied; replays are no-ops
  }
  const next: SessionView = { ...view, lastSeq: event.seq };
  switch (event.kind) {
    case 'PhaseChanged': {
      next.phase = String(event.payload['to'] ?? next.phase);
      next.decisionPending = next.phase === 'AwaitingContinueDecision';
      break;
    }
    case 'ClarificationsReady': {
      next.questions = (event.payload['questions'] ?? []) as ClarificationQuestion[];
      break;
    }
    case 'PlanReady': {
      next.plan = (event.payload['plan'] ?? null) as Plan | null;
      break;
    }
    case 'IterationTrace': {
      const iteration = Number(event.payload['iteration']);
      const coverage = (event.payload['coverage'] ?? {}) as Record<string, number>;
      const series: Record<string, CoveragePoint[]> = {};
      for (const [sectionId, points] of Object.entries(view.coverageSeries)) {
        series[sectionId] = points;
      }
      for (const [sectionId, value] of Object.entries(coverage)) {
        const points = series[sectionId] ?? [];
        if (!points.some((p) => p.iteration === iteration)) {
          series[sectionId] = [...points, { iteration, coverage: value }];
        }
      }
      next.coverageSeries = series;
      break;
    }
    case 'ReportReady': {
      next.reportReady = true;
      break;
    }
    case 'Failed': {
      next.phase = 'Failed';
      next.failureReason = String(event.payload['reason'] ?? 'unknown failure');
      break;
    }
    default:
      break; // CoverageUpdated and future kinds carry no view state we keep
  }
  return next;
}

export function setAnswerDraft(
  view: SessionView,
  questionId: string,
  text: string,
): SessionView {
  return { ...view, answerDrafts: { ...view.answerDrafts, [questionId]: text } };
}

/**
 * Answers to submit: empty drafts fall back to the question's default
 * assumption server-side, but a whitespace-only draft is a user mistake.
 */
export function validateAnswers(view: SessionView): Record<string, string> {
  const errors: Record<string, string> = {};
  for (const question of view.questions) {
    const draft = view.answerDrafts[question.question_id];
    if (draft !== undefined && draft !== '' && draft.trim() === '') {
      errors[question.question_id] =
        'Answer is blank; clear the field to use the default assumption.';
    }
  }
  return errors;
}

export function answersToSubmit(view: SessionView): Record<string, string> {
  const answers: Record<string, string> = {};
  for (const question of view.questions) {
    const draft = view.answerDrafts[question.question_id];
    if (draft !== undefined && draft.trim() !== '') {
      answers[question.question_id] = draft.trim();
    }
  }
  return answers;
}

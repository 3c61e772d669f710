/**
 * Session controller: drives the API, folds events into the view, and
 * reconciles the optimistic plan-edit buffer on version conflicts. Owns no
 * DOM; main.ts subscribes via onChange and renders.
 */

import {
  ApiError,
  SteeringApi,
  type Plan,
  type PlanEdit,
  type ReportPayload,
} from './api.js';
import { previewPlan } from './planedit.js';
import {
  answersToSubmit,
  applyEvent,
  initialView,
  setAnswerDraft,
  validateAnswers,
  type SessionView,
} from './state.js';

export class SteeringController {
  view: SessionView = initialView();
  sessionId: string | null = null;
  report: ReportPayload | null = null;
  private serverPlan: Plan | null = null;
  private editBuffer: PlanEdit[] = [];
  private streamAbort: AbortController | null = null;

  constructor(
    private readonly api: SteeringApi,
    private readonly onChange: (view: SessionView) => void = () => {},
  ) {}

  private update(view: SessionView): void {
    this.view = view;
    this.onChange(view);
  }

  private requireSession(): string {
    if (this.sessionId === null) {
      throw new Error('no session started');
    }
    return this.sessionId;
  }

  async start(request: string): Promise<string> {
    const created = await this.api.createSession(request);
    this.sessionId = created.session_id;
    return created.session_id;
  }

  async refresh(): Promise<void> {
    const id = this.requireSession();
    const summary = await this.api.getSession(id);
    this.update({ ...this.view, phase: summary.phase, conflict: null });
  }

  async waitForPhase(phase: string, timeoutMs = 15000): Promise<void> {
    const id = this.requireSession();
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
      const summary = await this.api.getSession(id);
      if (summary.phase === phase) {
        this.update({ ...this.view, phase: summary.phase });
        return;
      }
      if (summary.phase === 'Failed') {
        throw new Error(`session failed while waiting for ${phase}`);
      }
      await new Promise((resolve) => setTimeout(resolve, 50));
    }
    throw new Error(`timed out waiting for phase ${phase}`);
  }

  async loadClarifications(): Promise<void> {
    const id = this.requireSession();
    const { questions } = await this.api.getClarifications(id);
    this.update({ ...this.view, questions });
  }

  setAnswer(questionId: string, text: string): void {
    this.update(setAnswerDraft(this.view, questionId, text));
  }

  async submitAnswers(): Promise<boolean> {
    const errors = validateAnswers(this.view);
    if (Object.keys(errors).length > 0) {
      this.onChange(this.view); // re-render with inline validation
      return false;
    }
    const id = this.requireSession();
    try {
      await this.api.postAnswers(id, answersToSubmit(this.view));
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        this.noteConflict(error);
        return false;
      }
      throw error;
    }
    await this.loadPlan();
    return true;
  }

  async loadPlan(): Promise<void> {
    const id = this.requireSession();
    this.serverPlan = await this.api.getPlan(id);
    this.editBuffer = [];
    this.update({ ...this.view, plan: this.serverPlan, conflict: null });
  }

  /** Buffered edits render optimistically until saved. */
  queueEdit(edit: PlanEdit | null): void {
    if (edit === null || this.serverPlan === null) {
      return;
    }
    this.editBuffer.push(edit);
    this.update({
      ...this.view,
      plan: previewPlan(this.serverPlan, this.editBuffer),
    });
  }

  get pendingEdits(): number {
    return this.editBuffer.length;
  }

  async saveEdits(): Promise<void> {
    if (this.editBuffer.length === 0) {
      return;
    }
    const id = this.requireSession();
    try {
      this.serverPlan = await this.api.patchPlan(id, this.editBuffer);
      this.editBuffer = [];
      this.update({ ...this.view, plan: this.serverPlan, conflict: null });
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        // Drop the buffer and reload the authoritative plan, keeping the
        // conflict banner so the user sees why their edits vanished.
        this.editBuffer = [];
        this.serverPlan = await this.api.getPlan(id).catch(() => this.serverPlan);
        this.noteConflict(error);
        this.update({ ...this.view, plan: this.serverPlan });
        return;
      }
      throw error;
    }
  }

  async approve(): Promise<void> {
    await this.saveEdits();
    const id = this.requireSession();
    try {
      await this.api.approvePlan(id);
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        this.noteConflict(error);
        return;
      }
      throw error;
    }
  }

  /**
   * Stream events into the view, resuming from the last applied sequence.
   * Resolves when the server ends the stream (terminal session).
   */
  async connect(): Promise<void> {
    const id = this.requireSession();
    this.streamAbort = new AbortController();
    await this.api.streamEvents(
      id,
      this.view.lastSeq + 1,
      (event) => this.update(applyEvent(this.view, event)),
      this.streamAbort.signal,
    );
  }

  disconnect(): void {
    this.streamAbort?.abort();
    this.streamAbort = null;
  }

  async decide(action: 'continue' | 'stop'): Promise<void> {
    const id = this.requireSession();
    await this.api.postDecision(id, action);
  }

  async loadReport(): Promise<ReportPayload> {
    const id = this.requireSession();
    this.report = await this.api.getReport(id);
    return this.report;
  }

  private noteConflict(error: ApiError): void {
    const phase = String(error.body['phase'] ?? this.view.phase);
    this.update({
      ...this.view,
      phase,
      conflict: `The session moved to ${phase} while you were editing.`,
    });
  }
}

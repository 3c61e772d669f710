/** Typed client for the steering service HTTP API and its SSE event stream. */

export interface ClarificationQuestion {
  question_id: string;
  text: string;
  default_assumption: string;
}

export interface CoverageRequirement {
  min_distinct_sources: number;
  min_spans: number;
  required_facets: string[][];
}

export interface PlanSection {
  section_id: string;
  title: string;
  priority: number;
  success_criteria: string[];
  coverage_requirement: CoverageRequirement | null;
}

export interface Plan {
  plan_version: number;
  sections: PlanSection[];
}

export type PlanEditKind =
  | 'Reorder'
  | 'Retitle'
  | 'SetPriority'
  | 'AddSection'
  | 'RemoveSection'
  | 'EditRequirement';

export interface PlanEdit {
  kind: PlanEditKind;
  payload: Record<string, unknown>;
}

export interface SessionSummary {
  session_id: string;
  request: string;
  phase: string;
  route: string | null;
  iteration_count: number;
  events: number;
}

export interface ApiEvent {
  kind: string;
  seq: number;
  session_id: string;
  payload: Record<string, any>;
}

export interface ReportRecord {
  kind: 'report_header' | 'report_section' | 'reference';
  [key: string]: unknown;
}

export interface ReportPayload {
  records?: ReportRecord[];
  markdown?: string;
  fast_answer?: string;
}

export interface CoverageView {
  overall_satisfied?: boolean;
  per_section?: Record<
    string,
    {
      coverage: number;
      satisfied: boolean;
      distinct_sources: number;
      span_count: number;
      missing_facets: string[][];
    }
  >;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: Record<string, unknown>,
  ) {
    super(`HTTP ${status}: ${body['error'] ?? 'request failed'}`);
  }

  /** Phase conflicts (another actor moved the session) render as banners. */
  get isConflict(): boolean {
    return this.status === 409;
  }
}

export class SteeringApi {
  constructor(readonly base: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method,
      headers: body !== undefined ? { 'Content-Type': 'application/json' } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const parsed = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(response.status, parsed);
    }
    return parsed as T;
  }

  createSession(request: string): Promise<{ session_id: string; route: string }> {
    return this.request('POST', '/sessions', { request });
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.request('GET', `/sessions/${id}`);
  }

  getClarifications(id: string): Promise<{ questions: ClarificationQuestion[] }> {
    return this.request('GET', `/sessions/${id}/clarifications`);
  }

  postAnswers(id: string, answers: Record<string, string>): Promise<SessionSummary> {
    return this.request('POST', `/sessions/${id}/answers`, { answers });
  }

  getPlan(id: string): Promise<Plan> {
    return this.request('GET', `/sessions/${id}/plan`);
  }

  patchPlan(id: string, edits: PlanEdit[]): Promise<Plan> {
    return this.request('PATCH', `/sessions/${id}/plan`, { edits });
  }

  approvePlan(id: string): Promise<SessionSummary> {
    return this.request('POST', `/sessions/${id}/plan/approval`, {});
  }

  postDecision(id: string, action: 'continue' | 'stop'): Promise<SessionSummary> {
    return this.request('POST', `/sessions/${id}/decision`, { action });
  }

  getCoverage(id: string): Promise<CoverageView> {
    return this.request('GET', `/sessions/${id}/coverage`);
  }

  getReport(id: string): Promise<ReportPayload> {
    return this.request('GET', `/sessions/${id}/report`);
  }

  /**
   * Consume the server-sent event stream starting at `from`.
   *
   * Resolves when the server closes the stream (terminal session) or the
   * signal aborts. Callers resume after a disconnect by passing the last
   * applied sequence + 1; the server replays from there.
   */
  async streamEvents(
    id: string,
    from: number,
    onEvent: (event: ApiEvent) => void,
    signal?: AbortSignal,
  ): Promise<void> {
    const response = await fetch(`${this.base}/sessions/${id}/events?from=${from}`, {
      signal,
    });
    if (!response.ok || response.body === null) {
      throw new ApiError(response.status, { error: 'event stream unavailable' });
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = '';
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let boundary: number;
        while ((boundary = buffer.indexOf('\n\n')) >= 0) {
          const frame = buffer.slice(0, boundary);
          buffer = buffer.slice(boundary + 2);
          const data = frame
            .split('\n')
            .filter((line) => line.startsWith('data: '))
            .map((line) => line.slice('data: '.length))
            .join('\n');
          if (data) {
            onEvent(JSON.parse(data) as ApiEvent);
          }
        }
      }
    } catch (error) {
      if (signal?.aborted) return;
      throw error;
    } finally {
      reader.releaseLock();
    }
  }
}

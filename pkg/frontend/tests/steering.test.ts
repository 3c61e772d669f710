/**
 * Fixture session against the replay-backed server: clarification, plan edit
 * (reorder + delete), approval, a coverage chart with three iteration points
 * per section, a report view whose citation popovers all resolve, and a
 * disconnect/reconnect that renders an identical chart.
 */

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { SteeringApi } from '../src/api.js';
import { renderChartSvg } from '../src/chart.js';
import { SteeringController } from '../src/controller.js';
import { buildMoveEdit, buildRemoveEdit } from '../src/planedit.js';
import { referenceIndex, reportSections, resolvePopover } from '../src/popover.js';
import { applyEvent, initialView } from '../src/state.js';
import { renderCoverageDashboard } from '../src/views.js';
import { FIXTURES, startServer, type TestServer } from './harness.js';

let server: TestServer;

beforeAll(async () => {
  server = await startServer(0);
}, 30000);

afterAll(() => {
  server?.stop();
});

describe('steering a fixture session end to end', () => {
  it(
    'completes clarification, plan edits, approval, coverage, and report',
    { timeout: 60000 },
    async () => {
      const api = new SteeringApi(server.base);
      const controller = new SteeringController(api);

      // Clarification.
      await controller.start(FIXTURES.request);
      await controller.waitForPhase('Clarifying');
      await controller.loadClarifications();
      expect(controller.view.questions).toHaveLength(2);
      controller.setAnswer(controller.view.questions[0]!.question_id, '   ');
      expect(await controller.submitAnswers()).toBe(false); // inline validation
      controller.setAnswer(controller.view.questions[0]!.question_id, '');
      expect(await controller.submitAnswers()).toBe(true);

      // Plan edit: reorder (drag surrogate) + delete, then approve.
      await controller.waitForPhase('AwaitingPlanApproval');
      const plan = controller.view.plan!;
      expect(plan.plan_version).toBe(1);
      expect(plan.sections.map((s) => s.section_id)).toEqual([
        'market-overview',
        'vendor-landscape',
        'adoption-risks',
      ]);
      controller.queueEdit(buildMoveEdit(plan, 'vendor-landscape', 'up'));
      controller.queueEdit(buildRemoveEdit(controller.view.plan!, 'adoption-risks'));
      expect(controller.pendingEdits).toBe(2);
      expect(controller.view.plan!.sections.map((s) => s.section_id)).toEqual([
        'vendor-landscape',
        'market-overview',
      ]);
      await controller.approve(); // flushes the buffer, then approves
      expect(controller.view.plan!.plan_version).toBe(3);

      // Coverage chart builds from streamed iteration traces.
      await controller.connect(); // resolves when the session terminates
      expect(controller.view.phase).toBe('Done');
      expect(controller.view.reportReady).toBe(true);
      const series = controller.view.coverageSeries;
      expect(Object.keys(series).sort()).toEqual([
        'market-overview',
        'vendor-landscape',
      ]);
      for (const points of Object.values(series)) {
        expect(points.map((p) => p.iteration)).toEqual([1, 2, 3]);
      }
      const firstChart = renderChartSvg(series);
      expect(renderCoverageDashboard(controller.view)).toContain('<svg');

      // Report view: every citation popover resolves.
      const report = await controller.loadReport();
      const records = report.records ?? [];
      const sections = reportSections(records);
      expect(sections.map((s) => s.section_id)).toEqual([
        'vendor-landscape',
        'market-overview',
      ]);
      const refs = referenceIndex(records);
      const citations = sections.flatMap((s) => s.citations);
      expect(citations.length).toBeGreaterThan(0);
      for (const citation of citations) {
        const ref = resolvePopover(refs, citation);
        expect(ref, `citation [${citation}] must resolve`).not.toBeNull();
        expect(ref!.excerpt.length).toBeGreaterThan(0);
        expect(ref!.uri.length).toBeGreaterThan(0);
      }
      expect(sections.every((s) => !s.body.includes('[['))).toBe(true);

      // Disconnect/reconnect: a fresh consumer renders the identical chart.
      const reconnected = new SteeringController(api);
      reconnected.sessionId = controller.sessionId;
      await reconnected.connect();
      expect(renderChartSvg(reconnected.view.coverageSeries)).toBe(firstChart);

      // Resuming the original view from its last sequence adds nothing.
      const before = controller.view.lastSeq;
      await controller.connect();
      expect(controller.view.lastSeq).toBe(before);
      expect(renderChartSvg(controller.view.coverageSeries)).toBe(firstChart);

      // A mid-stream resume also converges to the same chart.
      let partial = initialView();
      await api.streamEvents(controller.sessionId!, 1, (event) => {
        if (partial.lastSeq < 4) {
          partial = applyEvent(partial, event);
        }
      });
      await api.streamEvents(controller.sessionId!, partial.lastSeq + 1, (event) => {
        partial = applyEvent(partial, event);
      });
      expect(renderChartSvg(partial.coverageSeries)).toBe(firstChart);

      // Stale plan edits after completion surface a conflict banner.
      controller.queueEdit({
        kind: 'Retitle',
        payload: { section_id: 'market-overview', title: 'Too late' },
      });
      await controller.saveEdits();
      expect(controller.view.conflict).not.toBeNull();
    },
  );
});

/**
 * Plan edit buffer: builders for the edits the editor UI can emit and a local
 * preview that mirrors server semantics. The server response remains the
 * source of truth; the preview only keeps the editor responsive while edits
 * are buffered.
 */

import type { Plan, PlanEdit, PlanSection } from './api.js';

export function buildMoveEdit(
  plan: Plan,
  sectionId: string,
  direction: 'up' | 'down',
): PlanEdit | null {
  const order = plan.sections.map((s) => s.section_id);
  const index = order.indexOf(sectionId);
  const target = direction === 'up' ? index - 1 : index + 1;
  if (index < 0 || target < 0 || target >= order.length) {
    return null;
  }
  const moved = order[index]!;
  order[index] = order[target]!;
  order[target] = moved;
  return { kind: 'Reorder', payload: { order } };
}

/** Mirrors the server rule: the last remaining section cannot be removed. */
export function buildRemoveEdit(plan: Plan, sectionId: string): PlanEdit | null {
  if (plan.sections.length <= 1) {
    return null;
  }
  if (!plan.sections.some((s) => s.section_id === sectionId)) {
    return null;
  }
  return { kind: 'RemoveSection', payload: { section_id: sectionId } };
}

export function buildRetitleEdit(sectionId: string, title: string): PlanEdit {
  return { kind: 'Retitle', payload: { section_id: sectionId, title } };
}

export function previewPlan(plan: Plan, edits: PlanEdit[]): Plan {
  let sections: PlanSection[] = [...plan.sections];
  for (const edit of edits) {
    if (edit.kind === 'Reorder') {
      const order = edit.payload['order'] as string[];
      const byId = new Map(sections.map((s) => [s.section_id, s]));
      sections = order
        .map((id) => byId.get(id))
        .filter((s): s is PlanSection => s !== undefined);
    } else if (edit.kind === 'RemoveSection') {
      sections = sections.filter(
        (s) => s.section_id !== edit.payload['section_id'],
      );
    } else if (edit.kind === 'Retitle') {
      sections = sections.map((s) =>
        s.section_id === edit.payload['section_id']
          ? { ...s, title: String(edit.payload['title']) }
          : s,
      );
    } else if (edit.kind === 'SetPriority') {
      sections = sections.map((s) =>
        s.section_id === edit.payload['section_id']
          ? { ...s, priority: Number(edit.payload['priority']) }
          : s,
      );
    }
  }
  return { plan_version: plan.plan_version + edits.length, sections };
}

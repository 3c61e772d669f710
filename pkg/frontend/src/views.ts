/** HTML renderers for each phase panel. Pure string output; DOM wiring lives
 * in main.ts so everything here is testable without a browser. */

import type { Plan } from './api.js';
import { renderChartSvg } from './chart.js';
import type { SessionView } from './state.js';
import { validateAnswers } from './state.js';

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function renderPhaseBanner(view: SessionView): string {
  const conflict = view.conflict
    ? `<div class="banner conflict" role="alert">${escapeHtml(view.conflict)} ` +
      '<button type="button" data-action="refresh">Refresh</button></div>'
    : '';
  const failure = view.failureReason
    ? `<div class="banner failure" role="alert">${escapeHtml(view.failureReason)}</div>`
    : '';
  return `<div class="phase" data-phase="${view.phase}">${view.phase}</div>${conflict}${failure}`;
}

export function renderClarificationForm(view: SessionView): string {
  const errors = validateAnswers(view);
  const disabled = view.phase !== 'Clarifying';
  const fields = view.questions
    .map((question) => {
      const draft = view.answerDrafts[question.question_id] ?? '';
      const error = errors[question.question_id];
      return (
        `<label data-question="${question.question_id}">` +
        `<span>${escapeHtml(question.text)}</span>` +
        `<input name="${question.question_id}" value="${escapeHtml(draft)}" ` +
        `placeholder="${escapeHtml(question.default_assumption)}"${disabled ? ' disabled' : ''}/>` +
        (error ? `<em class="field-error">${escapeHtml(error)}</em>` : '') +
        '</label>'
      );
    })
    .join('');
  return (
    `<form class="clarifications"${disabled ? ' data-disabled="true"' : ''}>` +
    fields +
    `<button type="submit"${disabled || Object.keys(errors).length ? ' disabled' : ''}>` +
    'Submit answers</button>' +
    '<p class="hint">Empty fields use the default assumption.</p>' +
    '</form>'
  );
}

export function renderPlanEditor(plan: Plan | null, pendingEdits: number): string {
  if (plan === null) {
    return '<div class="plan-editor empty">No plan yet.</div>';
  }
  const rows = plan.sections
    .map((section, index) => {
      const req = section.coverage_requirement;
      const reqText = req
        ? `${req.min_distinct_sources} sources / ${req.min_spans} spans` +
          (req.required_facets.length ? ` / ${req.required_facets.length} facets` : '')
        : 'defaults';
      return (
        `<li data-section="${section.section_id}" draggable="true">` +
        `<span class="title">${escapeHtml(section.title)}</span>` +
        `<span class="req">${escapeHtml(reqText)}</span>` +
        `<button type="button" data-action="move-up" data-section="${section.section_id}"` +
        `${index === 0 ? ' disabled' : ''}>up</button>` +
        `<button type="button" data-action="move-down" data-section="${section.section_id}"` +
        `${index === plan.sections.length - 1 ? ' disabled' : ''}>down</button>` +
        `<button type="button" data-action="remove" data-section="${section.section_id}"` +
        `${plan.sections.length <= 1 ? ' disabled' : ''}>delete</button>` +
        '</li>'
      );
    })
    .join('');
  return (
    `<div class="plan-editor" data-version="${plan.plan_version}">` +
    `<ol>${rows}</ol>` +
    (pendingEdits > 0
      ? `<span class="pending">${pendingEdits} unsaved edit(s)</span>`
      : '') +
    '<button type="button" data-action="save-edits">Save edits</button>' +
    '<button type="button" data-action="approve">Approve plan</button>' +
    '</div>'
  );
}

export function renderCoverageDashboard(view: SessionView): string {
  const chart = renderChartSvg(view.coverageSeries);
  const gate = view.decisionPending
    ? '<div class="gate">' +
      '<button type="button" data-action="continue">Continue research</button>' +
      '<button type="button" data-action="stop">Stop and synthesize</button>' +
      '</div>'
    : '';
  const latest = Object.keys(view.coverageSeries)
    .sort()
    .map((sectionId) => {
      const points = view.coverageSeries[sectionId] ?? [];
      const last = points[points.length - 1];
      return (
        `<li data-section="${sectionId}">${sectionId}: ` +
        `${last ? (last.coverage * 100).toFixed(1) : '0.0'}%</li>`
      );
    })
    .join('');
  return `<div class="coverage">${chart}<ul>${latest}</ul>${gate}</div>`;
}

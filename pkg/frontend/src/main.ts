/** Browser entry: wires the controller to the DOM. */

import { SteeringApi } from './api.js';
import { SteeringController } from './controller.js';
import { popoverHtml, referenceIndex, reportSections, resolvePopover, sectionHtml } from './popover.js';
import {
  renderClarificationForm,
  renderCoverageDashboard,
  renderPhaseBanner,
  renderPlanEditor,
} from './views.js';

function render(controller: SteeringController, root: HTMLElement): void {
  const view = controller.view;
  const panels = [renderPhaseBanner(view)];
  if (view.phase === 'Clarifying') {
    panels.push(renderClarificationForm(view));
  }
  if (view.phase === 'AwaitingPlanApproval' || view.plan !== null) {
    panels.push(renderPlanEditor(view.plan, controller.pendingEdits));
  }
  if (Object.keys(view.coverageSeries).length > 0 || view.decisionPending) {
    panels.push(renderCoverageDashboard(view));
  }
  root.innerHTML = panels.join('\n');
}

async function showReport(controller: SteeringController, root: HTMLElement): Promise<void> {
  const report = await controller.loadReport();
  if (report.fast_answer !== undefined) {
    root.innerHTML = `<pre class="fast-answer">${report.fast_answer}</pre>`;
    return;
  }
  const records = report.records ?? [];
  const refs = referenceIndex(records);
  const body = reportSections(records).map(sectionHtml).join('\n');
  root.innerHTML = `<article class="report">${body}</article><div id="popover-slot"></div>`;
  root.querySelectorAll<HTMLButtonElement>('button.cite').forEach((button) => {
    button.addEventListener('click', () => {
      // Lazily resolved: popover content is built only when a marker opens.
      const ref = resolvePopover(refs, Number(button.dataset['citation']));
      const slot = root.querySelector('#popover-slot');
      if (ref !== null && slot !== null) {
        slot.innerHTML = popoverHtml(ref);
      }
    });
  });
}

export async function init(root: HTMLElement, base: string, request: string): Promise<void> {
  const controller = new SteeringController(new SteeringApi(base), () =>
    render(controller, root),
  );

  root.addEventListener('submit', (event) => {
    event.preventDefault();
    void controller.submitAnswers();
  });
  root.addEventListener('input', (event) => {
    const input = event.target as HTMLInputElement;
    if (input.name) {
      controller.setAnswer(input.name, input.value);
    }
  });
  root.addEventListener('click', (event) => {
    const button = (event.target as HTMLElement).closest<HTMLButtonElement>('button[data-action]');
    if (button === null) return;
    const section = button.dataset['section'] ?? '';
    const plan = controller.view.plan;
    switch (button.dataset['action']) {
      case 'move-up':
      case 'move-down': {
        if (plan === null) break;
        const direction = button.dataset['action'] === 'move-up' ? 'up' : 'down';
        void import('./planedit.js').then(({ buildMoveEdit }) =>
          controller.queueEdit(buildMoveEdit(plan, section, direction)),
        );
        break;
      }
      case 'remove': {
        if (plan === null) break;
        void import('./planedit.js').then(({ buildRemoveEdit }) =>
          controller.queueEdit(buildRemoveEdit(plan, section)),
        );
        break;
      }
      case 'save-edits':
        void controller.saveEdits();
        break;
      case 'approve':
        void controller.approve().then(() => watch());
        break;
      case 'continue':
      case 'stop':
        void controller.decide(button.dataset['action'] as 'continue' | 'stop');
        break;
      case 'refresh':
        void controller.refresh();
        break;
    }
  });

  async function watch(): Promise<void> {
    await controller.connect(); // resolves when the session reaches a terminal phase
    if (controller.view.reportReady) {
      await showReport(controller, root);
    }
  }

  await controller.start(request);
  await controller.waitForPhase('Clarifying');
  await controller.loadClarifications();
  render(controller, root);
}

declare global {
  interface Window {
    deepresearchInit?: typeof init;
  }
}

if (typeof window !== 'undefined') {
  window.deepresearchInit = init;
}

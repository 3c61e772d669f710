/**
 * Coverage trajectory chart: one polyline per section, iterations on the x
 * axis, coverage 0..1 on the y axis. Pure string rendering keeps the output
 * comparable across reconnects.
 */

import type { CoveragePoint } from './state.js';

const WIDTH = 320;
const HEIGHT = 140;
const MARGIN = 24;

export interface ChartLine {
  sectionId: string;
  points: CoveragePoint[];
  path: string;
}

function scaleX(iteration: number, maxIteration: number): number {
  const span = Math.max(1, maxIteration - 1);
  return MARGIN + ((iteration - 1) / span) * (WIDTH - 2 * MARGIN);
}

function scaleY(coverage: number): number {
  return HEIGHT - MARGIN - coverage * (HEIGHT - 2 * MARGIN);
}

export function chartLines(series: Record<string, CoveragePoint[]>): ChartLine[] {
  const maxIteration = Math.max(
    1,
    ...Object.values(series).flatMap((points) => points.map((p) => p.iteration)),
  );
  return Object.keys(series)
    .sort()
    .map((sectionId) => {
      const points = [...(series[sectionId] ?? [])].sort(
        (a, b) => a.iteration - b.iteration,
      );
      const path = points
        .map(
          (p) =>
            `${scaleX(p.iteration, maxIteration).toFixed(1)},${scaleY(p.coverage).toFixed(1)}`,
        )
        .join(' ');
      return { sectionId, points, path };
    });
}

const LINE_COLORS = ['#2563eb', '#dc2626', '#059669', '#d97706', '#7c3aed'];

export function renderChartSvg(series: Record<string, CoveragePoint[]>): string {
  const lines = chartLines(series);
  const polylines = lines
    .map((line, index) => {
      const color = LINE_COLORS[index % LINE_COLORS.length];
      const markers = line.points
        .map(
          (p) =>
            `<circle cx="${scaleX(p.iteration, Math.max(1, ...lines.flatMap((l) => l.points.map((q) => q.iteration)))).toFixed(1)}" ` +
            `cy="${scaleY(p.coverage).toFixed(1)}" r="3" fill="${color}" data-section="${line.sectionId}" data-iteration="${p.iteration}"/>`,
        )
        .join('');
      return (
        `<polyline fill="none" stroke="${color}" stroke-width="2" points="${line.path}" data-section="${line.sectionId}"/>` +
        markers
      );
    })
    .join('');
  return (
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img" aria-label="per-section coverage by iteration">` +
    `<line x1="${MARGIN}" y1="${HEIGHT - MARGIN}" x2="${WIDTH - MARGIN}" y2="${HEIGHT - MARGIN}" stroke="#9ca3af"/>` +
    `<line x1="${MARGIN}" y1="${MARGIN}" x2="${MARGIN}" y2="${HEIGHT - MARGIN}" stroke="#9ca3af"/>` +
    polylines +
    '</svg>'
  );
}

/**
 * Citation popovers: the report export carries a reference table mapping
 * citation numbers to (source title, uri, excerpt). Popover content is
 * resolved lazily per marker, only when one opens.
 */

import type { ReportRecord } from './api.js';

export interface CitationRef {
  number: number;
  anchor: string;
  source_id: string;
  span_id: string;
  title: string;
  uri: string;
  excerpt: string;
}

export interface ReportSectionView {
  section_id: string;
  heading: string;
  body: string;
  citations: number[];
}

export function referenceIndex(records: ReportRecord[]): Map<number, CitationRef> {
  const index = new Map<number, CitationRef>();
  for (const record of records) {
    if (record.kind === 'reference') {
      const ref = record as unknown as CitationRef;
      index.set(Number(ref.number), ref);
    }
  }
  return index;
}

const ANCHOR_RE = /\[\[([^:\[\]\s]+):([^:\[\]\s]+)\]\]/g;

/** Sections with anchors replaced by citation numbers from the reference table. */
export function reportSections(records: ReportRecord[]): ReportSectionView[] {
  const byAnchor = new Map<string, number>();
  for (const ref of referenceIndex(records).values()) {
    byAnchor.set(ref.anchor, ref.number);
  }
  const sections: ReportSectionView[] = [];
  for (const record of records) {
    if (record.kind !== 'report_section') continue;
    const citations: number[] = [];
    const body = String(record['body']).replace(ANCHOR_RE, (anchor) => {
      const number = byAnchor.get(anchor);
      if (number === undefined) {
        return anchor; // unresolvable markers stay visible rather than vanish
      }
      citations.push(number);
      return `[${number}]`;
    });
    sections.push({
      section_id: String(record['section_id']),
      heading: String(record['heading']),
      body,
      citations,
    });
  }
  return sections;
}

export function resolvePopover(
  index: Map<number, CitationRef>,
  citation: number,
): CitationRef | null {
  return index.get(citation) ?? null;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function popoverHtml(ref: CitationRef): string {
  return (
    `<div class="citation-popover" data-citation="${ref.number}">` +
    `<strong>${escapeHtml(ref.title)}</strong>` +
    `<a href="${escapeHtml(ref.uri)}">${escapeHtml(ref.uri)}</a>` +
    `<blockquote>${escapeHtml(ref.excerpt)}</blockquote>` +
    '</div>'
  );
}

export function sectionHtml(section: ReportSectionView): string {
  const body = escapeHtml(section.body).replace(
    /\[(\d+)\]/g,
    (_match, n: string) =>
      `<button type="button" class="cite" data-citation="${n}">[${n}]</button>`,
  );
  return (
    `<section data-section="${section.section_id}">` +
    `<h2>${escapeHtml(section.heading)}</h2>` +
    `<p>${body}</p>` +
    '</section>'
  );
}

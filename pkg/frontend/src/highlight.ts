/**
 * Span highlighting: turns a text plus [start, end) code-point pairs into a
 * DOM fragment where offensive characters sit inside <mark class="toxic">
 * elements and everything else is rendered verbatim.
 *
 * Invalid span lists never throw: the text is rendered plain and the problem
 * is reported through the result's `error` field for the caller's banner.
 */

import { codePointLength, toCodePoints } from './codePoints.js';

export type SpanPair = [number, number];

export interface HighlightResult {
    element: HTMLElement;
    error: string | null;
}

export function validateSpans(spans: SpanPair[], textLength: number): string | null {
    let previousEnd = 0;
    for (const pair of spans) {
        if (!Array.isArray(pair) || pair.length !== 2) {
            return `malformed span pair: ${JSON.stringify(pair)}`;
        }
        const [start, end] = pair;
        if (!Number.isInteger(start) || !Number.isInteger(end)) {
            return `non-integer span pair: [${start}, ${end})`;
        }
        if (start < 0 || end > textLength || start >= end) {
            return `span [${start}, ${end}) out of bounds for length ${textLength}`;
        }
        if (start < previousEnd) {
            return `span [${start}, ${end}) overlaps or is out of order`;
        }
        previousEnd = end;
    }
    return null;
}

export function renderHighlights(
    text: string,
    spans: SpanPair[],
    doc: Document = document,
): HighlightResult {
    const container = doc.createElement('span');
    container.className = 'annotated';

    const error = validateSpans(spans, codePointLength(text));
    if (error !== null) {
        container.textContent = text;
        return { element: container, error };
    }

    const chars = toCodePoints(text);
    let position = 0;
    for (const [start, end] of spans) {
        if (position < start) {
            container.appendChild(doc.createTextNode(chars.slice(position, start).join('')));
        }
        const mark = doc.createElement('mark');
        mark.className = 'toxic';
        mark.textContent = chars.slice(start, end).join('');
        container.appendChild(mark);
        position = end;
    }
    if (position < chars.length) {
        container.appendChild(doc.createTextNode(chars.slice(position).join('')));
    }
    return { element: container, error: null };
}

/**
 * DOM inspection: the code-point offsets currently highlighted inside an
 * element produced by renderHighlights. Counterpart used by tests to verify
 * highlight coverage equals the server's span set exactly.
 */
export function highlightedOffsets(element: HTMLElement): number[] {
    const offsets: number[] = [];
    let position = 0;
    element.childNodes.forEach((node) => {
        const length = codePointLength(node.textContent ?? '');
        const isMark =
            node.nodeType === node.ELEMENT_NODE &&
            (node as HTMLElement).classList.contains('toxic');
        if (isMark) {
            for (let i = 0; i < length; i += 1) {
                offsets.push(position + i);
            }
        }
        position += length;
    });
    return offsets;
}

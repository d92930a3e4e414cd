/** Annotated fixture rows shared by the console tests (gold offsets are
 * code-point indices, pairs are end-exclusive). */

import type { SpanPair } from '../src/highlight.js';

export interface FixtureRow {
    id: string;
    text: string;
    offsets: number[];
    pairs: SpanPair[];
}

function range(start: number, end: number): number[] {
    return Array.from({ length: end - start }, (_, i) => start + i);
}

export const TABLE1: FixtureRow[] = [
    {
        id: '0',
        text: 'Stupid hatcheries have completely fucked everything',
        offsets: [...range(0, 6), ...range(34, 40)],
        pairs: [
            [0, 6],
            [34, 40],
        ],
    },
    {
        id: '1',
        text: 'Victimitis: You are such an asshole.',
        offsets: range(28, 35),
        pairs: [[28, 35]],
    },
    {
        id: '2',
        text: 'So is his mother. They are silver spoon parasites.',
        offsets: [],
        pairs: [],
    },
    {
        id: '3',
        text: "You're just silly.",
        offsets: range(12, 17),
        pairs: [[12, 17]],
    },
];

export const GREEK: FixtureRow = {
    id: '0',
    text: 'Είσαι εντελώς ηλίθιος.',
    offsets: range(14, 21),
    pairs: [[14, 21]],
};

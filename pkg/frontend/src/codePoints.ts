/**
 * Code-point helpers.
 *
 * The prediction API indexes characters by Unicode code point; JavaScript
 * strings are UTF-16, so naive `slice()` drifts on astral characters. Every
 * offset-based operation in the console goes through this module and nothing
 * else slices annotated text directly.
 */

export function toCodePoints(text: string): string[] {
    return Array.from(text);
}

export function codePointLength(text: string): number {
    return toCodePoints(text).length;
}

export function codePointSlice(text: string, start: number, end: number): string {
    return toCodePoints(text).slice(start, end).join('');
}

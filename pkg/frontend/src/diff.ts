/**
 * Line-based minimal diff under the LCS model, matching the server's diff
 * semantics so replayed chains reconstruct the buffer byte-exactly.
 *
 * Texts are the list of "\n"-separated segments: a trailing newline shows
 * up as a final empty segment, and joinLines inverts splitLines exactly.
 */

import { Hunk } from "./events";

export class PatchMismatch extends Error {}

export function splitLines(text: string): string[] {
  return text.split("\n");
}

export function joinLines(lines: string[]): string {
  return lines.join("\n");
}

/** Matched index pairs of a longest common subsequence (classic DP). */
function lcsPairs(a: string[], b: string[]): Array<[number, number]> {
  const n = a.length;
  const m = b.length;
  let prev = new Uint32Array(m + 1);
  const moves: Uint8Array[] = []; // 0 diag, 1 up, 2 left
  for (let i = 1; i <= n; i++) {
    const cur = new Uint32Array(m + 1);
    const row = new Uint8Array(m + 1);
    const ai = a[i - 1];
    for (let j = 1; j <= m; j++) {
      if (ai === b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
        row[j] = 0;
      } else if (prev[j] >= cur[j - 1]) {
        cur[j] = prev[j];
        row[j] = 1;
      } else {
        cur[j] = cur[j - 1];
        row[j] = 2;
      }
    }
    moves.push(row);
    prev = cur;
  }
  const pairs: Array<[number, number]> = [];
  let i = n;
  let j = m;
  while (i > 0 && j > 0) {
    const mv = moves[i - 1][j];
    if (mv === 0) {
      pairs.push([i - 1, j - 1]);
      i--;
      j--;
    } else if (mv === 1) {
      i--;
    } else {
      j--;
    }
  }
  pairs.reverse();
  return pairs;
}

/** Minimal line-based edit script turning oldText into newText. */
export function computeDiff(oldText: string, newText: string): Hunk[] {
  const a = splitLines(oldText);
  const b = splitLines(newText);

  // Trim common prefix/suffix before the quadratic DP.
  let pre = 0;
  while (pre < a.length && pre < b.length && a[pre] === b[pre]) {
    pre++;
  }
  let suf = 0;
  while (
    suf < a.length - pre &&
    suf < b.length - pre &&
    a[a.length - 1 - suf] === b[b.length - 1 - suf]
  ) {
    suf++;
  }
  const midA = a.slice(pre, a.length - suf);
  const midB = b.slice(pre, b.length - suf);

  const pairs = lcsPairs(midA, midB);
  const hunks: Hunk[] = [];
  let ia = 0;
  let ib = 0;
  const anchors: Array<[number, number]> = [...pairs, [midA.length, midB.length]];
  for (const [pa, pb] of anchors) {
    if (ia < pa || ib < pb) {
      hunks.push({
        start_line: pre + ia + 1,
        deleted: midA.slice(ia, pa),
        inserted: midB.slice(ib, pb),
      });
    }
    ia = pa + 1;
    ib = pb + 1;
  }
  return hunks;
}

/** Apply an edit script exactly; PatchMismatch if deletions disagree with base. */
export function applyDiff(baseText: string, hunks: Hunk[]): string {
  const base = splitLines(baseText);
  const out: string[] = [];
  let pos = 0; // 0-based index into base
  for (const h of hunks) {
    const start = h.start_line - 1;
    if (start < pos) {
      throw new PatchMismatch(`hunk at line ${h.start_line} overlaps previous hunk`);
    }
    out.push(...base.slice(pos, start));
    const actual = base.slice(start, start + h.deleted.length);
    if (actual.length !== h.deleted.length || actual.some((s, k) => s !== h.deleted[k])) {
      throw new PatchMismatch(
        `hunk at line ${h.start_line}: expected to delete ${JSON.stringify(h.deleted)}, ` +
          `base has ${JSON.stringify(actual)}`
      );
    }
    out.push(...h.inserted);
    pos = start + h.deleted.length;
  }
  out.push(...base.slice(pos));
  return joinLines(out);
}

/** Line count the way the wire protocol defines it: a trailing newline does not open a line. */
export function countLines(text: string): number {
  if (text === "") {
    return 0;
  }
  const segments = splitLines(text);
  return segments[segments.length - 1] === "" ? segments.length - 1 : segments.length;
}

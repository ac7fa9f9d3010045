"""Line-based minimal diff under the LCS model, plus exact patch application.

Texts are modeled as the list of ``"\\n"``-separated segments, so a trailing
newline shows up as a final empty segment and every text round-trips
byte-exactly through split/join. The core guarantee:

    apply_diff(old, compute_diff(old, new)) == new   (byte-exact, any texts)
"""

from __future__ import annotations

from .events import Hunk, PatchMismatch


def split_lines(text: str) -> list[str]:
    """Segments between newlines; '' becomes [''] so join inverts split exactly."""
    return text.split("\n")


def join_lines(lines: list[str]) -> str:
    return "\n".join(lines)


def _lcs_pairs(a: list[str], b: list[str]) -> list[tuple[int, int]]:
    """Matched index pairs of a longest common subsequence (classic DP)."""
    n, m = len(a), len(b)
    # One row of lengths at a time; keep the full table of back-pointers packed
    # as 2-bit moves to reconstruct the path.
    prev = [0] * (m + 1)
    moves = []  # moves[i][j]: 0 diag, 1 up, 2 left
    for i in range(1, n + 1):
        cur = [0] * (m + 1)
        row = bytearray(m + 1)
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
                row[j] = 0
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
                row[j] = 1
            else:
                cur[j] = cur[j - 1]
                row[j] = 2
        moves.append(row)
        prev = cur
    pairs: list[tuple[int, int]] = []
    i, j = n, m
    while i > 0 and j > 0:
        mv = moves[i - 1][j]
        if mv == 0:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif mv == 1:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return pairs


def compute_diff(old_text: str, new_text: str) -> list[Hunk]:
    """Minimal line-based edit script turning old_text into new_text."""
    a = split_lines(old_text)
    b = split_lines(new_text)

    # Trim common prefix/suffix before the quadratic DP.
    pre = 0
    while pre < len(a) and pre < len(b) and a[pre] == b[pre]:
        pre += 1
    suf = 0
    while suf < len(a) - pre and suf < len(b) - pre and a[-1 - suf] == b[-1 - suf]:
        suf += 1
    mid_a = a[pre : len(a) - suf]
    mid_b = b[pre : len(b) - suf]

    pairs = _lcs_pairs(mid_a, mid_b)
    hunks: list[Hunk] = []
    ia = ib = 0
    anchors = pairs + [(len(mid_a), len(mid_b))]
    for pa, pb in anchors:
        if ia < pa or ib < pb:
            hunks.append(
                Hunk(
                    start_line=pre + ia + 1,
                    deleted=tuple(mid_a[ia:pa]),
                    inserted=tuple(mid_b[ib:pb]),
                )
            )
        ia, ib = pa + 1, pb + 1
    return hunks


def apply_diff(base_text: str, hunks: list[Hunk] | tuple[Hunk, ...]) -> str:
    """Apply an edit script exactly; PatchMismatch if deleted lines disagree with base."""
    base = split_lines(base_text)
    out: list[str] = []
    pos = 0  # 0-based index into base
    for h in hunks:
        start = h.start_line - 1
        if start < pos:
            raise PatchMismatch(f"hunk at line {h.start_line} overlaps previous hunk")
        out.extend(base[pos:start])
        actual = base[start : start + len(h.deleted)]
        if list(actual) != list(h.deleted):
            raise PatchMismatch(
                f"hunk at line {h.start_line}: expected to delete {list(h.deleted)!r}, "
                f"base has {actual!r}"
            )
        out.extend(h.inserted)
        pos = start + len(h.deleted)
    out.extend(base[pos:])
    return join_lines(out)

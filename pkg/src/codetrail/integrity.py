"""Plagiarism signals: winnowed fingerprints of normalized tokens + timestamp coupling.

Two independent signals per student pair, both in [0, 1]:

  * content similarity — Jaccard over winnowed k-gram fingerprints of the
    normalized token streams. Normalization keeps reserved words and operators
    verbatim but maps every identifier to IDENT and every literal to LIT, so
    renaming variables or changing constants does not move the score.
  * temporal coupling — how often the two students' edit timestamps co-occur
    within a tolerance window.

A pair is flagged only when BOTH signals clear their thresholds, and the
report is advisory: signals for human review, never a verdict.
"""

from __future__ import annotations

import re
from bisect import bisect_left
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .events import EventKind, StoredEvent
from .store import BrokenChain, EventFilter, EventStore, NoSuchFile

DEFAULT_K = 5
DEFAULT_W = 4
DEFAULT_SIM_THRESHOLD = 0.5
DEFAULT_COUPLING_THRESHOLD = 0.6
DEFAULT_COUPLING_WINDOW_SECONDS = 120

_MASK64 = (1 << 64) - 1
_HASH_BASE = 1099511628211  # FNV prime doubles as the polynomial base


class IntegrityError(Exception):
    pass


class UnknownProfile(IntegrityError):
    pass


class ParameterMismatch(IntegrityError):
    pass


class UnsortedInput(IntegrityError):
    pass


# -- token normalization -------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>//[^\n]*|\#[^\n]*|/\*.*?\*/)
  | (?P<string>"(?:\\.|[^"\\])*"|'(?:\\.|[^'\\])*')
  | (?P<number>\d[\w.]*)
  | (?P<word>[A-Za-z_]\w*)
  | (?P<ws>\s+)
  | (?P<punct>.)
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    language_profile: str


def _builtin_profile_path(name: str) -> Path | None:
    ref = resources.files("codetrail") / "profiles" / f"{name}.txt"
    return Path(str(ref)) if ref.is_file() else None


def load_profile(profile: str | Path) -> tuple[str, frozenset[str]]:
    """Resolve a profile name or word-list file to (name, reserved words)."""
    path = Path(profile)
    if not path.is_file():
        builtin = _builtin_profile_path(str(profile))
        if builtin is None:
            raise UnknownProfile(f"no such language profile: {profile}")
        path = builtin
    words = frozenset(
        line.strip()
        for line in path.read_text().splitlines()
        if line.strip() and not line.startswith("#")
    )
    return path.stem, words


def normalize_tokens(source: str, profile: str | Path = "c_like") -> TokenStream:
    """Strip comments/whitespace; identifiers -> IDENT, literals -> LIT.

    Reserved words from the profile table and operator/punctuation characters
    survive verbatim, so they carry the style signal.
    """
    name, reserved = load_profile(profile)
    out: list[str] = []
    for m in _TOKEN_RE.finditer(source):
        if m.lastgroup in ("comment", "ws"):
            continue
        text = m.group()
        if m.lastgroup in ("string", "number"):
            out.append("LIT")
        elif m.lastgroup == "word":
            out.append(text if text in reserved else "IDENT")
        else:
            out.append(text)
    return TokenStream(tokens=tuple(out), language_profile=name)


# -- winnowing -----------------------------------------------------------


@dataclass(frozen=True)
class FingerprintSet:
    k: int
    w: int
    prints: frozenset[tuple[int, int]]  # (hash, token position of k-gram start)

    @property
    def hashes(self) -> frozenset[int]:
        return frozenset(h for h, _ in self.prints)


def _token_hash(token: str) -> int:
    h = 14695981039346656037  # FNV-1a 64
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _HASH_BASE) & _MASK64
    return h


def kgram_hashes(tokens: tuple[str, ...] | list[str], k: int) -> list[int]:
    """Rolling polynomial 64-bit hash of every k-gram of token hashes."""
    n = len(tokens)
    if n < k:
        return []
    th = [_token_hash(t) for t in tokens]
    top = pow(_HASH_BASE, k - 1, 1 << 64)
    h = 0
    for i in range(k):
        h = (h * _HASH_BASE + th[i]) & _MASK64
    out = [h]
    for i in range(1, n - k + 1):
        h = ((h - th[i - 1] * top) * _HASH_BASE + th[i + k - 1]) & _MASK64
        out.append(h)
    return out


def fingerprint(stream: TokenStream, k: int = DEFAULT_K, w: int = DEFAULT_W) -> FingerprintSet:
    """Winnow the k-gram hashes: keep each window's minimum, rightmost on ties."""
    if k < 2:
        raise ParameterMismatch("k must be >= 2")
    if w < 1:
        raise ParameterMismatch("w must be >= 1")
    hashes = kgram_hashes(stream.tokens, k)
    prints: set[tuple[int, int]] = set()
    if not hashes:
        return FingerprintSet(k=k, w=w, prints=frozenset())
    for start in range(max(1, len(hashes) - w + 1)):
        window = hashes[start : start + w]
        best = min(window)
        # rightmost minimum
        idx = start + max(i for i, h in enumerate(window) if h == best)
        prints.add((best, idx))
    return FingerprintSet(k=k, w=w, prints=frozenset(prints))


def content_similarity(a: FingerprintSet, b: FingerprintSet) -> float:
    """Jaccard similarity over fingerprint hash sets; two empty sets score 0."""
    if (a.k, a.w) != (b.k, b.w):
        raise ParameterMismatch(f"fingerprint params differ: ({a.k},{a.w}) vs ({b.k},{b.w})")
    ha, hb = a.hashes, b.hashes
    union = ha | hb
    if not union:
        return 0.0
    return len(ha & hb) / len(union)


# -- temporal coupling ---------------------------------------------------

_EDIT_KINDS = frozenset({EventKind.FILE_DIFF, EventKind.FILE_SAVE})


def edit_timestamps(events: list[StoredEvent]) -> list[float]:
    """client_ts seconds of the edit events (FileDiff / FileSave), sorted order required."""
    out = [se.event.client_ts.seconds for se in events if se.event.kind in _EDIT_KINDS]
    if any(b < a for a, b in zip(out, out[1:])):
        raise UnsortedInput("edit events not client_ts-sorted")
    return out


def coupling_from_timestamps(
    ts_a: list[float], ts_b: list[float], window_seconds: int = DEFAULT_COUPLING_WINDOW_SECONDS
) -> float:
    """Symmetric co-occurrence of two sorted timestamp lists within the window."""
    if not ts_a or not ts_b:
        return 0.0

    def frac(src: list[float], other: list[float]) -> float:
        hits = 0
        for t in src:
            i = bisect_left(other, t - window_seconds)
            if i < len(other) and other[i] <= t + window_seconds:
                hits += 1
        return hits / len(src)

    return (frac(ts_a, ts_b) + frac(ts_b, ts_a)) / 2.0


def temporal_coupling(
    events_a: list[StoredEvent],
    events_b: list[StoredEvent],
    window_seconds: int = DEFAULT_COUPLING_WINDOW_SECONDS,
) -> float:
    return coupling_from_timestamps(
        edit_timestamps(events_a), edit_timestamps(events_b), window_seconds
    )


# -- pair report ---------------------------------------------------------


@dataclass(frozen=True)
class PairScore:
    actor_a: str
    actor_b: str
    content_similarity: float
    temporal_coupling: float
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "actor_a": self.actor_a,
            "actor_b": self.actor_b,
            "content_similarity": self.content_similarity,
            "temporal_coupling": self.temporal_coupling,
            "flagged": self.flagged,
        }


@dataclass
class IntegrityReport:
    """Ranked pair scores. Signals for human review, never a verdict."""

    exercise_id: str
    pairs: list[PairScore]
    skipped: list[str]  # actors whose replay failed (broken chain)

    def to_dict(self) -> dict:
        return {
            "exercise_id": self.exercise_id,
            "note": "signals for human review, not a verdict",
            "pairs": [p.to_dict() for p in self.pairs],
            "skipped_actors": self.skipped,
        }


def _final_submission_text(store: EventStore, actor: str, exercise_id: str) -> str:
    """Concatenation of the actor's replayed final file texts, path-sorted."""
    flt = EventFilter(
        actor_id=actor,
        exercise_id=exercise_id,
        kinds=frozenset({EventKind.FILE_SNAPSHOT, EventKind.FILE_DIFF}),
    )
    targets = {(se.event.workspace_id, se.event.payload.file) for se in store.scan(flt)}  # type: ignore[union-attr]
    parts = []
    for workspace_id, file in sorted(targets):
        parts.append(store.reconstruct_file(actor, workspace_id, file))
    return "\n".join(parts)


def integrity_report(
    store: EventStore,
    exercise_id: str,
    sim_threshold: float = DEFAULT_SIM_THRESHOLD,
    coupling_threshold: float = DEFAULT_COUPLING_THRESHOLD,
    window_seconds: int = DEFAULT_COUPLING_WINDOW_SECONDS,
    profile: str | Path = "c_like",
    k: int = DEFAULT_K,
    w: int = DEFAULT_W,
) -> IntegrityReport:
    """Score every actor pair on an exercise; flag only when both signals fire."""
    scoped = list(store.scan(EventFilter(exercise_id=exercise_id)))
    actors = sorted({se.event.actor_id for se in scoped})
    prints: dict[str, FingerprintSet] = {}
    edits: dict[str, list[float]] = {}
    skipped: list[str] = []
    for actor in actors:
        try:
            text = _final_submission_text(store, actor, exercise_id)
        except (BrokenChain, NoSuchFile) as exc:
            skipped.append(f"{actor}: {exc}")
            continue
        prints[actor] = fingerprint(normalize_tokens(text, profile), k, w)
        own = [se for se in scoped if se.event.actor_id == actor]
        edits[actor] = edit_timestamps(own)
    scored_actors = [a for a in actors if a in prints]
    pairs: list[PairScore] = []
    for i, a in enumerate(scored_actors):
        for b in scored_actors[i + 1 :]:
            sim = content_similarity(prints[a], prints[b])
            coupling = coupling_from_timestamps(edits[a], edits[b], window_seconds)
            pairs.append(
                PairScore(
                    actor_a=a,
                    actor_b=b,
                    content_similarity=sim,
                    temporal_coupling=coupling,
                    flagged=sim >= sim_threshold and coupling >= coupling_threshold,
                )
            )
    pairs.sort(key=lambda p: (-p.content_similarity, p.actor_a, p.actor_b))
    return IntegrityReport(exercise_id=exercise_id, pairs=pairs, skipped=skipped)

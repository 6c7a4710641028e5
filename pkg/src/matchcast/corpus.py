"""Match results, preview articles and team aliases.

Inputs are a results CSV, a JSON-Lines file of preview articles and a JSON
alias table. A loaded :class:`Corpus` is immutable and date ordered; it can be
cached to a single gzip container with :func:`save_corpus`.
"""

from __future__ import annotations

import csv
import datetime as dt
import gzip
import io
import json
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import DataError, EmptySplitError
from .fileio import atomic_write_bytes
from .odds import OddsTriple
from .outcomes import Outcome
from .tokens import tokenize

MATCH_COLUMNS = (
    "match_id",
    "date",
    "season",
    "home_team",
    "away_team",
    "home_goals",
    "away_goals",
    "odds_home",
    "odds_draw",
    "odds_away",
)

CACHE_FORMAT = "matchcast.corpus"
CACHE_VERSION = 1


@dataclass(frozen=True)
class MatchRecord:
    match_id: str
    date: dt.date
    season: str
    home_team: str
    away_team: str
    home_goals: int
    away_goals: int
    odds: OddsTriple | None = None

    def __post_init__(self) -> None:
        if not self.match_id:
            raise ValueError("empty match_id")
        if self.home_team == self.away_team:
            raise ValueError(f"{self.match_id}: home and away team are both {self.home_team!r}")
        if self.home_goals < 0 or self.away_goals < 0:
            raise ValueError(f"{self.match_id}: negative goals")

    @property
    def outcome(self) -> Outcome:
        return Outcome.from_score(self.home_goals, self.away_goals)

    @property
    def sort_key(self) -> tuple[dt.date, str]:
        return (self.date, self.match_id)

    def to_row(self) -> dict[str, str]:
        odds = self.odds.as_tuple() if self.odds else ("", "", "")
        return {
            "match_id": self.match_id,
            "date": self.date.isoformat(),
            "season": self.season,
            "home_team": self.home_team,
            "away_team": self.away_team,
            "home_goals": str(self.home_goals),
            "away_goals": str(self.away_goals),
            "odds_home": repr(odds[0]) if odds[0] != "" else "",
            "odds_draw": repr(odds[1]) if odds[1] != "" else "",
            "odds_away": repr(odds[2]) if odds[2] != "" else "",
        }


@dataclass(frozen=True)
class PreviewArticle:
    """A preview text bound to one fixture.

    ``sentences`` is ``None`` until :func:`segment_sentences` has run; an
    empty tuple means the text had no sentences.
    """

    match_id: str
    source: str
    text: str
    sentences: tuple[str, ...] | None = None

    @property
    def is_segmented(self) -> bool:
        return self.sentences is not None


class TeamAliasTable:
    """Canonical team id -> surface strings (club names, nicknames, staff surnames).

    Lookup is case-insensitive and token based, so "Spurs'" and "spurs" hit the
    same alias. Within one fixture the two teams' alias sets must not overlap.
    """

    def __init__(self, aliases: Mapping[str, Iterable[str]]):
        table: dict[str, tuple[str, ...]] = {}
        tokenized: dict[str, frozenset[tuple[str, ...]]] = {}
        for team, names in aliases.items():
            names = tuple(names)
            if isinstance(names, str) or not all(isinstance(n, str) for n in names):
                raise DataError(f"aliases for {team!r} must be a list of strings")
            table[team] = names
            toks = {tuple(tokenize(n)) for n in names}
            toks.discard(())
            tokenized[team] = frozenset(toks)
        self._aliases = table
        self._tokenized = tokenized
        self._pair_cache: dict[tuple[str, str], tuple[dict[tuple[str, ...], str], int]] = {}

    @classmethod
    def load(cls, path: str | Path) -> "TeamAliasTable":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from None
        if not isinstance(data, dict):
            raise DataError("alias file must hold a JSON object", path=str(path))
        return cls(data)

    @property
    def teams(self) -> tuple[str, ...]:
        return tuple(sorted(self._aliases))

    def __contains__(self, team: object) -> bool:
        return team in self._aliases

    def aliases(self, team: str) -> tuple[str, ...]:
        return self._aliases[team]

    def to_dict(self) -> dict[str, list[str]]:
        return {team: list(names) for team, names in sorted(self._aliases.items())}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TeamAliasTable) and self.to_dict() == other.to_dict()

    def _pair_index(self, home: str, away: str) -> tuple[dict[tuple[str, ...], str], int]:
        key = (home, away)
        cached = self._pair_cache.get(key)
        if cached is not None:
            return cached
        for team in key:
            if team not in self._tokenized:
                raise DataError(f"no aliases for team {team!r}")
        overlap = self._tokenized[home] & self._tokenized[away]
        if overlap:
            shown = ", ".join(" ".join(t) for t in sorted(overlap))
            raise DataError(f"aliases shared by {home} and {away}: {shown}")
        index = {alias: home for alias in self._tokenized[home]}
        index.update({alias: away for alias in self._tokenized[away]})
        longest = max((len(a) for a in index), default=0)
        self._pair_cache[key] = (index, longest)
        return index, longest

    def find_mentions(self, tokens: Sequence[str], home: str, away: str) -> list[tuple[str, int, int]]:
        """Alias hits as ``(team, start, stop)`` token ranges.

        Scans left to right taking the longest alias at each position, so
        "manchester united" is one hit rather than two.
        """
        index, longest = self._pair_index(home, away)
        hits = []
        i, n = 0, len(tokens)
        while i < n:
            for width in range(min(longest, n - i), 0, -1):
                team = index.get(tuple(tokens[i : i + width]))
                if team is not None:
                    hits.append((team, i, i + width))
                    i += width
                    break
            else:
                i += 1
        return hits


@dataclass(frozen=True)
class Corpus:
    matches: tuple[MatchRecord, ...]
    previews: Mapping[str, tuple[PreviewArticle, ...]] = field(default_factory=dict)
    aliases: TeamAliasTable = field(default_factory=lambda: TeamAliasTable({}))

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.matches, key=lambda m: m.sort_key))
        object.__setattr__(self, "matches", ordered)
        seen: set[str] = set()
        for m in ordered:
            if m.match_id in seen:
                raise DataError(f"duplicate match_id {m.match_id!r}")
            seen.add(m.match_id)
        for match_id in self.previews:
            if match_id not in seen:
                raise DataError(f"preview refers to unknown match_id {match_id!r}")
        object.__setattr__(self, "previews", dict(sorted(self.previews.items())))

    @classmethod
    def build(
        cls,
        matches: Iterable[MatchRecord],
        articles: Iterable[PreviewArticle] = (),
        aliases: TeamAliasTable | None = None,
        segment: bool = True,
    ) -> "Corpus":
        grouped: dict[str, list[PreviewArticle]] = {}
        for art in articles:
            if segment and not art.is_segmented:
                art = segment_sentences(art)
            grouped.setdefault(art.match_id, []).append(art)
        return cls(
            tuple(matches),
            {k: tuple(v) for k, v in grouped.items()},
            aliases if aliases is not None else TeamAliasTable({}),
        )

    def __len__(self) -> int:
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    @cached_property
    def _by_id(self) -> dict[str, MatchRecord]:
        return {m.match_id: m for m in self.matches}

    def match(self, match_id: str) -> MatchRecord:
        try:
            return self._by_id[match_id]
        except KeyError:
            raise DataError(f"unknown match_id {match_id!r}") from None

    def __contains__(self, match_id: object) -> bool:
        return match_id in self._by_id

    def previews_for(self, match_id: str) -> tuple[PreviewArticle, ...]:
        return self.previews.get(match_id, ())

    def has_text(self, match_id: str) -> bool:
        return bool(self.previews.get(match_id))

    @property
    def articles(self) -> list[PreviewArticle]:
        return [a for arts in self.previews.values() for a in arts]

    @property
    def seasons(self) -> list[str]:
        """Season labels in order of first appearance."""
        out: list[str] = []
        for m in self.matches:
            if m.season not in out:
                out.append(m.season)
        return out

    @property
    def teams(self) -> list[str]:
        return sorted({m.home_team for m in self.matches} | {m.away_team for m in self.matches})

    def season_matches(self, season: str) -> list[MatchRecord]:
        return [m for m in self.matches if m.season == season]

    def season_start(self, season: str) -> dt.date:
        for m in self.matches:
            if m.season == season:
                return m.date
        raise DataError(f"season {season!r} not in corpus")

    def subset(self, keep: Callable[[MatchRecord], bool] | Iterable[str]) -> "Corpus":
        if callable(keep):
            chosen = tuple(m for m in self.matches if keep(m))
        else:
            ids = set(keep)
            chosen = tuple(m for m in self.matches if m.match_id in ids)
        ids = {m.match_id for m in chosen}
        previews = {k: v for k, v in self.previews.items() if k in ids}
        return Corpus(chosen, previews, self.aliases)


# ---------------------------------------------------------------------------
# loading


def _parse_odds(values: list[str], line: int, path: str) -> OddsTriple | None:
    stripped = [v.strip() for v in values]
    if all(v == "" for v in stripped):
        return None
    if any(v == "" for v in stripped):
        raise DataError("odds must be all present or all empty", path=path, line=line)
    try:
        return OddsTriple(*(float(v) for v in stripped))
    except ValueError as exc:
        raise DataError(f"bad odds: {exc}", path=path, line=line) from None


def load_matches(path: str | Path) -> list[MatchRecord]:
    """Parse and validate a results CSV; returns records sorted by (date, match_id)."""
    path_s = str(path)
    records: list[MatchRecord] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file, expected a header row", path=path_s, line=1) from None
        if tuple(h.strip() for h in header) != MATCH_COLUMNS:
            raise DataError(
                f"header must be exactly {','.join(MATCH_COLUMNS)}", path=path_s, line=1
            )
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MATCH_COLUMNS):
                raise DataError(
                    f"expected {len(MATCH_COLUMNS)} fields, got {len(row)}", path=path_s, line=line
                )
            match_id, date_s, season, home, away, hg, ag = (c.strip() for c in row[:7])
            if not match_id or not season or not home or not away:
                raise DataError("empty match_id, season or team", path=path_s, line=line)
            if match_id in seen:
                raise DataError(
                    f"duplicate match_id {match_id!r} (first seen on line {seen[match_id]})",
                    path=path_s,
                    line=line,
                )
            try:
                date = dt.date.fromisoformat(date_s)
            except ValueError:
                raise DataError(f"unparsable date {date_s!r}", path=path_s, line=line) from None
            try:
                home_goals, away_goals = int(hg), int(ag)
            except ValueError:
                raise DataError(f"goals must be integers, got {hg!r}, {ag!r}", path=path_s, line=line) from None
            if home_goals < 0 or away_goals < 0:
                raise DataError("negative goals", path=path_s, line=line)
            if home == away:
                raise DataError(f"team {home!r} plays itself", path=path_s, line=line)
            odds = _parse_odds(row[7:], line, path_s)
            seen[match_id] = line
            records.append(MatchRecord(match_id, date, season, home, away, home_goals, away_goals, odds))
    records.sort(key=lambda m: m.sort_key)
    return records


def load_previews(path: str | Path) -> list[PreviewArticle]:
    """One article per JSON-Lines record with string fields match_id, source, text."""
    path_s = str(path)
    out: list[PreviewArticle] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", path=path_s, line=line_no) from None
            if not isinstance(obj, dict):
                raise DataError("each line must be a JSON object", path=path_s, line=line_no)
            for key in ("match_id", "source", "text"):
                if key not in obj:
                    raise DataError(f"missing field {key!r}", path=path_s, line=line_no)
                if not isinstance(obj[key], str):
                    raise DataError(f"field {key!r} must be a string", path=path_s, line=line_no)
            if not obj["match_id"]:
                raise DataError("empty match_id", path=path_s, line=line_no)
            out.append(PreviewArticle(obj["match_id"], obj["source"], obj["text"]))
    return out


def write_matches_csv(matches: Iterable[MatchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=MATCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for m in matches:
        writer.writerow(m.to_row())
    return buf.getvalue()


def write_previews_jsonl(articles: Iterable[PreviewArticle]) -> str:
    lines = [
        json.dumps({"match_id": a.match_id, "source": a.source, "text": a.text}, ensure_ascii=False)
        for a in articles
    ]
    return "".join(line + "\n" for line in lines)


def load_corpus_files(
    matches: str | Path, previews: str | Path | None = None, aliases: str | Path | None = None
) -> Corpus:
    records = load_matches(matches)
    articles = load_previews(previews) if previews else []
    table = TeamAliasTable.load(aliases) if aliases else TeamAliasTable({})
    return Corpus.build(records, articles, table)


# ---------------------------------------------------------------------------
# sentence segmentation

ABBREVIATIONS = frozenset(
    {
        "st", "mr", "mrs", "ms", "dr", "jr", "sr", "prof", "rev", "gen", "capt",
        "lt", "col", "sgt", "mt", "ft", "vs", "v", "no", "nos", "inc", "ltd", "co",
        "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov",
        "dec", "e.g", "i.e", "a.m", "p.m", "approx", "est",
    }
)

_TERMINAL = re.compile(r"[.!?]+[\"'”’)\]]*")
_OPENERS = "\"'“‘(["


def _starts_sentence(text: str, pos: int) -> bool:
    """Whitespace then (optional opening quote) an uppercase letter, or end of text."""
    n = len(text)
    j = pos
    while j < n and text[j].isspace():
        j += 1
    if j == n:
        return True
    if j == pos:
        return False
    while j < n and text[j] in _OPENERS:
        j += 1
    return j < n and text[j].isupper()


def _is_abbreviation(text: str, punct_start: int, punct: str) -> bool:
    if not punct.startswith(".") or punct.rstrip("\"'”’)]") != ".":
        return False
    m = re.search(r"(\S+)$", text[:punct_start])
    if not m:
        return False
    word = m.group(1).lstrip("\"'“‘([")
    if word.lower() in ABBREVIATIONS:
        return True
    return len(word) == 1 and word.isupper()  # an initial: "H. Kane"


def split_sentences(text: str) -> list[str]:
    sentences: list[str] = []
    start = 0
    for m in _TERMINAL.finditer(text):
        if not _starts_sentence(text, m.end()):
            continue
        if _is_abbreviation(text, m.start(), m.group(0)):
            continue
        piece = text[start : m.end()].strip()
        if piece:
            sentences.append(piece)
        start = m.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def segment_sentences(article: PreviewArticle) -> PreviewArticle:
    """Return a copy of ``article`` with its ``sentences`` filled in."""
    return replace(article, sentences=tuple(split_sentences(article.text)))


# ---------------------------------------------------------------------------
# splitting


def temporal_split(corpus: Corpus, cutoff: dt.date) -> tuple[Corpus, Corpus]:
    """Matches strictly before ``cutoff`` train; matches on or after it test."""
    train = corpus.subset(lambda m: m.date < cutoff)
    test = corpus.subset(lambda m: m.date >= cutoff)
    if not train.matches:
        raise EmptySplitError("train", f"no matches before {cutoff.isoformat()}")
    if not test.matches:
        raise EmptySplitError("test", f"no matches on or after {cutoff.isoformat()}")
    return train, test


# ---------------------------------------------------------------------------
# cache container


def _match_to_json(m: MatchRecord) -> dict:
    return {
        "match_id": m.match_id,
        "date": m.date.isoformat(),
        "season": m.season,
        "home_team": m.home_team,
        "away_team": m.away_team,
        "home_goals": m.home_goals,
        "away_goals": m.away_goals,
        "odds": list(m.odds.as_tuple()) if m.odds else None,
    }


def _match_from_json(d: dict) -> MatchRecord:
    odds = OddsTriple(*d["odds"]) if d.get("odds") else None
    return MatchRecord(
        d["match_id"], dt.date.fromisoformat(d["date"]), d["season"], d["home_team"],
        d["away_team"], int(d["home_goals"]), int(d["away_goals"]), odds,
    )


def corpus_to_bytes(corpus: Corpus) -> bytes:
    payload = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "matches": [_match_to_json(m) for m in corpus.matches],
        "previews": [
            {
                "match_id": a.match_id,
                "source": a.source,
                "text": a.text,
                "sentences": list(a.sentences) if a.sentences is not None else None,
            }
            for a in corpus.articles
        ],
        "aliases": corpus.aliases.to_dict(),
    }
    raw = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
        gz.write(raw)
    return buf.getvalue()


def corpus_from_bytes(data: bytes, source: str = "<bytes>") -> Corpus:
    try:
        payload = json.loads(gzip.decompress(data).decode("utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"not a corpus cache ({exc})", path=source) from None
    if not isinstance(payload, dict) or payload.get("format") != CACHE_FORMAT:
        raise DataError("not a corpus cache", path=source)
    if payload.get("version") != CACHE_VERSION:
        raise DataError(
            f"corpus cache version {payload.get('version')!r} != supported {CACHE_VERSION}", path=source
        )
    matches = [_match_from_json(d) for d in payload["matches"]]
    articles = [
        PreviewArticle(
            d["match_id"], d["source"], d["text"],
            tuple(d["sentences"]) if d["sentences"] is not None else None,
        )
        for d in payload["previews"]
    ]
    return Corpus.build(matches, articles, TeamAliasTable(payload["aliases"]), segment=False)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    atomic_write_bytes(path, corpus_to_bytes(corpus))


def load_corpus(path: str | Path) -> Corpus:
    with open(path, "rb") as fh:
        return corpus_from_bytes(fh.read(), str(path))

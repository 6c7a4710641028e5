"""Preview text -> per-match feature vector.

Pipeline per fixture: relation tuples are pulled out of every sentence with a
small rule-based extractor, each sentence is allocated to the home side, the
away side or neither by counting team-alias mentions (hits inside a tuple
argument count double), sentences are count-vectorized over a vocabulary
fitted on training articles, and the allocated vectors are summed per side.
The final feature vector is ``[mu * home_sum, away_sum]``.
"""

from __future__ import annotations

import csv
import hashlib
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, MatchRecord, PreviewArticle, TeamAliasTable, segment_sentences
from .errors import DataError
from .tokens import Token, lex, tokenize

HOME, AWAY, NONE = "home", "away", "none"

DEFAULT_MU = 1.25
DEFAULT_THETA = 0.6
DEFAULT_MIN_DF = 3
DEFAULT_MAX_DF = 0.9
MU_GRID = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)

ARGUMENT_WEIGHT = 2
PLAIN_WEIGHT = 1

STOP_WORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be because been
    before being below between both but by can could did do does doing down during each
    few for from further had has have having he her here hers herself him himself his how
    i if in into is it its itself just me more most my myself no nor not now of off on once
    only or other our ours ourselves out over own same she should so some such than that the
    their theirs them themselves then there these they this those through to too under until
    up very was we were what when where which while who whom why will with would you your
    yours yourself yourselves s t don isn wasn aren weren hasn haven hadn couldn shouldn
    wouldn didn doesn ll ve re d m o y may might must shall us one get got per via upon
    """.split()
)

# modal/auxiliary and common football-preview verbs with their inflections
VERB_LEXICON = frozenset(
    """
    is are was were be been being am has have had having will would can could should
    shall may might must do does did begin begins began begun face faces faced facing
    play plays played playing win wins won winning beat beats beaten lose loses lost
    draw draws drew drawn host hosts hosted visit visits visited travel travels travelled
    return returns returned miss misses missed need needs needed take takes took taken
    make makes made go goes went gone come comes came look looks looked remain remains
    remained feature features featured start starts started score scores scored sign
    signs signed join joins joined hope hopes hoped know knows knew say says said show
    shows showed shown get gets got keep keeps kept expect expects expected compete
    competes competed suffer suffers suffered seem seems seemed appear appears appeared
    become becomes became lead leads led sit sits sat stay stays stayed head heads headed
    welcome welcomes welcomed leave leaves left give gives gave given want wants wanted
    believe believes believed continue continues continued recover recovers recovered
    sack sacks sacked
    """.split()
)

# frequent -ed/-s nouns and adjectives that must never pivot a tuple
NOT_VERBS = frozenset(
    """
    united red bed speed need seed feed tottenham wolves spurs hammers gunners blues reds
    saints magpies toffees villans eagles seagulls hornets cherries canaries terriers
    games goals points results chances news years weeks days months players fans odds
    minutes matches times sides teams injuries hopes cups wins losses draws plus bus
    always perhaps less unless yes thus this his its was has is as us
    """.split()
) - VERB_LEXICON

PREPOSITIONS = frozenset(
    "at in on with without against over under into onto from to for of up down off out by".split()
)

CLAUSE_BREAKS = frozenset("and but although though while whereas because however yet".split())

COPULAS = frozenset("is are was were be been".split())

DETERMINERS = frozenset(
    "a an the this that these those his her its their our my your which what".split()
)


# ---------------------------------------------------------------------------
# relation extraction


@dataclass(frozen=True)
class RelationTuple:
    """``(subject, relation, object)`` token spans from one sentence.

    ``subject_span``/``object_span`` are ``[start, stop)`` indices into
    ``tokenize(sentence)``; allocation uses them to weight alias hits.
    """

    subject: tuple[str, ...]
    relation: tuple[str, ...]
    object: tuple[str, ...]
    sentence_index: int
    subject_span: tuple[int, int]
    object_span: tuple[int, int]

    @property
    def relation_label(self) -> str:
        return "-".join(self.relation)


def _is_lexicon_verb(tok: str) -> bool:
    return tok in VERB_LEXICON


def _is_guessed_verb(tokens: Sequence[str], i: int) -> bool:
    tok = tokens[i]
    if tok in NOT_VERBS or tok in STOP_WORDS or not tok.isalpha():
        return False
    if tok.endswith("ed") and len(tok) >= 5:
        return True
    if tok.endswith("s") and not tok.endswith(("ss", "us", "is")) and len(tok) >= 4:
        prev = tokens[i - 1] if i > 0 else ""
        # after a determiner or number it is a plural noun
        return prev not in DETERMINERS and not prev.isdigit() and prev not in PREPOSITIONS
    return False


def _segments(tokens: Sequence[str]) -> list[tuple[int, int]]:
    """Clause ranges split at conjunctions; verbless pieces merge forward."""
    cuts = [0] + [i for i, t in enumerate(tokens) if t in CLAUSE_BREAKS and i > 0] + [len(tokens)]
    raw = [(cuts[k], cuts[k + 1]) for k in range(len(cuts) - 1) if cuts[k] < cuts[k + 1]]

    def has_verb(a: int, b: int) -> bool:
        return any(
            _is_lexicon_verb(tokens[i]) or _is_guessed_verb(tokens, i) for i in range(a, b)
        )

    merged: list[tuple[int, int]] = []
    pending: int | None = None
    for a, b in raw:
        start = a if pending is None else pending
        if has_verb(a, b):
            merged.append((start, b))
            pending = None
        else:
            pending = start
    if pending is not None:
        if merged:
            merged[-1] = (merged[-1][0], len(tokens))
        else:
            merged.append((pending, len(tokens)))
    return merged


def _find_pivot(tokens: Sequence[str], a: int, b: int) -> int | None:
    # a conjunction opening the clause is not part of the subject
    lo = a + 1 if tokens[a] in CLAUSE_BREAKS else a
    for i in range(lo, b):
        if _is_lexicon_verb(tokens[i]):
            return i
    for i in range(lo + 1, b):
        if _is_guessed_verb(tokens, i):
            return i
    return None


def _strip_leading(tokens: Sequence[str], a: int, b: int) -> int:
    while a < b and (tokens[a] in STOP_WORDS or tokens[a] in DETERMINERS):
        a += 1
    return a


def extract_relations(sentence: str, sentence_index: int = 0) -> list[RelationTuple]:
    """Rule-based subject/relation/object extraction.

    Each clause pivots on its first lexicon verb (falling back to an -ed/-s
    guess). The subject is the run of content words right before the pivot,
    or the previous clause's subject when the clause has none (``"... and
    will be without X"``). The relation is the verb chain plus one trailing
    preposition. The object is the rest of the clause minus leading function
    words. ``X is Y's Z`` is rewritten to ``(X, is-Z-of, Y)``.
    """
    toks: list[Token] = lex(sentence)
    words = [t.text for t in toks]
    out: list[RelationTuple] = []
    if len(words) < 2:
        return out
    prev_subject: tuple[int, int] | None = None
    for a, b in _segments(words):
        p = _find_pivot(words, a, b)
        if p is None:
            continue
        s_end = p
        s_start = p
        while s_start > a and words[s_start - 1] not in STOP_WORDS and words[s_start - 1] not in CLAUSE_BREAKS \
                and not _is_lexicon_verb(words[s_start - 1]):
            s_start -= 1
        if s_start == s_end:
            if prev_subject is None:
                continue
            subj = prev_subject
        else:
            subj = (s_start, s_end)

        r_end = p + 1
        while r_end < b and _is_lexicon_verb(words[r_end]):
            r_end += 1
        if r_end < b and words[r_end] in PREPOSITIONS:
            r_end += 1
        relation = tuple(words[p:r_end])

        o_start = _strip_leading(words, r_end, b)
        o_end = b
        if o_start >= o_end:
            prev_subject = subj
            continue

        if len(relation) == 1 and relation[0] in COPULAS:
            poss = next((i for i in range(o_start, o_end - 1) if toks[i].possessive), None)
            if poss is not None:
                relation = (relation[0], *words[poss + 1 : o_end], "of")
                o_end = poss + 1

        out.append(
            RelationTuple(
                subject=tuple(words[subj[0] : subj[1]]),
                relation=relation,
                object=tuple(words[o_start:o_end]),
                sentence_index=sentence_index,
                subject_span=subj,
                object_span=(o_start, o_end),
            )
        )
        prev_subject = subj
    return out


# ---------------------------------------------------------------------------
# allocation


@dataclass(frozen=True)
class Allocation:
    sentence_index: int
    team: str
    confidence: float
    home_mass: int = 0
    away_mass: int = 0
    vector: "SentenceVector | None" = None


def mention_mass(
    sentence: str, tuples: Sequence[RelationTuple], match: MatchRecord, aliases: TeamAliasTable
) -> tuple[int, int]:
    """Weighted alias-hit counts ``(home, away)`` for one sentence."""
    words = tokenize(sentence)
    spans = [t.subject_span for t in tuples] + [t.object_span for t in tuples]
    home = away = 0
    for team, start, stop in aliases.find_mentions(words, match.home_team, match.away_team):
        inside = any(lo <= start and stop <= hi for lo, hi in spans)
        w = ARGUMENT_WEIGHT if inside else PLAIN_WEIGHT
        if team == match.home_team:
            home += w
        else:
            away += w
    return home, away


def allocate_sentence(
    sentence: str,
    tuples: Sequence[RelationTuple],
    match: MatchRecord,
    aliases: TeamAliasTable,
    theta: float = DEFAULT_THETA,
    sentence_index: int = 0,
) -> Allocation:
    """Assign a sentence to the side with the larger mention mass.

    Confidence is the winning side's share of the total mass. Sentences with
    no mentions, or whose confidence falls below ``theta``, go to no team.
    """
    if not 0.5 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0.5, 1], got {theta}")
    home, away = mention_mass(sentence, tuples, match, aliases)
    total = home + away
    if total == 0:
        return Allocation(sentence_index, NONE, 0.0, home, away)
    confidence = max(home, away) / total
    if confidence < theta:
        team = NONE
    else:
        team = HOME if home > away else AWAY
    return Allocation(sentence_index, team, confidence, home, away)


# ---------------------------------------------------------------------------
# vocabulary and vectors


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    doc_freq: tuple[int, ...]
    n_documents: int
    fingerprint: str
    min_df: int = DEFAULT_MIN_DF
    max_df: float = DEFAULT_MAX_DF
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "doc_freq": list(self.doc_freq),
            "n_documents": self.n_documents,
            "fingerprint": self.fingerprint,
            "min_df": self.min_df,
            "max_df": self.max_df,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        return cls(
            tuple(d["tokens"]), tuple(int(x) for x in d["doc_freq"]), int(d["n_documents"]),
            d["fingerprint"], int(d["min_df"]), float(d["max_df"]),
        )


def _article_tokens(article: PreviewArticle) -> list[str]:
    if not article.is_segmented:
        article = segment_sentences(article)
    return [tok for s in article.sentences for tok in tokenize(s)]


def articles_fingerprint(articles: Iterable[PreviewArticle]) -> str:
    h = hashlib.sha256()
    for key in sorted((a.match_id, a.source, a.text) for a in articles):
        for part in key:
            h.update(part.encode("utf-8"))
            h.update(b"\x00")
    return h.hexdigest()[:16]


def fit_vocabulary(
    train_articles: Sequence[PreviewArticle],
    min_df: int = DEFAULT_MIN_DF,
    max_df: float = DEFAULT_MAX_DF,
    stop_words: frozenset[str] = STOP_WORDS,
) -> Vocabulary:
    """Unigram vocabulary over training articles, columns in alphabetical order.

    A token is kept when it occurs in at least ``min_df`` articles and in no
    more than ``max_df * n_articles`` of them.
    """
    if not train_articles:
        raise DataError("cannot fit a vocabulary on an empty training set")
    if min_df < 1 or not 0.0 < max_df <= 1.0:
        raise ValueError(f"bad document-frequency bounds min_df={min_df}, max_df={max_df}")
    df: Counter[str] = Counter()
    for art in train_articles:
        df.update({t for t in _article_tokens(art) if t not in stop_words})
    n = len(train_articles)
    ceiling = max_df * n
    kept = sorted(t for t, c in df.items() if c >= min_df and c <= ceiling)
    if not kept:
        raise DataError(f"no terms remain after document-frequency pruning (min_df={min_df}, max_df={max_df})")
    return Vocabulary(
        tuple(kept), tuple(df[t] for t in kept), n, articles_fingerprint(train_articles), min_df, max_df
    )


@dataclass(frozen=True)
class SentenceVector:
    """Sparse token counts; ``counts`` maps column index -> occurrences."""

    counts: Mapping[int, int]
    size: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=float)
        for j, c in self.counts.items():
            out[j] = c
        return out

    def add_to(self, target: np.ndarray) -> None:
        for j, c in self.counts.items():
            target[j] += c


def vectorize_sentence(sentence: str, vocab: Vocabulary) -> SentenceVector:
    counts: Counter[int] = Counter()
    for tok in tokenize(sentence):
        j = vocab.index.get(tok)
        if j is not None:
            counts[j] += 1
    return SentenceVector(dict(sorted(counts.items())), len(vocab))


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class TextFeatures:
    match_id: str
    home_vector: np.ndarray
    away_vector: np.ndarray
    none_vector: np.ndarray
    mu: float
    x: np.ndarray
    allocations: tuple[Allocation, ...]
    has_text: bool


def build_features(
    match: MatchRecord,
    articles: Sequence[PreviewArticle],
    vocab: Vocabulary,
    aliases: TeamAliasTable,
    mu: float = DEFAULT_MU,
    theta: float = DEFAULT_THETA,
) -> TextFeatures:
    """Feature vector ``[mu * V(home), V(away)]`` for one fixture.

    Sentences from every article on the fixture are pooled. With no articles
    the result is the zero vector with ``has_text=False``.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    v = len(vocab)
    home = np.zeros(v)
    away = np.zeros(v)
    none = np.zeros(v)
    allocations: list[Allocation] = []
    idx = 0
    for art in articles:
        if art.match_id != match.match_id:
            raise ValueError(f"article for {art.match_id!r} passed with match {match.match_id!r}")
        if not art.is_segmented:
            art = segment_sentences(art)
        for sentence in art.sentences:
            tuples = extract_relations(sentence, idx)
            alloc = allocate_sentence(sentence, tuples, match, aliases, theta, idx)
            vec = vectorize_sentence(sentence, vocab)
            vec.add_to({HOME: home, AWAY: away, NONE: none}[alloc.team])
            allocations.append(
                Allocation(alloc.sentence_index, alloc.team, alloc.confidence, alloc.home_mass, alloc.away_mass, vec)
            )
            idx += 1
    x = np.concatenate([mu * home, away])
    return TextFeatures(match.match_id, home, away, none, mu, x, tuple(allocations), bool(articles))


def feature_matrix(
    matches: Sequence[MatchRecord],
    corpus: Corpus,
    vocab: Vocabulary,
    mu: float = DEFAULT_MU,
    theta: float = DEFAULT_THETA,
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked feature rows and a boolean has-text mask."""
    rows = np.zeros((len(matches), 2 * len(vocab)))
    mask = np.zeros(len(matches), dtype=bool)
    for i, m in enumerate(matches):
        feats = build_features(m, corpus.previews_for(m.match_id), vocab, corpus.aliases, mu, theta)
        rows[i] = feats.x
        mask[i] = feats.has_text
    return rows, mask


def features_csv(match_ids: Sequence[str], rows: np.ndarray, vocab: Vocabulary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["match_id", *(f"home:{t}" for t in vocab.tokens), *(f"away:{t}" for t in vocab.tokens)])
    for mid, row in zip(match_ids, rows):
        writer.writerow([mid, *(repr(float(v)) if v != int(v) else str(int(v)) for v in row)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# vocabulary-independent cache


@dataclass(frozen=True)
class SideCounts:
    """Token counts per allocation side for one fixture, before any vocabulary is applied.

    Summing sentence count vectors per side commutes with restricting to a
    vocabulary, so features for any vocabulary can be read off these counts
    without re-running extraction and allocation.
    """

    match_id: str
    home: Mapping[str, int]
    away: Mapping[str, int]
    none: Mapping[str, int]
    has_text: bool

    def features(self, vocab: Vocabulary, mu: float = DEFAULT_MU) -> np.ndarray:
        if not mu > 0:
            raise ValueError(f"mu must be positive, got {mu}")
        v = len(vocab)
        x = np.zeros(2 * v)
        for tok, c in self.home.items():
            j = vocab.index.get(tok)
            if j is not None:
                x[j] = c
        for tok, c in self.away.items():
            j = vocab.index.get(tok)
            if j is not None:
                x[v + j] = c
        x[:v] *= mu
        return x


def side_counts(
    match: MatchRecord,
    articles: Sequence[PreviewArticle],
    aliases: TeamAliasTable,
    theta: float = DEFAULT_THETA,
) -> SideCounts:
    buckets: dict[str, Counter[str]] = {HOME: Counter(), AWAY: Counter(), NONE: Counter()}
    idx = 0
    for art in articles:
        if not art.is_segmented:
            art = segment_sentences(art)
        for sentence in art.sentences:
            alloc = allocate_sentence(sentence, extract_relations(sentence, idx), match, aliases, theta, idx)
            buckets[alloc.team].update(tokenize(sentence))
            idx += 1
    return SideCounts(
        match.match_id,
        dict(sorted(buckets[HOME].items())),
        dict(sorted(buckets[AWAY].items())),
        dict(sorted(buckets[NONE].items())),
        bool(articles),
    )

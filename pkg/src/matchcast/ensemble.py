"""Model 4: a random-forest stacker over the text, Dixon-Coles and bookmaker probabilities.

Meta-feature layout (9 columns, fixed)::

    text_h text_d text_a  dc_h dc_d dc_a  book_h book_d book_a

Training rows are built without leakage: a training match's text
probabilities come from a text model fitted on the other folds, and its
Dixon-Coles probabilities from a fit on matches dated strictly before it.
Every row carries the ids each upstream model was trained on, so the claim
can be audited.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import dixon_coles as dc
from . import forest as rf
from .config import DCConfig, ModelConfig
from .corpus import Corpus, MatchRecord
from .errors import DataError, ModelError
from .fileio import dumps_canonical
from .forest import Forest, ForestParams
from .odds import implied_probs
from .outcomes import OutcomeProbs
from .textmodel import CountsCache, TextModel, train_text_model

log = logging.getLogger(__name__)

ARTIFACT_TYPE = "ensemble"
ARTIFACT_VERSION = 1

FEATURE_NAMES = (
    "text_h", "text_d", "text_a",
    "dc_h", "dc_d", "dc_a",
    "book_h", "book_d", "book_a",
)

REASON_NO_ODDS = "no odds"
REASON_NO_HISTORY = "insufficient history"


@dataclass(frozen=True)
class Provenance:
    """Which matches trained the upstream models behind one meta-feature row."""

    text_train_ids: frozenset[str]
    dc_train_ids: frozenset[str]
    dc_as_of: dt.date | None

    @property
    def all_ids(self) -> frozenset[str]:
        return self.text_train_ids | self.dc_train_ids


@dataclass(frozen=True)
class MetaFeatures:
    match_id: str
    text_probs: OutcomeProbs
    dc_probs: OutcomeProbs
    book_probs: OutcomeProbs
    provenance: Provenance | None = field(default=None, compare=False)
    has_text: bool = True
    dc_substituted: bool = False

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.text_probs.as_array(), self.dc_probs.as_array(), self.book_probs.as_array()])

    def vector(self, use_text: bool = True) -> np.ndarray:
        return self.x if use_text else self.x[3:]


def build_meta_features(
    match: MatchRecord,
    text_model: TextModel | None,
    dc_params: dc.DCParams,
    corpus: Corpus,
    max_goals: int = dc.DEFAULT_MAX_GOALS,
    cache: CountsCache | None = None,
) -> MetaFeatures:
    """Assemble the three upstream triples for one match.

    ``text_model=None`` (text ablation) fills the text slot with the uniform
    triple. Teams unseen by ``dc_params`` get league-average strengths and
    the row is flagged.
    """
    if match.odds is None:
        raise DataError(f"{match.match_id}: no odds, cannot build meta-features")
    if text_model is None:
        text_probs = OutcomeProbs.uniform()
        text_ids: frozenset[str] = frozenset()
    else:
        text_probs = text_model.predict_proba(match, corpus, cache)
        text_ids = text_model.train_ids
    grid = dc.covering_grid(dc_params, match.home_team, match.away_team, max_goals, allow_unknown=True)
    return MetaFeatures(
        match.match_id,
        text_probs,
        grid.outcome_probs(),
        implied_probs(match.odds),
        Provenance(text_ids, dc_params.train_ids, dc_params.as_of),
        has_text=corpus.has_text(match.match_id),
        dc_substituted=grid.substituted,
    )


# ---------------------------------------------------------------------------
# Dixon-Coles windows


def _playable(history: Sequence[MatchRecord]) -> list[MatchRecord]:
    """Drop matches of teams lacking a home or an away appearance, until stable."""
    kept = list(history)
    while True:
        home = {m.home_team for m in kept}
        away = {m.away_team for m in kept}
        nxt = [m for m in kept if m.home_team in away and m.away_team in home]
        if len(nxt) == len(kept):
            return kept
        kept = nxt


def fit_dc_before(
    history: Sequence[MatchRecord],
    before: dt.date,
    cfg: DCConfig = DCConfig(),
    init: dc.DCParams | None = None,
    min_history: int = 1,
) -> dc.DCParams | None:
    """Fit on matches dated strictly before ``before``; ``None`` when too few remain."""
    prior = _playable([m for m in history if m.date < before])
    if len(prior) < max(1, min_history):
        return None
    return dc.fit(
        prior, cfg.xi, as_of=before, rho_bounds=cfg.rho_bounds, gtol=cfg.gtol,
        max_iter=cfg.max_iter, init=init, strict=False,
    )


def rolling_dc(
    history: Sequence[MatchRecord],
    targets: Sequence[MatchRecord],
    cfg: DCConfig = DCConfig(),
    refit_days: int = 7,
    min_history: int = 100,
) -> tuple[dict[str, dc.DCParams], dict[str, str]]:
    """Expanding-window fits for each target.

    Targets are grouped into blocks of ``refit_days`` starting at the first
    unassigned target date; each block shares one fit on ``history`` matches
    dated before the block start. Returns (match_id -> params, excluded).
    """
    if refit_days < 1:
        raise ValueError("refit_days must be >= 1")
    ordered = sorted(targets, key=lambda m: m.sort_key)
    out: dict[str, dc.DCParams] = {}
    excluded: dict[str, str] = {}
    prev: dc.DCParams | None = None
    i = 0
    while i < len(ordered):
        start = ordered[i].date
        end = start + dt.timedelta(days=refit_days)
        j = i
        while j < len(ordered) and ordered[j].date < end:
            j += 1
        params = fit_dc_before(history, start, cfg, prev, min_history)
        for m in ordered[i:j]:
            if params is None:
                excluded[m.match_id] = REASON_NO_HISTORY
            else:
                out[m.match_id] = params
        if params is not None:
            prev = params
        i = j
    return out, excluded


# ---------------------------------------------------------------------------
# training


def fold_assignment(match_ids: Iterable[str], folds: int, seed: int) -> dict[str, int]:
    """Seeded fold index per id; independent of input order."""
    ids = sorted(set(match_ids))
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])).permutation(len(ids))
    return {ids[p]: k % folds for k, p in enumerate(perm)}


def train_stacker(
    rows: Sequence[MetaFeatures],
    labels: Sequence[int],
    params: ForestParams = ForestParams(),
    seed: int = 0,
    use_text: bool = True,
    n_jobs: int = 1,
) -> Forest:
    if len(rows) != len(labels):
        raise ValueError("rows and labels differ in length")
    if len(rows) < 2:
        raise DataError(f"need at least 2 meta-feature rows to train the stacker, got {len(rows)}")
    X = np.array([r.vector(use_text) for r in rows])
    return rf.train(X, labels, params, seed, n_jobs)


@dataclass(frozen=True)
class Ensemble:
    stacker: Forest
    text_model: TextModel | None
    dc_params: dc.DCParams
    use_text: bool = True
    max_goals: int = dc.DEFAULT_MAX_GOALS
    train_rows: tuple[MetaFeatures, ...] = field(default=(), compare=False, repr=False)
    train_labels: tuple[int, ...] = field(default=(), compare=False, repr=False)
    excluded: Mapping[str, str] = field(default_factory=dict, compare=False, repr=False)

    @property
    def stacker_train_ids(self) -> frozenset[str]:
        return frozenset(r.match_id for r in self.train_rows)

    def meta(self, match: MatchRecord, corpus: Corpus, dc_params: dc.DCParams | None = None,
             cache: CountsCache | None = None) -> MetaFeatures:
        text = self.text_model if self.use_text else None
        return build_meta_features(match, text, dc_params or self.dc_params, corpus, self.max_goals, cache)

    def predict_meta(self, meta: MetaFeatures) -> OutcomeProbs:
        return rf.predict_proba(self.stacker, meta.vector(self.use_text))

    def predict_proba(self, match: MatchRecord, corpus: Corpus, dc_params: dc.DCParams | None = None,
                      cache: CountsCache | None = None) -> OutcomeProbs:
        return self.predict_meta(self.meta(match, corpus, dc_params, cache))

    def without_text(self, params: ForestParams, seed: int, n_jobs: int = 1) -> "Ensemble":
        """Ablation: a stacker refit on the same rows with the text columns dropped."""
        if not self.train_rows:
            raise ModelError("ensemble carries no training rows to refit from")
        stacker = train_stacker(self.train_rows, self.train_labels, params, seed, use_text=False, n_jobs=n_jobs)
        return replace(self, stacker=stacker, use_text=False)

    def to_dict(self) -> dict:
        upstream = {"dc": self.dc_params.to_dict()}
        if self.text_model is not None:
            upstream["text"] = self.text_model.to_dict()
        return {
            "type": ARTIFACT_TYPE,
            "version": ARTIFACT_VERSION,
            "features": list(FEATURE_NAMES if self.use_text else FEATURE_NAMES[3:]),
            "use_text": self.use_text,
            "max_goals": self.max_goals,
            "stacker": self.stacker.to_dict(),
            "upstream": upstream,
            "upstream_sha256": {k: _digest(v) for k, v in upstream.items()},
            "excluded": dict(sorted(self.excluded.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Ensemble":
        if d.get("type") != ARTIFACT_TYPE:
            raise ModelError(f"not an ensemble artifact (type={d.get('type')!r})")
        if d.get("version") != ARTIFACT_VERSION:
            raise ModelError(f"ensemble artifact version {d.get('version')!r} not supported")
        upstream = d["upstream"]
        for key, digest in d.get("upstream_sha256", {}).items():
            if key not in upstream or _digest(upstream[key]) != digest:
                raise ModelError(f"ensemble upstream {key!r} does not match its recorded digest")
        text = TextModel.from_dict(upstream["text"]) if "text" in upstream else None
        use_text = bool(d["use_text"])
        if use_text and text is None:
            raise ModelError("ensemble uses text features but carries no text model")
        return cls(
            Forest.from_dict(d["stacker"]), text, dc.DCParams.from_dict(upstream["dc"]), use_text,
            int(d.get("max_goals", dc.DEFAULT_MAX_GOALS)), excluded=dict(d.get("excluded", {})),
        )


def _digest(obj) -> str:
    return hashlib.sha256(dumps_canonical(obj).encode("utf-8")).hexdigest()


def train_ensemble(
    train: Corpus,
    cfg: ModelConfig = ModelConfig(),
    cutoff: dt.date | None = None,
    cache: CountsCache | None = None,
) -> Ensemble:
    """Train the stacker on leak-free meta-features, plus the final upstream models.

    Stacker rows are the training matches with odds and enough Dixon-Coles
    history; the rest are listed in ``excluded`` with a reason. The returned
    upstream models are refit on all of ``train`` (Dixon-Coles as of
    ``cutoff``, default the day after the last training match) for use on
    later matches.
    """
    ecfg = cfg.ensemble
    if not train.matches:
        raise DataError("empty training corpus")
    if cache is None:
        cache = {}
    matches = list(train.matches)
    excluded: dict[str, str] = {m.match_id: REASON_NO_ODDS for m in matches if m.odds is None}
    eligible = [m for m in matches if m.odds is not None]

    dc_by_id, no_hist = rolling_dc(matches, eligible, cfg.dc, ecfg.dc_refit_days, ecfg.min_dc_history)
    excluded.update(no_hist)
    rows_for = [m for m in eligible if m.match_id in dc_by_id]
    if len(rows_for) < 2:
        raise DataError(
            f"only {len(rows_for)} training matches have odds and {ecfg.min_dc_history}+ prior matches"
        )

    text_models: dict[str, TextModel] = {}
    if ecfg.use_text:
        folds = fold_assignment((m.match_id for m in rows_for), ecfg.folds, cfg.seed)
        text_pool = [m for m in matches if train.has_text(m.match_id)]
        for k in range(ecfg.folds):
            members = [m for m in rows_for if folds[m.match_id] == k]
            if not members:
                continue
            fold_train = [m for m in text_pool if folds.get(m.match_id, -1) != k]
            model = train_text_model(fold_train, train, cfg.text, cfg.text_forest, cfg.seed, cfg.n_jobs, cache)
            for m in members:
                text_models[m.match_id] = model

    rows = []
    for m in rows_for:
        tm = text_models.get(m.match_id) if ecfg.use_text else None
        rows.append(build_meta_features(m, tm, dc_by_id[m.match_id], train, cfg.dc.max_goals, cache))
    labels = tuple(int(m.outcome) for m in rows_for)
    stacker = train_stacker(rows, labels, cfg.stacker_forest, cfg.seed, ecfg.use_text, cfg.n_jobs)

    final_text = None
    if ecfg.use_text:
        final_text = train_text_model(matches, train, cfg.text, cfg.text_forest, cfg.seed, cfg.n_jobs, cache)
    as_of = cutoff or (matches[-1].date + dt.timedelta(days=1))
    final_dc = fit_dc_before(matches, as_of, cfg.dc)
    if final_dc is None:
        raise DataError("no training matches before the cutoff for the final Dixon-Coles fit")
    if excluded:
        log.info("ensemble training excluded %d matches", len(excluded))
    return Ensemble(
        stacker, final_text, final_dc, ecfg.use_text, cfg.dc.max_goals, tuple(rows), labels,
        dict(sorted(excluded.items())),
    )


# ---------------------------------------------------------------------------
# audit


def audit_out_of_fold(rows: Sequence[MetaFeatures], corpus: Corpus) -> list[str]:
    """Violations of the no-leak rule; an empty list means the rows are clean."""
    problems = []
    for r in rows:
        prov = r.provenance
        if prov is None:
            problems.append(f"{r.match_id}: no provenance")
            continue
        match = corpus.match(r.match_id)
        if r.match_id in prov.text_train_ids:
            problems.append(f"{r.match_id}: text model trained on this match")
        if r.match_id in prov.dc_train_ids:
            problems.append(f"{r.match_id}: Dixon-Coles fit includes this match")
        if prov.dc_as_of is not None and prov.dc_as_of > match.date:
            problems.append(f"{r.match_id}: Dixon-Coles as_of {prov.dc_as_of} after match date {match.date}")
        late = [i for i in prov.dc_train_ids if corpus.match(i).date >= match.date]
        if late:
            problems.append(f"{r.match_id}: Dixon-Coles fit uses {len(late)} matches on or after its date")
    return problems

"""Model 1: random forest over preview-text features."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, MutableMapping, Sequence

import numpy as np

from . import forest as rf
from .config import TextConfig
from .corpus import Corpus, MatchRecord
from .errors import DataError, ModelError
from .forest import Forest, ForestParams
from .outcomes import OutcomeProbs
from .textfeat import MU_GRID, SideCounts, Vocabulary, fit_vocabulary, side_counts

log = logging.getLogger(__name__)

ARTIFACT_TYPE = "text_model"
ARTIFACT_VERSION = 1

CountsCache = MutableMapping[str, SideCounts]


def cached_counts(match: MatchRecord, corpus: Corpus, theta: float, cache: CountsCache | None) -> SideCounts:
    if cache is not None and match.match_id in cache:
        return cache[match.match_id]
    counts = side_counts(match, corpus.previews_for(match.match_id), corpus.aliases, theta)
    if cache is not None:
        cache[match.match_id] = counts
    return counts


@dataclass(frozen=True)
class TextModel:
    vocab: Vocabulary
    forest: Forest
    mu: float
    theta: float
    train_ids: frozenset[str] = field(default=frozenset(), compare=False, repr=False)

    def features(self, match: MatchRecord, corpus: Corpus, cache: CountsCache | None = None) -> np.ndarray:
        return cached_counts(match, corpus, self.theta, cache).features(self.vocab, self.mu)

    def predict_proba(self, match: MatchRecord, corpus: Corpus, cache: CountsCache | None = None) -> OutcomeProbs:
        return rf.predict_proba(self.forest, self.features(match, corpus, cache))

    def to_dict(self) -> dict:
        return {
            "type": ARTIFACT_TYPE,
            "version": ARTIFACT_VERSION,
            "mu": self.mu,
            "theta": self.theta,
            "train_ids": sorted(self.train_ids),
            "vocabulary": self.vocab.to_dict(),
            "forest": self.forest.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TextModel":
        if d.get("type") != ARTIFACT_TYPE:
            raise ModelError(f"not a text model artifact (type={d.get('type')!r})")
        if d.get("version") != ARTIFACT_VERSION:
            raise ModelError(f"text model artifact version {d.get('version')!r} not supported")
        return cls(
            Vocabulary.from_dict(d["vocabulary"]),
            Forest.from_dict(d["forest"]),
            float(d["mu"]),
            float(d["theta"]),
            frozenset(d.get("train_ids", ())),
        )


def _fit(
    matches: Sequence[MatchRecord],
    corpus: Corpus,
    cfg: TextConfig,
    mu: float,
    params: ForestParams,
    seed: int,
    n_jobs: int,
    cache: CountsCache | None,
) -> TextModel:
    vocab = fit_vocabulary(
        [a for m in matches for a in corpus.previews_for(m.match_id)], cfg.min_df, cfg.max_df
    )
    X = np.array([cached_counts(m, corpus, cfg.theta, cache).features(vocab, mu) for m in matches])
    forest = rf.train(X, [m.outcome for m in matches], params, seed, n_jobs)
    return TextModel(vocab, forest, mu, cfg.theta, frozenset(m.match_id for m in matches))


def train_text_model(
    matches: Sequence[MatchRecord],
    corpus: Corpus,
    cfg: TextConfig = TextConfig(),
    params: ForestParams = ForestParams(),
    seed: int = 0,
    n_jobs: int = 1,
    cache: CountsCache | None = None,
) -> TextModel:
    """Fit vocabulary and forest on the given matches that have preview text.

    With ``cfg.tune_mu`` the home weight is chosen from a fixed grid by
    accuracy on the latest 20% of the training matches, then the model is
    refit on all of them.
    """
    with_text = sorted((m for m in matches if corpus.has_text(m.match_id)), key=lambda m: m.sort_key)
    if len(with_text) < 2:
        raise DataError(f"need at least 2 training matches with preview text, got {len(with_text)}")
    mu = cfg.mu
    if cfg.tune_mu:
        mu = tune_mu(with_text, corpus, cfg, params, seed, n_jobs, cache)
    return _fit(with_text, corpus, cfg, mu, params, seed, n_jobs, cache)


def tune_mu(
    matches: Sequence[MatchRecord],
    corpus: Corpus,
    cfg: TextConfig,
    params: ForestParams,
    seed: int,
    n_jobs: int = 1,
    cache: CountsCache | None = None,
    grid: Sequence[float] = MU_GRID,
) -> float:
    """Grid value with the best validation accuracy; the earliest grid value wins ties."""
    ordered = sorted(matches, key=lambda m: m.sort_key)
    n_val = max(1, len(ordered) // 5)
    fit_part, val_part = ordered[:-n_val], ordered[-n_val:]
    if len(fit_part) < 2:
        return cfg.mu
    best_mu, best_acc = cfg.mu, -1.0
    for mu in grid:
        try:
            model = _fit(fit_part, corpus, cfg, mu, params, seed, n_jobs, cache)
        except DataError:
            return cfg.mu
        acc = float(np.mean([model.predict_proba(m, corpus, cache).argmax() == m.outcome for m in val_part]))
        log.debug("mu=%.2f validation accuracy %.4f", mu, acc)
        if acc > best_acc:
            best_mu, best_acc = mu, acc
    return best_mu

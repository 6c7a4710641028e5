"""Metrics and the three evaluation protocols.

* Experiment 1: per season, train on everything earlier and score the first
  ``test_size`` matches that have both preview text and odds.
* Experiment 2: seeded random train/test split; draw and longshot detection.
* Experiment 3: week-by-week walk-forward through one season with weekly
  Dixon-Coles refits and cumulative correct counts.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dixon_coles as dc
from .config import EvalConfig, ModelConfig
from .corpus import Corpus, MatchRecord
from .ensemble import Ensemble, fit_dc_before, rolling_dc, train_ensemble
from .errors import DataError
from .odds import is_longshot
from .outcomes import Outcome, OutcomeProbs
from .textmodel import CountsCache

log = logging.getLogger(__name__)

TEXT, DIXON_COLES, BOOKMAKER, ENSEMBLE, ENSEMBLE_NO_TEXT = (
    "text", "dixon_coles", "bookmaker", "ensemble", "ensemble_no_text",
)
MODELS = (TEXT, DIXON_COLES, BOOKMAKER, ENSEMBLE)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[actual, predicted]`` over the outcome order homewin, draw, awaywin."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.shape != (3, 3):
            raise ValueError(f"confusion matrix must be 3x3, got {c.shape}")
        if np.any(c < 0) or not np.all(c == np.floor(c)):
            raise ValueError("confusion matrix entries must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_pairs(cls, actual: Sequence[Outcome | int], predicted: Sequence[Outcome | int]) -> "ConfusionMatrix":
        if len(actual) != len(predicted):
            raise ValueError("actual and predicted differ in length")
        c = np.zeros((3, 3), dtype=np.int64)
        for a, p in zip(actual, predicted):
            c[int(a), int(p)] += 1
        return cls(c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    n: int

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1, "n": self.n}


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy and macro-averaged precision/recall; F1 is their harmonic mean.

    Per-class precision or recall with an empty denominator counts as 0.
    """
    c = cm.counts
    total = cm.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    diag = np.diag(c).astype(float)
    precision = float(np.mean([_ratio(diag[k], c[:, k].sum()) for k in range(3)]))
    recall = float(np.mean([_ratio(diag[k], c[k, :].sum()) for k in range(3)]))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return Metrics(float(diag.sum() / total), precision, recall, f1, total)


def average_metrics(items: Sequence[Metrics]) -> Metrics:
    if not items:
        raise ValueError("nothing to average")
    return Metrics(
        float(np.mean([m.accuracy for m in items])),
        float(np.mean([m.precision for m in items])),
        float(np.mean([m.recall for m in items])),
        float(np.mean([m.f1 for m in items])),
        int(sum(m.n for m in items)),
    )


def draw_detection(actual: Sequence[Outcome], predicted: Sequence[Outcome]) -> float | None:
    draws = [p for a, p in zip(actual, predicted) if a == Outcome.DRAW]
    return None if not draws else sum(p == Outcome.DRAW for p in draws) / len(draws)


def longshot_detection(matches: Sequence[MatchRecord], predicted: Sequence[Outcome]) -> float | None:
    hits = [p == m.outcome for m, p in zip(matches, predicted) if m.odds is not None and is_longshot(m.odds, m.outcome)]
    return None if not hits else sum(hits) / len(hits)


# ---------------------------------------------------------------------------
# predictions and reports


@dataclass(frozen=True)
class Prediction:
    match_id: str
    model: str
    probs: OutcomeProbs
    actual: Outcome
    week: int | None = None

    @property
    def predicted(self) -> Outcome:
        return self.probs.argmax()

    @property
    def correct(self) -> bool:
        return self.predicted == self.actual


@dataclass
class ExperimentReport:
    experiment: int
    models: tuple[str, ...]
    metrics: dict[str, Metrics] = field(default_factory=dict)
    per_season: dict[str, dict[str, Metrics]] = field(default_factory=dict)
    confusion: dict[str, ConfusionMatrix] = field(default_factory=dict)
    draw_rate: dict[str, float | None] = field(default_factory=dict)
    longshot_rate: dict[str, float | None] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    weekly: list[dict] = field(default_factory=list)
    excluded: dict[str, str] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    audit_violations: list[str] = field(default_factory=list)
    notes: dict[str, object] = field(default_factory=dict)
    predictions: list[Prediction] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "averaging": "macro",
            "models": list(self.models),
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
            "per_season": {s: {k: v.to_dict() for k, v in ms.items()} for s, ms in self.per_season.items()},
            "confusion": {k: v.counts.tolist() for k, v in self.confusion.items()},
            "draw_detection": dict(self.draw_rate),
            "longshot_detection": dict(self.longshot_rate),
            "counts": dict(self.counts),
            "weekly": list(self.weekly),
            "excluded": dict(sorted(self.excluded.items())),
            "flags": list(self.flags),
            "audit_violations": list(self.audit_violations),
            "notes": dict(self.notes),
            "predictions": [
                {
                    "match_id": p.match_id,
                    "model": p.model,
                    "probs": p.probs.to_dict(),
                    "predicted": p.predicted.label,
                    "actual": p.actual.label,
                    **({"week": p.week} if p.week is not None else {}),
                }
                for p in self.predictions
            ],
        }

    def to_table(self) -> str:
        lines = [f"Experiment {self.experiment} (macro-averaged precision/recall)"]
        header = f"{'model':<18}{'accuracy':>10}{'precision':>11}{'recall':>9}{'f1':>8}{'n':>7}"
        if self.draw_rate:
            header += f"{'draws':>8}{'longshots':>11}"
        lines.append(header)
        for name in self.models:
            m = self.metrics.get(name)
            if m is None:
                continue
            row = f"{name:<18}{m.accuracy:>10.4f}{m.precision:>11.4f}{m.recall:>9.4f}{m.f1:>8.4f}{m.n:>7d}"
            if self.draw_rate:
                row += f"{_fmt_rate(self.draw_rate.get(name)):>8}{_fmt_rate(self.longshot_rate.get(name)):>11}"
            lines.append(row)
        if self.weekly:
            last = self.weekly[-1]
            lines.append(
                f"week {last['week']} cumulative correct: "
                + ", ".join(f"{name} {last[name + '_cumulative']}" for name in self.models if name + "_cumulative" in last)
            )
        for flag in self.flags:
            lines.append(f"flag: {flag}")
        if self.excluded:
            lines.append(f"excluded matches: {len(self.excluded)}")
        lines.append(f"audit violations: {len(self.audit_violations)}")
        return "\n".join(lines) + "\n"

    def weekly_csv(self) -> str:
        if not self.weekly:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.weekly[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.weekly)
        return buf.getvalue()


def _fmt_rate(v: float | None) -> str:
    return "absent" if v is None else f"{v:.4f}"


def _score(report: ExperimentReport, preds: Sequence[Prediction]) -> None:
    for name in report.models:
        mine = [p for p in preds if p.model == name]
        if not mine:
            continue
        actual = [p.actual for p in mine]
        predicted = [p.predicted for p in mine]
        cm = ConfusionMatrix.from_pairs(actual, predicted)
        report.confusion[name] = cm
        report.metrics[name] = metrics(cm)


# ---------------------------------------------------------------------------
# model suite


@dataclass(frozen=True)
class Suite:
    ensemble: Ensemble
    ablation: Ensemble | None

    @property
    def models(self) -> tuple[str, ...]:
        return MODELS + ((ENSEMBLE_NO_TEXT,) if self.ablation is not None else ())

    def predict(
        self, match: MatchRecord, corpus: Corpus, dc_params: dc.DCParams, cache: CountsCache, week: int | None = None
    ) -> list[Prediction]:
        ens = self.ensemble
        meta = ens.meta(match, corpus, dc_params, cache)
        out = [
            Prediction(match.match_id, TEXT, meta.text_probs, match.outcome, week),
            Prediction(match.match_id, DIXON_COLES, meta.dc_probs, match.outcome, week),
            Prediction(match.match_id, BOOKMAKER, meta.book_probs, match.outcome, week),
            Prediction(match.match_id, ENSEMBLE, ens.predict_meta(meta), match.outcome, week),
        ]
        if self.ablation is not None:
            out.append(Prediction(match.match_id, ENSEMBLE_NO_TEXT, self.ablation.predict_meta(meta), match.outcome, week))
        return out


def train_suite(train: Corpus, cfg: ModelConfig, ecfg: EvalConfig, cutoff: dt.date | None, cache: CountsCache) -> Suite:
    ens = train_ensemble(train, cfg, cutoff, cache)
    ablation = ens.without_text(cfg.stacker_forest, cfg.seed, cfg.n_jobs) if ecfg.ablation else None
    return Suite(ens, ablation)


def _eligible(match: MatchRecord, corpus: Corpus) -> bool:
    return match.odds is not None and corpus.has_text(match.match_id)


# ---------------------------------------------------------------------------
# experiment 1


def experiment1(
    corpus: Corpus,
    seasons: Sequence[str] | None = None,
    cfg: ModelConfig = ModelConfig(),
    ecfg: EvalConfig = EvalConfig(),
) -> ExperimentReport:
    """Per season: train on all earlier matches, test on the first eligible matches."""
    seasons = list(seasons or ecfg.seasons)
    cache: CountsCache = {}
    report = ExperimentReport(1, MODELS + ((ENSEMBLE_NO_TEXT,) if ecfg.ablation else ()))
    all_preds: list[Prediction] = []
    for season in seasons:
        cutoff = corpus.season_start(season)
        train = corpus.subset(lambda m: m.date < cutoff)
        if not train.matches:
            raise DataError(f"season {season}: no earlier matches to train on")
        eligible = [m for m in corpus.season_matches(season) if _eligible(m, corpus)]
        for m in corpus.season_matches(season):
            if not _eligible(m, corpus):
                report.excluded[m.match_id] = "no odds" if m.odds is None else "no preview"
        test = eligible[: ecfg.test_size]
        if len(test) < ecfg.test_size:
            report.flags.append(f"season {season}: only {len(test)} eligible matches (wanted {ecfg.test_size})")
        if not test:
            continue
        suite = train_suite(train, cfg, ecfg, cutoff, cache)
        for mid, why in suite.ensemble.excluded.items():
            report.excluded.setdefault(mid, f"stacker training: {why}")
        preds = [p for m in test for p in suite.predict(m, corpus, suite.ensemble.dc_params, cache)]
        all_preds.extend(preds)
        season_report = ExperimentReport(1, report.models)
        _score(season_report, preds)
        report.per_season[season] = season_report.metrics
    if not report.per_season:
        raise DataError("no season had eligible test matches")
    for name in report.models:
        report.metrics[name] = average_metrics([ms[name] for ms in report.per_season.values() if name in ms])
        mine = [p for p in all_preds if p.model == name]
        report.confusion[name] = ConfusionMatrix.from_pairs([p.actual for p in mine], [p.predicted for p in mine])
    report.counts = {"test_matches": len({p.match_id for p in all_preds})}
    report.predictions = all_preds
    return report


# ---------------------------------------------------------------------------
# experiment 2


def random_split(match_ids: Sequence[str], fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Seeded split; membership depends only on the id set and the seed."""
    ids = sorted(set(match_ids))
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(fraction * len(ids)))
    train = sorted(ids[i] for i in perm[:n_train])
    test = sorted(ids[i] for i in perm[n_train:])
    return train, test


def experiment2(
    corpus: Corpus,
    seed: int,
    cfg: ModelConfig = ModelConfig(),
    ecfg: EvalConfig = EvalConfig(),
) -> ExperimentReport:
    """Random train/test split over eligible matches; draw and longshot detection per model."""
    if not corpus.matches:
        raise DataError("empty corpus")
    cache: CountsCache = {}
    report = ExperimentReport(2, MODELS + ((ENSEMBLE_NO_TEXT,) if ecfg.ablation else ()))
    eligible = [m for m in corpus.matches if _eligible(m, corpus)]
    for m in corpus.matches:
        if not _eligible(m, corpus):
            report.excluded[m.match_id] = "no odds" if m.odds is None else "no preview"
    train_ids, test_ids = random_split([m.match_id for m in eligible], ecfg.train_fraction, seed)
    train = corpus.subset(train_ids)
    suite = train_suite(train, cfg, ecfg, None, cache)
    for mid, why in suite.ensemble.excluded.items():
        report.excluded.setdefault(mid, f"stacker training: {why}")
    test = [corpus.match(i) for i in test_ids]
    dc_by_id, no_hist = rolling_dc(
        train.matches, test, cfg.dc, cfg.ensemble.dc_refit_days, cfg.ensemble.min_dc_history
    )
    for mid, why in no_hist.items():
        report.excluded[mid] = f"test: {why}"
    scored = [m for m in test if m.match_id in dc_by_id]
    preds = [p for m in scored for p in suite.predict(m, corpus, dc_by_id[m.match_id], cache)]
    _score(report, preds)
    for name in report.models:
        mine = {p.match_id: p.predicted for p in preds if p.model == name}
        predicted = [mine[m.match_id] for m in scored]
        report.draw_rate[name] = draw_detection([m.outcome for m in scored], predicted)
        report.longshot_rate[name] = longshot_detection(scored, predicted)
    report.counts = {
        "train_matches": len(train_ids),
        "test_matches": len(scored),
        "test_draws": sum(m.outcome == Outcome.DRAW for m in scored),
        "test_longshots": sum(is_longshot(m.odds, m.outcome) for m in scored),
    }
    if report.counts["test_draws"] == 0:
        report.flags.append("no draws in the test set; draw detection absent")
    if report.counts["test_longshots"] == 0:
        report.flags.append("no longshots in the test set; longshot detection absent")
    report.predictions = preds
    return report


# ---------------------------------------------------------------------------
# experiment 3


def assign_weeks(matches: Sequence[MatchRecord], week_size: int = 10) -> list[list[MatchRecord]]:
    """Blocks of ``week_size`` fixtures in (date, id) order."""
    if week_size < 1:
        raise ValueError("week_size must be >= 1")
    ordered = sorted(matches, key=lambda m: m.sort_key)
    return [ordered[i : i + week_size] for i in range(0, len(ordered), week_size)]


@dataclass(frozen=True)
class WeekProvenance:
    week: int
    start: dt.date
    ids: frozenset[str]


def audit_walk_forward(records: Sequence[WeekProvenance], corpus: Corpus) -> list[str]:
    """Every id used to train a model for a week must be dated before that week starts."""
    problems = []
    for rec in records:
        late = sorted(i for i in rec.ids if corpus.match(i).date >= rec.start)
        if late:
            problems.append(f"week {rec.week}: {len(late)} training matches dated on/after {rec.start}: {late[:3]}")
    return problems


def experiment3(
    corpus: Corpus,
    season: str | None = None,
    cfg: ModelConfig = ModelConfig(),
    ecfg: EvalConfig = EvalConfig(),
) -> ExperimentReport:
    """Walk forward through ``season`` week by week, refitting Dixon-Coles before each week."""
    season = season or ecfg.walk_season
    cache: CountsCache = {}
    cutoff = corpus.season_start(season)
    train = corpus.subset(lambda m: m.date < cutoff)
    if not train.matches:
        raise DataError(f"season {season}: no earlier matches to train on")
    report = ExperimentReport(3, MODELS + ((ENSEMBLE_NO_TEXT,) if ecfg.ablation else ()))
    report.flags.append(f"gameweeks derived from date order in blocks of {ecfg.week_size} fixtures")
    suite = train_suite(train, cfg, ecfg, cutoff, cache)
    for mid, why in suite.ensemble.excluded.items():
        report.excluded[mid] = f"stacker training: {why}"
    season_matches = corpus.season_matches(season)
    for m in season_matches:
        if m.odds is None:
            report.excluded[m.match_id] = "no odds"
    playable = [m for m in season_matches if m.odds is not None]

    static_ids = suite.ensemble.stacker_train_ids
    for row in suite.ensemble.train_rows:
        if row.provenance is not None:
            static_ids = static_ids | row.provenance.all_ids
    if suite.ensemble.text_model is not None:
        static_ids = static_ids | suite.ensemble.text_model.train_ids

    preds: list[Prediction] = []
    audits: list[WeekProvenance] = []
    cumulative = {name: 0 for name in report.models}
    played = 0
    prev = suite.ensemble.dc_params
    first_acc = None
    for w, week in enumerate(assign_weeks(playable, ecfg.week_size), start=1):
        start = week[0].date
        params = fit_dc_before(corpus.matches, start, cfg.dc, prev)
        if params is None:
            raise DataError(f"week {w}: no matches before {start} for the Dixon-Coles refit")
        prev = params
        audits.append(WeekProvenance(w, start, static_ids | params.train_ids))
        week_preds = [p for m in week for p in suite.predict(m, corpus, params, cache, w)]
        preds.extend(week_preds)
        played += len(week)
        row: dict[str, object] = {"week": w, "start_date": start.isoformat(), "matches": len(week), "played": played}
        for name in report.models:
            correct = sum(p.correct for p in week_preds if p.model == name)
            cumulative[name] += correct
            row[f"{name}_correct"] = correct
            row[f"{name}_cumulative"] = cumulative[name]
        report.weekly.append(row)
        if first_acc is None:
            first_acc = cumulative[ENSEMBLE] / played

    report.audit_violations = audit_walk_forward(audits, corpus)
    _score(report, preds)
    report.counts = {"test_matches": played, "weeks": len(report.weekly)}
    if played:
        final_acc = cumulative[ENSEMBLE] / played
        report.notes = {
            "ensemble_accuracy_first_week": first_acc,
            "ensemble_accuracy_final": final_acc,
            "ensemble_accuracy_delta": final_acc - first_acc,
        }
    report.predictions = preds
    return report


def run_experiment(
    number: int, corpus: Corpus, cfg: ModelConfig, ecfg: EvalConfig
) -> ExperimentReport:
    runners: dict[int, Callable[[], ExperimentReport]] = {
        1: lambda: experiment1(corpus, ecfg.seasons, cfg, ecfg),
        2: lambda: experiment2(corpus, cfg.seed, cfg, ecfg),
        3: lambda: experiment3(corpus, ecfg.walk_season, cfg, ecfg),
    }
    if number not in runners:
        raise ValueError(f"unknown experiment {number}")
    return runners[number]()

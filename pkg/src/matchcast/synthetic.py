"""Synthetic league generator for tests, demos and recovery studies.

Scores are drawn from the Dixon-Coles model with known parameters. Each team
also carries a per-match "news" state (good, neutral or bad) that shifts its
scoring rate; the preview text describes that state, while the bookmaker only
sees the base rates plus noise. Text therefore carries signal the other two
sources lack.

Run ``python -m matchcast.synthetic --out DIR`` to write ``matches.csv``,
``previews.jsonl`` and ``aliases.json``.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, MatchRecord, PreviewArticle, TeamAliasTable, write_matches_csv, write_previews_jsonl
from .dixon_coles import grid_from_rates
from .fileio import atomic_write_text, dumps_canonical
from .odds import OddsTriple

_TOWNS = (
    "Ashford", "Bramley", "Carrow", "Dunmore", "Eastleigh", "Farrow", "Glenby", "Harwick",
    "Ilford", "Jessop", "Kelby", "Larch", "Marden", "Norwick", "Oakham", "Pelling",
    "Quarry", "Redmere", "Selby", "Thorne", "Upham", "Varley", "Welling", "Yarrow",
)
_SUFFIXES = ("Rovers", "United", "City", "Athletic", "Town", "Wanderers")
_NICKNAMES = (
    "Hawks", "Millers", "Foxes", "Badgers", "Owls", "Herons", "Stags", "Wolves",
    "Otters", "Ravens", "Falcons", "Bulls", "Lions", "Eagles", "Swans", "Hornets",
    "Magpies", "Robins", "Kestrels", "Bears", "Tigers", "Bees", "Seagulls", "Pumas",
)
_MANAGERS = (
    "Abbott", "Benson", "Crowther", "Dallow", "Ellery", "Fenwick", "Garside", "Holloway",
    "Ingram", "Jarvis", "Kirkby", "Lomas", "Merritt", "Nuttall", "Ormerod", "Pickering",
    "Quayle", "Rudd", "Sowerby", "Tunstall", "Umber", "Venn", "Whitlock", "Yeadon",
)
_PLAYERS = (
    "Aldous", "Birtles", "Cottee", "Dicks", "Ekoku", "Flitcroft", "Goater", "Hreidarsson",
    "Impey", "Jemson", "Kanchelskis", "Lundekvam", "Mutch", "Nogan", "Omoyinmi", "Pahars",
    "Quashie", "Radebe", "Sinton", "Tiler", "Unsworth", "Vonk", "Whelan", "Yorath",
)

_GOOD = (
    "{name} have won their last three matches and {player} is in superb form.",
    "{name} arrive full of confidence after a thumping victory last weekend.",
    "{player} returns from injury and {name} look sharp in training.",
    "{manager} has a fully fit squad and {name} are unbeaten in five.",
)
_BAD = (
    "{name} are struggling with injuries and {player} is ruled out for weeks.",
    "{name} have lost four in a row and morale is low.",
    "{manager} faces a selection crisis after {player} limped off with a hamstring problem.",
    "{name} were beaten heavily last time and the dressing room looks fragile.",
)
_NEUTRAL = (
    "{name} drew their last game and {manager} expects a tight contest.",
    "{manager} is likely to name an unchanged side for {name}.",
    "{name} sit in mid table after a mixed run of results.",
)
_INTRO = (
    "{home} host {away} on Saturday afternoon.",
    "{home} welcome {away} in what promises to be a lively occasion.",
)
_FILLER = (
    "Kick off is at three o'clock and the weather forecast is dry.",
    "The referee for the game has not yet been confirmed.",
    "Tickets for the fixture sold out within a week.",
)


@dataclass(frozen=True)
class LeagueSpec:
    n_teams: int = 10
    seasons: tuple[str, ...] = ("2014-15", "2015-16", "2016-17")
    home_adv: float = 1.35
    rho: float = -0.05
    base_defense: float = 1.15
    strength_sd: float = 0.25
    drift_sd: float = 0.05
    news_effect: float = 0.35
    news_probs: tuple[float, float, float] = (0.25, 0.5, 0.25)  # bad, neutral, good
    overround: float = 0.05
    odds_noise: float = 0.15
    preview_rate: float = 1.0
    odds_rate: float = 1.0

    def __post_init__(self) -> None:
        if not 2 <= self.n_teams <= len(_TOWNS) or self.n_teams % 2:
            raise ValueError(f"n_teams must be even and between 2 and {len(_TOWNS)}")
        if not self.seasons:
            raise ValueError("need at least one season")


@dataclass(frozen=True)
class League:
    spec: LeagueSpec
    matches: tuple[MatchRecord, ...]
    articles: tuple[PreviewArticle, ...]
    aliases: Mapping[str, list[str]]
    attack: Mapping[str, Mapping[str, float]]  # season -> team -> attack
    defense: Mapping[str, Mapping[str, float]]
    news: Mapping[str, tuple[int, int]]  # match_id -> (home state, away state)

    def corpus(self) -> Corpus:
        return Corpus.build(self.matches, self.articles, TeamAliasTable(self.aliases))


def team_identities(n_teams: int) -> dict[str, list[str]]:
    """Team id -> aliases (club name, town, nickname, manager, key player)."""
    out: dict[str, list[str]] = {}
    for i in range(n_teams):
        town = _TOWNS[i]
        code = town[:3].upper()
        out[code] = [
            f"{town} {_SUFFIXES[i % len(_SUFFIXES)]}",
            town,
            f"the {_NICKNAMES[i]}",
            _MANAGERS[i],
            _PLAYERS[i],
        ]
    return out


def round_robin(teams: Sequence[str]) -> list[list[tuple[str, str]]]:
    """Double round robin by the circle method; second half mirrors the first."""
    ts = list(teams)
    n = len(ts)
    rounds = []
    for r in range(n - 1):
        pairs = []
        for i in range(n // 2):
            a, b = ts[i], ts[n - 1 - i]
            pairs.append((a, b) if (r + i) % 2 == 0 else (b, a))
        rounds.append(pairs)
        ts = [ts[0], ts[-1], *ts[1:-1]]
    return rounds + [[(b, a) for a, b in pairs] for pairs in rounds]


def sample_score(lam: float, kap: float, rho: float, rng: np.random.Generator, max_goals: int = 15) -> tuple[int, int]:
    grid = grid_from_rates(lam, kap, rho, max_goals).probs.ravel()
    k = int(rng.choice(grid.size, p=grid))
    return k // (max_goals + 1), k % (max_goals + 1)


def simulate_matches(
    attack: Mapping[str, float],
    defense: Mapping[str, float],
    home_adv: float,
    rho: float,
    n_matches: int,
    rng: np.random.Generator,
    start: dt.date = dt.date(2015, 8, 1),
    per_day: int = 10,
) -> list[MatchRecord]:
    """Matches between uniformly drawn distinct pairs, ``per_day`` fixtures per calendar day."""
    teams = sorted(attack)
    size = 16
    grids: dict[tuple[str, str], np.ndarray] = {}
    out = []
    for i in range(n_matches):
        h, a = rng.choice(len(teams), 2, replace=False)
        home, away = teams[h], teams[a]
        if (home, away) not in grids:
            lam = attack[home] * defense[away] * home_adv
            kap = attack[away] * defense[home]
            grids[home, away] = np.cumsum(grid_from_rates(lam, kap, rho, size - 1).probs.ravel())
        cdf = grids[home, away]
        k = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), cdf.size - 1)
        hg, ag = k // size, k % size
        out.append(MatchRecord(f"sim{i:05d}", start + dt.timedelta(days=i // per_day), "sim", home, away, hg, ag))
    return out


def _odds_from_probs(p: np.ndarray, overround: float) -> OddsTriple:
    implied = p * (1.0 + overround)
    return OddsTriple(*(max(1.01, round(1.0 / v, 2)) for v in implied))


def _team_sentence(state: int, aliases: Sequence[str], rng: np.random.Generator) -> str:
    pool = (_BAD, _NEUTRAL, _GOOD)[state + 1]
    template = pool[int(rng.integers(len(pool)))]
    name = aliases[int(rng.integers(3))]
    text = template.format(name=name, manager=aliases[3], player=aliases[4])
    return text[0].upper() + text[1:]


def make_league(spec: LeagueSpec = LeagueSpec(), seed: int = 0) -> League:
    rng = np.random.default_rng(seed)
    ids = team_identities(spec.n_teams)
    teams = sorted(ids)
    log_att = rng.normal(0.0, spec.strength_sd, len(teams))
    log_def = rng.normal(0.0, spec.strength_sd, len(teams))

    matches: list[MatchRecord] = []
    articles: list[PreviewArticle] = []
    attack_by_season: dict[str, dict[str, float]] = {}
    defense_by_season: dict[str, dict[str, float]] = {}
    news: dict[str, tuple[int, int]] = {}
    for s_idx, season in enumerate(spec.seasons):
        if s_idx:
            log_att = log_att + rng.normal(0.0, spec.drift_sd, len(teams))
            log_def = log_def + rng.normal(0.0, spec.drift_sd, len(teams))
        la = log_att - log_att.mean()
        attack = {t: float(math.exp(v)) for t, v in zip(teams, la)}
        defense = {t: float(spec.base_defense * math.exp(v)) for t, v in zip(teams, log_def)}
        attack_by_season[season] = attack
        defense_by_season[season] = defense
        year = int(season[:4])
        start = dt.date(year, 8, 10)
        order = [str(t) for t in rng.permutation(teams)]
        for r, pairs in enumerate(round_robin(order)):
            for i, (home, away) in enumerate(pairs):
                mid = f"{season}-{r + 1:02d}-{i + 1:02d}"
                date = start + dt.timedelta(days=7 * r + i % 3)
                lam = attack[home] * defense[away] * spec.home_adv
                kap = attack[away] * defense[home]
                sh, sa = (int(v) - 1 for v in rng.choice(3, 2, p=spec.news_probs))
                hg, ag = sample_score(
                    lam * math.exp(spec.news_effect * sh), kap * math.exp(spec.news_effect * sa), spec.rho, rng
                )
                odds = None
                if rng.random() < spec.odds_rate:
                    base = grid_from_rates(lam, kap, spec.rho, 15).outcome_probs().as_array()
                    noisy = np.exp(np.log(base) + rng.normal(0.0, spec.odds_noise, 3))
                    odds = _odds_from_probs(noisy / noisy.sum(), spec.overround)
                matches.append(MatchRecord(mid, date, season, home, away, hg, ag, odds))
                news[mid] = (sh, sa)
                if rng.random() < spec.preview_rate:
                    intro = _INTRO[int(rng.integers(len(_INTRO)))].format(home=ids[home][0], away=ids[away][0])
                    parts = [
                        intro,
                        _team_sentence(sh, ids[home], rng),
                        _team_sentence(sa, ids[away], rng),
                        _FILLER[int(rng.integers(len(_FILLER)))],
                    ]
                    articles.append(PreviewArticle(mid, "synthetic", " ".join(parts)))
    matches.sort(key=lambda m: m.sort_key)
    return League(spec, tuple(matches), tuple(articles), ids, attack_by_season, defense_by_season, news)


def write_league(league: League, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {
        "matches": out / "matches.csv",
        "previews": out / "previews.jsonl",
        "aliases": out / "aliases.json",
    }
    atomic_write_text(paths["matches"], write_matches_csv(league.matches))
    atomic_write_text(paths["previews"], write_previews_jsonl(league.articles))
    atomic_write_text(paths["aliases"], dumps_canonical(dict(league.aliases)))
    return paths


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="python -m matchcast.synthetic", description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--teams", type=int, default=LeagueSpec.n_teams)
    parser.add_argument("--seasons", nargs="+", default=list(LeagueSpec.seasons))
    parser.add_argument("--preview-rate", type=float, default=1.0)
    parser.add_argument("--odds-rate", type=float, default=1.0)
    args = parser.parse_args(argv)
    spec = LeagueSpec(
        n_teams=args.teams, seasons=tuple(args.seasons), preview_rate=args.preview_rate, odds_rate=args.odds_rate
    )
    paths = write_league(make_league(spec, args.seed), args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

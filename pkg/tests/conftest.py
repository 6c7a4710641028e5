import datetime as dt

import pytest

from matchcast.config import EnsembleConfig, ModelConfig
from matchcast.corpus import Corpus, MatchRecord, PreviewArticle, TeamAliasTable
from matchcast.forest import ForestParams
from matchcast.odds import OddsTriple
from matchcast.synthetic import LeagueSpec, make_league

SNIPPET = (
    "Which Tottenham team will show up at St Mary’s? Tottenham competed a clinical Champions League "
    "victory over Dortmund – but they are winless in their last three league games. Pochettino begins "
    "his touchline ban and will be without Kieran Trippier, although Dele Alli and Harry Winks could feature."
)

ALIASES = {
    "TOT": ["Tottenham", "Spurs", "Pochettino", "Trippier", "Kieran Trippier", "Dele Alli", "Harry Winks", "Kane"],
    "SOU": ["Southampton", "Saints", "Hughes", "Ward-Prowse", "St Mary's"],
    "MUN": ["Manchester United", "Man Utd", "Mourinho", "Pogba"],
    "CHE": ["Chelsea", "Sarri", "Hazard"],
}


@pytest.fixture
def aliases():
    return TeamAliasTable(ALIASES)


@pytest.fixture
def sou_tot():
    return MatchRecord("m1", dt.date(2018, 8, 11), "2018-19", "SOU", "TOT", 1, 2, OddsTriple(3.40, 3.30, 2.05))


@pytest.fixture
def tiny_corpus(aliases, sou_tot):
    other = MatchRecord("m2", dt.date(2018, 8, 12), "2018-19", "MUN", "CHE", 0, 0, OddsTriple(2.5, 3.2, 2.9))
    arts = [
        PreviewArticle("m1", "guardian", SNIPPET),
        PreviewArticle("m2", "guardian", "Mourinho is Manchester United's manager. Chelsea arrive in form."),
    ]
    return Corpus.build([sou_tot, other], arts, aliases)


SMALL_SPEC = LeagueSpec(n_teams=10, seasons=("2014-15", "2015-16", "2016-17", "2017-18"), news_effect=0.6)


@pytest.fixture(scope="session")
def league():
    return make_league(SMALL_SPEC, seed=11)


@pytest.fixture(scope="session")
def league_corpus(league):
    return league.corpus()


@pytest.fixture(scope="session")
def fast_config():
    return ModelConfig(
        text_forest=ForestParams(n_trees=25),
        stacker_forest=ForestParams(n_trees=50),
        ensemble=EnsembleConfig(min_dc_history=40),
        seed=7,
    )


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion

_CRITERIA: dict[int, list[str]] = {}
_TITLES: dict[int, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            n = int(mark.args[0])
            _CRITERIA.setdefault(n, [])
            if len(mark.args) > 1:
                _TITLES[n] = mark.args[1]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = int(mark.args[0])
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA.setdefault(n, []).append("skip" if rep.skipped else ("pass" if rep.passed else "fail"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        if not results:
            continue
        if "fail" in results:
            status = "FAIL"
        elif all(r == "skip" for r in results):
            status = "SKIP"
        else:
            status = "PASS"
        title = _TITLES.get(n, "")
        tr.write_line(f"criterion {n:>2}: {status}  {title}".rstrip())

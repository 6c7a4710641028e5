import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchcast.corpus import MatchRecord, PreviewArticle, TeamAliasTable, split_sentences
from matchcast.errors import DataError
from matchcast.textfeat import (
    AWAY,
    HOME,
    NONE,
    RelationTuple,
    Vocabulary,
    allocate_sentence,
    build_features,
    extract_relations,
    feature_matrix,
    features_csv,
    fit_vocabulary,
    mention_mass,
    side_counts,
    vectorize_sentence,
)
from matchcast.tokens import tokenize

from conftest import SNIPPET


def _vocab(*tokens):
    return Vocabulary(tuple(tokens), (1,) * len(tokens), 1, "test", 1, 1.0)


def _arts(*texts, match_id="m1"):
    return [PreviewArticle(match_id, f"s{i}", t) for i, t in enumerate(texts)]


class TestExtractRelations:
    def test_snippet_tuples(self):
        sents = split_sentences(SNIPPET)
        got = [
            (" ".join(t.subject), t.relation_label, " ".join(t.object))
            for i, s in enumerate(sents)
            for t in extract_relations(s, i)
        ]
        assert ("tottenham", "competed", "clinical champions league victory over dortmund") in got
        assert ("pochettino", "begins", "touchline ban") in got
        assert ("pochettino", "will-be-without", "kieran trippier") in got

    def test_copula_possessive(self):
        (t,) = extract_relations("Mourinho is Manchester United's ex-manager.")
        assert t.subject == ("mourinho",)
        assert t.relation_label == "is-ex-manager-of"
        assert t.object == ("manchester", "united")

    def test_spans_index_tokens(self):
        s = "Liverpool beat Arsenal at Anfield."
        words = tokenize(s)
        for t in extract_relations(s):
            assert tuple(words[slice(*t.subject_span)]) == t.subject
            assert tuple(words[slice(*t.object_span)]) == t.object

    @pytest.mark.parametrize("s", ["", "Goal.", "the and of"])
    def test_no_tuples(self, s):
        assert extract_relations(s) == []

    @settings(max_examples=200)
    @given(st.text(max_size=200))
    def test_never_raises(self, s):
        for t in extract_relations(s):
            assert t.subject and t.relation and t.object


class TestAllocation:
    def test_snippet(self, aliases, sou_tot):
        teams = []
        for i, s in enumerate(split_sentences(SNIPPET)):
            teams.append(allocate_sentence(s, extract_relations(s, i), sou_tot, aliases, 0.6, i))
        # "Tottenham" (subject) against "St Mary's" (object): a 2-2 tie
        assert (teams[0].team, teams[0].home_mass, teams[0].away_mass) == (NONE, 2, 2)
        assert [a.team for a in teams[1:]] == [AWAY, AWAY]
        assert all(a.confidence == 1.0 for a in teams[1:])

    def test_argument_weighting(self, aliases, sou_tot):
        # "Spurs" sits in the subject span (weight 2); "Saints" is outside it (weight 1)
        s = "Spurs beat Chelsea, Saints."
        tuples = [RelationTuple(("spurs",), ("beat",), ("chelsea",), 0, (0, 1), (2, 3))]
        home, away = mention_mass(s, tuples, sou_tot, aliases)
        assert (home, away) == (1, 2)
        alloc = allocate_sentence(s, tuples, sou_tot, aliases, 0.6)
        assert alloc.team == AWAY
        assert alloc.confidence == pytest.approx(2 / 3)

    def test_below_theta_goes_to_none(self, aliases, sou_tot):
        s = "Spurs beat Chelsea, Saints."
        tuples = [RelationTuple(("spurs",), ("beat",), ("chelsea",), 0, (0, 1), (2, 3))]
        alloc = allocate_sentence(s, tuples, sou_tot, aliases, 0.7)
        assert alloc.team == NONE

    def test_tie_is_none(self, aliases, sou_tot):
        s = "Southampton and Tottenham."
        assert allocate_sentence(s, [], sou_tot, aliases, 0.6).team == NONE

    def test_no_mentions(self, aliases, sou_tot):
        alloc = allocate_sentence("The weather is fine.", [], sou_tot, aliases)
        assert alloc.team == NONE and alloc.confidence == 0.0

    @pytest.mark.parametrize("theta", [0.5, 0.2, 1.01])
    def test_theta_domain(self, aliases, sou_tot, theta):
        with pytest.raises(ValueError):
            allocate_sentence("Spurs.", [], sou_tot, aliases, theta)


class TestVocabulary:
    def test_alphabetical_and_df(self):
        arts = _arts("Spurs win.", "Spurs lose.", "Spurs draw again.")
        v = fit_vocabulary(arts, min_df=3, max_df=1.0)
        assert v.tokens == ("spurs",)
        assert v.doc_freq == (3,)

    def test_min_df_drops_rare(self):
        arts = _arts("alpha beta", "alpha gamma", "alpha beta")
        assert fit_vocabulary(arts, min_df=2, max_df=1.0).tokens == ("alpha", "beta")

    def test_max_df_drops_ubiquitous(self):
        # ceiling 0.9 * 3 = 2.7: "alpha" (df 3) goes, "beta" (df 2) stays
        arts = _arts("alpha beta", "alpha beta", "alpha gamma")
        assert fit_vocabulary(arts, min_df=1, max_df=0.9).tokens == ("beta", "gamma")

    def test_stop_words_removed(self):
        arts = _arts("the spurs", "the spurs", "the spurs")
        assert fit_vocabulary(arts, min_df=1, max_df=1.0).tokens == ("spurs",)

    def test_empty_after_pruning(self):
        with pytest.raises(DataError, match="no terms"):
            fit_vocabulary(_arts("a1", "b1", "c1"), min_df=3)

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            fit_vocabulary([])

    def test_round_trip(self):
        v = fit_vocabulary(_arts("x y", "x z", "x y"), min_df=1, max_df=1.0)
        assert Vocabulary.from_dict(v.to_dict()) == v

    def test_order_independent(self):
        arts = _arts("x y", "x z", "x y", "w")
        assert fit_vocabulary(arts, 1, 1.0) == fit_vocabulary(arts[::-1], 1, 1.0)


class TestVectors:
    def test_repeated_token(self):
        v = _vocab("beat", "city", "united")
        np.testing.assert_array_equal(vectorize_sentence("United beat United", v).to_dense(), [1, 0, 2])

    def test_out_of_vocabulary_ignored(self):
        v = _vocab("beat")
        assert vectorize_sentence("Spurs lost", v).counts == {}


@pytest.fixture
def ab_match():
    return MatchRecord("m1", dt.date(2020, 1, 1), "s", "H", "A", 1, 0)


@pytest.fixture
def ab_aliases():
    return TeamAliasTable({"H": ["Homers"], "A": ["Awayers"]})


class TestBuildFeatures:
    def test_sides(self, ab_match, ab_aliases):
        vocab = _vocab("alpha", "beta")
        arts = _arts("Homers alpha. Awayers beta beta.")
        f = build_features(ab_match, arts, vocab, ab_aliases, mu=1.0)
        np.testing.assert_array_equal(f.x, [1, 0, 0, 2])
        f = build_features(ab_match, arts, vocab, ab_aliases, mu=1.3)
        np.testing.assert_allclose(f.x, [1.3, 0, 0, 2])
        assert [a.team for a in f.allocations] == [HOME, AWAY]

    def test_none_sentences_excluded(self, ab_match, ab_aliases):
        vocab = _vocab("alpha")
        f = build_features(ab_match, _arts("Alpha alpha alpha."), vocab, ab_aliases)
        np.testing.assert_array_equal(f.x, [0, 0])
        np.testing.assert_array_equal(f.none_vector, [3])

    def test_no_articles(self, ab_match, ab_aliases):
        f = build_features(ab_match, [], _vocab("alpha"), ab_aliases)
        assert not f.has_text
        np.testing.assert_array_equal(f.x, [0, 0])

    def test_articles_pooled(self, ab_match, ab_aliases):
        vocab = _vocab("alpha")
        f = build_features(ab_match, _arts("Homers alpha.", "Homers alpha."), vocab, ab_aliases, mu=1.0)
        np.testing.assert_array_equal(f.x, [2, 0])

    def test_wrong_article(self, ab_match, ab_aliases):
        with pytest.raises(ValueError):
            build_features(ab_match, _arts("x", match_id="m9"), _vocab("x"), ab_aliases)

    @pytest.mark.parametrize("mu", [0.0, -1.0])
    def test_bad_mu(self, ab_match, ab_aliases, mu):
        with pytest.raises(ValueError):
            build_features(ab_match, [], _vocab("x"), ab_aliases, mu=mu)

    def test_mu_scales_home_block_only(self, league_corpus):
        vocab = fit_vocabulary(league_corpus.articles)
        ms = league_corpus.matches[:40]
        x1, _ = feature_matrix(ms, league_corpus, vocab, mu=1.0)
        x2, _ = feature_matrix(ms, league_corpus, vocab, mu=1.4)
        v = len(vocab)
        np.testing.assert_allclose(x2[:, :v], 1.4 * x1[:, :v])
        np.testing.assert_array_equal(x2[:, v:], x1[:, v:])

    def test_side_counts_agree(self, league_corpus):
        vocab = fit_vocabulary(league_corpus.articles)
        for m in league_corpus.matches[:60]:
            arts = league_corpus.previews_for(m.match_id)
            sc = side_counts(m, arts, league_corpus.aliases)
            f = build_features(m, arts, vocab, league_corpus.aliases, mu=1.2)
            np.testing.assert_allclose(sc.features(vocab, 1.2), f.x)
            assert sc.has_text == f.has_text

    def test_csv(self):
        vocab = _vocab("a", "b")
        out = features_csv(["m1"], np.array([[1.25, 0, 0, 2]]), vocab)
        assert out == "match_id,home:a,home:b,away:a,away:b\nm1,1.25,0,0,2\n"

import datetime as dt
import json
from dataclasses import replace

import numpy as np
import pytest

from matchcast import dixon_coles as dc
from matchcast.config import DCConfig, EnsembleConfig, TextConfig
from matchcast.corpus import temporal_split
from matchcast.ensemble import (
    FEATURE_NAMES,
    REASON_NO_HISTORY,
    REASON_NO_ODDS,
    Ensemble,
    MetaFeatures,
    audit_out_of_fold,
    build_meta_features,
    fit_dc_before,
    fold_assignment,
    rolling_dc,
    train_ensemble,
    train_stacker,
)
from matchcast.errors import DataError, ModelError
from matchcast.forest import ForestParams
from matchcast.odds import implied_probs
from matchcast.outcomes import OutcomeProbs
from matchcast.textmodel import TextModel, train_text_model, tune_mu


@pytest.fixture(scope="module")
def split(league_corpus):
    return temporal_split(league_corpus, league_corpus.season_start("2017-18"))


@pytest.fixture(scope="module")
def ensemble(split, fast_config):
    return train_ensemble(split[0], fast_config, cache={})


class TestTextModel:
    def test_trains_on_text_only(self, split):
        train, _ = split
        tm = train_text_model(train.matches, train, TextConfig(), ForestParams(n_trees=10), seed=1)
        assert tm.train_ids == {m.match_id for m in train if train.has_text(m.match_id)}
        assert len(tm.vocab) > 0
        assert tm.forest.n_features == 2 * len(tm.vocab)

    def test_beats_chance_on_news(self, split):
        train, test = split
        tm = train_text_model(train.matches, train, TextConfig(), ForestParams(n_trees=40), seed=1)
        acc = np.mean([tm.predict_proba(m, test).argmax() == m.outcome for m in test])
        assert acc > 0.4

    def test_round_trip(self, split):
        train, test = split
        tm = train_text_model(train.matches[:200], train, TextConfig(), ForestParams(n_trees=5), seed=1)
        back = TextModel.from_dict(json.loads(json.dumps(tm.to_dict())))
        assert back.train_ids == tm.train_ids
        m = test.matches[0]
        np.testing.assert_array_equal(back.predict_proba(m, test).as_array(), tm.predict_proba(m, test).as_array())

    def test_needs_text(self, tiny_corpus):
        with pytest.raises(DataError, match="preview text"):
            train_text_model(tiny_corpus.matches[:1], tiny_corpus)

    def test_tune_mu_picks_grid_value(self, split):
        train, _ = split
        ms = [m for m in train.matches[:150] if train.has_text(m.match_id)]
        mu = tune_mu(ms, train, TextConfig(), ForestParams(n_trees=5), seed=0, grid=(1.0, 1.3))
        assert mu in (1.0, 1.3)

    def test_cache_consistent(self, split):
        train, _ = split
        cache = {}
        a = train_text_model(train.matches[:120], train, TextConfig(), ForestParams(n_trees=5), 2, cache=cache)
        b = train_text_model(train.matches[:120], train, TextConfig(), ForestParams(n_trees=5), 2)
        assert cache
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


class TestMetaFeatures:
    def test_layout(self, tiny_corpus, sou_tot):
        params = dc.DCParams({"SOU": 1.0, "TOT": 1.0}, {"SOU": 1.0, "TOT": 1.0}, 1.2, -0.05)
        mf = build_meta_features(sou_tot, None, params, tiny_corpus)
        assert len(mf.x) == len(FEATURE_NAMES) == 9
        np.testing.assert_array_equal(mf.x[:3], OutcomeProbs.uniform().as_array())
        np.testing.assert_allclose(mf.x[3:6], dc.predict(params, "SOU", "TOT").as_array())
        np.testing.assert_allclose(mf.x[6:], implied_probs(sou_tot.odds).as_array())
        np.testing.assert_array_equal(mf.vector(use_text=False), mf.x[3:])

    def test_no_odds(self, tiny_corpus, sou_tot):
        params = dc.DCParams({"SOU": 1.0, "TOT": 1.0}, {"SOU": 1.0, "TOT": 1.0}, 1.2, -0.05)
        with pytest.raises(DataError, match="odds"):
            build_meta_features(replace(sou_tot, odds=None), None, params, tiny_corpus)

    def test_unknown_team_flagged(self, tiny_corpus, sou_tot):
        params = dc.DCParams({"SOU": 1.0, "ARS": 1.0}, {"SOU": 1.0, "ARS": 1.0}, 1.2, -0.05)
        assert build_meta_features(sou_tot, None, params, tiny_corpus).dc_substituted


class TestRollingDC:
    def test_strictly_before(self, league_corpus):
        ms = league_corpus.matches
        params = fit_dc_before(ms, ms[300].date)
        assert all(league_corpus.match(i).date < ms[300].date for i in params.train_ids)
        assert params.as_of == ms[300].date

    def test_min_history(self, league_corpus):
        ms = league_corpus.matches
        assert fit_dc_before(ms, ms[20].date, min_history=100) is None

    def test_blocks(self, league_corpus):
        ms = list(league_corpus.matches)
        targets = ms[150:260]
        fits, excluded = rolling_dc(ms, targets, DCConfig(), refit_days=7, min_history=100)
        assert not excluded and set(fits) == {m.match_id for m in targets}
        for m in targets:
            p = fits[m.match_id]
            assert p.as_of <= m.date
            assert (m.date - p.as_of).days < 7

    def test_excludes_early(self, league_corpus):
        ms = list(league_corpus.matches)
        _, excluded = rolling_dc(ms, ms[:30], min_history=100)
        assert set(excluded.values()) == {REASON_NO_HISTORY}


class TestFolds:
    def test_balanced_and_order_free(self):
        ids = [f"m{i}" for i in range(103)]
        a = fold_assignment(ids, 5, 1)
        assert a == fold_assignment(ids[::-1], 5, 1)
        counts = np.bincount(list(a.values()))
        assert counts.max() - counts.min() <= 1


class TestEnsemble:
    def test_out_of_fold(self, ensemble, split):
        assert audit_out_of_fold(ensemble.train_rows, split[0]) == []

    def test_audit_detects_leak(self, ensemble, split):
        row = ensemble.train_rows[0]
        leaky = replace(row, provenance=replace(row.provenance, text_train_ids=frozenset({row.match_id})))
        assert audit_out_of_fold([leaky], split[0])

    def test_exclusions(self, ensemble, split):
        train = split[0]
        used = ensemble.stacker_train_ids
        assert used.isdisjoint(ensemble.excluded)
        assert len(used) + len(ensemble.excluded) == len(train)
        for mid, reason in ensemble.excluded.items():
            assert reason in (REASON_NO_ODDS, REASON_NO_HISTORY)

    def test_predict(self, ensemble, split):
        test = split[1]
        for m in [m for m in test if m.odds is not None][:20]:
            p = ensemble.predict_proba(m, test)
            assert abs(p.as_array().sum() - 1) < 1e-9

    def test_round_trip(self, ensemble, split):
        test = split[1]
        back = Ensemble.from_dict(json.loads(json.dumps(ensemble.to_dict())))
        m = next(m for m in test if m.odds is not None)
        np.testing.assert_array_equal(back.predict_proba(m, test).as_array(), ensemble.predict_proba(m, test).as_array())

    def test_tampered_upstream(self, ensemble):
        d = json.loads(json.dumps(ensemble.to_dict()))
        d["upstream"]["dc"]["gamma"] = 9.0
        with pytest.raises(ModelError, match="digest"):
            Ensemble.from_dict(d)

    def test_deterministic(self, ensemble, split, fast_config):
        again = train_ensemble(split[0], fast_config)
        assert json.dumps(again.to_dict()) == json.dumps(ensemble.to_dict())

    def test_without_text(self, ensemble, split):
        ablated = ensemble.without_text(ForestParams(n_trees=20), seed=1)
        assert not ablated.use_text
        assert ablated.stacker.n_features == 6
        assert ablated.to_dict()["features"] == list(FEATURE_NAMES[3:])

    def test_no_text_config(self, split, fast_config):
        cfg = replace(fast_config, ensemble=replace(fast_config.ensemble, use_text=False))
        ens = train_ensemble(split[0], cfg)
        assert ens.text_model is None
        assert all(r.provenance.text_train_ids == frozenset() for r in ens.train_rows)

    def test_too_little_history(self, split, fast_config):
        cfg = replace(fast_config, ensemble=EnsembleConfig(min_dc_history=10_000))
        with pytest.raises(DataError, match="prior matches"):
            train_ensemble(split[0], cfg)


class TestStacker:
    def test_needs_rows(self):
        with pytest.raises(DataError):
            train_stacker([], [])

    def test_length_mismatch(self):
        u = OutcomeProbs.uniform()
        with pytest.raises(ValueError):
            train_stacker([MetaFeatures("a", u, u, u)], [0, 1])

    def test_feature_order(self):
        rows = [
            MetaFeatures(f"r{i}", OutcomeProbs.uniform(), OutcomeProbs.from_weights([1, 0, 0]),
                         OutcomeProbs.from_weights([0, 0, 1]))
            for i in range(4)
        ]
        f = train_stacker(rows, [0, 1, 0, 1], ForestParams(n_trees=2), 0)
        assert f.n_features == 9
        with pytest.raises(ModelError):
            f.proba_matrix(np.zeros(6))


def test_dc_as_of_default(split, ensemble):
    train = split[0]
    assert ensemble.dc_params.as_of == train.matches[-1].date + dt.timedelta(days=1)

import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from matchcast import dixon_coles as dc
from matchcast.corpus import MatchRecord
from matchcast.errors import ConvergenceError, DataError, ModelError, UnknownTeamError
from matchcast.synthetic import simulate_matches

TRUE_ATTACK = {"AAA": 1.25, "BBB": 1.0, "CCC": 0.8}
TRUE_DEFENSE = {"AAA": 0.8, "BBB": 1.0, "CCC": 1.25}


@pytest.fixture(scope="module")
def sim():
    return simulate_matches(TRUE_ATTACK, TRUE_DEFENSE, 1.3, -0.05, 3000, np.random.default_rng(1))


@pytest.fixture(scope="module")
def fitted(sim):
    return dc.fit(sim, xi=0.0)


class TestTau:
    @pytest.mark.parametrize(
        "x,y,expected",
        [(0, 0, 1 + 1.2 * 0.8 * 0.1), (0, 1, 1 - 1.2 * 0.1), (1, 0, 1 - 0.8 * 0.1), (1, 1, 1.1), (2, 0, 1.0)],
    )
    def test_cases(self, x, y, expected):
        assert dc.tau(x, y, 1.2, 0.8, -0.1) == pytest.approx(expected)

    def test_grid_scaling(self):
        g = dc.grid_from_rates(1.2, 0.8, -0.1)
        raw00 = poisson.pmf(0, 1.2) * poisson.pmf(0, 0.8)
        # tau keeps the total mass, so the (0,0) cell is scaled by 1.096 relative to the raw grid
        assert g.probs[0, 0] * g.raw_mass == pytest.approx(1.096 * raw00)

    @given(
        st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-0.15, 0.15)
    )
    def test_mass_preserved(self, lam, kap, rho):
        total = sum(
            dc.tau(x, y, lam, kap, rho) * poisson.pmf(x, lam) * poisson.pmf(y, kap) for x in (0, 1) for y in (0, 1)
        )
        raw = sum(poisson.pmf(x, lam) * poisson.pmf(y, kap) for x in (0, 1) for y in (0, 1))
        assert total == pytest.approx(raw)


class TestTimeWeights:
    def test_half_weeks(self):
        d = dt.date(2020, 1, 8)
        w = dc.time_weights([d, d - dt.timedelta(days=7)], d, 0.01)
        np.testing.assert_allclose(w, [1.0, np.exp(-0.02)])

    def test_zero_xi(self):
        d = dt.date(2020, 1, 8)
        np.testing.assert_array_equal(dc.time_weights([d, dt.date(2000, 1, 1)], d, 0.0), [1.0, 1.0])


class TestGrid:
    def test_unit_rates(self):
        p = dc.grid_from_rates(1.0, 1.0, 0.0).outcome_probs()
        np.testing.assert_allclose(p.as_array(), [0.3457, 0.3085, 0.3457], atol=1e-4)

    def test_swap_symmetry(self):
        a = dc.grid_from_rates(1.6, 0.9, -0.08).outcome_probs().as_array()
        b = dc.grid_from_rates(0.9, 1.6, -0.08).outcome_probs().as_array()
        np.testing.assert_allclose(a, b[::-1], atol=1e-12)

    def test_insufficient_mass(self):
        with pytest.raises(ModelError, match="max_goals"):
            dc.grid_from_rates(9.0, 1.0, 0.0, max_goals=10)

    def test_covering_grid_widens(self):
        params = dc.DCParams({"A": 6.0, "B": 1.0}, {"A": 1.0, "B": 1.0}, 1.0, 0.0)
        with pytest.raises(ModelError):
            dc.score_grid(params, "A", "B")
        g = dc.covering_grid(params, "A", "B")
        assert g.max_goals == 20 and g.raw_mass >= 0.999

    @settings(max_examples=50)
    @given(st.floats(0.1, 3.5), st.floats(0.1, 3.5), st.floats(-0.2, 0.2))
    def test_normalized(self, lam, kap, rho):
        g = dc.grid_from_rates(lam, kap, rho, 15)
        assert g.probs.min() >= 0
        assert abs(g.probs.sum() - 1) < 1e-12
        assert abs(g.outcome_probs().as_array().sum() - 1) < 1e-9


def _m(i, home, away, hg, ag, day=0):
    return MatchRecord(f"x{i}", dt.date(2020, 1, 1) + dt.timedelta(days=day), "s", home, away, hg, ag)


class TestFit:
    def test_identifiability(self, fitted):
        assert np.mean(np.log(list(fitted.attack.values()))) == pytest.approx(0.0, abs=1e-9)

    def test_converged(self, fitted):
        assert fitted.info.converged
        assert fitted.info.grad_norm < 1e-6

    def test_log_likelihood_non_decreasing(self, fitted):
        h = np.array(fitted.info.history)
        assert np.all(np.diff(h) >= -1e-9)

    def test_recovers_shape(self, fitted):
        norm = np.exp(np.mean(np.log(list(TRUE_ATTACK.values()))))
        for t in TRUE_ATTACK:
            assert fitted.attack[t] == pytest.approx(TRUE_ATTACK[t] / norm, abs=0.1)
            assert fitted.defense[t] == pytest.approx(TRUE_DEFENSE[t] * norm, abs=0.1)
        assert fitted.home_adv == pytest.approx(1.3, abs=0.1)
        assert -0.3 <= fitted.rho <= 0.3

    def test_mle_beats_truth(self, sim, fitted):
        norm = np.exp(np.mean(np.log(list(TRUE_ATTACK.values()))))
        truth = dc.DCParams(
            {t: v / norm for t, v in TRUE_ATTACK.items()},
            {t: v * norm for t, v in TRUE_DEFENSE.items()},
            1.3, -0.05, xi=0.0,
        )
        assert dc.weighted_log_likelihood(fitted, sim) >= dc.weighted_log_likelihood(truth, sim)
        assert dc.weighted_log_likelihood(fitted, sim) == pytest.approx(fitted.info.log_likelihood)

    def test_label_equivariance(self, sim, fitted):
        rename = {"AAA": "ZZZ", "BBB": "YYY", "CCC": "XXX"}
        renamed = [
            MatchRecord(m.match_id, m.date, m.season, rename[m.home_team], rename[m.away_team], m.home_goals, m.away_goals)
            for m in sim
        ]
        other = dc.fit(renamed, xi=0.0)
        for old, new in rename.items():
            assert other.attack[new] == pytest.approx(fitted.attack[old], rel=1e-5)
            assert other.defense[new] == pytest.approx(fitted.defense[old], rel=1e-5)
        assert other.home_adv == pytest.approx(fitted.home_adv, rel=1e-5)

    def test_symmetric_league(self):
        # every pair meets home and away with mirrored scores: equal strengths
        ms = []
        for i, (h, a) in enumerate([("A", "B"), ("B", "A"), ("A", "C"), ("C", "A"), ("B", "C"), ("C", "B")] * 20):
            flip = (i // 6) % 2
            ms.append(_m(i, h, a, 2 if flip else 1, 1 if flip else 2))
        p = dc.fit(ms, xi=0.0)
        np.testing.assert_allclose(list(p.attack.values()), 1.0, atol=1e-6)
        assert p.home_adv == pytest.approx(1.0, abs=1e-6)
        pr = dc.predict(p, "A", "B").as_array()
        np.testing.assert_allclose(pr[0], pr[2], atol=1e-6)

    def test_predict_sums_to_one(self, fitted):
        for h in TRUE_ATTACK:
            for a in TRUE_ATTACK:
                if h != a:
                    assert abs(dc.predict(fitted, h, a).as_array().sum() - 1) < 1e-9

    def test_home_advantage_visible(self, fitted):
        at_home = dc.predict(fitted, "AAA", "BBB")
        away = dc.predict(fitted, "BBB", "AAA")
        assert at_home.p_home > away.p_away

    def test_unknown_team(self, fitted):
        with pytest.raises(UnknownTeamError):
            dc.predict(fitted, "AAA", "QQQ")
        g = dc.score_grid(fitted, "AAA", "QQQ", allow_unknown=True)
        assert g.substituted

    def test_time_weighting_changes_fit(self, sim):
        a = dc.fit(sim[:600], xi=0.0)
        b = dc.fit(sim[:600], xi=0.05)
        assert a.attack != b.attack

    def test_rejects_future_matches(self, sim):
        with pytest.raises(DataError, match="after"):
            dc.fit(sim[:100], as_of=sim[0].date)

    def test_needs_home_and_away(self):
        with pytest.raises(DataError, match="home and one away"):
            dc.fit([_m(0, "A", "B", 1, 0), _m(1, "A", "B", 2, 0)])

    def test_empty(self):
        with pytest.raises(DataError):
            dc.fit([])

    def test_bad_rho_bounds(self, sim):
        with pytest.raises(ValueError):
            dc.fit(sim[:50], rho_bounds=(0.1, 0.3))

    def test_non_convergence(self, sim):
        with pytest.raises(ConvergenceError) as err:
            dc.fit(sim[:300], max_iter=1)
        assert err.value.n_iter == 1
        p = dc.fit(sim[:300], max_iter=1, strict=False)
        assert not p.info.converged

    def test_rho_bound_respected(self):
        # many 0-0 and 1-1 results push rho against its bound
        ms = [_m(i, "A" if i % 2 else "B", "B" if i % 2 else "A", *(0, 0) if i % 3 else (1, 1)) for i in range(60)]
        p = dc.fit(ms, xi=0.0, rho_bounds=(-0.1, 0.1), strict=False)
        assert -0.1 <= p.rho <= 0.1

    def test_round_trip(self, fitted):
        back = dc.DCParams.from_dict(json.loads(json.dumps(fitted.to_dict())))
        assert back == fitted
        np.testing.assert_allclose(
            dc.predict(back, "AAA", "CCC").as_array(), dc.predict(fitted, "AAA", "CCC").as_array()
        )

    def test_artifact_version(self, fitted):
        d = fitted.to_dict()
        d["version"] = 2
        with pytest.raises(ModelError):
            dc.DCParams.from_dict(d)

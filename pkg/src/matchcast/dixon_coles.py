"""Dixon-Coles goal model.

Home goals ~ Poisson(lambda), away goals ~ Poisson(kappa) with

    lambda = attack[home] * defense[away] * gamma
    kappa  = attack[away] * defense[home]

and the joint probability of the four low scores (0-0, 0-1, 1-0, 1-1)
multiplied by a correction ``tau`` driven by ``rho``. Parameters are fitted by
maximizing the time-weighted log-likelihood, with match weights
``exp(-xi * half_weeks_before_as_of)``.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .corpus import MatchRecord
from .errors import ConvergenceError, DataError, ModelError, UnknownTeamError
from .outcomes import OutcomeProbs

log = logging.getLogger(__name__)

DEFAULT_XI = 0.0065
DEFAULT_MAX_GOALS = 10
DEFAULT_RHO_BOUNDS = (-0.3, 0.3)
MIN_GRID_MASS = 0.999
ARTIFACT_TYPE = "dixon_coles"
ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class FitInfo:
    n_matches: int
    n_iter: int
    grad_norm: float
    converged: bool
    log_likelihood: float
    history: tuple[float, ...] = ()


@dataclass(frozen=True)
class DCParams:
    attack: Mapping[str, float]
    defense: Mapping[str, float]
    home_adv: float
    rho: float
    xi: float = DEFAULT_XI
    rho_bounds: tuple[float, float] = DEFAULT_RHO_BOUNDS
    as_of: dt.date | None = None
    info: FitInfo | None = field(default=None, compare=False)
    train_ids: frozenset[str] = field(default=frozenset(), compare=False, repr=False)

    @property
    def teams(self) -> list[str]:
        return sorted(self.attack)

    def _league_mean(self) -> tuple[float, float]:
        la = np.log(list(self.attack.values()))
        ld = np.log(list(self.defense.values()))
        return float(np.exp(la.mean())), float(np.exp(ld.mean()))

    def team_strength(self, team: str, allow_unknown: bool = False) -> tuple[float, float, bool]:
        """``(attack, defense, substituted)`` for ``team``.

        Teams missing from the fit (e.g. promoted sides) get the league
        geometric-mean strengths when ``allow_unknown`` is set.
        """
        if team in self.attack:
            return self.attack[team], self.defense[team], False
        if not allow_unknown:
            raise UnknownTeamError(f"team {team!r} not in fitted parameters")
        a, d = self._league_mean()
        return a, d, True

    def expected_goals(self, home: str, away: str, allow_unknown: bool = False) -> tuple[float, float, bool]:
        ah, dh, fh = self.team_strength(home, allow_unknown)
        aa, da, fa = self.team_strength(away, allow_unknown)
        return ah * da * self.home_adv, aa * dh, fh or fa

    def to_dict(self) -> dict:
        d = {
            "type": ARTIFACT_TYPE,
            "version": ARTIFACT_VERSION,
            "xi": self.xi,
            "gamma": self.home_adv,
            "rho": self.rho,
            "rho_bounds": list(self.rho_bounds),
            "as_of": self.as_of.isoformat() if self.as_of else None,
            "teams": {t: {"attack": self.attack[t], "defense": self.defense[t]} for t in self.teams},
        }
        if self.info is not None:
            d["fit"] = {
                "n_matches": self.info.n_matches,
                "n_iter": self.info.n_iter,
                "grad_norm": self.info.grad_norm,
                "converged": self.info.converged,
                "log_likelihood": self.info.log_likelihood,
            }
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "DCParams":
        if d.get("type") != ARTIFACT_TYPE:
            raise ModelError(f"not a Dixon-Coles artifact (type={d.get('type')!r})")
        if d.get("version") != ARTIFACT_VERSION:
            raise ModelError(f"Dixon-Coles artifact version {d.get('version')!r} not supported")
        teams = d["teams"]
        return cls(
            attack={t: float(v["attack"]) for t, v in teams.items()},
            defense={t: float(v["defense"]) for t, v in teams.items()},
            home_adv=float(d["gamma"]),
            rho=float(d["rho"]),
            xi=float(d["xi"]),
            rho_bounds=tuple(d.get("rho_bounds", DEFAULT_RHO_BOUNDS)),
            as_of=dt.date.fromisoformat(d["as_of"]) if d.get("as_of") else None,
        )


# ---------------------------------------------------------------------------
# likelihood


def tau(x: int, y: int, lam: float, kap: float, rho: float) -> float:
    if x == 0 and y == 0:
        return 1.0 - lam * kap * rho
    if x == 0 and y == 1:
        return 1.0 + lam * rho
    if x == 1 and y == 0:
        return 1.0 + kap * rho
    if x == 1 and y == 1:
        return 1.0 - rho
    return 1.0


def time_weights(dates: Sequence[dt.date], as_of: dt.date, xi: float) -> np.ndarray:
    """``exp(-xi * t)`` with ``t`` the age of each match in half-weeks."""
    age = np.array([(as_of - d).days for d in dates], dtype=float) / 3.5
    return np.exp(-xi * age)


class _Problem:
    """Vectorized weighted negative log-likelihood over log-parameters.

    Parameter vector: ``[log attack (n), log defense (n), log gamma, rho]``.
    The objective is normalized by the total weight so that gradient
    tolerances do not depend on the number of matches.
    """

    def __init__(self, teams: list[str], matches: Sequence[MatchRecord], weights: np.ndarray):
        idx = {t: i for i, t in enumerate(teams)}
        self.n = len(teams)
        self.h = np.array([idx[m.home_team] for m in matches])
        self.a = np.array([idx[m.away_team] for m in matches])
        self.x = np.array([m.home_goals for m in matches], dtype=float)
        self.y = np.array([m.away_goals for m in matches], dtype=float)
        self.w = weights / weights.sum()
        self.total_weight = float(weights.sum())
        self.c00 = (self.x == 0) & (self.y == 0)
        self.c01 = (self.x == 0) & (self.y == 1)
        self.c10 = (self.x == 1) & (self.y == 0)
        self.c11 = (self.x == 1) & (self.y == 1)
        self.const = gammaln(self.x + 1) + gammaln(self.y + 1)

    def split(self, theta: np.ndarray):
        n = self.n
        return theta[:n], theta[n : 2 * n], theta[2 * n], theta[2 * n + 1]

    def rates(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        la, ld, lg, _ = self.split(theta)
        return np.exp(la[self.h] + ld[self.a] + lg), np.exp(la[self.a] + ld[self.h])

    def value_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        la, ld, lg, rho = self.split(theta)
        lam, kap = self.rates(theta)
        t = np.ones_like(lam)
        t[self.c00] = 1.0 - lam[self.c00] * kap[self.c00] * rho
        t[self.c01] = 1.0 + lam[self.c01] * rho
        t[self.c10] = 1.0 + kap[self.c10] * rho
        t[self.c11] = 1.0 - rho
        if np.any(t <= 0.0):
            return math.inf, np.zeros_like(theta)
        ll = np.log(t) + self.x * np.log(lam) - lam + self.y * np.log(kap) - kap - self.const

        # d log tau / d log lambda, d log kappa, d rho
        dtl = np.zeros_like(lam)
        dtk = np.zeros_like(lam)
        dtr = np.zeros_like(lam)
        c = self.c00
        dtl[c] = -lam[c] * kap[c] * rho / t[c]
        dtk[c] = dtl[c]
        dtr[c] = -lam[c] * kap[c] / t[c]
        c = self.c01
        dtl[c] = lam[c] * rho / t[c]
        dtr[c] = lam[c] / t[c]
        c = self.c10
        dtk[c] = kap[c] * rho / t[c]
        dtr[c] = kap[c] / t[c]
        c = self.c11
        dtr[c] = -1.0 / t[c]

        gl = self.w * (self.x - lam + dtl)  # d ll / d log lambda
        gk = self.w * (self.y - kap + dtk)  # d ll / d log kappa
        n = self.n
        g_la = np.bincount(self.h, gl, n) + np.bincount(self.a, gk, n)
        g_ld = np.bincount(self.a, gl, n) + np.bincount(self.h, gk, n)
        grad = np.concatenate([g_la, g_ld, [gl.sum()], [(self.w * dtr).sum()]])
        return -float(self.w @ ll), -grad


def _recenter(theta: np.ndarray, n: int) -> np.ndarray:
    # the likelihood is invariant to (log a + c, log d - c); pin mean log attack to 0
    shift = theta[:n].mean()
    out = theta.copy()
    out[:n] -= shift
    out[n : 2 * n] += shift
    return out


def _projected_grad(theta: np.ndarray, g: np.ndarray, lo: float, hi: float) -> np.ndarray:
    pg = g.copy()
    r = theta[-1]
    if (r <= lo and g[-1] > 0) or (r >= hi and g[-1] < 0):
        pg[-1] = 0.0
    return pg


def _minimize(problem: _Problem, theta0: np.ndarray, bounds: tuple[float, float],
              gtol: float, max_iter: int) -> tuple[np.ndarray, float, np.ndarray, int, list[float], bool]:
    """Projected BFGS with Armijo backtracking; ``rho`` is box-constrained."""
    lo, hi = bounds
    n = problem.n
    theta = _recenter(theta0, n)
    theta[-1] = min(max(theta[-1], lo), hi)
    f, g = problem.value_grad(theta)
    if not math.isfinite(f):
        theta[-1] = 0.0
        f, g = problem.value_grad(theta)
    dim = len(theta)
    H = np.eye(dim)
    fresh = True
    history = [f]
    it = 0
    converged = False
    while it < max_iter:
        pg = _projected_grad(theta, g, lo, hi)
        if np.max(np.abs(pg)) < gtol:
            converged = True
            break
        free = pg != 0.0
        d = np.zeros(dim)
        d[free] = -(H[np.ix_(free, free)] @ g[free])
        slope = g @ d
        if slope >= 0:
            H, fresh = np.eye(dim), True
            d = np.where(free, -g, 0.0)
            slope = g @ d
        step = 1.0
        accepted = False
        while step > 1e-14:
            cand = theta + step * d
            cand[-1] = min(max(cand[-1], lo), hi)
            fc, gc = problem.value_grad(cand)
            if math.isfinite(fc) and fc <= f + 1e-4 * (g @ (cand - theta)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if fresh:
                break  # no descent even along the gradient: precision floor
            H, fresh = np.eye(dim), True
            continue
        s = cand - theta
        yv = gc - g
        sy = s @ yv
        if sy > 1e-16:
            if fresh:
                H = np.eye(dim) * (sy / (yv @ yv))
            rho_k = 1.0 / sy
            Hy = H @ yv
            H = H - rho_k * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho_k**2 * (yv @ Hy) + rho_k) * np.outer(s, s)
            fresh = False
        theta, f, g = _recenter(cand, n), fc, gc
        history.append(f)
        it += 1
    pg = _projected_grad(theta, g, lo, hi)
    if not converged and np.max(np.abs(pg)) < gtol:
        converged = True
    return theta, f, pg, it, history, converged


def fit(
    train: Sequence[MatchRecord],
    xi: float = DEFAULT_XI,
    as_of: dt.date | None = None,
    rho_bounds: tuple[float, float] = DEFAULT_RHO_BOUNDS,
    gtol: float = 1e-6,
    max_iter: int = 500,
    init: DCParams | None = None,
    strict: bool = True,
) -> DCParams:
    """Maximum-likelihood fit of attack/defense strengths, home advantage and rho.

    ``as_of`` defaults to the latest training date; matches after it are
    rejected. With ``strict`` a fit that stops short of the gradient
    tolerance raises :class:`ConvergenceError`, otherwise it is logged and
    returned with ``info.converged = False``.
    """
    train = list(train)
    if not train:
        raise DataError("cannot fit Dixon-Coles on an empty training set")
    if xi < 0:
        raise ValueError("xi must be non-negative")
    lo, hi = rho_bounds
    if not lo < 0 < hi:
        raise ValueError(f"rho bounds must straddle 0, got {rho_bounds}")
    if as_of is None:
        as_of = max(m.date for m in train)
    late = [m.match_id for m in train if m.date > as_of]
    if late:
        raise DataError(f"{len(late)} training matches dated after as_of {as_of}: {late[:3]}")
    home_teams = {m.home_team for m in train}
    away_teams = {m.away_team for m in train}
    teams = sorted(home_teams | away_teams)
    lacking = [t for t in teams if t not in home_teams or t not in away_teams]
    if lacking:
        raise DataError(f"teams need at least one home and one away match: {lacking}")

    weights = time_weights([m.date for m in train], as_of, xi)
    problem = _Problem(teams, train, weights)
    n = len(teams)

    theta0 = np.zeros(2 * n + 2)
    hg = np.mean([m.home_goals for m in train]) + 0.1
    ag = np.mean([m.away_goals for m in train]) + 0.1
    theta0[n : 2 * n] = math.log(ag)
    theta0[2 * n] = math.log(hg / ag)
    if init is not None:
        for i, t in enumerate(teams):
            if t in init.attack:
                theta0[i] = math.log(init.attack[t])
                theta0[n + i] = math.log(init.defense[t])
        theta0[2 * n] = math.log(init.home_adv)
        theta0[2 * n + 1] = init.rho

    theta, f, pg, n_iter, history, converged = _minimize(problem, theta0, (lo, hi), gtol, max_iter)
    grad_norm = float(np.max(np.abs(pg)))
    if not converged:
        if strict:
            raise ConvergenceError("Dixon-Coles fit did not converge", grad_norm, n_iter)
        log.warning("Dixon-Coles fit stopped after %d iterations with max|grad|=%.2e", n_iter, grad_norm)

    la, ld, lg, rho = problem.split(theta)
    scale = problem.total_weight
    info = FitInfo(
        n_matches=len(train),
        n_iter=n_iter,
        grad_norm=grad_norm,
        converged=converged,
        log_likelihood=-f * scale,
        history=tuple(-v * scale for v in history),
    )
    return DCParams(
        attack={t: float(math.exp(la[i])) for i, t in enumerate(teams)},
        defense={t: float(math.exp(ld[i])) for i, t in enumerate(teams)},
        home_adv=float(math.exp(lg)),
        rho=float(rho),
        xi=xi,
        rho_bounds=(lo, hi),
        as_of=as_of,
        info=info,
        train_ids=frozenset(m.match_id for m in train),
    )


def weighted_log_likelihood(params: DCParams, matches: Sequence[MatchRecord], as_of: dt.date | None = None) -> float:
    """Time-weighted log-likelihood of ``matches`` under ``params``."""
    as_of = as_of or params.as_of or max(m.date for m in matches)
    w = time_weights([m.date for m in matches], as_of, params.xi)
    total = 0.0
    for wi, m in zip(w, matches):
        lam, kap, _ = params.expected_goals(m.home_team, m.away_team)
        t = tau(m.home_goals, m.away_goals, lam, kap, params.rho)
        total += wi * (
            math.log(t) + poisson.logpmf(m.home_goals, lam) + poisson.logpmf(m.away_goals, kap)
        )
    return float(total)


# ---------------------------------------------------------------------------
# prediction


@dataclass(frozen=True)
class ScoreGrid:
    """``probs[x, y]`` = P(home scores x, away scores y), renormalized over the grid."""

    max_goals: int
    probs: np.ndarray
    raw_mass: float
    lam: float
    kap: float
    substituted: bool = False

    def outcome_probs(self) -> OutcomeProbs:
        p = self.probs
        home = float(np.tril(p, -1).sum())
        draw = float(np.trace(p))
        away = float(np.triu(p, 1).sum())
        return OutcomeProbs.from_weights((home, draw, away))


def grid_from_rates(lam: float, kap: float, rho: float, max_goals: int = DEFAULT_MAX_GOALS) -> ScoreGrid:
    if max_goals < 5:
        raise ValueError("max_goals must be at least 5")
    goals = np.arange(max_goals + 1)
    raw = np.outer(poisson.pmf(goals, lam), poisson.pmf(goals, kap))
    mass = float(raw.sum())  # tau leaves the total unchanged
    if mass < MIN_GRID_MASS:
        raise ModelError(
            f"score grid up to {max_goals} goals holds only {mass:.6f} of the mass "
            f"(lambda={lam:.3f}, kappa={kap:.3f}); raise max_goals"
        )
    adj = raw.copy()
    for x in (0, 1):
        for y in (0, 1):
            adj[x, y] *= max(tau(x, y, lam, kap, rho), 0.0)
    return ScoreGrid(max_goals, adj / adj.sum(), mass, lam, kap)


def score_grid(params: DCParams, home: str, away: str, max_goals: int = DEFAULT_MAX_GOALS,
               allow_unknown: bool = False) -> ScoreGrid:
    lam, kap, substituted = params.expected_goals(home, away, allow_unknown)
    grid = grid_from_rates(lam, kap, params.rho, max_goals)
    if substituted:
        grid = ScoreGrid(grid.max_goals, grid.probs, grid.raw_mass, lam, kap, True)
    return grid


def predict(params: DCParams, home: str, away: str, max_goals: int = DEFAULT_MAX_GOALS,
            allow_unknown: bool = False) -> OutcomeProbs:
    return score_grid(params, home, away, max_goals, allow_unknown).outcome_probs()


def covering_grid(params: DCParams, home: str, away: str, max_goals: int = DEFAULT_MAX_GOALS,
                  allow_unknown: bool = False, limit: int = 60) -> ScoreGrid:
    """Like :func:`score_grid`, but widens the grid until it holds the required mass."""
    size = max_goals
    while True:
        try:
            return score_grid(params, home, away, size, allow_unknown)
        except ModelError:
            if size >= limit:
                raise
            size = min(limit, 2 * size)

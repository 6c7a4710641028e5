"""``matchcast`` command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 data error,
3 model error (including optimizer non-convergence).
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import dixon_coles as dc
from .config import RunConfig, load_config, override
from .corpus import Corpus, load_corpus, load_corpus_files, save_corpus
from .ensemble import Ensemble, fit_dc_before, train_ensemble
from .errors import ConfigError, DataError, MatchcastError, ModelError
from .evaluation import run_experiment
from .fileio import atomic_write_text, read_json, write_json
from .textfeat import feature_matrix, features_csv, fit_vocabulary
from .textmodel import TextModel, train_text_model

log = logging.getLogger("matchcast")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (required for training)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML run configuration")
    common.add_argument("--verbose", "-v", action="count", default=argparse.SUPPRESS, help="more logging")

    corpus_args = argparse.ArgumentParser(add_help=False)
    corpus_args.add_argument("--corpus", help="corpus cache written by `ingest` (default: paths from --config)")

    model_args = argparse.ArgumentParser(add_help=False)
    model_args.add_argument("--mu", type=float, help="home weight on the text features")
    model_args.add_argument("--theta", type=float, help="allocation confidence threshold")
    model_args.add_argument("--xi", type=float, help="Dixon-Coles time-decay rate")
    model_args.add_argument("--n-trees", type=int, help="trees per forest (text and stacker)")
    model_args.add_argument("--jobs", type=int, help="worker processes for forest training")

    parser = _Parser(prog="matchcast", description="Match outcome prediction from preview text, goals and odds.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="validate inputs and write a corpus cache")
    p.add_argument("--matches", help="results CSV")
    p.add_argument("--previews", help="preview articles, JSON Lines")
    p.add_argument("--aliases", help="team alias JSON")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common, corpus_args, model_args], help="train a model artifact")
    p.add_argument("--model", required=True, choices=("dc", "text", "ensemble"))
    p.add_argument("--before", type=_date, help="train only on matches dated before this day")
    p.add_argument("--no-text", action="store_true", help="ensemble without the text meta-features")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", parents=[common, corpus_args], help="outcome probabilities for one match")
    p.add_argument("--model", required=True, help="artifact JSON (dc, text or ensemble)")
    p.add_argument("--match", required=True, help="match_id in the corpus")

    p = sub.add_parser("features", parents=[common, corpus_args, model_args], help="export text features as CSV")
    p.add_argument("--before", type=_date, help="fit the vocabulary on articles of matches before this day")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common, corpus_args, model_args], help="run an experiment")
    p.add_argument("--experiment", required=True, type=int, choices=(1, 2, 3))
    p.add_argument("--season", help="season for experiment 3")
    p.add_argument("--seasons", nargs="+", help="seasons for experiment 1")
    p.add_argument("--no-ablation", action="store_true", help="skip the text-ablation ensemble")
    p.add_argument("--weekly-csv", help="week-by-week CSV output (experiment 3)")
    p.add_argument("--out", required=True, help="report JSON")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    flat = {
        "seed": getattr(args, "seed", None),
        "n_jobs": getattr(args, "jobs", None),
        "text.mu": getattr(args, "mu", None),
        "text.theta": getattr(args, "theta", None),
        "dc.xi": getattr(args, "xi", None),
        "text_forest.n_trees": getattr(args, "n_trees", None),
        "stacker_forest.n_trees": getattr(args, "n_trees", None),
    }
    if getattr(args, "matches", None):
        flat.update(matches=args.matches, previews=args.previews, aliases=args.aliases)
    if getattr(args, "no_text", False):
        flat["ensemble.use_text"] = False
    if getattr(args, "no_ablation", False):
        flat["eval.ablation"] = False
    if getattr(args, "season", None):
        flat["eval.walk_season"] = args.season
    if getattr(args, "seasons", None):
        flat["eval.seasons"] = tuple(args.seasons)
    cfg = override(cfg, **flat)
    cfg.validate()
    return cfg


def _corpus(args: argparse.Namespace, cfg: RunConfig) -> Corpus:
    if args.corpus:
        if not Path(args.corpus).exists():
            raise ConfigError(f"corpus path does not exist: {args.corpus}")
        return load_corpus(args.corpus)
    if not cfg.matches:
        raise ConfigError("no corpus: pass --corpus or set `matches` in the config")
    return load_corpus_files(cfg.matches, cfg.previews, cfg.aliases)


def _cmd_ingest(args, cfg: RunConfig) -> int:
    cfg.validate(require_paths=("matches",))
    corpus = load_corpus_files(cfg.matches, cfg.previews, cfg.aliases)
    save_corpus(corpus, args.out)
    log.info("wrote %s: %d matches, %d articles", args.out, len(corpus), len(corpus.articles))
    return 0


def _train_view(corpus: Corpus, before: dt.date | None) -> Corpus:
    if before is None:
        return corpus
    view = corpus.subset(lambda m: m.date < before)
    if not view.matches:
        raise DataError(f"no matches before {before}")
    return view


def _cmd_train(args, cfg: RunConfig) -> int:
    corpus = _train_view(_corpus(args, cfg), args.before)
    if args.model == "dc":
        as_of = args.before or corpus.matches[-1].date + dt.timedelta(days=1)
        params = fit_dc_before(corpus.matches, as_of, cfg.dc)
        if params is None:
            raise DataError("no matches to fit")
        if not params.info.converged:
            raise ModelError(
                f"Dixon-Coles fit did not converge (iterations={params.info.n_iter}, "
                f"max|grad|={params.info.grad_norm:.3e})"
            )
        write_json(args.out, params.to_dict())
        return 0
    mcfg = cfg.model_config()
    if args.model == "text":
        model = train_text_model(corpus.matches, corpus, mcfg.text, mcfg.text_forest, mcfg.seed, mcfg.n_jobs)
        write_json(args.out, model.to_dict())
        return 0
    ens = train_ensemble(corpus, mcfg, args.before)
    write_json(args.out, ens.to_dict())
    if ens.excluded:
        log.info("%d training matches excluded from the stacker", len(ens.excluded))
    return 0


def _cmd_predict(args, cfg: RunConfig) -> int:
    corpus = _corpus(args, cfg)
    match = corpus.match(args.match)
    try:
        artifact = read_json(args.model)
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {args.model}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    kind = artifact.get("type") if isinstance(artifact, dict) else None
    if kind == "dixon_coles":
        probs = dc.predict(dc.DCParams.from_dict(artifact), match.home_team, match.away_team, allow_unknown=True)
    elif kind == "text_model":
        probs = TextModel.from_dict(artifact).predict_proba(match, corpus)
    elif kind == "ensemble":
        probs = Ensemble.from_dict(artifact).predict_proba(match, corpus)
    else:
        raise ModelError(f"unsupported artifact type {kind!r}")
    line = {"match_id": match.match_id, **probs.to_dict(), "predicted": probs.argmax().label}
    sys.stdout.write(json.dumps(line, sort_keys=True) + "\n")
    return 0


def _cmd_features(args, cfg: RunConfig) -> int:
    corpus = _corpus(args, cfg)
    fit_on = _train_view(corpus, args.before)
    vocab = fit_vocabulary(fit_on.articles, cfg.text.min_df, cfg.text.max_df)
    rows, _ = feature_matrix(corpus.matches, corpus, vocab, cfg.text.mu, cfg.text.theta)
    atomic_write_text(args.out, features_csv([m.match_id for m in corpus.matches], rows, vocab))
    return 0


def _cmd_evaluate(args, cfg: RunConfig) -> int:
    corpus = _corpus(args, cfg)
    report = run_experiment(args.experiment, corpus, cfg.model_config(), cfg.eval)
    write_json(args.out, report.to_dict())
    if args.weekly_csv:
        if not report.weekly:
            raise ConfigError("--weekly-csv only applies to experiment 3")
        atomic_write_text(args.weekly_csv, report.weekly_csv())
    sys.stdout.write(report.to_table())
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "features": _cmd_features,
    "evaluate": _cmd_evaluate,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    verbosity = getattr(args, "verbose", 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbosity, 2), format="%(levelname)s %(name)s: %(message)s", force=True
    )
    try:
        cfg = _run_config(args)
        return _COMMANDS[args.command](args, cfg)
    except MatchcastError as exc:
        sys.stderr.write(f"matchcast: {type(exc).__name__}: {exc}\n")
        return exc.exit_code


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()

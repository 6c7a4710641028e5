"""Football match outcome prediction from preview text, a Dixon-Coles goal model and bookmaker odds."""

from .corpus import Corpus, MatchRecord, PreviewArticle, TeamAliasTable
from .odds import OddsTriple
from .outcomes import Outcome, OutcomeProbs

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "MatchRecord",
    "OddsTriple",
    "Outcome",
    "OutcomeProbs",
    "PreviewArticle",
    "TeamAliasTable",
    "__version__",
]

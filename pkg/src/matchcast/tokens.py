"""Word tokenization shared by alias matching, relation extraction and vectorizing."""

from __future__ import annotations

import re
from typing import NamedTuple

_WORD = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")
_POSSESSIVE = re.compile(r"^(?P<stem>.+?)['’]s$")


class Token(NamedTuple):
    text: str
    possessive: bool


def lex(text: str) -> list[Token]:
    """Lowercased alphanumeric tokens, remembering which ones carried a possessive 's.

    Apostrophes inside a word are dropped ("o'neil" -> "oneil"), a trailing
    possessive is stripped and flagged, hyphens and all other punctuation split.
    """
    out: list[Token] = []
    for m in _WORD.finditer(text.lower()):
        word = m.group(0)
        poss = _POSSESSIVE.match(word)
        if poss:
            out.append(Token(re.sub(r"['’]", "", poss.group("stem")), True))
        else:
            out.append(Token(re.sub(r"['’]", "", word), False))
    return out


def tokenize(text: str) -> list[str]:
    return [t.text for t in lex(text)]

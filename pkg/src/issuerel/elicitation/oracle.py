"""Keyword rules behind the offline backend.

Content words are lowercase alphabetic tokens of length >= 4 that are not
stopwords; the words used by the templates below count as stopwords, so the
content words of an oracle question are exactly the keywords it was built from.
"""
from __future__ import annotations

import math
import re
from typing import Sequence

YES_P = 0.9

QUESTION_TEMPLATES = (
    "Do the facts involve {kw}?",
    "Is {kw} disputed between the parties?",
    "Does the outcome turn on {kw}?",
    "Is there evidence about {kw}?",
)

ISSUE_TEMPLATE = "Whether the {words} give rise to liability"

STOPWORDS = frozenset("""
about above after again against also because been before being below between both could
does doing down during each from further have having here into itself just more most once only
other over same should some such than that their them then there these they this those through
under until very were what when where which while whom will with would your yours
facts involve disputed parties outcome turn evidence variant whether give rise liability
""".split())

_WORD = re.compile(r"[a-z]+")


def content_words(text: str) -> list[str]:
    """Distinct content words in order of first appearance."""
    seen, out = set(), []
    for w in _WORD.findall(text.lower()):
        if len(w) >= 4 and w not in STOPWORDS and w not in seen:
            seen.add(w)
            out.append(w)
    return out


def keywords(issue: str) -> list[str]:
    return content_words(issue)[:3] or ["matter"]


def questions(issue: str, k: int) -> list[str]:
    """``k`` questions cycling over the issue keywords, then over templates."""
    kws = keywords(issue)
    out = []
    per_round = len(kws) * len(QUESTION_TEMPLATES)
    for i in range(k):
        text = QUESTION_TEMPLATES[(i // len(kws)) % len(QUESTION_TEMPLATES)].format(kw=kws[i % len(kws)])
        if i >= per_round:
            text = f"{text[:-1]} (variant {i // per_round + 1})?"
        out.append(text)
    return out


def answer(facts: Sequence[str], issue: str, question: str) -> bool:
    """Yes iff a question keyword occurs in both the facts and the issue."""
    q = set(content_words(question))
    return bool(q & set(content_words(" ".join(facts))) & set(content_words(issue)))


def verifier_logprobs(yes: bool) -> list[tuple[str, float]]:
    hi, lo = math.log(YES_P), math.log(1.0 - YES_P)
    return [("Yes", hi), ("No", lo)] if yes else [("No", hi), ("Yes", lo)]


def issues(facts: Sequence[str]) -> list[str]:
    """One issue built from the leading content words of the last fact."""
    words = content_words(facts[-1])[:2]
    if not words:
        return [ISSUE_TEMPLATE.format(words="circumstances")]
    return [ISSUE_TEMPLATE.format(words=" and ".join(words))]


def judge(facts: Sequence[str], issue: str) -> bool:
    return bool(set(keywords(issue)) & set(content_words(" ".join(facts))))

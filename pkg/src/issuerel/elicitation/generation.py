"""Question generation and incremental / single-pass issue generation."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional, Sequence

from ..data_model import Case, IssueCandidate, Question, QuestionPool, normalize_text
from .endpoint import EndpointError, make_backend

log = logging.getLogger(__name__)

PROMPTS = {
    "questions": "question_generation.txt",
    "verify": "verifier.txt",
    "issues": "incremental_issues.txt",
    "judge": "relevance_judge.txt",
}


class ResponseParseError(ValueError):
    """A model response could not be parsed; ``raw`` keeps the text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


def load_prompt(task: str, directory: Optional[str | Path] = None) -> Template:
    """Prompt template for ``task``; files in ``directory`` override the bundled ones."""
    name = PROMPTS[task]
    if directory is not None and (Path(directory) / name).is_file():
        return Template((Path(directory) / name).read_text(encoding="utf-8"))
    return Template(resources.files("issuerel.prompts").joinpath(name).read_text(encoding="utf-8"))


def format_facts(facts: Sequence[str]) -> str:
    return "\n".join(f"{i + 1}. {f}" for i, f in enumerate(facts))


def render(task: str, prompts_dir=None, **fields) -> list[dict]:
    return [{"role": "user", "content": load_prompt(task, prompts_dir).safe_substitute(**fields)}]


# ---------------------------------------------------------------------------
# parsing

_ENUM = re.compile(r"^\s*(?:[-*•]|\(?\d+[.)]|q\d+[:.)]?)\s*", re.IGNORECASE)


def parse_questions(text: str) -> list[str]:
    """Questions from a numbered / bulleted list or a JSON array of strings."""
    stripped = text.strip()
    if stripped.startswith("["):
        try:
            items = json.loads(stripped)
            if isinstance(items, list) and all(isinstance(q, str) for q in items):
                return [normalize_text(q) for q in items if q.strip().endswith("?")]
        except json.JSONDecodeError:
            pass
    out = []
    for line in text.splitlines():
        line = normalize_text(_ENUM.sub("", line, count=1))
        if line.endswith("?") and len(line) > 1:
            out.append(line)
    return out


def parse_issue_list(text: str) -> list[str]:
    """Issues from a JSON array (possibly wrapped in other text) or 'Whether' lines."""
    lo, hi = text.find("["), text.rfind("]")
    if 0 <= lo < hi:
        try:
            items = json.loads(text[lo:hi + 1])
            if isinstance(items, list):
                return [normalize_text(s) for s in items if isinstance(s, str) and s.strip()]
        except json.JSONDecodeError:
            pass
    out = []
    for line in text.splitlines():
        line = normalize_text(_ENUM.sub("", line, count=1)).strip('"')
        if line.lower().startswith("whether"):
            out.append(line)
    if not out:
        raise ResponseParseError("no issues found in response", text)
    return out


# ---------------------------------------------------------------------------
# questions


def generate_questions(case: Case, issue: IssueCandidate, k: int, endpoint,
                       prompts_dir=None) -> list[Question]:
    """Up to ``k`` yes/no questions for one (case, issue) pair, ids carrying provenance."""
    if k < 1:
        raise ValueError("k must be >= 1")
    backend = make_backend(endpoint)
    messages = render("questions", prompts_dir, facts=format_facts(case.facts), issue=issue.text, k=k)
    meta = {"task": "questions", "facts": list(case.facts), "issue": issue.text, "k": k}
    raw = backend.complete(messages, meta=meta).text
    texts = parse_questions(raw)[:k]
    if not texts:
        raise ResponseParseError(f"no questions in response for {issue.row_id}", raw)
    return [Question(f"{case.case_id}.{issue.issue_id}.{i + 1}", t, case.case_id, issue.issue_id)
            for i, t in enumerate(texts)]


@dataclass
class SkipReport:
    skipped: list[dict] = field(default_factory=list)

    def add(self, row_id, reason: str, raw: str = "") -> None:
        log.warning("skipping %s: %s", row_id, reason)
        self.skipped.append({"case_id": row_id[0], "issue_id": row_id[1], "reason": reason, "raw": raw})

    def __len__(self) -> int:
        return len(self.skipped)


def build_pool(pairs: Sequence[tuple[Case, IssueCandidate]], k: int, endpoint,
               prompts_dir=None, pool: Optional[QuestionPool] = None) -> tuple[QuestionPool, SkipReport]:
    """Accumulate questions for every pair into one deduplicated pool."""
    backend = make_backend(endpoint)
    pool = pool or QuestionPool()
    skips = SkipReport()
    for case, issue in pairs:
        try:
            pool = pool.extend(generate_questions(case, issue, k, backend, prompts_dir))
        except ResponseParseError as exc:
            skips.add(issue.row_id, str(exc), exc.raw)
    return pool, skips


# ---------------------------------------------------------------------------
# issues


def _ask_issues(backend, facts: Sequence[str], prompts_dir) -> list[str]:
    messages = render("issues", prompts_dir, scenario=format_facts(facts))
    raw = backend.complete(messages, meta={"task": "issues", "facts": list(facts)}).text
    return parse_issue_list(raw)


def incremental_generate(case: Case, endpoint, prompts_dir=None,
                         failures: Optional[list] = None) -> list[IssueCandidate]:
    """Issues from every fact prefix, deduplicated; each keeps the shallowest depth."""
    backend = make_backend(endpoint)
    seen, out = set(), []
    for depth in range(1, case.m + 1):
        try:
            texts = _ask_issues(backend, case.facts[:depth], prompts_dir)
        except (EndpointError, ResponseParseError) as exc:
            log.warning("case %s depth %d produced nothing: %s", case.case_id, depth, exc)
            if failures is not None:
                failures.append({"case_id": case.case_id, "depth": depth, "error": str(exc)})
            continue
        for text in texts:
            key = normalize_text(text)
            if key in seen:
                continue
            seen.add(key)
            out.append(IssueCandidate(f"{case.case_id}-inc{len(out) + 1}", case.case_id, text,
                                      "incremental", depth))
    return out


def baseline_generate(case: Case, endpoint, samples: int = 1, prompts_dir=None,
                      failures: Optional[list] = None) -> list[IssueCandidate]:
    """All facts in one prompt, sampled ``samples`` times, union of the answers."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    backend = make_backend(endpoint)
    seen, out = set(), []
    for s in range(samples):
        try:
            texts = _ask_issues(backend, case.facts, prompts_dir)
        except (EndpointError, ResponseParseError) as exc:
            log.warning("case %s sample %d produced nothing: %s", case.case_id, s + 1, exc)
            if failures is not None:
                failures.append({"case_id": case.case_id, "sample": s + 1, "error": str(exc)})
            continue
        for text in texts:
            key = normalize_text(text)
            if key not in seen:
                seen.add(key)
                out.append(IssueCandidate(f"{case.case_id}-base{len(out) + 1}", case.case_id, text,
                                          "baseline"))
    return out


def judge_relevance(case: Case, issue: IssueCandidate, endpoint, prompts_dir=None) -> Optional[int]:
    """LLM-as-judge label (+1 / -1), or None when the reply names neither class."""
    backend = make_backend(endpoint)
    messages = render("judge", prompts_dir, facts=format_facts(case.facts), issue=issue.text)
    meta = {"task": "judge", "facts": list(case.facts), "issue": issue.text}
    reply = backend.complete(messages, meta=meta).text.strip().lower()
    if reply.startswith("irrelevant"):
        return -1
    if reply.startswith("relevant"):
        return 1
    return None

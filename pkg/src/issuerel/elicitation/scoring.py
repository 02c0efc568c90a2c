"""Verifier scoring of (case, issue, question) cells into a score matrix."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..data_model import Case, IssueCandidate, Question, QuestionPool, RowId, ScoreMatrix
from .endpoint import EndpointError, FailureBudgetExceeded, LogprobsUnsupported, make_backend
from .generation import format_facts, render

log = logging.getLogger(__name__)

P_MIN = 1e-6
P_MAX = 1.0 - 1e-6
FAILED_CELL = 0.5
MAX_FAILURE_FRAC = 0.01


@dataclass(frozen=True)
class VerifierScore:
    row_id: RowId
    question_id: str
    p_yes: float

    def __post_init__(self):
        if not 0.0 < self.p_yes < 1.0:
            raise ValueError(f"p_yes must lie in (0, 1), got {self.p_yes}")

    def to_record(self) -> dict:
        return {"case_id": self.row_id[0], "issue_id": self.row_id[1],
                "question_id": self.question_id, "p_yes": self.p_yes}


def _answer_token(token: str) -> str:
    return token.strip().strip(".,:;!\"'").lower()


def p_yes_from_logprobs(top_logprobs: Sequence[tuple[str, float]]) -> Optional[float]:
    """p(yes) / (p(yes) + p(no)) over first-token candidates, clamped.

    Tokens are matched case-insensitively after stripping whitespace and
    punctuation; variants of the same answer are summed. Returns None when
    neither answer is among the candidates.
    """
    mass = {"yes": [], "no": []}
    for token, lp in top_logprobs:
        key = _answer_token(token)
        if key in mass:
            mass[key].append(lp)
    if not mass["yes"] and not mass["no"]:
        return None
    lse = lambda v: -math.inf if not v else max(v) + math.log(sum(math.exp(x - max(v)) for x in v))
    ly, ln = lse(mass["yes"]), lse(mass["no"])
    top = max(ly, ln)
    py, pn = math.exp(ly - top), math.exp(ln - top)
    return min(max(py / (py + pn), P_MIN), P_MAX)


@dataclass
class ScoringStats:
    """Per-run counters: cells answered with neither yes nor no, failures, resumed cells."""

    no_answer_tokens: int = 0
    failures: list[dict] = field(default_factory=list)
    resumed: int = 0
    scored: int = 0


def score_question(case: Case, issue: IssueCandidate, question: Question, endpoint,
                   prompts_dir=None, stats: Optional[ScoringStats] = None) -> VerifierScore:
    if not question.text.strip():
        raise ValueError("empty question")
    backend = make_backend(endpoint)
    messages = render("verify", prompts_dir, facts=format_facts(case.facts), issue=issue.text,
                      question=question.text)
    meta = {"task": "verify", "facts": list(case.facts), "issue": issue.text, "question": question.text}
    completion = backend.complete(messages, logprobs=True, max_tokens=1, meta=meta)
    if completion.top_logprobs is None:
        raise LogprobsUnsupported("the endpoint returned no token log-probabilities; "
                                  "use --oracle or an endpoint that supports logprobs")
    p = p_yes_from_logprobs(completion.top_logprobs)
    if p is None:
        log.warning("neither yes nor no among top tokens for %s / %s", issue.row_id, question.question_id)
        if stats is not None:
            stats.no_answer_tokens += 1
        p = 0.5
    return VerifierScore(issue.row_id, question.question_id, p)


# ---------------------------------------------------------------------------
# journal


def read_journal(path, pool_hash: str) -> dict[tuple[str, str, str], float]:
    """Scored cells from a journal; a journal written for another pool is an error."""
    path = Path(path)
    done = {}
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from an interrupted run
                log.warning("%s:%d: ignoring unreadable journal line", path, lineno)
                continue
            if "pool_hash" in rec:
                if rec["pool_hash"] != pool_hash:
                    raise ValueError(f"{path} was written for pool {rec['pool_hash']}, not {pool_hash}")
                continue
            done[(rec["case_id"], rec["issue_id"], rec["question_id"])] = float(rec["p_yes"])
    return done


def build_score_matrix(pairs: Sequence[tuple[Case, IssueCandidate]], pool: QuestionPool, endpoint, *,
                       journal: Optional[str | Path] = None, max_inflight: int = 4,
                       prompts_dir=None, max_failure_frac: float = MAX_FAILURE_FRAC,
                       stats: Optional[ScoringStats] = None) -> ScoreMatrix:
    """Score every (pair, question) cell; rows follow ``pairs``, columns follow ``pool``.

    With ``journal`` set, each scored cell is appended as it completes and
    cells already present are not requested again. Failed cells are recorded
    in ``stats.failures`` and filled with 0.5; more than ``max_failure_frac``
    failures raises ``FailureBudgetExceeded``.
    """
    if len(pool) == 0:
        raise ValueError("the question pool is empty")
    stats = stats if stats is not None else ScoringStats()
    backend = make_backend(endpoint)
    rows = [iss.row_id for _, iss in pairs]
    cols = [q.question_id for q in pool]
    values = np.full((len(rows), len(cols)), np.nan)
    done = read_journal(journal, pool.digest) if journal else {}
    todo = []
    for i, (case, iss) in enumerate(pairs):
        for j, q in enumerate(pool):
            key = (iss.case_id, iss.issue_id, q.question_id)
            if key in done:
                values[i, j] = done[key]
                stats.resumed += 1
            else:
                todo.append((i, j))
    budget = max_failure_frac * values.size
    fh = None
    if journal:
        fresh = not Path(journal).exists() or Path(journal).stat().st_size == 0
        fh = open(journal, "a", encoding="utf-8")
        if fresh:
            fh.write(json.dumps({"pool_hash": pool.digest}) + "\n")

    def cell(ij):
        i, j = ij
        case, iss = pairs[i]
        try:
            return score_question(case, iss, pool.questions[j], backend, prompts_dir, stats), None
        except LogprobsUnsupported:
            raise
        except (EndpointError, ValueError) as exc:
            return None, str(exc)

    try:
        with ThreadPoolExecutor(max(1, max_inflight)) as ex:
            # batches keep the journal in submission order whatever the completion order
            step = max(1, max_inflight) * 8
            for start in range(0, len(todo), step):
                batch = todo[start:start + step]
                for (i, j), (score, err) in zip(batch, ex.map(cell, batch)):
                    if score is None:
                        stats.failures.append({"row_id": list(rows[i]), "question_id": cols[j], "error": err})
                        values[i, j] = FAILED_CELL
                        if len(stats.failures) > budget:
                            raise FailureBudgetExceeded(
                                f"{len(stats.failures)} of {values.size} cells failed "
                                f"(budget {max_failure_frac:.0%}); last error: {err}")
                        continue
                    values[i, j] = score.p_yes
                    stats.scored += 1
                    if fh is not None:
                        fh.write(json.dumps(score.to_record()) + "\n")
                        fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return ScoreMatrix(rows, cols, pool.digest, values)

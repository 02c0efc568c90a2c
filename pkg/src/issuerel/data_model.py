"""Corpus and feature-matrix types with JSON-lines / CSV persistence.

Labels are +1 (Relevant) / -1 (Irrelevant) in memory and the strings
``"Relevant"`` / ``"Irrelevant"`` on disk.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

RELEVANT = 1
IRRELEVANT = -1
LABEL_NAMES = {RELEVANT: "Relevant", IRRELEVANT: "Irrelevant"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}
ORIGINS = ("extracted", "incremental", "baseline")

RowId = tuple[str, str]


class CorpusError(ValueError):
    """Malformed or inconsistent corpus / matrix input."""


def normalize_text(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class Case:
    case_id: str
    facts: tuple[str, ...]
    silver_issues: tuple[str, ...] = ()
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "facts", tuple(self.facts))
        object.__setattr__(self, "silver_issues", tuple(self.silver_issues))
        if not self.case_id:
            raise CorpusError("case_id must be non-empty")
        if not self.facts:
            raise CorpusError(f"case {self.case_id!r} has an empty fact list")
        if any(not f.strip() for f in self.facts):
            raise CorpusError(f"case {self.case_id!r} has an empty fact")

    @property
    def m(self) -> int:
        return len(self.facts)


@dataclass(frozen=True)
class IssueCandidate:
    issue_id: str
    case_id: str
    text: str
    origin: str = "extracted"
    depth: Optional[int] = None
    label: Optional[int] = None

    def __post_init__(self):
        if not self.issue_id:
            raise CorpusError("issue_id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"issue {self.issue_id!r} has empty text")
        if self.origin not in ORIGINS:
            raise CorpusError(f"issue {self.issue_id!r}: unknown origin {self.origin!r}")
        if self.label is not None and self.label not in (RELEVANT, IRRELEVANT):
            raise CorpusError(f"issue {self.issue_id!r}: label must be +1 or -1")
        if self.depth is not None and self.depth < 1:
            raise CorpusError(f"issue {self.issue_id!r}: depth must be >= 1")

    @property
    def row_id(self) -> RowId:
        return (self.case_id, self.issue_id)


@dataclass(frozen=True)
class Question:
    question_id: str
    text: str
    case_id: str = ""
    issue_id: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"question {self.question_id!r} has empty text")

    @property
    def provenance(self) -> RowId:
        return (self.case_id, self.issue_id)


@dataclass(frozen=True)
class QuestionPool:
    questions: tuple[Question, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "questions", tuple(self.questions))
        ids = [q.question_id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise CorpusError("question_id values must be unique within a pool")

    @classmethod
    def from_questions(cls, questions: Iterable[Question]) -> "QuestionPool":
        """Build a pool, dropping questions whose normalized text was already seen."""
        return cls().extend(questions)

    def extend(self, questions: Iterable[Question]) -> "QuestionPool":
        seen = {normalize_text(q.text) for q in self.questions}
        ids = {q.question_id for q in self.questions}
        kept = list(self.questions)
        for q in questions:
            key = normalize_text(q.text)
            if key in seen:
                continue
            if q.question_id in ids:
                raise CorpusError(f"duplicate question_id {q.question_id!r}")
            seen.add(key)
            ids.add(q.question_id)
            kept.append(q)
        return QuestionPool(tuple(kept))

    @property
    def h(self) -> int:
        return len(self.questions)

    def __len__(self) -> int:
        return len(self.questions)

    def __iter__(self):
        return iter(self.questions)

    @property
    def digest(self) -> str:
        texts = [normalize_text(q.text) for q in self.questions]
        return hashlib.sha256(json.dumps(texts).encode()).hexdigest()[:16]

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for q in self.questions:
                rec = {"question_id": q.question_id, "text": q.text,
                       "case_id": q.case_id, "issue_id": q.issue_id}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "QuestionPool":
        questions = []
        for lineno, rec in _iter_jsonl(path):
            try:
                questions.append(Question(rec["question_id"], rec["text"],
                                          rec.get("case_id", ""), rec.get("issue_id", "")))
            except KeyError as exc:
                raise CorpusError(f"{path}:{lineno}: missing field {exc}") from None
        return cls(tuple(questions))


@dataclass(frozen=True)
class ScoreMatrix:
    """Verifier probabilities, one row per (case, issue) pair, one column per question."""

    row_ids: tuple[RowId, ...]
    column_ids: tuple[str, ...]
    pool_hash: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(len(self.row_ids), len(self.column_ids))
        if values.size and not np.all((values > 0.0) & (values < 1.0)):
            raise CorpusError("score matrix entries must lie strictly inside (0, 1)")
        values.setflags(write=False)
        object.__setattr__(self, "row_ids", tuple(tuple(r) for r in self.row_ids))
        object.__setattr__(self, "column_ids", tuple(self.column_ids))
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def h(self) -> int:
        return len(self.column_ids)

    def check_pool(self, pool: QuestionPool) -> None:
        if pool.digest != self.pool_hash or pool.h != self.h:
            raise CorpusError(
                f"score matrix was built from pool {self.pool_hash}, not {pool.digest}")

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["case_id", "issue_id"] + [f"q_{c}" for c in self.column_ids])
            for (case_id, issue_id), row in zip(self.row_ids, self.values):
                writer.writerow([case_id, issue_id] + [f"{v:.6f}" for v in row])
        sidecar = {"pool_hash": self.pool_hash, "n_rows": len(self.row_ids), "h": self.h}
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n")

    @classmethod
    def read_csv(cls, path: str | Path) -> "ScoreMatrix":
        path = Path(path)
        meta_path = sidecar_path(path)
        if not meta_path.exists():
            raise CorpusError(f"missing sidecar {meta_path}")
        meta = json.loads(meta_path.read_text())
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["case_id", "issue_id"] or any(not c.startswith("q_") for c in header[2:]):
                raise CorpusError(f"{path}: bad header")
            columns = [c[2:] for c in header[2:]]
            rows, vals = [], []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(header):
                    raise CorpusError(f"{path}:{lineno}: expected {len(header)} fields")
                rows.append((rec[0], rec[1]))
                vals.append([float(v) for v in rec[2:]])
        values = np.array(vals, dtype=float).reshape(len(rows), len(columns))
        return cls(tuple(rows), tuple(columns), meta["pool_hash"], values)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


@dataclass(frozen=True)
class LabeledExample:
    row_id: RowId
    features: np.ndarray
    label: int


def labeled_design(matrix: ScoreMatrix, issues: Sequence[IssueCandidate]) -> tuple[np.ndarray, np.ndarray, list[RowId]]:
    """Rows of ``matrix`` whose issue carries a label, as (X, y, row_ids)."""
    labels = {iss.row_id: iss.label for iss in issues if iss.label is not None}
    keep = [i for i, r in enumerate(matrix.row_ids) if r in labels]
    X = np.asarray(matrix.values[keep], dtype=float)
    y = np.array([labels[matrix.row_ids[i]] for i in keep], dtype=float)
    return X, y, [matrix.row_ids[i] for i in keep]


def binarize_scores(matrix: ScoreMatrix | np.ndarray, cutoff: float) -> np.ndarray:
    """Threshold probabilities: entries >= cutoff become 1, the rest 0."""
    if not 0.0 < cutoff < 1.0:
        raise ValueError(f"cutoff must lie in (0, 1), got {cutoff}")
    values = matrix.values if isinstance(matrix, ScoreMatrix) else np.asarray(matrix, dtype=float)
    return (values >= cutoff).astype(float)


# ---------------------------------------------------------------------------
# corpus I/O


def _iter_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: parse error: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{lineno}: parse error: record is not an object")
            yield lineno, rec


def _case_from_record(rec: dict) -> Case:
    facts = rec["facts"]
    if not isinstance(facts, list):
        raise CorpusError("facts must be a list")
    return Case(rec["case_id"], tuple(facts), tuple(rec.get("silver_issues", [])), rec.get("source", ""))


def _issue_from_record(rec: dict) -> IssueCandidate:
    label = rec.get("label")
    if label is not None:
        if label not in LABEL_CODES:
            raise CorpusError(f"label must be one of {sorted(LABEL_CODES)}, got {label!r}")
        label = LABEL_CODES[label]
    return IssueCandidate(rec["issue_id"], rec["case_id"], rec["text"],
                          rec.get("origin", "extracted"), rec.get("depth"), label)


def validate_corpus(cases: Sequence[Case], issues: Sequence[IssueCandidate]) -> None:
    by_id: dict[str, Case] = {}
    for case in cases:
        if case.case_id in by_id:
            raise CorpusError(f"duplicate case_id {case.case_id!r}")
        by_id[case.case_id] = case
    seen: set[str] = set()
    for iss in issues:
        if iss.issue_id in seen:
            raise CorpusError(f"duplicate issue_id {iss.issue_id!r}")
        seen.add(iss.issue_id)
        case = by_id.get(iss.case_id)
        if case is None:
            raise CorpusError(f"issue {iss.issue_id!r} references unknown case_id {iss.case_id!r}")
        if iss.depth is not None and iss.depth > case.m:
            raise CorpusError(f"issue {iss.issue_id!r}: depth {iss.depth} exceeds {case.m} facts")


def ingest_corpus(path: str | Path, format: str = "jsonl") -> tuple[list[Case], list[IssueCandidate]]:
    """Read and validate a JSON-lines corpus of case and issue records."""
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    cases: list[Case] = []
    issues: list[IssueCandidate] = []
    for lineno, rec in _iter_jsonl(path):
        kind = rec.get("kind")
        try:
            if kind == "case":
                cases.append(_case_from_record(rec))
            elif kind == "issue":
                issues.append(_issue_from_record(rec))
            else:
                raise CorpusError(f"unknown record kind {kind!r}")
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc}") from None
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
    validate_corpus(cases, issues)
    return cases, issues


def case_record(case: Case) -> dict:
    return {"kind": "case", "case_id": case.case_id, "facts": list(case.facts),
            "silver_issues": list(case.silver_issues), "source": case.source}


def issue_record(iss: IssueCandidate) -> dict:
    rec = {"kind": "issue", "issue_id": iss.issue_id, "case_id": iss.case_id,
           "text": iss.text, "origin": iss.origin}
    if iss.depth is not None:
        rec["depth"] = iss.depth
    if iss.label is not None:
        rec["label"] = LABEL_NAMES[iss.label]
    return rec


def write_corpus(path: str | Path, cases: Sequence[Case], issues: Sequence[IssueCandidate]) -> None:
    validate_corpus(cases, issues)
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case_record(case), ensure_ascii=False) + "\n")
        for iss in issues:
            fh.write(json.dumps(issue_record(iss), ensure_ascii=False) + "\n")

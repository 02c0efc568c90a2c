"""Regenerate the bundled 12-case synthetic corpus.

Facts mention two topic words each. Relevant issues are built from topics
that occur in the case facts, irrelevant ones from topics that do not, so
the offline verifier can recover the labels from keyword overlap.
"""
import csv
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from issuerel.data_model import RELEVANT, IRRELEVANT, Case, IssueCandidate, write_corpus  # noqa: E402

TOPICS = ["deposit", "installment", "guarantee", "tenancy", "delivery", "warranty", "penalty",
          "forfeiture", "misrepresentation", "rescission"]
FACT_FORMS = [
    "The {a} and the {b} were raised in correspondence between the plaintiff and the defendant.",
    "The {a} clause and the {b} terms appear in the written agreement signed in March.",
    "The {a} payments stopped after the {b} notice was served.",
    "The {a} provision was relied on by the defendant while the plaintiff pleaded {b}.",
]
ISSUE_FORMS = [
    "Whether the {a} and {b} provisions are enforceable",
    "Whether {a} and {b} entitle the claimant to relief",
    "Whether {a} together with {b} bars the claim",
]


def build(seed=7, n_cases=12):
    rng = np.random.default_rng(seed)
    cases, issues = [], []
    for c in range(n_cases):
        cid = f"c{c + 1:02d}"
        topics = list(rng.permutation(TOPICS))
        own, other = topics[:8], topics[8:]
        facts = [FACT_FORMS[k % 4].format(a=own[2 * k], b=own[2 * k + 1]) for k in range(4)]
        cases.append(Case(cid, tuple(facts), source="synthetic"))
        for k in range(3):
            a, b = rng.choice(own, 2, replace=False)
            issues.append(IssueCandidate(f"{cid}-r{k + 1}", cid, ISSUE_FORMS[k].format(a=a, b=b),
                                         label=RELEVANT))
        for k in range(3):
            a, b = rng.choice(other, 2, replace=False)
            issues.append(IssueCandidate(f"{cid}-x{k + 1}", cid, ISSUE_FORMS[k].format(a=a, b=b),
                                         label=IRRELEVANT))
    return cases, issues


def annotations(issues, n_raters=3, flip=0.15, seed=11):
    """Three simulated annotators who each disagree with the label 15% of the time."""
    rng = np.random.default_rng(seed)
    rows = []
    for iss in issues:
        flips = rng.random(n_raters) < flip
        rows.append([iss.issue_id] + ["Irrelevant" if (iss.label > 0) != f else "Relevant" for f in flips])
    return rows


if __name__ == "__main__":
    data = Path(__file__).resolve().parents[1] / "src" / "issuerel" / "data"
    cases, issues = build()
    write_corpus(data / "synthetic_cases.jsonl", cases, issues)
    with open(data / "synthetic_annotations.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "r1", "r2", "r3"])
        writer.writerows(annotations(issues))
    print(f"wrote {len(cases)} cases, {len(issues)} issues and their annotations to {data}")

"""Command-line entry point: elicit, score, train, evaluate, stability, diversity, agreement, report."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np

from .classifiers import load_model, save_model
from .config import ConfigError, RunConfig
from .data_model import (CorpusError, IssueCandidate, QuestionPool, ScoreMatrix, ingest_corpus,
                         labeled_design, sidecar_path, validate_corpus, write_corpus)
from .elicitation import (EndpointError, FailureBudgetExceeded, ScoringStats, baseline_generate,
                          build_pool, build_score_matrix, incremental_generate)
from .evaluation import (FoldPlan, ModelSpec, cv_grid_search, format_table, make_folds,
                         reports_to_csv, run_experiment)
from .stability import compare_with_standard, run_stability, selection_overlap, summary_table, write_plot_spec
from .textmetrics import agreement_report, diversity_report, embd, fbd, read_embeddings, self_embd

log = logging.getLogger("issuerel")

EXIT_OK, EXIT_VALIDATION, EXIT_ENDPOINT = 0, 2, 3
LOCKFILE = ".issuerel.lock"

METHOD_SPECS = {
    "LR_L1": ("logistic", "L1"), "LR_L2": ("logistic", "L2"),
    "SVC_L1": ("svc", "L1"), "SVC_L2": ("svc", "L2"),
    "RIDGE": ("ridge", "L2"), "LDA": ("lda", "none"), "KNN": ("knn", "none"),
}


class MissingArtifact(ValueError):
    def __init__(self, path, producer: str):
        super().__init__(f"{path} not found; run `{producer}` first")


class WorkspaceLocked(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# workspace helpers


class Workspace:
    def __init__(self, root: str | Path, config: RunConfig):
        self.root = Path(root)
        self.config = config

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def require(self, rel: str, producer: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            raise MissingArtifact(p, producer)
        return p

    def write_text(self, rel_or_path, text: str, pool_hash: str = "", **extra) -> Path:
        """Write an artifact and a sidecar naming the config digest and pool that produced it."""
        p = rel_or_path if isinstance(rel_or_path, Path) else self.path(rel_or_path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        write_meta(p, self.config.digest, pool_hash, **extra)
        return p

    @contextmanager
    def lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        lock = self.root / LOCKFILE
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            try:
                pid = int(lock.read_text().strip() or 0)
            except (OSError, ValueError):
                pid = 0
            if pid and _alive(pid):
                raise WorkspaceLocked(f"workspace {self.root} is in use by process {pid}") from None
            lock.unlink(missing_ok=True)
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            lock.unlink(missing_ok=True)


def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def write_meta(path: Path, config_digest: str, pool_hash: str = "", **extra) -> None:
    meta_path = sidecar_path(path)
    meta = {}
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text())
        except json.JSONDecodeError:
            meta = {}
    meta.update({"config_digest": config_digest, "pool_hash": pool_hash}, **extra)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_meta(path: Path) -> dict:
    p = sidecar_path(path)
    return json.loads(p.read_text()) if p.exists() else {}


def _load_corpus(ws: Workspace):
    return ingest_corpus(ws.config.corpus_path())


def _load_candidates(ws: Workspace):
    path = ws.require(ws.config.paths.candidates, "elicit")
    return ingest_corpus(path)


def _design(ws: Workspace):
    """Labeled feature matrix, after checking the matrix against the pool."""
    mpath = ws.require(ws.config.paths.matrix, "score")
    matrix = ScoreMatrix.read_csv(mpath)
    pool = QuestionPool.read(ws.require(ws.config.paths.pool, "elicit"))
    matrix.check_pool(pool)
    _, issues = _load_candidates(ws)
    X, y, rows = labeled_design(matrix, issues)
    if X.shape[0] == 0:
        raise CorpusError("no labeled rows in the score matrix")
    ids = [f"q_{c}" for c in matrix.column_ids]
    return X, y, ids, matrix.pool_hash


def _spec(name: str, cfg: RunConfig) -> ModelSpec:
    if name not in METHOD_SPECS:
        raise ConfigError(f"unknown method {name!r}; choose from {', '.join(METHOD_SPECS)}")
    family, penalty = METHOD_SPECS[name]
    grid = cfg.experiment.knn_grid if family == "knn" else cfg.experiment.grid
    return ModelSpec(family, penalty, tuple(grid))


# ---------------------------------------------------------------------------
# commands


def cmd_elicit(ws: Workspace) -> int:
    """Generate issue candidates and the shared question pool."""
    cfg = ws.config
    cases, issues = _load_corpus(ws)
    prompts = cfg.elicit.prompts_dir or None
    generated, failures = [], []
    for case in cases:
        if cfg.elicit.incremental:
            generated += incremental_generate(case, cfg.endpoint, prompts, failures)
        if cfg.elicit.baseline_samples > 0:
            generated += baseline_generate(case, cfg.endpoint, cfg.elicit.baseline_samples, prompts, failures)
    candidates = list(issues) + generated
    validate_corpus(cases, candidates)
    by_id = {c.case_id: c for c in cases}
    pool, skips = build_pool([(by_id[i.case_id], i) for i in candidates], cfg.elicit.k, cfg.endpoint, prompts)
    if len(pool) == 0:
        raise CorpusError("no questions were generated")
    cand_path = ws.path(cfg.paths.candidates)
    cand_path.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(cand_path, cases, candidates)
    write_meta(cand_path, cfg.digest, pool.digest)
    pool_path = ws.path(cfg.paths.pool)
    pool.write(pool_path)
    write_meta(pool_path, cfg.digest, pool.digest)
    ws.write_text(ws.path(cfg.paths.reports) / "elicit_log.json",
                  json.dumps({"skipped": skips.skipped, "generation_failures": failures}, indent=2) + "\n",
                  pool.digest)
    print(f"elicit: {len(cases)} cases, {len(generated)} generated candidates, "
          f"{len(pool)} questions, {len(skips)} skipped pairs")
    return EXIT_OK


def cmd_score(ws: Workspace, resume: bool = False) -> int:
    """Score every candidate against the pool."""
    cfg = ws.config
    pool = QuestionPool.read(ws.require(cfg.paths.pool, "elicit"))
    cases, candidates = _load_candidates(ws)
    by_id = {c.case_id: c for c in cases}
    journal = ws.path(cfg.paths.journal)
    if not resume and journal.exists():
        journal.unlink()
    journal.parent.mkdir(parents=True, exist_ok=True)
    stats = ScoringStats()
    matrix = build_score_matrix([(by_id[i.case_id], i) for i in candidates], pool, cfg.endpoint,
                                journal=journal, max_inflight=cfg.elicit.max_inflight,
                                prompts_dir=cfg.elicit.prompts_dir or None, stats=stats)
    mpath = ws.path(cfg.paths.matrix)
    mpath.parent.mkdir(parents=True, exist_ok=True)
    matrix.write_csv(mpath)
    write_meta(mpath, cfg.digest, pool.digest, failures=len(stats.failures),
               no_answer_tokens=stats.no_answer_tokens)
    print(f"score: {matrix.shape[0]} x {matrix.shape[1]} matrix, {stats.resumed} cells resumed, "
          f"{len(stats.failures)} failed, {stats.no_answer_tokens} without a yes/no token")
    return EXIT_OK


def cmd_train(ws: Workspace) -> int:
    """Fit and save the configured linear models."""
    cfg = ws.config
    X, y, ids, pool_hash = _design(ws)
    mdir = ws.path(cfg.paths.models)
    mdir.mkdir(parents=True, exist_ok=True)
    seed = cfg.experiment.seed
    for name in cfg.experiment.train_methods:
        spec = _spec(name, cfg)
        if spec.family == "knn":
            raise ConfigError("KNN keeps its training rows and has no persisted linear model")
        strength = None
        if spec.tuned:
            strength, _ = cv_grid_search(lambda A, b, s: spec.fit(A, b, s, seed), spec.grid, X, y,
                                         cfg.experiment.folds, seed)
        model = spec.fit(X, y, strength, seed, pool_hash)
        path = mdir / f"{name}.json"
        save_model(model, path)
        write_meta(path, cfg.digest, pool_hash, features=ids)
        print(f"train: {name} strength={strength} nnz={model.nnz}")
    return EXIT_OK


def cmd_evaluate(ws: Workspace) -> int:
    """Cross-validated metrics for every configured method."""
    cfg = ws.config
    X, y, _, pool_hash = _design(ws)
    plan = make_folds(y, cfg.experiment.folds, cfg.experiment.seed)
    reports = [run_experiment(X, y, _spec(name, cfg), plan, pool_hash=pool_hash)
               for name in cfg.experiment.methods]
    rdir = ws.path(cfg.paths.reports)
    ws.write_text(rdir / "evaluation.csv", reports_to_csv(reports), pool_hash)
    table = format_table(reports)
    ws.write_text(rdir / "evaluation.txt", table + "\n", pool_hash)
    print(table)
    return EXIT_OK


def cmd_stability(ws: Workspace) -> int:
    """Bootstrap selection stability of the L1 models."""
    cfg = ws.config
    X, y, ids, pool_hash = _design(ws)
    for name in cfg.experiment.train_methods:
        ws.require(str(Path(cfg.paths.models) / f"{name}.json"), "train")
    st = cfg.stability
    scfg = st.to_config(cfg.experiment.seed)
    plan = make_folds(y, cfg.experiment.folds, cfg.experiment.seed)
    rdir = ws.path(cfg.paths.reports)
    tau_ref = 0.5 if 0.5 in scfg.thresholds else scfg.thresholds[len(scfg.thresholds) // 2]
    at_ref = {}
    summary = []
    for method in st.methods:
        run = run_stability(X, y, method, scfg, plan, grid=cfg.experiment.grid,
                            inner_folds=st.inner_folds, feature_ids=ids)
        reports = []
        for tau in scfg.thresholds:
            rep = compare_with_standard(run.report(tau), X, y, grid=cfg.experiment.grid,
                                        seed=cfg.experiment.seed, min_stability=st.min_stability)
            reports.append(rep)
            ws.write_text(rdir / f"stability_{method}_tau{tau:g}.csv", rep.to_csv(), pool_hash)
            if tau == tau_ref:
                at_ref[method] = rep
        summary.append(f"[{method}]\n{summary_table(reports)}\n")
        ref = at_ref[method]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["feature_id", "stability", "category", "l1_beta", "l1_sd", "l2_beta", "p_value"])
        for row in ref.feature_table(st.min_stability):
            writer.writerow([row["feature_id"], row["stability"], row["category"], f"{row['l1_beta']:.6f}",
                             f"{row['l1_sd']:.6f}", f"{row['l2_beta']:.6f}", f"{row['p_value']:.6g}"])
        ws.write_text(rdir / f"stability_{method}_selected.csv", buf.getvalue(), pool_hash,
                      min_stability=st.min_stability, tau=tau_ref)
        plot = rdir / f"stability_{method}_plot.json"
        write_plot_spec(ref, plot)
        write_meta(plot, cfg.digest, pool_hash)
    if len(at_ref) >= 2:
        names = list(at_ref)
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                ov = selection_overlap(at_ref[names[i]], at_ref[names[j]], st.min_stability)
                text = "n/a" if ov is None else f"{ov[0]:.3f} of {names[i]}, {ov[1]:.3f} of {names[j]}"
                summary.append(f"overlap {names[i]} vs {names[j]} (stability >= {st.min_stability}, "
                               f"tau {tau_ref:g}): {text}")
    text = "\n".join(summary) + "\n"
    ws.write_text(rdir / "stability_summary.txt", text, pool_hash)
    print(text, end="")
    return EXIT_OK


def cmd_diversity(ws: Workspace) -> int:
    """N-gram and embedding diversity of the candidates."""
    cfg = ws.config
    _, candidates = _load_candidates(ws)
    pool_hash = read_meta(ws.path(cfg.paths.candidates)).get("pool_hash", "")
    groups = {}
    for iss in candidates:
        groups.setdefault(iss.origin, []).append(iss.text)
    own = ref = None
    if cfg.diversity.own_embeddings:
        own = read_embeddings(cfg.diversity.own_embeddings)[1]
        if cfg.diversity.reference_embeddings:
            ref = read_embeddings(cfg.diversity.reference_embeddings)[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["set", "metric", "value"])
    for origin in sorted(groups):
        texts = groups[origin]
        if len(texts) < 2:
            continue
        rep = diversity_report(texts, cfg.diversity.orders)
        for metric, value in rep.rows():
            writer.writerow([origin, metric, value])
    if own is not None:
        writer.writerow(["embeddings", "self_embd", f"{self_embd(own):.4f}"])
        if ref is not None:
            writer.writerow(["embeddings", "embd", f"{embd(own, ref):.4f}"])
            writer.writerow(["embeddings", "fbd", f"{fbd(own, ref):.4f}"])
    ws.write_text(ws.path(cfg.paths.reports) / "diversity.csv", buf.getvalue(), pool_hash)
    print(buf.getvalue(), end="")
    return EXIT_OK


def cmd_agreement(ws: Workspace) -> int:
    """Fleiss and Cohen kappa of the annotations."""
    cfg = ws.config
    path = cfg.annotations_path()
    if path is None or not path.exists():
        raise ConfigError(f"annotations file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise CorpusError(f"{path}: no annotation rows")
    header, body = rows[0], rows[1:]
    rep = agreement_report([r[1:] for r in body], header[1:])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["statistic", "raters", "value"])
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
    writer.writerow(["fleiss_kappa", "all", fmt(rep.fleiss_kappa)])
    for (a, b), k in rep.cohen_pairs.items():
        writer.writerow(["cohen_kappa", f"{a}-{b}", fmt(k)])
    ws.write_text(ws.path(cfg.paths.reports) / "agreement.csv", buf.getvalue())
    print(buf.getvalue(), end="")
    return EXIT_OK


REPORT_PARTS = [
    ("Evaluation", "evaluation.txt"),
    ("Stability", "stability_summary.txt"),
    ("Diversity", "diversity.csv"),
    ("Agreement", "agreement.csv"),
]


def cmd_report(ws: Workspace) -> int:
    """Merge the reports into one summary."""
    cfg = ws.config
    rdir = ws.path(cfg.paths.reports)
    found = [(title, rdir / name) for title, name in REPORT_PARTS if (rdir / name).exists()]
    if not found:
        raise MissingArtifact(rdir / "evaluation.txt", "evaluate")
    hashes = {}
    for path in [ws.path(cfg.paths.matrix)] + [p for _, p in found]:
        h = read_meta(path).get("pool_hash", "") if path.exists() else ""
        if h:
            hashes.setdefault(h, []).append(path.name)
    if len(hashes) > 1:
        detail = "; ".join(f"{h}: {', '.join(names)}" for h, names in hashes.items())
        raise CorpusError(f"artifacts come from different question pools ({detail})")
    pool_hash = next(iter(hashes), "")
    lines = [f"pool {pool_hash or 'n/a'}  config {cfg.digest}", ""]
    for title, path in found:
        lines += [f"== {title} ==", path.read_text(encoding="utf-8").rstrip(), ""]
    text = "\n".join(lines)
    ws.write_text(rdir / "report.txt", text + "\n", pool_hash)
    print(text)
    return EXIT_OK


COMMANDS = {
    "elicit": cmd_elicit, "score": cmd_score, "train": cmd_train, "evaluate": cmd_evaluate,
    "stability": cmd_stability, "diversity": cmd_diversity, "agreement": cmd_agreement,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--workspace", metavar="DIR", default=".", help="directory for artifacts")
    common.add_argument("--seed", type=int, help="override the experiment seed")
    common.add_argument("--oracle", action="store_true", help="use the offline keyword oracle")
    common.add_argument("--endpoint-url", help="chat-completions base URL")
    common.add_argument("--model", help="model name sent to the endpoint")
    common.add_argument("--max-inflight", type=int, help="concurrent endpoint requests")
    common.add_argument("--resume", action="store_true", help="keep already scored cells (score)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="issuerel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").rstrip(".").lower())
    init = sub.add_parser("init-config", help="print the default configuration as TOML")
    init.add_argument("--config", metavar="PATH", help="start from this file instead of the defaults")
    return parser


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg = cfg.replace("experiment", seed=args.seed)
    endpoint = {}
    if args.oracle:
        endpoint["oracle"] = True
    if args.endpoint_url:
        endpoint["base_url"] = args.endpoint_url
    if args.model:
        endpoint["model_name"] = args.model
    if endpoint:
        cfg = cfg.replace("endpoint", **endpoint)
    if args.max_inflight is not None:
        cfg = cfg.replace("elicit", max_inflight=args.max_inflight)
    return cfg


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.command == "init-config":
            print(cfg.to_toml(), end="")
            return EXIT_OK
        cfg = apply_overrides(cfg, args)
        ws = Workspace(args.workspace, cfg)
        with ws.lock():
            if args.command == "score":
                return cmd_score(ws, resume=args.resume)
            return COMMANDS[args.command](ws)
    except (FailureBudgetExceeded, EndpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (ConfigError, CorpusError, MissingArtifact, WorkspaceLocked, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``citeneed <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal error.  Diagnostics go to stderr; results go to files (or
stdout where noted).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analysis, baselines, corpus, models, plots
from . import encoder as enc

log = logging.getLogger("citeneed")

DEFAULT_SEED = 42
SEED_ENV = "CITENEED_SEED"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# shared helpers


def resolve_seed(flag: int | None, configured: int | None = None) -> int:
    """Flag, then config file, then $CITENEED_SEED, then DEFAULT_SEED."""
    if flag is not None:
        return flag
    if configured is not None:
        return int(configured)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) in (None, [])]
    if missing:
        raise UsageError(f"{args.command} requires {', '.join(missing)}")


def _variant(name: str) -> str:
    return models.CLI_VARIANTS.get(name, name)


def _write_history(history, out_dir: Path) -> None:
    cols = sorted({k for r in history for k in r}, key=lambda k: (k != "epoch", k != "train_loss", k))
    analysis.write_rows_csv(history, out_dir / "history.csv", cols)
    plots.plot_history(history, out_dir / "history.png")


def _write_eval(report, out_dir: Path, stem: str = "report") -> None:
    analysis.write_report_csv(report, out_dir / f"{stem}.csv")
    analysis.write_confusion_csv(report, out_dir / f"{stem}_confusion.csv")
    plots.plot_confusion(report, out_dir / f"{stem}_confusion.png")


def _print_report(report, name: str = "") -> None:
    prefix = f"{name}\t" if name else ""
    print(f"{prefix}P={report.macro_precision:.4f}\tR={report.macro_recall:.4f}\tF1={report.macro_f1:.4f}"
          f"\tn={report.n_instances}")


def _train_config(args, base: dict | None = None) -> models.TrainConfig:
    values = dict(base or {})
    for flag, key in (("epochs", "epochs"), ("batch", "batch_size"), ("hidden", "hidden_dim"),
                      ("embed_dim", "embed_dim"), ("lr", "learning_rate"), ("split", "split")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    values["seed"] = resolve_seed(getattr(args, "seed", None), values.get("seed"))
    return models.TrainConfig(**values)


def _read_statements(path, section: str | None = None):
    """Corpus JSONL, or plain text with one statement per line.  Plain-text
    statements get ``section`` as their heading (``""`` is the lead)."""
    path = _existing(path)
    if path.suffix == ".jsonl":
        return [inst.statement for inst in corpus.read_corpus(path)]
    out = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            out.append(corpus.Statement(article_id=f"line{ln}", section_heading=section, is_lead=section == "",
                                        text=line.strip(), tokens=corpus.tokenize(line.strip())))
    return out


# --------------------------------------------------------------------------
# commands


def cmd_build_corpus(args) -> int:
    _need(args, "corpus", "out")
    seed = resolve_seed(args.seed)
    articles = corpus.parse_articles(corpus.read_articles(_existing(args.corpus)), workers=args.workers)
    for a in articles:
        for w in a.warnings:
            log.warning("%s: %s", a.article_id, w)
    if args.dataset == "RND":
        data = corpus.build_rnd_dataset(articles, args.n_total, seed)
    else:
        _need(args, "n_pos", "n_neg")
        build = corpus.build_fa_dataset if args.dataset == "FA" else corpus.build_lqn_dataset
        data = build(articles, args.n_pos, args.n_neg, seed)
    problems = corpus.validate_dataset(data)
    if problems:
        raise ValueError("dataset invariants violated: " + "; ".join(problems[:5]))
    corpus.write_corpus(data, args.out)
    log.info("wrote %d instances to %s", len(data), args.out)
    return EXIT_OK


def _train(corpus_path, cfg, variant, embeddings, checkpoint: Path, out_dir: Path | None):
    data = corpus.read_corpus(_existing(corpus_path))
    if any(isinstance(i, corpus.ReasonInstance) for i in data):
        raise ValueError(f"{corpus_path}: expected a citation-need corpus, found reason labels")
    pretrained = None
    if embeddings:
        pretrained = enc.load_pretrained(_existing(embeddings))
        dim = len(next(iter(pretrained.values())))
        if cfg.embed_dim != dim:
            log.info("embedding dim set to %d from %s", dim, embeddings)
            cfg = models.TrainConfig(**{**cfg.__dict__, "embed_dim": dim})
    model, history = models.train_need(data, cfg, variant, pretrained)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    models.save_checkpoint(model, checkpoint)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_history(history, out_dir)
    return model, history


def cmd_train(args) -> int:
    _need(args, "corpus", "variant")
    if not args.checkpoint and not args.out:
        raise UsageError("train requires --checkpoint or --out")
    out_dir = Path(args.out) if args.out else None
    ckpt = Path(args.checkpoint) if args.checkpoint else out_dir / "model.ckpt"
    _, history = _train(args.corpus, _train_config(args), _variant(args.variant), args.embeddings, ckpt, out_dir)
    last = history[-1]
    print("\t".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in last.items()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _need(args, "checkpoint", "corpus")
    model = models.load_checkpoint(_existing(args.checkpoint))
    data = corpus.read_corpus(_existing(args.corpus))
    report = models.evaluate(model, data)
    _print_report(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_eval(report, out)
    return EXIT_OK


def cmd_cross_eval(args) -> int:
    _need(args, "checkpoint", "corpus")
    model = models.load_need_checkpoint(_existing(args.checkpoint))
    rows = []
    for path in args.corpus:
        data = corpus.read_corpus(_existing(path))
        rep = models.evaluate(model, data)
        name = Path(path).stem
        _print_report(rep, name)
        rows.append({"corpus": name, "precision": repr(rep.macro_precision), "recall": repr(rep.macro_recall),
                     "f1": repr(rep.macro_f1), "n": rep.n_instances})
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        analysis.write_rows_csv(rows, out / "cross_eval.csv", ["corpus", "precision", "recall", "f1", "n"])
    return EXIT_OK


def cmd_predict(args) -> int:
    _need(args, "checkpoint", "corpus")
    model = models.load_checkpoint(_existing(args.checkpoint))
    statements = _read_statements(args.corpus, args.section)
    probs = model.predict_proba(statements)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(model, models.ReasonModel):
            w.writerow(["article_id", "text", "prediction", "probability"])
            for s, p in zip(statements, probs):
                k = int(np.argmax(p))
                w.writerow([s.article_id, s.text, corpus.REASONS[k], repr(float(p[k]))])
        else:
            w.writerow(["article_id", "text", "prediction", "probability"])
            for s, p in zip(statements, probs):
                w.writerow([s.article_id, s.text, models.NEED_LABELS[int(p >= models.THRESHOLD)], repr(float(p))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_explain(args) -> int:
    _need(args, "checkpoint", "corpus", "out")
    model = models.load_checkpoint(_existing(args.checkpoint))
    statements = _read_statements(args.corpus, args.section)
    if args.limit:
        statements = statements[: args.limit]
    html, txt = analysis.render_attention_report(model, statements, args.out)
    log.info("wrote %s and %s", html, txt)
    return EXIT_OK


def cmd_reason_train(args) -> int:
    _need(args, "checkpoint", "corpus", "out")
    pretrained = models.load_need_checkpoint(_existing(args.checkpoint))
    reasons = corpus.read_corpus(_existing(args.corpus))
    if not all(isinstance(i, corpus.ReasonInstance) for i in reasons):
        raise ValueError(f"{args.corpus}: every record needs a 'reason' field")
    base = {"embed_dim": pretrained.embed_dim, "hidden_dim": pretrained.hidden_dim, "max_len": pretrained.max_len}
    cfg = _train_config(args, base)
    model, history = models.fine_tune_reason(pretrained, reasons, cfg, reinit_encoder=args.no_pretrain)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    models.save_checkpoint(model, out / "reason.ckpt")
    _write_history(history, out)
    print("\t".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in history[-1].items()))
    return EXIT_OK


def cmd_reason_eval(args) -> int:
    _need(args, "checkpoint", "corpus")
    model = models.load_reason_checkpoint(_existing(args.checkpoint))
    data = corpus.read_corpus(_existing(args.corpus))
    report = models.evaluate(model, data)
    for row in report.rows():
        print(f"{row['class']}\tP={row['precision']:.2f}\tR={row['recall']:.2f}\tF1={row['f1']:.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_eval(report, out)
    return EXIT_OK


def cmd_correlate(args) -> int:
    _need(args, "corpus", "out")
    data = corpus.read_corpus(_existing(args.corpus))
    lexicons = baselines.load_lexicons(args.lexicons)
    fx = baselines.FeatureExtractor(lexicons, config=baselines.FeatureConfig(pos=False))
    X = fx.matrix([i.statement for i in data])
    y = np.array([1 if getattr(i, "label", "positive") == "positive" else 0 for i in data])
    report = analysis.correlate_features(y, X, fx.names)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_correlations_csv(report, out / "correlations.csv")
    plots.plot_correlations(report.entries, out / "correlations.png")
    for name, r in report.top(5):
        print(f"{name}\t{r:.3f}")
    return EXIT_OK


def cmd_cluster_reasons(args) -> int:
    _need(args, "corpus", "embeddings", "out")
    texts = [ln.strip() for ln in _existing(args.corpus).read_text(encoding="utf-8").splitlines() if ln.strip()]
    vectors = enc.load_pretrained(_existing(args.embeddings))
    mat, kept, dropped = analysis.average_vectors([corpus.tokenize(t) for t in texts], vectors)
    if dropped:
        log.warning("dropped %d reason strings with no known tokens", dropped)
    if len(mat) < 3:
        raise ValueError("need at least 3 reason strings with known tokens to cluster")
    rep = analysis.cluster_sweep(mat, max_k=args.max_k, seed=resolve_seed(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_rows_csv([{"text": texts[i], "cluster": int(c)} for i, c in zip(kept, rep.assignments)],
                            out / "clusters.csv", ["text", "cluster"])
    analysis.write_rows_csv([{"k": k, "inertia": repr(v)} for k, v in sorted(rep.inertias.items())],
                            out / "inertia.csv", ["k", "inertia"])
    plots.plot_elbow([rep.inertias[k] for k in sorted(rep.inertias)], rep.k, out / "elbow.png")
    print(f"k={rep.k}\tclear_elbow={rep.clear_elbow}")
    return EXIT_OK


def cmd_distribution(args) -> int:
    _need(args, "corpus", "out")
    data = corpus.read_corpus(_existing(args.corpus))
    if not all(isinstance(i, corpus.ReasonInstance) for i in data):
        raise ValueError(f"{args.corpus}: every record needs a 'reason' field")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["reason", "rank", "group", "count"]
    for group_by in ("section", "topic"):
        rows = analysis.reason_distribution(data, group_by, args.top)
        analysis.write_rows_csv(rows, out / f"distribution_{group_by}.csv", cols)
    counts = analysis.reason_counts(data)
    analysis.write_rows_csv([{"reason": r, "count": c} for r, c in counts], out / "reason_counts.csv",
                            ["reason", "count"])
    plots.plot_reason_counts(counts, out / "reason_counts.png")
    for r, c in counts:
        print(f"{r}\t{c}")
    return EXIT_OK


# --------------------------------------------------------------------------
# declarative pipeline


@dataclass
class RunConfig:
    """Parsed pipeline config.  Paths are resolved against the config file."""

    articles: Path
    out: Path
    dataset: str = "FA"
    n_pos: int = 100
    n_neg: int = 100
    n_total: int = 20000
    variant: str = "RNNa_wS"
    train: dict = field(default_factory=dict)
    embeddings: Path | None = None
    lexicons: Path | None = None
    explain: int = 20
    seed: int | None = None


_SCHEMA = {
    "": {"seed", "out"},
    "build": {"dataset", "articles", "n_pos", "n_neg", "n_total"},
    "train": {"variant", "epochs", "batch", "hidden", "embed_dim", "learning_rate", "split", "embeddings",
              "max_len"},
    "evaluate": set(),
    "report": {"explain", "lexicons"},
}
_TRAIN_KEYS = {"epochs": "epochs", "batch": "batch_size", "hidden": "hidden_dim", "embed_dim": "embed_dim",
               "learning_rate": "learning_rate", "split": "split", "max_len": "max_len"}


def load_run_config(path, overrides=None) -> RunConfig:
    import tomli

    path = _existing(path)
    try:
        raw = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ValueError(f"{path}: {exc}") from None
    bad = []
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in _SCHEMA or key == "":
                bad.append(f"[{key}]")
                continue
            bad += [f"{key}.{k}" for k in val if k not in _SCHEMA[key]]
        elif key not in _SCHEMA[""]:
            bad.append(key)
    if bad:
        raise ValueError(f"{path}: unknown config keys: {', '.join(sorted(bad))}")
    build, train, report = raw.get("build", {}), dict(raw.get("train", {})), raw.get("report", {})
    if "articles" not in build:
        raise ValueError(f"{path}: missing required key build.articles")
    here = path.parent
    o = overrides or {}

    def rel(p):
        return None if p is None else Path(os.path.normpath(here / p))

    for flag in ("epochs", "batch", "hidden", "split", "embed_dim", "learning_rate"):
        if o.get(flag) is not None:
            train[flag] = o[flag]
    variant = _variant(o.get("variant") or train.pop("variant", "rnn-a-s"))
    if variant not in models.VARIANTS:
        raise ValueError(f"{path}: unknown variant {variant!r}")
    embeddings = o.get("embeddings") or rel(train.pop("embeddings", None))
    cfg = RunConfig(
        articles=rel(build["articles"]),
        out=Path(o["out"]) if o.get("out") else rel(raw.get("out", "run")),
        dataset=build.get("dataset", "FA"),
        n_pos=int(build.get("n_pos", 100)),
        n_neg=int(build.get("n_neg", 100)),
        n_total=int(build.get("n_total", 20000)),
        variant=variant,
        train={_TRAIN_KEYS[k]: v for k, v in train.items()},
        embeddings=Path(embeddings) if embeddings else None,
        lexicons=rel(report.get("lexicons")),
        explain=int(report.get("explain", 20)),
        seed=raw.get("seed"),
    )
    if cfg.dataset not in corpus.DATASETS:
        raise ValueError(f"{path}: build.dataset must be one of {corpus.DATASETS}")
    cfg.seed = resolve_seed(o.get("seed"), cfg.seed)
    models.TrainConfig(**cfg.train, seed=cfg.seed)  # validate early
    return cfg


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_key(name: str, params: dict, inputs: list) -> str:
    blob = json.dumps({"stage": name, "params": params,
                       "inputs": [_file_digest(p) for p in inputs if p is not None]},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _run_stage(root: Path, name: str, params: dict, inputs: list, force: bool, body) -> tuple[Path, bool]:
    """Run ``body(tmp_dir)`` unless a completed stage with the same key exists.
    Returns (stage dir, ran)."""
    key = _stage_key(name, params, inputs)
    final = root / f"{name}-{key}"
    marker = final / ".complete"
    if marker.exists() and not force:
        log.info("stage %s: cached (%s)", name, final.name)
        return final, False
    root.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{name}-", dir=root))
    try:
        body(tmp)
        (tmp / ".complete").write_text(key + "\n")
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    log.info("stage %s: ran (%s)", name, final.name)
    return final, True


def run_pipeline(config_path, force: bool = False, overrides=None) -> dict:
    """build -> train -> evaluate -> report; returns {stage: (dir, ran)}."""
    cfg = load_run_config(config_path, overrides)
    root = cfg.out
    status = {}
    _existing(cfg.articles)

    def build(d):
        articles = corpus.parse_articles(corpus.read_articles(cfg.articles))
        if cfg.dataset == "RND":
            data = corpus.build_rnd_dataset(articles, cfg.n_total, cfg.seed)
        elif cfg.dataset == "FA":
            data = corpus.build_fa_dataset(articles, cfg.n_pos, cfg.n_neg, cfg.seed)
        else:
            data = corpus.build_lqn_dataset(articles, cfg.n_pos, cfg.n_neg, cfg.seed)
        corpus.write_corpus(data, d / "corpus.jsonl")

    build_params = {"dataset": cfg.dataset, "n_pos": cfg.n_pos, "n_neg": cfg.n_neg, "n_total": cfg.n_total,
                    "seed": cfg.seed}
    bdir, ran = _run_stage(root, "build", build_params, [cfg.articles], force, build)
    status["build"] = (bdir, ran)
    corpus_path = bdir / "corpus.jsonl"

    tcfg = models.TrainConfig(**cfg.train, seed=cfg.seed)

    def train(d):
        _train(corpus_path, tcfg, cfg.variant, cfg.embeddings, d / "model.ckpt", d)

    train_params = {"variant": cfg.variant, **tcfg.__dict__}
    tdir, ran = _run_stage(root, "train", train_params, [corpus_path, cfg.embeddings], force, train)
    status["train"] = (tdir, ran)
    ckpt = tdir / "model.ckpt"
    data = corpus.read_corpus(corpus_path)
    held_out = models.split_instances(data, tcfg.split, tcfg.seed)
    held_out = [i for k, v in held_out.items() if k != "train" for i in v]

    def evaluate(d):
        model = models.load_checkpoint(ckpt)
        _write_eval(models.evaluate(model, held_out), d)

    edir, ran = _run_stage(root, "evaluate", {"split": tcfg.split, "seed": tcfg.seed}, [ckpt, corpus_path],
                           force, evaluate)
    status["evaluate"] = (edir, ran)

    def report(d):
        lexicons = baselines.load_lexicons(cfg.lexicons)
        fx = baselines.FeatureExtractor(lexicons, config=baselines.FeatureConfig(pos=False))
        X = fx.matrix([i.statement for i in data])
        y = np.array([1 if i.label == "positive" else 0 for i in data])
        corr = analysis.correlate_features(y, X, fx.names)
        analysis.write_correlations_csv(corr, d / "correlations.csv")
        plots.plot_correlations(corr.entries, d / "correlations.png")
        model = models.load_checkpoint(ckpt)
        if model.uses_attention and cfg.explain > 0:
            analysis.render_attention_report(model, [i.statement for i in held_out[: cfg.explain]],
                                             d / "attention.html")

    lex_files = sorted(Path(cfg.lexicons).glob("*.txt")) if cfg.lexicons else []
    rdir, ran = _run_stage(root, "report", {"explain": cfg.explain}, [ckpt, corpus_path, *lex_files], force,
                           report)
    status["report"] = (rdir, ran)
    summary = {k: v[0].name for k, v in status.items()}
    (root / "pipeline.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return status


def cmd_run_pipeline(args) -> int:
    overrides = {"seed": args.seed, "epochs": args.epochs, "batch": args.batch, "hidden": args.hidden,
                 "variant": args.variant, "split": args.split, "out": args.out, "embeddings": args.embeddings,
                 "learning_rate": args.lr}
    status = run_pipeline(args.config, force=args.force, overrides=overrides)
    for name, (d, ran) in status.items():
        print(f"{name}\t{'ran' if ran else 'cached'}\t{d}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="citeneed", description="Citation need and citation reason models.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", help="only errors")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def cmd(name, help, func, *flags):
        sp = sub.add_parser(name, help=help, description=help)
        sp.set_defaults(func=func)
        for f in flags:
            f(sp)
        return sp

    def corpus_(sp, nargs=None):
        sp.add_argument("--corpus", metavar="PATH", nargs=nargs)

    def seed(sp):
        sp.add_argument("--seed", type=int, metavar="N", help=f"default: ${SEED_ENV} or {DEFAULT_SEED}")

    def out(sp):
        sp.add_argument("--out", metavar="PATH")

    def ckpt(sp):
        sp.add_argument("--checkpoint", metavar="PATH")

    def emb(sp):
        sp.add_argument("--embeddings", metavar="PATH", help="pretrained vectors, text format")

    def training(sp):
        sp.add_argument("--epochs", type=_positive_int, metavar="N")
        sp.add_argument("--batch", type=_positive_int, metavar="N")
        sp.add_argument("--hidden", type=_positive_int, metavar="N")
        sp.add_argument("--split", choices=models.SPLITS)
        sp.add_argument("--lr", type=float, metavar="RATE", help="Adam learning rate (default 0.001)")

    def section(sp):
        sp.add_argument("--section", metavar="HEADING",
                        help="section heading for plain-text input ('' for the lead)")

    def variant(sp):
        sp.add_argument("--variant", choices=sorted(models.CLI_VARIANTS))

    sp = cmd("build-corpus", "Build an FA, LQN or RND statement corpus from an article dump.", cmd_build_corpus,
             corpus_, out, seed)
    sp.add_argument("dataset", choices=corpus.DATASETS)
    sp.add_argument("--n-pos", type=int, metavar="N")
    sp.add_argument("--n-neg", type=int, metavar="N")
    sp.add_argument("--n-total", type=int, default=20000, metavar="N", help="RND only (default 20000)")
    sp.add_argument("--workers", type=_positive_int, default=1, metavar="N")

    sp = cmd("train", "Train a citation-need model.", cmd_train, corpus_, variant, training, seed, emb, ckpt, out)
    sp.add_argument("--embed-dim", type=_positive_int, metavar="N", help="word embedding size (default 100)")
    cmd("evaluate", "Evaluate a checkpoint on a corpus.", cmd_evaluate, ckpt, corpus_, out)
    cmd("cross-eval", "Evaluate one need model on several corpora.", cmd_cross_eval, ckpt,
        lambda s: corpus_(s, "+"), out)
    cmd("predict", "Score statements (corpus JSONL or one statement per line).", cmd_predict, ckpt, corpus_, section, out)
    sp = cmd("explain", "Write an HTML attention report.", cmd_explain, ckpt, corpus_, section, out)
    sp.add_argument("--limit", type=_positive_int, metavar="N")
    sp = cmd("reason-train", "Fine-tune a citation-reason model from a need checkpoint.", cmd_reason_train,
             ckpt, corpus_, training, seed, out)
    sp.add_argument("--no-pretrain", action="store_true", help="same architecture, fresh encoder weights")
    cmd("reason-eval", "Per-reason precision, recall and F1.", cmd_reason_eval, ckpt, corpus_, out)
    sp = cmd("correlate", "Point-biserial correlation of lexicon and section features.", cmd_correlate,
             corpus_, out)
    sp.add_argument("--lexicons", metavar="DIR", help="directory of <category>.txt lexicons")
    sp = cmd("cluster-reasons", "k-means over averaged vectors of free-text reasons.", cmd_cluster_reasons,
             corpus_, emb, seed, out)
    sp.add_argument("--max-k", type=_positive_int, default=10, metavar="K")
    sp = cmd("distribution", "Reason counts by section and topic.", cmd_distribution, corpus_, out)
    sp.add_argument("--top", type=_positive_int, default=5, metavar="N")
    sp = cmd("run-pipeline", "Run build, train, evaluate and report from a TOML config.", cmd_run_pipeline,
             variant, training, seed, emb, out)
    sp.add_argument("config", metavar="CONFIG")
    sp.add_argument("--force", action="store_true", help="rerun stages even when cached")
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"citeneed {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, corpus.ParseError) as exc:
        print(f"citeneed {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - reported, not expected
        log.debug("internal error", exc_info=True)
        print(f"citeneed {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

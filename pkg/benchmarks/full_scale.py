"""Full-scale benchmark against the published reference numbers.

Not part of the test suite: the inputs are a Featured-Article statement
corpus built with ``citeneed build-corpus FA`` from a real dump, the public
Citation Reason corpus, and 100-dim pretrained word vectors.  None of them
ship with this repository.

    python benchmarks/full_scale.py --fa-corpus fa.jsonl --reasons reasons.csv \\
        --embeddings vectors.txt --out bench/

Every input is optional.  The script prints macro metrics in the layout of
the published tables, next to the reference targets, and checks one
property of the reason data itself: the three most frequent reasons are
historical, quotation and scientific.  Exit status is 1 when that check
fails, 0 otherwise.  Metric gaps are reported, never asserted.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from citeneed import analysis, baselines, corpus, encoder, models

# Reference values as published.
REFERENCE_TARGETS = {
    "need_f1": {"no citation": 0.902, "citation": 0.905, "average": 0.904},
    "section_correlation_fa": -0.621,
    "reason_pretrained": {
        "quotation": (0.44, 0.65, 0.52), "statistics": (0.20, 0.20, 0.20), "controversial": (0.12, 0.02, 0.04),
        "opinion": (0.20, 0.12, 0.15), "life": (0.13, 0.06, 0.09), "scientific": (0.62, 0.56, 0.59),
        "historical": (0.56, 0.67, 0.61), "other": (0.13, 0.05, 0.07), "avg.": (0.30, 0.29, 0.28),
    },
    "reason_no_pretraining": {
        "quotation": (0.43, 0.46, 0.45), "statistics": (0.28, 0.15, 0.19), "controversial": (0.04, 0.01, 0.02),
        "opinion": (0.19, 0.12, 0.15), "life": (0.30, 0.06, 0.10), "scientific": (0.54, 0.58, 0.56),
        "historical": (0.54, 0.74, 0.62), "other": (0.14, 0.08, 0.10), "avg.": (0.31, 0.28, 0.27),
    },
    "top_reasons": {"historical", "quotation", "scientific"},
}

PUBLISHED_SETUP = dict(epochs=10, batch_size=100, hidden_dim=100, embed_dim=100, seed=42, split="50/50")

log = logging.getLogger("full_scale")


# --------------------------------------------------------------------------
# reason corpus input


def _reason_name(raw: str) -> str:
    name = raw.strip().lower().replace("_", " ")
    if name in corpus.REASONS:
        return name
    for r in corpus.REASONS:
        if r in name.split():
            return r
    raise ValueError(f"unrecognised reason label {raw!r}")


def load_reasons(path) -> list[corpus.ReasonInstance]:
    """Corpus JSONL with reason labels, or a CSV/TSV with a header naming
    ``statement`` (or ``text``), ``reason`` and optionally ``section``."""
    path = Path(path)
    if path.suffix == ".jsonl":
        data = corpus.read_corpus(path)
        if not all(isinstance(i, corpus.ReasonInstance) for i in data):
            raise ValueError(f"{path}: every record needs a 'reason' field")
        return data
    with open(path, newline="", encoding="utf-8") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        dialect = csv.Sniffer().sniff(sample, delimiters=",\t")
        rows = list(csv.DictReader(fh, dialect=dialect))
    out = []
    for i, row in enumerate(rows):
        row = {k.strip().lower(): v for k, v in row.items() if k}
        text = (row.get("statement") or row.get("text") or "").strip()
        section = (row.get("section") or "").strip()
        if not text:
            continue
        st = corpus.Statement(f"row{i}", section, section.lower() in ("", "lead", "main_section"), text,
                              corpus.tokenize(text), True)
        out.append(corpus.ReasonInstance(st, _reason_name(row["reason"]), row.get("topic") or None))
    return out


# --------------------------------------------------------------------------
# checks and table formatting


def top_reasons_check(instances, k: int = 3) -> tuple[bool, list[tuple[str, int]]]:
    """Do the ``k`` most frequent reasons equal the published top three?"""
    counts = analysis.reason_counts(instances)
    top = counts[:k]
    return {r for r, _ in top} == REFERENCE_TARGETS["top_reasons"], top


def format_need_table(rows: dict[str, analysis.EvaluationReport]) -> str:
    """F1 per class and averaged, one row per model."""
    lines = [f"{'':<14}{'no citation':>13}{'citation':>10}{'average':>9}"]
    for name, rep in rows.items():
        lines.append(f"{name:<14}{rep.f1[0]:>13.3f}{rep.f1[1]:>10.3f}{rep.macro_f1:>9.3f}")
    t = REFERENCE_TARGETS["need_f1"]
    lines.append(f"{'reference':<14}{t['no citation']:>13.3f}{t['citation']:>10.3f}{t['average']:>9.3f}")
    return "\n".join(lines)


def format_reason_table(pre: analysis.EvaluationReport | None, scratch: analysis.EvaluationReport | None) -> str:
    """P/R/F1 per reason for the pretrained and from-scratch models."""

    def cells(rep, i):
        if rep is None:
            return f"{'-':>6}{'-':>6}{'-':>6}"
        if i is None:
            return f"{rep.macro_precision:>6.2f}{rep.macro_recall:>6.2f}{rep.macro_f1:>6.2f}"
        return f"{rep.precision[i]:>6.2f}{rep.recall[i]:>6.2f}{rep.f1[i]:>6.2f}"

    lines = [f"{'':<15}{'pre-trained':^18}{'no pre-training':^18}",
             f"{'':<15}" + f"{'P':>6}{'R':>6}{'F1':>6}" * 2]
    for i, r in enumerate(corpus.REASONS):
        lines.append(f"{r:<15}{cells(pre, i)}{cells(scratch, i)}")
    lines.append(f"{'avg.':<15}{cells(pre, None)}{cells(scratch, None)}")
    return "\n".join(lines)


def format_reference_reason_table() -> str:
    lines = [f"{'reference':<15}{'pre-trained':^18}{'no pre-training':^18}"]
    for r in list(corpus.REASONS) + ["avg."]:
        a = REFERENCE_TARGETS["reason_pretrained"][r]
        b = REFERENCE_TARGETS["reason_no_pretraining"][r]
        lines.append(f"{r:<15}" + "".join(f"{v:>6.2f}" for v in a + b))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# stages


def run_need(fa_path, embeddings, cfg, lexicons_dir=None):
    data = corpus.read_corpus(fa_path)
    model, _ = models.train_need(data, cfg, "RNNa_wS", embeddings)
    held = [i for k, v in models.split_instances(data, cfg.split, cfg.seed).items() if k != "train" for i in v]
    report = models.evaluate(model, held)
    fx = baselines.FeatureExtractor(baselines.load_lexicons(lexicons_dir),
                                    config=baselines.FeatureConfig(pos=False))
    y = np.array([1 if i.label == "positive" else 0 for i in data])
    corr = analysis.correlate_features(y, fx.matrix([i.statement for i in data]), fx.names)
    section = dict(corr.entries).get("section")
    return model, report, section, corr


def run_reasons(need_model, reasons, cfg):
    pre, _ = models.fine_tune_reason(need_model, reasons, cfg)
    scratch, _ = models.fine_tune_reason(need_model, reasons, cfg, reinit_encoder=True)
    held = models.split_instances(reasons, cfg.split, cfg.seed)["eval"]
    return models.evaluate(pre, held), models.evaluate(scratch, held)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--fa-corpus", metavar="PATH", help="FA statement corpus (JSONL)")
    p.add_argument("--reasons", metavar="PATH", help="Citation Reason corpus (JSONL, CSV or TSV)")
    p.add_argument("--embeddings", metavar="PATH", help="pretrained word vectors, text format")
    p.add_argument("--lexicons", metavar="DIR")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--epochs", type=int, default=PUBLISHED_SETUP["epochs"])
    p.add_argument("--hidden", type=int, default=PUBLISHED_SETUP["hidden_dim"])
    p.add_argument("--embed-dim", type=int, default=PUBLISHED_SETUP["embed_dim"])
    p.add_argument("--seed", type=int, default=PUBLISHED_SETUP["seed"])
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")

    status = 0
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    reasons = load_reasons(args.reasons) if args.reasons else None
    if reasons is not None:
        ok, top = top_reasons_check(reasons)
        print("reason counts: " + ", ".join(f"{r}={c}" for r, c in analysis.reason_counts(reasons)))
        print(f"top-3 reasons {[r for r, _ in top]}: {'PASS' if ok else 'FAIL'}")
        status = 0 if ok else 1

    pretrained = encoder.load_pretrained(args.embeddings) if args.embeddings else None
    embed_dim = len(next(iter(pretrained.values()))) if pretrained else args.embed_dim
    cfg = models.TrainConfig(epochs=args.epochs, batch_size=PUBLISHED_SETUP["batch_size"], hidden_dim=args.hidden,
                             embed_dim=embed_dim, seed=args.seed, split=PUBLISHED_SETUP["split"])
    if args.fa_corpus:
        model, report, section, corr = run_need(args.fa_corpus, pretrained, cfg, args.lexicons)
        print()
        print(format_need_table({"RNNa_wS": report}))
        ref = REFERENCE_TARGETS["section_correlation_fa"]
        print(f"\nSection r_pb: {section if section is None else round(section, 3)} (reference {ref})")
        if out:
            models.save_checkpoint(model, out / "need.ckpt")
            analysis.write_report_csv(report, out / "need_report.csv")
            analysis.write_correlations_csv(corr, out / "correlations.csv")
        if reasons is not None:
            pre, scratch = run_reasons(model, reasons, cfg)
            print()
            print(format_reason_table(pre, scratch))
            print()
            print(format_reference_reason_table())
            if out:
                analysis.write_report_csv(pre, out / "reason_pretrained.csv")
                analysis.write_report_csv(scratch, out / "reason_no_pretraining.csv")
    elif reasons is not None:
        log.info("no --fa-corpus given; skipping model training")
    return status


if __name__ == "__main__":
    sys.exit(main())

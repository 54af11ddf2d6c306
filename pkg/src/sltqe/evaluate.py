"""Scoring and classifier combination: log-linear posterior mixing,
threshold decisions, precision/recall/F reports, sweep curves, confusion
matrices on true errors, the two-step 3-class pipeline, and per-utterance
error-rate scatter data."""

import csv
import io
from dataclasses import dataclass

from .corpus import LABEL_ALPHABETS, THREE_CLASS, TWO_CLASS, LabelSeq
from .crf import CrfModel, marginals, viterbi

Distribution = dict[str, float]


@dataclass
class PrfReport:
    """Micro-averaged per-label precision/recall/F1 (percentages) plus
    their unweighted mean F-avg."""

    scheme: str
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    favg: float

    def csv_text(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["label", "precision", "recall", "f1"])
        for lab in self.f1:
            w.writerow(
                [lab, f"{self.precision[lab]:.2f}", f"{self.recall[lab]:.2f}", f"{self.f1[lab]:.2f}"]
            )
        w.writerow(["F-avg", "", "", f"{self.favg:.2f}"])
        return out.getvalue()


@dataclass
class ConfusionMatrix:
    """Row-normalized confusion (reference rows, prediction columns) over
    a designated token subset; empty rows are flagged rather than failed."""

    labels: list[str]
    rows: dict[str, dict[str, float]]
    row_counts: dict[str, int]
    empty: bool = False

    def csv_text(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["ref\\pred"] + self.labels)
        for lab in self.labels:
            w.writerow([lab] + [f"{self.rows[lab][c]:.2f}" for c in self.labels])
        return out.getvalue()

    def text_table(self) -> str:
        width = max(len(l) for l in self.labels + ["ref\\pred"]) + 2
        lines = ["".join(s.ljust(width) for s in ["ref\\pred"] + self.labels)]
        for lab in self.labels:
            cells = [f"{self.rows[lab][c]:.2f}" for c in self.labels]
            lines.append("".join(s.ljust(width) for s in [lab] + cells))
        if self.empty:
            lines.append("(empty subset)")
        return "\n".join(lines) + "\n"


def _check_distribution(d: Distribution, tol: float = 1e-6) -> None:
    total = sum(d.values())
    if abs(total - 1.0) > tol:
        raise ValueError(f"distribution sums to {total}, not 1")


def combine_posteriors(
    p_asr: list[Distribution],
    p_mt: list[Distribution],
    pairs: set[tuple[int, int]],
    alpha: float,
) -> list[Distribution]:
    """Log-linear combination of source and target G/B posteriors.

    Each target token takes the distribution of its aligned source token
    with minimal P(G) (pessimistic), or the uniform distribution when
    unaligned, raised to alpha and multiplied with the target posterior
    raised to 1 - alpha, then renormalized.  alpha 0 or 1 returns the
    target or projected source distribution unchanged.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    for d in p_asr:
        _check_distribution(d)
    for d in p_mt:
        _check_distribution(d)

    by_target: dict[int, list[int]] = {}
    for i, j in pairs:
        by_target.setdefault(j, []).append(i)
    projected = []
    for j in range(len(p_mt)):
        sources = by_target.get(j)
        if sources:
            pick = min(sources, key=lambda i: (p_asr[i].get("G", 0.0), i))
            projected.append(dict(p_asr[pick]))
        else:
            projected.append({"G": 0.5, "B": 0.5})

    if alpha == 0.0:
        return [dict(d) for d in p_mt]
    if alpha == 1.0:
        return projected

    combined = []
    for pa, pm in zip(projected, p_mt):
        mass = {q: pa[q] ** alpha * pm[q] ** (1.0 - alpha) for q in ("G", "B")}
        z = mass["G"] + mass["B"]
        combined.append({q: m / z for q, m in mass.items()})
    return combined


def threshold_decide(p_good: list[float], t: float) -> LabelSeq:
    """Label G where P(G) >= t, else B."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold {t} outside [0, 1]")
    return LabelSeq(
        scheme=TWO_CLASS, labels=["G" if p >= t else "B" for p in p_good]
    )


def prf(pred: list[LabelSeq], ref: list[LabelSeq], scheme: str) -> PrfReport:
    """Micro-averaged token-level precision/recall/F1 per label.

    A label never predicted (or never referenced) contributes F1 = 0
    through the P + R = 0 convention.
    """
    labels = LABEL_ALPHABETS[scheme]
    tp = {l: 0 for l in labels}
    n_pred = {l: 0 for l in labels}
    n_ref = {l: 0 for l in labels}
    if len(pred) != len(ref):
        raise ValueError("utterance count mismatch between prediction and reference")
    for ps, rs in zip(pred, ref):
        if len(ps) != len(rs):
            raise ValueError(
                f"length mismatch in prf: {len(ps)} predicted vs {len(rs)} reference"
            )
        for p, r in zip(ps.labels, rs.labels):
            n_pred[p] += 1
            n_ref[r] += 1
            if p == r:
                tp[p] += 1
    precision = {}
    recall = {}
    f1 = {}
    for l in labels:
        p = tp[l] / n_pred[l] if n_pred[l] else 0.0
        r = tp[l] / n_ref[l] if n_ref[l] else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        precision[l], recall[l], f1[l] = 100 * p, 100 * r, 100 * f
    favg = sum(f1.values()) / len(labels)
    return PrfReport(scheme=scheme, precision=precision, recall=recall, f1=f1, favg=favg)


def sweep(
    p_good: list[list[float]], ref: list[LabelSeq], grid: list[float]
) -> list[tuple[float, float, float, float, int]]:
    """(threshold, F_G, F_B, F-avg, predicted-B count) per grid point."""
    rows = []
    for t in grid:
        pred = [threshold_decide(pg, t) for pg in p_good]
        rep = prf(pred, ref, TWO_CLASS)
        n_b = sum(seq.labels.count("B") for seq in pred)
        rows.append((t, rep.f1["G"], rep.f1["B"], rep.favg, n_b))
    return rows


def sweep_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["threshold", "f_G", "f_B", "f_avg", "pred_B"])
    for t, fg, fb, fa, nb in rows:
        w.writerow([f"{t:.2f}", f"{fg:.2f}", f"{fb:.2f}", f"{fa:.2f}", nb])
    return out.getvalue()


def confusion_on_true_errors(
    pred: list[LabelSeq], ref: list[LabelSeq]
) -> ConfusionMatrix:
    """Confusion between the two error types, restricted to tokens where
    both the reference and the prediction are error labels."""
    errs = ("B_ASR", "B_MT")
    counts = {r: {p: 0 for p in errs} for r in errs}
    if len(pred) != len(ref):
        raise ValueError("utterance count mismatch")
    for ps, rs in zip(pred, ref):
        if ps.scheme != THREE_CLASS or rs.scheme != THREE_CLASS:
            raise ValueError("confusion requires three_class labels")
        if len(ps) != len(rs):
            raise ValueError("length mismatch in confusion")
        for p, r in zip(ps.labels, rs.labels):
            if r in errs and p in errs:
                counts[r][p] += 1
    rows = {}
    row_counts = {}
    empty = True
    for r in errs:
        total = sum(counts[r].values())
        row_counts[r] = total
        if total:
            empty = False
            rows[r] = {p: 100.0 * counts[r][p] / total for p in errs}
        else:
            rows[r] = {p: 0.0 for p in errs}
    return ConfusionMatrix(labels=list(errs), rows=rows, row_counts=row_counts, empty=empty)


def two_step_classify(
    model_2class: CrfModel, model_bsplit: CrfModel, instance
) -> LabelSeq:
    """Detect errors with the 2-class model, then type each predicted B
    by the B-splitter's marginal argmax over the two error labels."""
    stage1, _ = viterbi(model_2class, instance)
    if "B" not in stage1.labels:
        return LabelSeq(scheme=THREE_CLASS, labels=list(stage1.labels))
    post = marginals(model_bsplit, instance)
    out = []
    for i, lab in enumerate(stage1.labels):
        if lab == "G":
            out.append("G")
        else:
            p_asr = post[i].get("B_ASR", 0.0)
            p_mt = post[i].get("B_MT", 0.0)
            out.append("B_ASR" if p_asr >= p_mt else "B_MT")
    return LabelSeq(scheme=THREE_CLASS, labels=out)


def scatter_errors(labels3: list[LabelSeq]) -> list[tuple[str, float, float]]:
    """Per-utterance (utt_id, %B_ASR, %B_MT); zero-length utterances get
    zero rates."""
    rows = []
    for idx, seq in enumerate(labels3):
        if seq.scheme != THREE_CLASS:
            raise ValueError("scatter requires three_class labels")
        n = len(seq)
        if n == 0:
            rows.append((str(idx), 0.0, 0.0))
            continue
        rows.append(
            (
                str(idx),
                100.0 * seq.labels.count("B_ASR") / n,
                100.0 * seq.labels.count("B_MT") / n,
            )
        )
    return rows


def scatter_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["utt_id", "pct_B_ASR", "pct_B_MT"])
    for utt, a, m in rows:
        w.writerow([utt, f"{a:.2f}", f"{m:.2f}"])
    return out.getvalue()


def write_posteriors(path, per_utt: list[list[Distribution]], labels: list[str]) -> None:
    """CSV posterior file: one row per token, probability column per label."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["utt_id", "token_idx"] + [f"p_{l}" for l in labels])
        for utt_idx, dists in enumerate(per_utt):
            for tok_idx, d in enumerate(dists):
                w.writerow(
                    [utt_idx, tok_idx] + [f"{d[l]:.12g}" for l in labels]
                )


def read_posteriors(path) -> tuple[list[list[Distribution]], list[str]]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        labels = [h[2:] for h in header[2:]]
        per_utt: list[list[Distribution]] = []
        for row in reader:
            utt_idx = int(row[0])
            while len(per_utt) <= utt_idx:
                per_utt.append([])
            per_utt[utt_idx].append(
                {l: float(v) for l, v in zip(labels, row[2:])}
            )
    return per_utt, labels

"""Quality-label extraction: 2-class labels against the post-edition and
their split into 3-class (G / B_ASR / B_MT) labels.

Two splitting strategies are provided.  The alignment method looks at MT
labels through SLT-to-MT word alignments; the subtraction method looks
only at the edit-op kind between the SLT and MT outputs (errors absent
from MT are charged to the transcription stage).
"""

from dataclasses import dataclass, field
from pathlib import Path

from .align import EXACT, INSERTION, SUBSTITUTION, EditScript, ter_align
from .corpus import CUSTOM, LABEL_ALPHABETS, THREE_CLASS, TWO_CLASS, LabelSeq

# marks positions where the two splitting methods disagree; never written
# into plain 3-class label files
SENTINEL = "*"


@dataclass
class LabelStats:
    """Label counts and percentages over a token population.

    total_tokens is the denominator for percentages; for the intersection
    same/diff statistics it is the full corpus token count, so those two
    rows sum to 100 together rather than individually.
    """

    scheme: str
    counts: dict[str, int] = field(default_factory=dict)
    total_tokens: int = 0

    def pct(self, label: str) -> float:
        if self.total_tokens == 0:
            return 0.0
        return 100.0 * self.counts.get(label, 0) / self.total_tokens

    @property
    def pct_G(self) -> float:
        return self.pct("G")

    @property
    def pct_B(self) -> float:
        return self.pct("B")

    @property
    def pct_B_ASR(self) -> float:
        return self.pct("B_ASR")

    @property
    def pct_B_MT(self) -> float:
        return self.pct("B_MT")

    def csv_row(self, name: str) -> str:
        if self.scheme == TWO_CLASS:
            cols = [self.pct_G, self.pct_B]
        else:
            cols = [self.pct_G, self.pct_B_ASR, self.pct_B_MT]
        return ",".join([name] + [f"{c:.2f}" for c in cols])


def infer_2class(e_slt: list[str], e_ref: list[str]) -> LabelSeq:
    """Label each SLT token G/B from its TER alignment to the post-edition.

    Exact-aligned tokens are G; substituted or inserted tokens are B.
    Reference deletions have no hypothesis token and contribute nothing.
    """
    script = ter_align(e_slt, e_ref)
    labels = [""] * len(e_slt)
    for op in script.ops:
        if op.hyp_index is not None:
            labels[op.hyp_index] = "G" if op.kind == EXACT else "B"
    return LabelSeq(scheme=TWO_CLASS, labels=labels)


def disentangle_by_alignment(
    slt_labels: LabelSeq,
    mt_labels: LabelSeq,
    pairs: set[tuple[int, int]],
) -> LabelSeq:
    """Split B labels by SLT-to-MT word alignment (alignment method, m1).

    A bad SLT token aligned to at least one bad MT token is an MT error;
    any other bad token (unaligned, or aligned only to good MT tokens) is
    an ASR error.  G tokens pass through.
    """
    for j, i in pairs:
        if not (0 <= j < len(slt_labels)):
            raise ValueError(f"alignment pair ({j},{i}): SLT index out of range")
        if not (0 <= i < len(mt_labels)):
            raise ValueError(f"alignment pair ({j},{i}): MT index out of range")
    aligned_to_bad = {j for j, i in pairs if mt_labels.labels[i] == "B"}
    out = []
    for j, lab in enumerate(slt_labels.labels):
        if lab == "G":
            out.append("G")
        elif j in aligned_to_bad:
            out.append("B_MT")
        else:
            out.append("B_ASR")
    return LabelSeq(scheme=THREE_CLASS, labels=out)


def disentangle_by_subtraction(slt_labels: LabelSeq, script: EditScript) -> LabelSeq:
    """Split B labels by the SLT-vs-MT edit script (subtraction method, m2).

    A bad SLT token inserted or substituted relative to the MT output is
    an ASR error; a bad token that matches the MT output exactly is an MT
    error.  G tokens pass through.
    """
    kind_at: dict[int, str] = {}
    for op in script.ops:
        if op.hyp_index is not None:
            kind_at[op.hyp_index] = op.kind
    out = []
    for j, lab in enumerate(slt_labels.labels):
        if lab == "G":
            out.append("G")
            continue
        kind = kind_at.get(j)
        if kind is None:
            raise ValueError(f"edit script does not cover SLT index {j}")
        if kind in (INSERTION, SUBSTITUTION):
            out.append("B_ASR")
        else:
            out.append("B_MT")
    return LabelSeq(scheme=THREE_CLASS, labels=out)


def intersect_labels(
    m1: LabelSeq, m2: LabelSeq
) -> tuple[LabelSeq, LabelStats, LabelStats]:
    """Intersect two 3-class labelings of the same tokens.

    Positions where both agree keep the label; disagreements become the
    sentinel.  same/diff statistics use the full token count as the
    percentage denominator (the diff counts classify disagreements by the
    first labeling).
    """
    if m1.scheme != THREE_CLASS or m2.scheme != THREE_CLASS:
        raise ValueError("intersection requires two three_class label sequences")
    if len(m1) != len(m2):
        raise ValueError(f"length mismatch: {len(m1)} vs {len(m2)}")
    agreed = []
    same_counts: dict[str, int] = {}
    diff_counts: dict[str, int] = {}
    for a, b in zip(m1.labels, m2.labels):
        if a == b:
            agreed.append(a)
            same_counts[a] = same_counts.get(a, 0) + 1
        else:
            agreed.append(SENTINEL)
            diff_counts[a] = diff_counts.get(a, 0) + 1
    total = len(m1)
    return (
        LabelSeq(scheme=CUSTOM, labels=agreed),
        LabelStats(scheme=THREE_CLASS, counts=same_counts, total_tokens=total),
        LabelStats(scheme=THREE_CLASS, counts=diff_counts, total_tokens=total),
    )


def merge_stats(parts: list[LabelStats]) -> LabelStats:
    """Pool per-utterance or per-batch stats of one scheme."""
    if not parts:
        raise ValueError("no stats to merge")
    scheme = parts[0].scheme
    counts: dict[str, int] = {}
    total = 0
    for p in parts:
        if p.scheme != scheme:
            raise ValueError("cannot merge stats across schemes")
        total += p.total_tokens
        for k, v in p.counts.items():
            counts[k] = counts.get(k, 0) + v
    return LabelStats(scheme=scheme, counts=counts, total_tokens=total)


def label_stats(seqs: list[LabelSeq]) -> LabelStats:
    """Token-level label distribution over a list of sequences."""
    if not seqs:
        raise ValueError("no label sequences given")
    scheme = seqs[0].scheme
    counts: dict[str, int] = {}
    total = 0
    for seq in seqs:
        if seq.scheme != scheme:
            raise ValueError("mixed label schemes")
        for lab in seq.labels:
            counts[lab] = counts.get(lab, 0) + 1
            total += 1
    if total == 0:
        raise ValueError("zero tokens in label sequences")
    return LabelStats(scheme=scheme, counts=counts, total_tokens=total)


def load_masked_labels(path) -> tuple[list[LabelSeq], list[list[int]]]:
    """Read an intersection label file: 3-class labels plus sentinels.

    Returns three_class sequences (sentinel positions stored as G
    placeholders) and parallel 0/1 masks, 1 where the label is usable.
    """
    alphabet = LABEL_ALPHABETS[THREE_CLASS]
    seqs = []
    masks = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        labels = []
        mask = []
        for col, tok in enumerate(line.split(), 1):
            if tok == SENTINEL:
                labels.append("G")
                mask.append(0)
            elif tok in alphabet:
                labels.append(tok)
                mask.append(1)
            else:
                raise ValueError(
                    f"{path}:{lineno}: unknown label {tok!r} at column {col}"
                )
        seqs.append(LabelSeq(scheme=THREE_CLASS, labels=labels))
        masks.append(mask)
    return seqs, masks

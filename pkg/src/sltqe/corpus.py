"""Quintuplet corpus and label-file I/O.

A corpus directory holds five parallel UTF-8 text files, one utterance per
line, tokens separated by spaces.  Empty lines are legal and mean empty
utterances.
"""

from dataclasses import dataclass
from pathlib import Path

TWO_CLASS = "two_class"
THREE_CLASS = "three_class"
CUSTOM = "custom"

LABEL_ALPHABETS: dict[str, tuple[str, ...]] = {
    TWO_CLASS: ("G", "B"),
    THREE_CLASS: ("G", "B_ASR", "B_MT"),
}

# side name -> file name inside a corpus directory
CORPUS_FILES = {
    "f_hyp": "f_hyp.txt",
    "f_ref": "f_ref.txt",
    "e_mt": "mt_hyp.txt",
    "e_slt": "slt_hyp.txt",
    "e_ref": "e_ref.txt",
}


class CorpusFormatError(ValueError):
    """A corpus or label file violates the expected layout."""


@dataclass
class Quintuplet:
    """One utterance: ASR hypothesis, verbatim transcript, MT output,
    SLT output and post-edition, all tokenized."""

    f_hyp: list[str]
    f_ref: list[str]
    e_mt: list[str]
    e_slt: list[str]
    e_ref: list[str]
    utt_id: str

    def side(self, name: str) -> list[str]:
        if name not in CORPUS_FILES:
            raise ValueError(f"unknown corpus side {name!r}")
        return getattr(self, name)


@dataclass
class LabelSeq:
    """Per-token labels under a scheme (two_class or three_class).

    The scheme CUSTOM skips alphabet validation; it is used for derived
    label sets such as the two-step B-splitter's {B_ASR, B_MT}.
    """

    scheme: str
    labels: list[str]

    def __post_init__(self):
        if self.scheme == CUSTOM:
            return
        alphabet = LABEL_ALPHABETS.get(self.scheme)
        if alphabet is None:
            raise ValueError(f"unknown label scheme {self.scheme!r}")
        for i, lab in enumerate(self.labels):
            if lab not in alphabet:
                raise ValueError(
                    f"label {lab!r} at position {i} not in {self.scheme} alphabet"
                )

    def __len__(self) -> int:
        return len(self.labels)


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(f"{path.name}: not valid UTF-8 ({exc})") from exc
    return text.splitlines()


def load_corpus(directory) -> list[Quintuplet]:
    """Load the five parallel files of a corpus directory.

    Returns one Quintuplet per line, in file order; utt_id is the 0-based
    line index as decimal text.  Raises CorpusFormatError on missing files,
    undecodable bytes, or line-count mismatches (the message reports every
    file's count).
    """
    directory = Path(directory)
    lines: dict[str, list[str]] = {}
    for side, fname in CORPUS_FILES.items():
        path = directory / fname
        if not path.is_file():
            raise CorpusFormatError(f"missing corpus file {fname} in {directory}")
        lines[side] = _read_lines(path)

    counts = {CORPUS_FILES[s]: len(v) for s, v in lines.items()}
    if len(set(counts.values())) > 1:
        detail = ", ".join(f"{name}={n}" for name, n in counts.items())
        raise CorpusFormatError(f"line counts differ across corpus files: {detail}")

    corpus = []
    for i in range(len(lines["f_hyp"])):
        corpus.append(
            Quintuplet(
                f_hyp=lines["f_hyp"][i].split(),
                f_ref=lines["f_ref"][i].split(),
                e_mt=lines["e_mt"][i].split(),
                e_slt=lines["e_slt"][i].split(),
                e_ref=lines["e_ref"][i].split(),
                utt_id=str(i),
            )
        )
    return corpus


def save_corpus(corpus: list[Quintuplet], directory) -> None:
    """Write a corpus back to the five-file layout (LF line endings)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for side, fname in CORPUS_FILES.items():
        body = "".join(" ".join(q.side(side)) + "\n" for q in corpus)
        (directory / fname).write_text(body, encoding="utf-8")


def load_labels(path, scheme: str) -> list[LabelSeq]:
    """Parse a label file: one line per utterance, space-separated labels.

    Rejects tokens outside the scheme's alphabet, reporting 1-based line
    and column numbers.
    """
    alphabet = LABEL_ALPHABETS.get(scheme)
    if alphabet is None:
        raise ValueError(f"unknown label scheme {scheme!r}")
    path = Path(path)
    seqs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        labels = line.split()
        for col, tok in enumerate(labels, start=1):
            if tok not in alphabet:
                raise CorpusFormatError(
                    f"{path.name}:{lineno}: unknown label {tok!r} at column {col}"
                    f" for scheme {scheme}"
                )
        seqs.append(LabelSeq(scheme=scheme, labels=labels))
    return seqs


def save_labels(seqs: list[LabelSeq], path) -> None:
    body = "".join(" ".join(s.labels) + "\n" for s in seqs)
    Path(path).write_text(body, encoding="utf-8")


def validate_labels(
    corpus: list[Quintuplet], labels: list[LabelSeq], target: str = "e_slt"
) -> list[tuple[str, int, int]]:
    """Check label lengths against the targeted token sequence.

    Returns one (utt_id, token_count, label_count) entry per inconsistent
    utterance; an empty list means fully consistent.  A mismatch in the
    number of utterances is reported as a final ("*", corpus_len, label_len)
    entry.
    """
    report = []
    for q, seq in zip(corpus, labels):
        n_tok = len(q.side(target))
        if n_tok != len(seq):
            report.append((q.utt_id, n_tok, len(seq)))
    if len(corpus) != len(labels):
        report.append(("*", len(corpus), len(labels)))
    return report

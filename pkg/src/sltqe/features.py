"""Per-token attribute extraction and CRF instance construction.

Attributes are categorical: continuous values (LM log-probs, lexical
probabilities, ASR confidences) are clipped and bucketed so the CRF can
use plain indicator features.  Source-side attributes are projected onto
target tokens through a word alignment, with unaligned targets receiving
a distinguished no-source value.
"""

import math
import re
from dataclasses import dataclass, field
from importlib import resources

from .align import alignment_pairs, edit_align
from .corpus import LabelSeq, Quintuplet, TWO_CLASS
from .labeling import SENTINEL
from .lexmodel import LexTable, NgramLM, ibm1_align

ASR_ONLY = "asr-only"
MT_ONLY = "mt-only"
JOINT = "joint"
MODES = (ASR_ONLY, MT_ONLY, JOINT)

NO_SOURCE = "NOSRC"
PROJECT_PREFIX = "asr_"

MT_ATTRS = ("w", "lw", "punct", "num", "stop", "len", "pos", "tlm", "tlmlev", "lex", "srcword")
ASR_ATTRS = ("slm", "slmlev", "len", "num", "punct", "pos", "conf")

_NUMERIC_RE = re.compile(r"[0-9][0-9.,%-]*")

AttrMap = list[dict[str, object]]


@dataclass
class FeatureConfig:
    """Enabled attribute names plus bucketing parameters."""

    mt_attrs: tuple[str, ...] = MT_ATTRS
    asr_attrs: tuple[str, ...] = ASR_ATTRS
    buckets: int = 10
    lm_clip: tuple[float, float] = (-8.0, 0.0)
    stopword_lang: str = "en"
    align: str = "ibm1"  # source->target projection alignment: ibm1 | edit

    def stopwords(self) -> set[str]:
        name = f"stopwords_{self.stopword_lang}.txt"
        text = resources.files("sltqe.data").joinpath(name).read_text(encoding="utf-8")
        return {w for w in text.split() if w}

    def serialize(self) -> str:
        lines = [
            f"buckets {self.buckets}",
            f"lm_clip {self.lm_clip[0]:g} {self.lm_clip[1]:g}",
            f"stopwords {self.stopword_lang}",
            f"align {self.align}",
        ]
        lines += [f"mt_attr {a}" for a in self.mt_attrs]
        lines += [f"asr_attr {a}" for a in self.asr_attrs]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "FeatureConfig":
        cfg = cls(mt_attrs=(), asr_attrs=())
        mt, asr = [], []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, *rest = line.split()
            if key == "buckets":
                cfg.buckets = int(rest[0])
            elif key == "lm_clip":
                cfg.lm_clip = (float(rest[0]), float(rest[1]))
            elif key == "stopwords":
                cfg.stopword_lang = rest[0]
            elif key == "align":
                cfg.align = rest[0]
            elif key == "mt_attr":
                mt.append(rest[0])
            elif key == "asr_attr":
                asr.append(rest[0])
            else:
                raise ValueError(f"feature config line {lineno}: unknown key {key!r}")
        cfg.mt_attrs = tuple(mt) or MT_ATTRS
        cfg.asr_attrs = tuple(asr) or ASR_ATTRS
        unknown = (set(cfg.mt_attrs) - set(MT_ATTRS)) | (set(cfg.asr_attrs) - set(ASR_ATTRS))
        if unknown:
            raise ValueError(f"unknown attribute names: {sorted(unknown)}")
        return cfg


@dataclass
class Instance:
    """A CRF training/decoding unit: per-token attributes, optional
    labels, and a per-token mask (0 excludes the token from the loss)."""

    attrs: AttrMap
    labels: LabelSeq | None = None
    mask: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.mask:
            self.mask = [1] * len(self.attrs)
        if self.labels is not None and len(self.labels) != len(self.attrs):
            raise ValueError(
                f"labels/attrs length mismatch: {len(self.labels)} vs {len(self.attrs)}"
            )
        if len(self.mask) != len(self.attrs):
            raise ValueError("mask/attrs length mismatch")

    def __len__(self) -> int:
        return len(self.attrs)


def bucket(value: float, lo: float, hi: float, n: int) -> int:
    """Equal-width bin index in 0..n-1 after clipping to [lo, hi]."""
    v = min(max(value, lo), hi)
    idx = int((v - lo) / (hi - lo) * n)
    return min(idx, n - 1)


def is_punct(token: str) -> bool:
    return len(token) > 0 and not any(c.isalnum() for c in token)


def is_numeric(token: str) -> bool:
    return _NUMERIC_RE.fullmatch(token) is not None


def position_bin(index: int, length: int) -> int:
    return int(index / length * 10)


def extract_mt_features(
    q: Quintuplet, target_lm: NgramLM, lex: LexTable, config: FeatureConfig
) -> AttrMap:
    """Attributes over the SLT output tokens (see MT_ATTRS)."""
    if target_lm is None or lex is None:
        raise ValueError("target LM and lexical table are required for MT features")
    tokens = q.e_slt
    lo, hi = config.lm_clip
    scores = target_lm.score(tokens)
    links = ibm1_align(lex, q.f_hyp, tokens)
    src_of = {}
    for i, j in links:
        src_of[j] = q.f_hyp[i]
    stop = config.stopwords()

    out: AttrMap = []
    n = len(tokens)
    for j, tok in enumerate(tokens):
        lexmax = max((lex.prob(tok, fw) for fw in q.f_hyp), default=0.0)
        lex_log = -99.0 if lexmax <= 0 else math.log10(lexmax)
        full = {
            "w": tok,
            "lw": tok.lower(),
            "punct": int(is_punct(tok)),
            "num": int(is_numeric(tok)),
            "stop": int(tok.lower() in stop),
            "len": len(tok),
            "pos": position_bin(j, n),
            "tlm": bucket(scores[j][0], lo, hi, config.buckets),
            "tlmlev": scores[j][1],
            "lex": bucket(lex_log, lo, hi, config.buckets),
            "srcword": src_of.get(j, NO_SOURCE),
        }
        out.append({k: full[k] for k in config.mt_attrs})
    return out


def extract_asr_features(
    f_hyp: list[str],
    source_lm: NgramLM,
    asr_conf: list[float] | None,
    config: FeatureConfig,
) -> AttrMap:
    """Attributes over the ASR hypothesis tokens (see ASR_ATTRS).

    The confidence attribute is present only when confidences are
    supplied, and then uniformly for every token.
    """
    if source_lm is None:
        raise ValueError("source LM is required for ASR features")
    if asr_conf is not None:
        if len(asr_conf) != len(f_hyp):
            raise ValueError(
                f"confidence length {len(asr_conf)} != token count {len(f_hyp)}"
            )
        for c in asr_conf:
            if not (0.0 <= c <= 1.0):
                raise ValueError(f"confidence {c} outside [0, 1]")
    lo, hi = config.lm_clip
    scores = source_lm.score(f_hyp)
    out: AttrMap = []
    n = len(f_hyp)
    for i, tok in enumerate(f_hyp):
        full = {
            "slm": bucket(scores[i][0], lo, hi, config.buckets),
            "slmlev": scores[i][1],
            "len": len(tok),
            "num": int(is_numeric(tok)),
            "punct": int(is_punct(tok)),
            "pos": position_bin(i, n),
        }
        attrs = {k: full[k] for k in config.asr_attrs if k != "conf"}
        if asr_conf is not None and "conf" in config.asr_attrs:
            attrs["conf"] = bucket(asr_conf[i], 0.0, 1.0, config.buckets)
        out.append(attrs)
    return out


def project_source_attrs(
    src: AttrMap, pairs: set[tuple[int, int]], target_len: int
) -> AttrMap:
    """Copy each target token's aligned source attributes, prefixed.

    Multi-aligned targets take the source token with the lowest LM
    log-prob bucket (pessimistic; ties by smaller index); unaligned
    targets get the no-source value for every projected attribute.
    """
    by_target: dict[int, list[int]] = {}
    for i, j in pairs:
        if not (0 <= i < len(src)):
            raise ValueError(f"alignment pair ({i},{j}): source index out of range")
        if not (0 <= j < target_len):
            raise ValueError(f"alignment pair ({i},{j}): target index out of range")
        by_target.setdefault(j, []).append(i)

    names = list(src[0].keys()) if src else []
    out: AttrMap = []
    for j in range(target_len):
        sources = by_target.get(j)
        if not sources:
            out.append({PROJECT_PREFIX + k: NO_SOURCE for k in names})
            continue
        pick = min(sources, key=lambda i: (src[i].get("slm", 0), i))
        out.append({PROJECT_PREFIX + k: v for k, v in src[pick].items()})
    return out


@dataclass
class FeatureModels:
    """Trained models needed by the extractors."""

    source_lm: NgramLM | None = None
    target_lm: NgramLM | None = None
    lex: LexTable | None = None


def source_target_pairs(
    q: Quintuplet, models: FeatureModels, config: FeatureConfig
) -> set[tuple[int, int]]:
    """f_hyp <-> e_slt alignment used for projection and combination."""
    if config.align == "edit":
        script = edit_align(q.e_slt, q.f_hyp)
        return {(r, h) for h, r in alignment_pairs(script)}
    if models.lex is None:
        raise ValueError("IBM-1 alignment requested but no lexical table given")
    return ibm1_align(models.lex, q.f_hyp, q.e_slt)


def asr_reference_labels(q: Quintuplet) -> LabelSeq:
    """Source-side 2-class labels: G where the ASR hypothesis token is
    Exact against the verbatim transcript."""
    script = edit_align(q.f_hyp, q.f_ref)
    labels = ["B"] * len(q.f_hyp)
    for op in script.ops:
        if op.hyp_index is not None and op.kind == "Exact":
            labels[op.hyp_index] = "G"
    return LabelSeq(scheme=TWO_CLASS, labels=labels)


def build_instances(
    corpus: list[Quintuplet],
    labels: list[LabelSeq] | None,
    config: FeatureConfig,
    models: FeatureModels,
    mode: str = JOINT,
    masks: list[list[int]] | None = None,
    asr_conf: list[list[float]] | None = None,
) -> list[Instance]:
    """Turn quintuplets into CRF instances for the requested mode.

    joint: MT attributes over e_slt plus projected ASR attributes.
    mt-only: MT attributes alone.  asr-only: ASR attributes over f_hyp
    (labels, when given, must then cover f_hyp).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if labels is not None and len(labels) != len(corpus):
        raise ValueError("labels/corpus utterance count mismatch")
    instances = []
    for idx, q in enumerate(corpus):
        conf = asr_conf[idx] if asr_conf is not None else None
        if mode == ASR_ONLY:
            attrs = extract_asr_features(q.f_hyp, models.source_lm, conf, config)
        else:
            attrs = extract_mt_features(q, models.target_lm, models.lex, config)
            if mode == JOINT:
                src = extract_asr_features(q.f_hyp, models.source_lm, conf, config)
                pairs = source_target_pairs(q, models, config)
                projected = project_source_attrs(src, pairs, len(q.e_slt))
                attrs = [dict(a, **p) for a, p in zip(attrs, projected)]
        seq = labels[idx] if labels is not None else None
        mask = list(masks[idx]) if masks is not None else []
        instances.append(Instance(attrs=attrs, labels=seq, mask=mask))
    return instances


def instance_to_columns(inst: Instance) -> list[str]:
    """Conventional CRF column format: attribute values then the label
    (sentinel where masked), one token per line."""
    lines = []
    for i, attrs in enumerate(inst.attrs):
        cols = [str(v) for v in attrs.values()]
        if inst.labels is not None:
            cols.append(inst.labels.labels[i] if inst.mask[i] else SENTINEL)
        lines.append("\t".join(cols))
    return lines

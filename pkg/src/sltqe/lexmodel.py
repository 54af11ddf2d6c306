"""Statistical models backing feature extraction: a backoff n-gram
language model with Witten-Bell discounting and an IBM Model 1 lexical
translation table trained by EM.

The LM predicts exactly the tokens it is given: sentence starts are
padded with a begin symbol for context, and no end-of-sentence event is
modeled, so per-token scores always cover the input one to one.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

BOS = "<s>"
UNK = "<unk>"
NULL = "<null>"

_LOG10_FLOOR = -99.0


class ModelFormatError(ValueError):
    """A serialized model file is malformed."""


@dataclass
class NgramLM:
    """Backoff n-gram model: log10 probabilities for seen n-grams plus
    log10 backoff weights for seen contexts.

    probs maps (w,) / (ctx..., w) tuples to log10 probability; backoffs
    maps context tuples to log10 weight.  Unseen contexts back off with
    weight 1 (log 0).
    """

    order: int
    probs: dict[tuple[str, ...], float] = field(default_factory=dict)
    backoffs: dict[tuple[str, ...], float] = field(default_factory=dict)
    vocab: set[str] = field(default_factory=set)

    def logprob(self, word: str, context: tuple[str, ...]) -> tuple[float, int]:
        """Log10 probability of word after context, and the backoff level
        (0 = full-order n-gram matched, order-1 = unigram)."""
        context = context[-(self.order - 1) :] if self.order > 1 else ()
        acc = 0.0
        while True:
            ngram = context + (word,)
            if ngram in self.probs:
                return acc + self.probs[ngram], self.order - len(ngram)
            if not context:
                # out-of-vocabulary: the reserved unknown symbol
                return acc + self.probs[(UNK,)], self.order - 1
            acc += self.backoffs.get(context, 0.0)
            context = context[1:]

    def score(self, tokens: list[str]) -> list[tuple[float, int]]:
        """Per-token (log10 prob, backoff level) with begin-padding."""
        out = []
        history = [BOS] * (self.order - 1)
        for tok in tokens:
            out.append(self.logprob(tok, tuple(history)))
            history = (history + [tok])[-(self.order - 1) :] if self.order > 1 else []
        return out

    def save(self, path) -> None:
        """Write the conventional backoff-LM text format."""
        by_order: dict[int, list[tuple[str, ...]]] = {
            n: [] for n in range(1, self.order + 1)
        }
        for ngram in self.probs:
            by_order[len(ngram)].append(ngram)
        lines = ["\\data\\"]
        for n in range(1, self.order + 1):
            # the begin symbol gets a dummy unigram entry so its backoff
            # weight has a place to live
            extra = 1 if n == 1 and any(len(c) == 1 and c[0] == BOS for c in self.backoffs) else 0
            lines.append(f"ngram {n}={len(by_order[n]) + extra}")
        for n in range(1, self.order + 1):
            lines.append("")
            lines.append(f"\\{n}-grams:")
            entries = sorted(by_order[n])
            if n == 1 and (BOS,) in self.backoffs:
                entries = sorted(entries + [(BOS,)])
            for ngram in entries:
                lp = self.probs.get(ngram, _LOG10_FLOOR)
                text = " ".join(ngram)
                if n < self.order and ngram in self.backoffs:
                    lines.append(f"{lp:.12g}\t{text}\t{self.backoffs[ngram]:.12g}")
                else:
                    lines.append(f"{lp:.12g}\t{text}")
        lines.append("")
        lines.append("\\end\\")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NgramLM":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        order = 0
        probs: dict[tuple[str, ...], float] = {}
        backoffs: dict[tuple[str, ...], float] = {}
        section = None
        for lineno, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line == "\\data\\":
                continue
            if line == "\\end\\":
                break
            if line.startswith("ngram "):
                try:
                    n = int(line[6:].split("=")[0])
                except ValueError as exc:
                    raise ModelFormatError(f"line {lineno}: bad ngram count") from exc
                order = max(order, n)
                continue
            if line.endswith("-grams:"):
                section = int(line[1:].split("-")[0])
                continue
            parts = line.split("\t")
            if section is None or len(parts) not in (2, 3):
                raise ModelFormatError(f"line {lineno}: unparseable entry {line!r}")
            ngram = tuple(parts[1].split())
            if len(ngram) != section:
                raise ModelFormatError(
                    f"line {lineno}: {len(ngram)}-gram in \\{section}-grams block"
                )
            lp = float(parts[0])
            if not (len(ngram) == 1 and ngram[0] == BOS and lp <= _LOG10_FLOOR):
                probs[ngram] = lp
            if len(parts) == 3:
                backoffs[ngram] = float(parts[2])
        if order == 0:
            raise ModelFormatError("no ngram counts found in header")
        vocab = {g[0] for g in probs if len(g) == 1 and g[0] != UNK}
        return cls(order=order, probs=probs, backoffs=backoffs, vocab=vocab)


def train_ngram_lm(sentences: list[list[str]], order: int) -> NgramLM:
    """Train a Witten-Bell-discounted backoff model of the given order.

    For a context h with c(h) events over T(h) distinct continuations,
    seen n-grams get c(h,w) / (c(h) + T(h)) and the held-out mass
    T(h) / (c(h) + T(h)) is spread over lower orders via the backoff
    weight.  At the unigram level the held-out mass goes to the unknown
    symbol.
    """
    if not (1 <= order <= 5):
        raise ValueError(f"order must be in 1..5, got {order}")
    if not sentences or all(len(s) == 0 for s in sentences):
        raise ValueError("empty corpus")

    counts: dict[tuple[str, ...], int] = {}
    for sent in sentences:
        padded = [BOS] * (order - 1) + list(sent)
        for t in range(order - 1, len(padded)):
            for n in range(1, order + 1):
                counts[tuple(padded[t - n + 1 : t + 1])] = (
                    counts.get(tuple(padded[t - n + 1 : t + 1]), 0) + 1
                )

    # context totals and continuation-type counts
    ctx_total: dict[tuple[str, ...], int] = {}
    ctx_types: dict[tuple[str, ...], int] = {}
    for ngram, c in counts.items():
        ctx = ngram[:-1]
        ctx_total[ctx] = ctx_total.get(ctx, 0) + c
        ctx_types[ctx] = ctx_types.get(ctx, 0) + 1

    probs: dict[tuple[str, ...], float] = {}
    for ngram, c in counts.items():
        ctx = ngram[:-1]
        probs[ngram] = math.log10(c / (ctx_total[ctx] + ctx_types[ctx]))
    n_uni = ctx_total[()]
    t_uni = ctx_types[()]
    probs[(UNK,)] = math.log10(t_uni / (n_uni + t_uni))

    # linear-space backoff query against what has been built so far;
    # contexts are filled bottom-up so shorter contexts are always ready
    def p_bo(word: str, ctx: tuple[str, ...], backoffs) -> float:
        ngram = ctx + (word,)
        if ngram in probs:
            return 10.0 ** probs[ngram]
        if not ctx:
            return 10.0 ** probs[(UNK,)]
        w = 10.0 ** backoffs[ctx] if ctx in backoffs else 1.0
        return w * p_bo(word, ctx[1:], backoffs)

    backoffs: dict[tuple[str, ...], float] = {}
    contexts_by_len: dict[int, list[tuple[str, ...]]] = {}
    for ctx in ctx_total:
        if 1 <= len(ctx) <= order - 1:
            contexts_by_len.setdefault(len(ctx), []).append(ctx)
    for length in sorted(contexts_by_len):
        for ctx in contexts_by_len[length]:
            held_out = ctx_types[ctx] / (ctx_total[ctx] + ctx_types[ctx])
            seen = [g[-1] for g in counts if len(g) == length + 1 and g[:-1] == ctx]
            lower_mass = sum(p_bo(w, ctx[1:], backoffs) for w in seen)
            backoffs[ctx] = math.log10(held_out / (1.0 - lower_mass))

    vocab = {g[0] for g in counts if len(g) == 1 and g[0] != BOS}
    return NgramLM(order=order, probs=probs, backoffs=backoffs, vocab=vocab)


def lm_score(lm: NgramLM, tokens: list[str]) -> list[tuple[float, int]]:
    """Per-token (log10 prob, backoff level); see NgramLM.score."""
    return lm.score(tokens)


@dataclass
class LexTable:
    """IBM-1 lexical table t(e|f), including the empty-source token."""

    t: dict[tuple[str, str], float] = field(default_factory=dict)
    loglik_history: list[float] = field(default_factory=list)

    def prob(self, e: str, f: str) -> float:
        return self.t.get((f, e), 0.0)

    def save(self, path) -> None:
        lines = [f"{f}\t{e}\t{p:.12g}" for (f, e), p in sorted(self.t.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LexTable":
        table: dict[tuple[str, str], float] = {}
        for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ModelFormatError(f"line {lineno}: expected 'f\\te\\tprob'")
            table[(parts[0], parts[1])] = float(parts[2])
        return cls(t=table)


def train_ibm1(
    pairs: list[tuple[list[str], list[str]]], iterations: int
) -> LexTable:
    """IBM Model 1 EM from uniform initialization.

    The empty-source token is prepended to every source sentence.  The
    per-iteration corpus log-likelihood (natural log, computed with the
    parameters entering the iteration) is recorded on the result.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    usable = [(f, e) for f, e in pairs if e]
    if not pairs or not usable:
        raise ValueError("empty corpus")

    e_vocab = {w for _, e in usable for w in e}
    uniform = 1.0 / len(e_vocab)
    t: dict[tuple[str, str], float] = {}
    history = []

    for _ in range(iterations):
        counts: dict[tuple[str, str], float] = {}
        totals: dict[str, float] = {}
        loglik = 0.0
        for f_sent, e_sent in usable:
            src = [NULL] + list(f_sent)
            for e in e_sent:
                ps = [t.get((f, e), uniform) if t else uniform for f in src]
                denom = sum(ps)
                loglik += math.log(denom) - math.log(len(src))
                for f, p in zip(src, ps):
                    share = p / denom
                    counts[(f, e)] = counts.get((f, e), 0.0) + share
                    totals[f] = totals.get(f, 0.0) + share
        history.append(loglik)
        t = {(f, e): c / totals[f] for (f, e), c in counts.items()}

    return LexTable(t=t, loglik_history=history)


def ibm1_align(
    table: LexTable, f: list[str], e: list[str]
) -> set[tuple[int, int]]:
    """Greedy argmax links: target j links to the best source i when that
    beats the empty-source probability; ties go to the smallest i."""
    pairs = set()
    for j, ew in enumerate(e):
        null_p = table.prob(ew, NULL)
        best_i = None
        best_p = 0.0
        for i, fw in enumerate(f):
            p = table.prob(ew, fw)
            if p > best_p:
                best_p = p
                best_i = i
        if best_i is not None and best_p > null_p:
            pairs.add((best_i, j))
    return pairs

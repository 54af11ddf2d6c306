"""Edit-distance alignments: plain Levenshtein scripts, TER with block
shifts, corpus WER, and word-alignment pair extraction."""

from dataclasses import dataclass, field
from typing import NamedTuple

EXACT = "Exact"
SUBSTITUTION = "Substitution"
INSERTION = "Insertion"
DELETION = "Deletion"

# largest hypothesis block considered for a TER shift
MAX_SHIFT_BLOCK = 10


class EditOp(NamedTuple):
    """One edit operation.  Insertion carries only a hypothesis index
    (extra hypothesis token), Deletion only a reference index."""

    kind: str
    hyp_index: int | None
    ref_index: int | None


@dataclass
class EditScript:
    """Ordered edit operations aligning a hypothesis to a reference.

    cost counts substitutions, insertions and deletions, plus one per
    applied block shift in TER mode.  In TER mode hyp_index values refer
    to the ORIGINAL (pre-shift) hypothesis positions.
    """

    ops: list[EditOp] = field(default_factory=list)
    cost: int = 0
    shifts: int = 0


def _edit_cost_row(hyp: list[str], ref: list[str]) -> int:
    # one-row DP, cost only; used by the shift search
    m = len(ref)
    prev = list(range(m + 1))
    for i, h in enumerate(hyp, start=1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (h != ref[j - 1])
            dele = cur[j - 1] + 1
            ins = prev[j] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            cur[j] = best
        prev = cur
    return prev[m]


def edit_align(hyp: list[str], ref: list[str]) -> EditScript:
    """Minimal-cost edit script under unit costs.

    Ties in the backtrace prefer the diagonal (Exact/Substitution), then
    Deletion, then Insertion, which keeps output deterministic and
    maximizes aligned token pairs.
    """
    n, m = len(hyp), len(ref)
    # dp[i][j]: cost of aligning hyp[:i] to ref[:j]
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = i
    for j in range(1, m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        h = hyp[i - 1]
        row = dp[i]
        above = dp[i - 1]
        for j in range(1, m + 1):
            best = above[j - 1] + (h != ref[j - 1])
            dele = row[j - 1] + 1
            if dele < best:
                best = dele
            ins = above[j] + 1
            if ins < best:
                best = ins
            row[j] = best

    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        cur = dp[i][j]
        if i > 0 and j > 0:
            match = hyp[i - 1] == ref[j - 1]
            if dp[i - 1][j - 1] + (not match) == cur:
                kind = EXACT if match else SUBSTITUTION
                ops.append(EditOp(kind, i - 1, j - 1))
                i -= 1
                j -= 1
                continue
        if j > 0 and dp[i][j - 1] + 1 == cur:
            ops.append(EditOp(DELETION, None, j - 1))
            j -= 1
            continue
        ops.append(EditOp(INSERTION, i - 1, None))
        i -= 1
    ops.reverse()
    return EditScript(ops=ops, cost=dp[n][m], shifts=0)


def _shift_candidates(tokens: list[str], ref: list[str]):
    """Yield (start, length) hypothesis blocks that exactly match some
    contiguous reference block."""
    n = len(tokens)
    ref_spans = set()
    max_len = min(MAX_SHIFT_BLOCK, len(ref), n)
    for length in range(1, max_len + 1):
        for j in range(len(ref) - length + 1):
            ref_spans.add(tuple(ref[j : j + length]))
    for start in range(n):
        for length in range(1, min(max_len, n - start) + 1):
            if tuple(tokens[start : start + length]) in ref_spans:
                yield start, length


def ter_align(hyp: list[str], ref: list[str]) -> EditScript:
    """Exact-match TER: greedy block shifts on top of edit_align.

    While some contiguous hypothesis block exactly matches a reference
    block and moving it strictly reduces the plain edit cost, the best
    such move is applied (largest reduction; ties by leftmost source,
    then longest block, then leftmost destination).  Each applied shift
    adds 1 to the cost.  Op hyp indices are mapped back to the original
    hypothesis positions.
    """
    tokens = list(hyp)
    perm = list(range(len(hyp)))  # current position -> original index
    shifts = 0
    cur_cost = _edit_cost_row(tokens, ref)
    while cur_cost > 0:
        best = None  # (reduction, start, length, dest, new_tokens, new_perm)
        for start, length in _shift_candidates(tokens, ref):
            block = tokens[start : start + length]
            block_perm = perm[start : start + length]
            rest = tokens[:start] + tokens[start + length :]
            rest_perm = perm[:start] + perm[start + length :]
            for dest in range(len(rest) + 1):
                if dest == start:
                    continue
                cand = rest[:dest] + block + rest[dest:]
                reduction = cur_cost - _edit_cost_row(cand, ref)
                if reduction <= 0:
                    continue
                key = (-reduction, start, -length, dest)
                if best is None or key < best[0]:
                    best = (
                        key,
                        cand,
                        rest_perm[:dest] + block_perm + rest_perm[dest:],
                    )
        if best is None:
            break
        _, tokens, perm = best
        shifts += 1
        cur_cost = _edit_cost_row(tokens, ref)

    script = edit_align(tokens, ref)
    remapped = [
        EditOp(op.kind, perm[op.hyp_index] if op.hyp_index is not None else None, op.ref_index)
        for op in script.ops
    ]
    return EditScript(ops=remapped, cost=script.cost + shifts, shifts=shifts)


def wer(hyps: list[list[str]], refs: list[list[str]]) -> float:
    """Corpus word error rate: total edit cost over total reference
    length, as a percentage."""
    if len(hyps) != len(refs):
        raise ValueError(
            f"utterance count mismatch: {len(hyps)} hypotheses vs {len(refs)} references"
        )
    total_ref = sum(len(r) for r in refs)
    if total_ref == 0:
        raise ValueError("total reference length is zero")
    total_cost = sum(edit_align(h, r).cost for h, r in zip(hyps, refs))
    return 100.0 * total_cost / total_ref


def alignment_pairs(script: EditScript) -> set[tuple[int, int]]:
    """Word-alignment pairs realized by Exact and Substitution ops."""
    return {
        (op.hyp_index, op.ref_index)
        for op in script.ops
        if op.kind in (EXACT, SUBSTITUTION)
    }


def script_to_lines(script: EditScript) -> list[str]:
    """One line per op: "kind hyp_idx ref_idx" with "-" for absent."""
    lines = []
    for op in script.ops:
        h = "-" if op.hyp_index is None else str(op.hyp_index)
        r = "-" if op.ref_index is None else str(op.ref_index)
        lines.append(f"{op.kind} {h} {r}")
    return lines


def script_from_lines(lines: list[str]) -> EditScript:
    """Parse the serialized op list; cost is recomputed from op kinds
    (shift count is not recoverable from ops alone)."""
    ops = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'kind hyp_idx ref_idx'")
        kind, h, r = parts
        if kind not in (EXACT, SUBSTITUTION, INSERTION, DELETION):
            raise ValueError(f"line {lineno}: unknown op kind {kind!r}")
        ops.append(
            EditOp(
                kind,
                None if h == "-" else int(h),
                None if r == "-" else int(r),
            )
        )
    cost = sum(op.kind != EXACT for op in ops)
    return EditScript(ops=ops, cost=cost, shifts=0)

"""Linear-chain conditional random field with indicator features.

Observation patterns (template x attribute value) are crossed with every
label; transitions include virtual begin/end labels.  Training maximizes
the L2-regularized conditional log-likelihood with batch gradient ascent
and an adaptive step.  Masked tokens stay in the chain: the clamped
forward pass simply allows every label at those positions, so they
contribute context but no supervision.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CUSTOM, LABEL_ALPHABETS, LabelSeq
from .features import Instance
from .lexmodel import ModelFormatError

BOS = "__BOS__"
EOS = "__EOS__"

PAD_FMT = "_B{:+d}"


class TrainingDiverged(RuntimeError):
    """The objective decreased for 10 consecutive evaluations."""


class ModelMismatchError(ValueError):
    """An instance is incompatible with a model's feature space."""


@dataclass(frozen=True)
class Template:
    """One unigram feature template: an attribute read at a window offset."""

    attr: str
    offset: int


@dataclass
class TrainConfig:
    sigma2: float = 1.0
    max_epochs: int = 200
    tol: float = 1e-4
    step0: float = 0.5
    step_up: float = 1.1
    step_down: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class CrfModel:
    """Label set, feature index and weights of a linear-chain CRF.

    patterns maps "templateIdx=value" keys to pattern ids; an observation
    feature (pattern p, label l) lives at weight index p * K + l, and
    transition features follow in trans_index order.
    """

    labels: list[str]
    templates: list[Template]
    patterns: dict[str, int] = field(default_factory=dict)
    trans_index: dict[tuple[str, str], int] = field(default_factory=dict)
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def label_id(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ModelMismatchError(
                f"label {label!r} not in model label set {self.labels}"
            ) from None

    def feature_count(self) -> int:
        return len(self.patterns) * self.n_labels + len(self.trans_index)

    def _score_tables(self):
        """Dense unary-weight, transition, begin and end score tables."""
        k = self.n_labels
        p = len(self.patterns)
        w_obs = self.weights[: p * k].reshape(p, k) if p else np.zeros((0, k))
        trans = np.zeros((k, k))
        bos = np.zeros(k)
        eos = np.zeros(k)
        bos_eos = 0.0
        for (prev, cur), idx in self.trans_index.items():
            w = self.weights[p * k + idx]
            if prev == BOS and cur == EOS:
                bos_eos = w
            elif prev == BOS:
                trans_j = self.label_id(cur)
                bos[trans_j] = w
            elif cur == EOS:
                eos[self.label_id(prev)] = w
            else:
                trans[self.label_id(prev), self.label_id(cur)] = w
        return w_obs, trans, bos, eos, bos_eos


@dataclass
class CompiledInstance:
    """An instance resolved against a model's feature index."""

    pattern_ids: list[np.ndarray]
    labels: np.ndarray | None  # -1 where masked
    length: int


def _pattern_value(attrs, i: int, template_idx: int, template: Template, n: int) -> str:
    p = i + template.offset
    if p < 0:
        value = PAD_FMT.format(p)
    elif p >= n:
        value = PAD_FMT.format(p - n + 1)
    else:
        try:
            value = str(attrs[p][template.attr])
        except KeyError:
            raise ModelMismatchError(
                f"attribute {template.attr!r} missing from instance"
            ) from None
    return f"{template_idx}={value}"


def compile_index(
    instances: list[Instance], templates: list[Template], labels: list[str]
) -> CrfModel:
    """Build the feature index observed in the training data.

    Every observation pattern is crossed with all labels; transition
    features are indexed for the position kinds that actually occur
    (begin, end, interior, and begin-to-end for empty sentences).
    """
    if len(set(labels)) != len(labels) or len(labels) < 2:
        raise ValueError("labels must be distinct and at least two")
    for t in templates:
        if not -2 <= t.offset <= 2:
            raise ValueError(f"template offset {t.offset} outside [-2, 2]")
    attr_names = None
    for inst in instances:
        if len(inst) > 0:
            attr_names = set(inst.attrs[0].keys())
            break
    if attr_names is not None:
        for t in templates:
            if t.attr not in attr_names:
                raise ValueError(f"template references unknown attribute {t.attr!r}")

    model = CrfModel(labels=list(labels), templates=list(templates))
    for inst in instances:
        n = len(inst)
        for i in range(n):
            for ti, tmpl in enumerate(templates):
                key = _pattern_value(inst.attrs, i, ti, tmpl, n)
                if key not in model.patterns:
                    model.patterns[key] = len(model.patterns)

    lens = [len(inst) for inst in instances]
    if any(n >= 1 for n in lens):
        for lab in labels:
            model.trans_index[(BOS, lab)] = len(model.trans_index)
        for lab in labels:
            model.trans_index[(lab, EOS)] = len(model.trans_index)
    if any(n >= 2 for n in lens):
        for a in labels:
            for b in labels:
                model.trans_index[(a, b)] = len(model.trans_index)
    if any(n == 0 for n in lens):
        model.trans_index[(BOS, EOS)] = len(model.trans_index)

    model.weights = np.zeros(model.feature_count())
    return model


def compile_instance(model: CrfModel, inst: Instance) -> CompiledInstance:
    """Resolve an instance's attributes into pattern ids (unknown values
    are silently absent, as usual for indicator CRFs)."""
    n = len(inst)
    ids = []
    for i in range(n):
        row = []
        for ti, tmpl in enumerate(model.templates):
            pid = model.patterns.get(_pattern_value(inst.attrs, i, ti, tmpl, n))
            if pid is not None:
                row.append(pid)
        ids.append(np.asarray(row, dtype=np.intp))
    lab = None
    if inst.labels is not None:
        lab = np.empty(n, dtype=np.intp)
        for i, l in enumerate(inst.labels.labels):
            lab[i] = model.label_id(l) if inst.mask[i] else -1
    return CompiledInstance(pattern_ids=ids, labels=lab, length=n)


def _lse(x, axis=None):
    return np.logaddexp.reduce(x, axis=axis)


def _forward_backward(unary, trans, bos, eos):
    """Log-space forward-backward.

    Returns (logZ, unary marginals, summed pairwise marginals)."""
    n, k = unary.shape
    alpha = np.empty((n, k))
    beta = np.empty((n, k))
    alpha[0] = bos + unary[0]
    for i in range(1, n):
        alpha[i] = _lse(alpha[i - 1][:, None] + trans, axis=0) + unary[i]
    logz = _lse(alpha[n - 1] + eos)
    beta[n - 1] = eos
    for i in range(n - 2, -1, -1):
        beta[i] = _lse(trans + (unary[i + 1] + beta[i + 1])[None, :], axis=1)
    mu = np.exp(alpha + beta - logz)
    xi_sum = np.zeros((k, k))
    for i in range(1, n):
        xi_sum += np.exp(
            alpha[i - 1][:, None] + trans + (unary[i] + beta[i])[None, :] - logz
        )
    return logz, mu, xi_sum


def _unary_scores(model: CrfModel, comp: CompiledInstance, w_obs):
    unary = np.zeros((comp.length, model.n_labels))
    for i, ids in enumerate(comp.pattern_ids):
        if len(ids):
            unary[i] = w_obs[ids].sum(axis=0)
    return unary


def loglik_and_grad(model: CrfModel, inst) -> tuple[float, np.ndarray]:
    """Conditional log-likelihood of an instance's labels and its exact
    gradient (clamped minus free expected feature counts).

    Masked positions are unconstrained in the clamped pass, which
    realizes the marginalized likelihood over their labels.
    """
    comp = inst if isinstance(inst, CompiledInstance) else compile_instance(model, inst)
    if comp.labels is None:
        raise ValueError("instance has no labels")
    grad = np.zeros_like(model.weights)
    n, k = comp.length, model.n_labels
    p = len(model.patterns)
    if n == 0:
        return 0.0, grad

    w_obs, trans, bos, eos, _ = model._score_tables()
    unary = _unary_scores(model, comp, w_obs)

    clamp = np.zeros((n, k))
    for i in range(n):
        if comp.labels[i] >= 0:
            clamp[i] = -np.inf
            clamp[i, comp.labels[i]] = 0.0

    logz_f, mu_f, xi_f = _forward_backward(unary, trans, bos, eos)
    logz_c, mu_c, xi_c = _forward_backward(unary + clamp, trans, bos, eos)

    d_mu = mu_c - mu_f
    g_obs = np.zeros((p, k))
    for i, ids in enumerate(comp.pattern_ids):
        if len(ids):
            g_obs[ids] += d_mu[i]
    grad[: p * k] = g_obs.ravel()

    d_xi = xi_c - xi_f
    base = p * k
    for (prev, cur), idx in model.trans_index.items():
        if prev == BOS and cur == EOS:
            continue
        if prev == BOS:
            grad[base + idx] = d_mu[0, model.label_id(cur)]
        elif cur == EOS:
            grad[base + idx] = d_mu[n - 1, model.label_id(prev)]
        else:
            grad[base + idx] = d_xi[model.label_id(prev), model.label_id(cur)]
    return float(logz_c - logz_f), grad


def _objective(model, compiled, sigma2):
    total = 0.0
    grad = np.zeros_like(model.weights)
    for comp in compiled:
        ll, g = loglik_and_grad(model, comp)
        total += ll
        grad += g
    total -= float(model.weights @ model.weights) / (2.0 * sigma2)
    grad -= model.weights / sigma2
    return total, grad


def train(
    instances: list[Instance],
    templates: list[Template],
    labels: list[str],
    config: TrainConfig | None = None,
) -> CrfModel:
    """Fit a CRF by batch gradient ascent with an adaptive step.

    The step grows by step_up after an accepted (non-decreasing) move and
    halves after a rejected one; training stops when the gradient
    infinity-norm falls under the tolerance or the evaluation budget runs
    out.  Ten consecutive rejected steps raise TrainingDiverged.
    """
    if not instances:
        raise ValueError("no training instances")
    config = config or TrainConfig()
    model = compile_index(instances, templates, labels)
    compiled = [compile_instance(model, inst) for inst in instances]

    w = np.zeros_like(model.weights)
    model.weights = w
    obj, grad = _objective(model, compiled, config.sigma2)
    evals = 1
    step = config.step0
    fails = 0
    while evals < config.max_epochs and np.max(np.abs(grad), initial=0.0) >= config.tol:
        w_new = w + step * grad
        model.weights = w_new
        obj_new, grad_new = _objective(model, compiled, config.sigma2)
        evals += 1
        if obj_new >= obj:
            w, obj, grad = w_new, obj_new, grad_new
            step *= config.step_up
            fails = 0
        else:
            step *= config.step_down
            fails += 1
            if fails >= 10:
                raise TrainingDiverged(
                    f"objective decreased {fails} consecutive evaluations"
                    f" (eval {evals}, objective {obj:.6f}, step {step:.3g})"
                )
    model.weights = w
    return model


def _scheme_for(labels: list[str]) -> str:
    for scheme, alphabet in LABEL_ALPHABETS.items():
        if tuple(labels) == alphabet:
            return scheme
    return CUSTOM


def viterbi(model: CrfModel, inst) -> tuple[LabelSeq, float]:
    """Most probable label sequence and its log-probability.

    Ties break toward the earlier label in the model's label order.
    """
    comp = inst if isinstance(inst, CompiledInstance) else compile_instance(model, inst)
    scheme = _scheme_for(model.labels)
    n, k = comp.length, model.n_labels
    if n == 0:
        return LabelSeq(scheme=scheme, labels=[]), 0.0

    w_obs, trans, bos, eos, _ = model._score_tables()
    unary = _unary_scores(model, comp, w_obs)

    delta = np.empty((n, k))
    back = np.zeros((n, k), dtype=np.intp)
    delta[0] = bos + unary[0]
    for i in range(1, n):
        scores = delta[i - 1][:, None] + trans
        back[i] = np.argmax(scores, axis=0)
        delta[i] = scores[back[i], np.arange(k)] + unary[i]
    best_last = int(np.argmax(delta[n - 1] + eos))
    best_score = float(delta[n - 1, best_last] + eos[best_last])

    path = [best_last]
    for i in range(n - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    path.reverse()

    alpha = np.empty((n, k))
    alpha[0] = bos + unary[0]
    for i in range(1, n):
        alpha[i] = _lse(alpha[i - 1][:, None] + trans, axis=0) + unary[i]
    logz = float(_lse(alpha[n - 1] + eos))

    return (
        LabelSeq(scheme=scheme, labels=[model.labels[j] for j in path]),
        best_score - logz,
    )


def marginals(model: CrfModel, inst) -> list[dict[str, float]]:
    """Per-token posterior label distributions from forward-backward."""
    comp = inst if isinstance(inst, CompiledInstance) else compile_instance(model, inst)
    if comp.length == 0:
        return []
    w_obs, trans, bos, eos, _ = model._score_tables()
    unary = _unary_scores(model, comp, w_obs)
    _, mu, _ = _forward_backward(unary, trans, bos, eos)
    return [
        {lab: float(mu[i, j]) for j, lab in enumerate(model.labels)}
        for i in range(comp.length)
    ]


def save_model(model: CrfModel, path) -> None:
    """Text model file: header, then one feature per line with its weight
    printed to 17 significant digits (exact float round trip)."""
    lines = ["crf-model 1"]
    lines.append("labels\t" + "\t".join(model.labels))
    for t in model.templates:
        lines.append(f"template\t{t.attr}\t{t.offset}")
    lines.append(f"features\t{model.feature_count()}")
    k = model.n_labels
    p = len(model.patterns)
    keys = sorted(model.patterns, key=model.patterns.get)
    for key in keys:
        pid = model.patterns[key]
        for j, lab in enumerate(model.labels):
            lines.append(f"U{key}\t{lab}\t{model.weights[pid * k + j]:.17g}")
    pairs = sorted(model.trans_index, key=model.trans_index.get)
    for prev, cur in pairs:
        idx = model.trans_index[(prev, cur)]
        lines.append(f"T\t{prev}|{cur}\t{model.weights[p * k + idx]:.17g}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> CrfModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "crf-model 1":
        raise ModelFormatError("line 1: not a crf model file")
    labels: list[str] = []
    templates: list[Template] = []
    expected = None
    lineno = 1
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if parts[0] == "labels":
            labels = parts[1:]
        elif parts[0] == "template":
            templates.append(Template(attr=parts[1], offset=int(parts[2])))
        elif parts[0] == "features":
            expected = int(parts[1])
            break
        else:
            raise ModelFormatError(f"line {lineno}: unexpected header entry {line!r}")
    if not labels or expected is None:
        raise ModelFormatError(f"line {lineno}: incomplete model header")

    model = CrfModel(labels=labels, templates=templates)
    entries: list[tuple[str, str, float]] = []
    saw_end = False
    for lineno, line in enumerate(lines[lineno:], start=lineno + 1):
        if line == "end":
            saw_end = True
            break
        parts = line.split("\t")
        if len(parts) != 3:
            raise ModelFormatError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        entries.append((parts[0], parts[1], float(parts[2])))
    if not saw_end:
        raise ModelFormatError(f"line {lineno}: unexpected end of model file")
    if len(entries) != expected:
        raise ModelFormatError(
            f"line {lineno}: feature count mismatch (header {expected}, found {len(entries)})"
        )

    k = len(labels)
    obs = [e for e in entries if e[0].startswith("U")]
    tra = [e for e in entries if e[0] == "T"]
    for key, _, _ in obs:
        pat = key[1:]
        if pat not in model.patterns:
            model.patterns[pat] = len(model.patterns)
    for _, pair, _ in tra:
        prev, cur = pair.split("|")
        model.trans_index[(prev, cur)] = len(model.trans_index)

    weights = np.zeros(model.feature_count())
    label_pos = {lab: j for j, lab in enumerate(labels)}
    for key, lab, w in obs:
        weights[model.patterns[key[1:]] * k + label_pos[lab]] = w
    p = len(model.patterns)
    for _, pair, w in tra:
        prev, cur = pair.split("|")
        weights[p * k + model.trans_index[(prev, cur)]] = w
    model.weights = weights
    return model

"""Command-line front end wiring the pipeline.

Subcommands: extract-labels, train, predict, combine, evaluate, stats,
synth.  All outputs are written atomically (temp file + rename) and every
run is deterministic given its inputs and --seed.  The SLTQE_CONFIG
environment variable overrides the feature-config path (and nothing
else).
"""

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import align, corpus, crf, evaluate, features, labeling, lexmodel, synthesis

CONFIG_ENV = "SLTQE_CONFIG"


def _write_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _load_feature_config(args) -> features.FeatureConfig:
    path = os.environ.get(CONFIG_ENV) or getattr(args, "config", None)
    if path:
        return features.FeatureConfig.parse(Path(path).read_text(encoding="utf-8"))
    return features.FeatureConfig()


def _labels_path(out: Path, name: str) -> Path:
    return out / name


def _extract_all_labels(quints, m1_align: str):
    """2-class labels plus both 3-class splits for every utterance."""
    two = []
    m1 = []
    m2 = []
    lex = None
    if m1_align == "ibm1":
        pairs_corpus = [(q.e_mt, q.e_slt) for q in quints]
        lex = lexmodel.train_ibm1(pairs_corpus, iterations=5)
    for q in quints:
        labels2 = labeling.infer_2class(q.e_slt, q.e_ref)
        script = align.edit_align(q.e_slt, q.e_mt)
        if m1_align == "ibm1":
            pairs = {(j, i) for i, j in lexmodel.ibm1_align(lex, q.e_mt, q.e_slt)}
        else:
            pairs = align.alignment_pairs(script)
        mt_labels = labeling.infer_2class(q.e_mt, q.e_ref)
        two.append(labels2)
        m1.append(labeling.disentangle_by_alignment(labels2, mt_labels, pairs))
        m2.append(labeling.disentangle_by_subtraction(labels2, script))
    return two, m1, m2


def cmd_extract_labels(args) -> int:
    quints = corpus.load_corpus(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    two, m1, m2 = _extract_all_labels(quints, args.align)

    agreed_lines = []
    mask_lines = []
    same_parts = []
    diff_parts = []
    for a, b in zip(m1, m2):
        agreed, same, diff = labeling.intersect_labels(a, b)
        agreed_lines.append(" ".join(agreed.labels))
        mask_lines.append(
            " ".join("0" if l == labeling.SENTINEL else "1" for l in agreed.labels)
        )
        same_parts.append(same)
        diff_parts.append(diff)

    def label_text(seqs):
        return "".join(" ".join(s.labels) + "\n" for s in seqs)

    _write_atomic(out / "labels.2class", label_text(two))
    _write_atomic(out / "labels.m1", label_text(m1))
    _write_atomic(out / "labels.m2", label_text(m2))
    _write_atomic(out / "labels.intersect", "".join(l + "\n" for l in agreed_lines))
    _write_atomic(out / "labels.intersect.mask", "".join(l + "\n" for l in mask_lines))

    same_stats = labeling.merge_stats(same_parts)
    diff_stats = labeling.merge_stats(diff_parts)
    rows = [
        "row,pct_G,pct_B_ASR,pct_B_MT",
        labeling.label_stats(m1).csv_row("label/m1"),
        labeling.label_stats(m2).csv_row("label/m2"),
        same_stats.csv_row("label/same(m1, m2)"),
        diff_stats.csv_row("label/diff(m1, m2)"),
    ]
    _write_atomic(out / "stats.csv", "\n".join(rows) + "\n")
    print(f"extracted labels for {len(quints)} utterances into {out}")
    return 0


def _train_models(quints, mode: str, config, lm_order: int, ibm1_iters: int):
    models = features.FeatureModels()
    if mode in (features.ASR_ONLY, features.JOINT):
        models.source_lm = lexmodel.train_ngram_lm([q.f_hyp for q in quints], lm_order)
    if mode in (features.MT_ONLY, features.JOINT):
        models.target_lm = lexmodel.train_ngram_lm([q.e_slt for q in quints], lm_order)
        models.lex = lexmodel.train_ibm1(
            [(q.f_hyp, q.e_slt) for q in quints], ibm1_iters
        )
    return models


def _load_train_labels(args, quints):
    """Resolve label sequences + masks for training, per scheme."""
    if args.scheme == "bsplit":
        if not args.labels:
            raise ValueError("--scheme bsplit requires --labels (a 3-class file)")
        seqs, masks = labeling.load_masked_labels(args.labels)
        out_seqs = []
        out_masks = []
        for seq, mask in zip(seqs, masks):
            # only error tokens supervise the B-splitter
            new_mask = [
                m if lab in ("B_ASR", "B_MT") else 0
                for lab, m in zip(seq.labels, mask)
            ]
            out_seqs.append(seq)
            out_masks.append(new_mask)
        return out_seqs, out_masks, ["B_ASR", "B_MT"]
    if args.scheme == "three_class":
        seqs, masks = labeling.load_masked_labels(args.labels)
        return seqs, masks, list(corpus.LABEL_ALPHABETS[corpus.THREE_CLASS])
    # two_class
    if args.labels:
        seqs = corpus.load_labels(args.labels, corpus.TWO_CLASS)
    elif args.mode == features.ASR_ONLY:
        seqs = [features.asr_reference_labels(q) for q in quints]
    else:
        raise ValueError("--labels is required except for asr-only 2-class training")
    return seqs, None, list(corpus.LABEL_ALPHABETS[corpus.TWO_CLASS])


def cmd_train(args) -> int:
    quints = corpus.load_corpus(args.corpus)
    if not quints:
        raise ValueError("cannot train on an empty corpus")
    config = _load_feature_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    seqs, masks, label_set = _load_train_labels(args, quints)
    target = "f_hyp" if args.mode == features.ASR_ONLY else "e_slt"
    bad = corpus.validate_labels(quints, seqs, target=target)
    if bad:
        raise ValueError(f"labels inconsistent with corpus {target}: {bad[:5]}")

    models = _train_models(quints, args.mode, config, args.lm_order, args.ibm1_iters)
    instances = features.build_instances(
        quints, seqs, config, models, mode=args.mode, masks=masks
    )

    attr_names: list[str] = []
    for inst in instances:
        if len(inst):
            attr_names = list(inst.attrs[0].keys())
            break
    templates = [crf.Template(a, o) for a in attr_names for o in (-1, 0, 1)]
    train_config = crf.TrainConfig(
        sigma2=args.sigma2, max_epochs=args.max_epochs, tol=args.tol, seed=args.seed
    )
    model = crf.train(instances, templates, label_set, train_config)
    crf.save_model(model, out / "model.crf")

    if models.source_lm:
        models.source_lm.save(out / "source.lm")
    if models.target_lm:
        models.target_lm.save(out / "target.lm")
    if models.lex:
        models.lex.save(out / "lex.tbl")

    cfg_text = config.serialize()
    _write_atomic(out / "feature.cfg", cfg_text)
    manifest = {
        "mode": args.mode,
        "scheme": args.scheme,
        "labels": label_set,
        "seed": args.seed,
        "lm_order": args.lm_order,
        "ibm1_iters": args.ibm1_iters,
        "train_config": {
            "sigma2": train_config.sigma2,
            "max_epochs": train_config.max_epochs,
            "tol": train_config.tol,
            "step0": train_config.step0,
            "step_up": train_config.step_up,
            "step_down": train_config.step_down,
        },
        "feature_config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "templates": [[t.attr, t.offset] for t in templates],
    }
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(f"trained {args.mode}/{args.scheme} model ({model.feature_count()} features) into {out}")
    return 0


def _load_model_dir(model_dir):
    model_dir = Path(model_dir)
    manifest = json.loads((model_dir / "manifest.json").read_text(encoding="utf-8"))
    model = crf.load_model(model_dir / "model.crf")
    config = features.FeatureConfig.parse(
        (model_dir / "feature.cfg").read_text(encoding="utf-8")
    )
    fm = features.FeatureModels()
    if (model_dir / "source.lm").exists():
        fm.source_lm = lexmodel.NgramLM.load(model_dir / "source.lm")
    if (model_dir / "target.lm").exists():
        fm.target_lm = lexmodel.NgramLM.load(model_dir / "target.lm")
    if (model_dir / "lex.tbl").exists():
        fm.lex = lexmodel.LexTable.load(model_dir / "lex.tbl")
    return manifest, model, config, fm


def cmd_predict(args) -> int:
    quints = corpus.load_corpus(args.corpus)
    manifest, model, config, fm = _load_model_dir(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instances = features.build_instances(
        quints, None, config, fm, mode=manifest["mode"]
    )

    if args.bsplit_model:
        _, bmodel, _, _ = _load_model_dir(args.bsplit_model)
        label_lines = []
        per_utt = []
        for inst in instances:
            seq = evaluate.two_step_classify(model, bmodel, inst)
            label_lines.append(" ".join(seq.labels))
            stage1 = crf.marginals(model, inst)
            split = crf.marginals(bmodel, inst)
            dists = []
            for i in range(len(inst)):
                p_b = stage1[i].get("B", 0.0)
                dists.append(
                    {
                        "G": stage1[i].get("G", 0.0),
                        "B_ASR": p_b * split[i].get("B_ASR", 0.0),
                        "B_MT": p_b * split[i].get("B_MT", 0.0),
                    }
                )
            per_utt.append(dists)
        out_labels = ["G", "B_ASR", "B_MT"]
    else:
        label_lines = []
        per_utt = []
        for inst in instances:
            seq, _ = crf.viterbi(model, inst)
            label_lines.append(" ".join(seq.labels))
            per_utt.append(crf.marginals(model, inst))
        out_labels = model.labels

    _write_atomic(out / "pred.labels", "".join(l + "\n" for l in label_lines))
    tmp_post = out / "pred.post.csv.tmp"
    evaluate.write_posteriors(tmp_post, per_utt, out_labels)
    os.replace(tmp_post, out / "pred.post.csv")
    print(f"wrote predictions for {len(quints)} utterances into {out}")
    return 0


def cmd_combine(args) -> int:
    quints = corpus.load_corpus(args.corpus)
    p_asr, asr_labels = evaluate.read_posteriors(args.asr_post)
    p_mt, mt_labels = evaluate.read_posteriors(args.mt_post)
    if sorted(asr_labels) != ["B", "G"] or sorted(mt_labels) != ["B", "G"]:
        raise ValueError("combination requires 2-class posterior files")
    if len(p_asr) != len(quints) or len(p_mt) != len(quints):
        raise ValueError(
            f"posterior utterance counts ({len(p_asr)}, {len(p_mt)}) do not match"
            f" corpus ({len(quints)})"
        )
    config = _load_feature_config(args)
    config.align = args.align
    fm = features.FeatureModels()
    if args.align == "ibm1":
        if args.lex:
            fm.lex = lexmodel.LexTable.load(args.lex)
        else:
            fm.lex = lexmodel.train_ibm1(
                [(q.f_hyp, q.e_slt) for q in quints], iterations=5
            )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    combined = []
    label_lines = []
    for q, pa, pm in zip(quints, p_asr, p_mt):
        if len(pa) != len(q.f_hyp):
            raise ValueError(
                f"utt {q.utt_id}: {len(pa)} ASR posteriors vs {len(q.f_hyp)} source tokens"
            )
        if len(pm) != len(q.e_slt):
            raise ValueError(
                f"utt {q.utt_id}: {len(pm)} MT posteriors vs {len(q.e_slt)} target tokens"
            )
        pairs = features.source_target_pairs(q, fm, config)
        dists = evaluate.combine_posteriors(pa, pm, pairs, args.alpha)
        combined.append(dists)
        decided = evaluate.threshold_decide([d["G"] for d in dists], args.threshold)
        label_lines.append(" ".join(decided.labels))

    tmp_post = out / "combined.post.csv.tmp"
    evaluate.write_posteriors(tmp_post, combined, ["G", "B"])
    os.replace(tmp_post, out / "combined.post.csv")
    _write_atomic(out / "combined.labels", "".join(l + "\n" for l in label_lines))
    print(f"combined posteriors (alpha={args.alpha}) for {len(quints)} utterances")
    return 0


def cmd_evaluate(args) -> int:
    scheme = args.scheme
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ref = corpus.load_labels(args.ref, scheme)
    pred = corpus.load_labels(args.pred, scheme)
    report = evaluate.prf(pred, ref, scheme)
    _write_atomic(out / "prf.csv", report.csv_text())
    print(f"F-avg {report.favg:.2f}")

    if args.post and scheme == corpus.TWO_CLASS:
        per_utt, _ = evaluate.read_posteriors(args.post)
        step = args.grid_step
        n = round(1.0 / step)
        grid = [round(i * step, 10) for i in range(n + 1)]
        p_good = [[d["G"] for d in utt] for utt in per_utt]
        rows = evaluate.sweep(p_good, ref, grid)
        _write_atomic(out / "sweep.csv", evaluate.sweep_csv(rows))

    if scheme == corpus.THREE_CLASS:
        conf = evaluate.confusion_on_true_errors(pred, ref)
        _write_atomic(out / "confusion.csv", conf.csv_text())
        _write_atomic(out / "confusion.txt", conf.text_table())
        _write_atomic(out / "scatter.csv", evaluate.scatter_csv(evaluate.scatter_errors(ref)))
    return 0


def cmd_stats(args) -> int:
    quints = corpus.load_corpus(args.corpus)
    lines = [f"utterances: {len(quints)}"]
    for side in ("f_hyp", "f_ref", "e_mt", "e_slt", "e_ref"):
        lines.append(f"tokens {side}: {sum(len(q.side(side)) for q in quints)}")
    rate = align.wer([q.f_hyp for q in quints], [q.f_ref for q in quints])
    lines.append(f"WER f_hyp vs f_ref: {rate:.2f}%")
    for path in args.labels or []:
        seqs = (
            corpus.load_labels(path, args.scheme)
            if args.scheme != corpus.THREE_CLASS
            else labeling.load_masked_labels(path)[0]
        )
        stats = labeling.label_stats(seqs)
        lines.append(f"{path}: {stats.csv_row('distribution')}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        _write_atomic(args.out, text)
    return 0


def cmd_synth(args) -> int:
    config = synthesis.SynthConfig(
        n_utts=args.utts,
        seed=args.seed,
        asr_sub_rate=args.asr_sub,
        asr_ins_rate=args.asr_ins,
        mt_hard_rate=args.mt_rate,
    )
    quints = synthesis.generate_corpus(config)
    corpus.save_corpus(quints, args.out)
    print(f"wrote {len(quints)} synthetic utterances into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sltqe",
        description="Word-level error detection and attribution for speech translation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-labels", help="derive 2-class and 3-class label files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--align", choices=["edit", "ibm1"], default="edit",
                   help="SLT-to-MT alignment source for the alignment method")
    p.set_defaults(func=cmd_extract_labels)

    p = sub.add_parser("train", help="train LM/lexicon and a CRF error detector")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", help="label file (omit to derive ASR labels in asr-only mode)")
    p.add_argument("--scheme", choices=["two_class", "three_class", "bsplit"],
                   default="two_class")
    p.add_argument("--mode", choices=list(features.MODES), default=features.JOINT)
    p.add_argument("--config", help="feature-config path")
    p.add_argument("--lm-order", type=int, default=3)
    p.add_argument("--ibm1-iters", type=int, default=5)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="Viterbi labels and posteriors for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="training output directory")
    p.add_argument("--bsplit-model", help="B-splitter directory for two-step 3-class")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("combine", help="log-linear combination of two posterior files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--asr-post", required=True)
    p.add_argument("--mt-post", required=True)
    p.add_argument("--lex", help="lexical table for ibm1 alignment (else trained on the fly)")
    p.add_argument("--align", choices=["ibm1", "edit"], default="ibm1")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("evaluate", help="PRF report plus sweep/confusion/scatter data")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--scheme", choices=["two_class", "three_class"], required=True)
    p.add_argument("--post", help="posterior CSV for threshold sweeping (2-class)")
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="corpus WER, token counts and label distributions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", action="append", help="label file (repeatable)")
    p.add_argument("--scheme", choices=["two_class", "three_class"], default="two_class")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic quintuplet corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--utts", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--asr-sub", type=float, default=0.10)
    p.add_argument("--asr-ins", type=float, default=0.03)
    p.add_argument("--mt-rate", type=float, default=0.15)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, lexmodel.ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

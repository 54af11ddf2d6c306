"""Synthetic quintuplet generator for end-to-end tests and demos.

A toy bijective dictionary translates source words to target words.  ASR
noise substitutes or inserts distinct noise tokens into the transcript;
the toy MT deterministically mistranslates a designated set of hard
source words in both the MT and SLT outputs.  Error tokens therefore
carry identifiable surface forms, which makes the corpus learnable by a
surface-feature CRF and its labels recoverable by the extraction
pipeline.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import Quintuplet


@dataclass
class SynthConfig:
    n_utts: int = 200
    seed: int = 0
    min_len: int = 5
    max_len: int = 12
    vocab_size: int = 50
    n_hard: int = 12  # source words the toy MT mistranslates
    n_noise: int = 12  # ASR noise token inventory
    asr_sub_rate: float = 0.10
    asr_ins_rate: float = 0.03
    mt_hard_rate: float = 0.15  # chance a sampled token is a hard word


def _vocab(config: SynthConfig):
    normal = [f"f{i:02d}" for i in range(config.vocab_size)]
    hard = [f"fh{i:02d}" for i in range(config.n_hard)]
    noise = [f"fx{i:02d}" for i in range(config.n_noise)]
    correct = {w: "e" + w[1:] for w in normal}
    correct.update({w: "eh" + w[2:] for w in hard})
    correct.update({w: "ex" + w[2:] for w in noise})
    wrong = {w: "ew" + w[2:] for w in hard}  # systematic MT errors
    return normal, hard, noise, correct, wrong


def generate_corpus(config: SynthConfig) -> list[Quintuplet]:
    """Draw a seeded corpus of quintuplets with the configured rates."""
    rng = np.random.default_rng(config.seed)
    normal, hard, noise, correct, wrong = _vocab(config)

    def translate_correct(tokens):
        return [correct[w] for w in tokens]

    def translate_noisy(tokens):
        # the toy MT system: wrong on hard words, faithful elsewhere
        return [wrong.get(w, correct[w]) for w in tokens]

    corpus = []
    for idx in range(config.n_utts):
        n = int(rng.integers(config.min_len, config.max_len + 1))
        f_ref = []
        for _ in range(n):
            if rng.random() < config.mt_hard_rate:
                f_ref.append(hard[int(rng.integers(len(hard)))])
            else:
                f_ref.append(normal[int(rng.integers(len(normal)))])

        f_hyp = []
        for w in f_ref:
            if rng.random() < config.asr_sub_rate:
                f_hyp.append(noise[int(rng.integers(len(noise)))])
            else:
                f_hyp.append(w)
            if rng.random() < config.asr_ins_rate:
                f_hyp.append(noise[int(rng.integers(len(noise)))])

        corpus.append(
            Quintuplet(
                f_hyp=f_hyp,
                f_ref=f_ref,
                e_mt=translate_noisy(f_ref),
                e_slt=translate_noisy(f_hyp),
                e_ref=translate_correct(f_ref),
                utt_id=str(idx),
            )
        )
    return corpus

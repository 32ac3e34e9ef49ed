"""Ceiling probe: poisoned-LM-only training; how high can PI ASR go on
unseen in-distribution images, ignoring clean preservation entirely?"""

import sys
import time

from backdoorlab.corpus import DistTag, default_vocab, detokenize, make_corpus
from backdoorlab.losses import adam_step, init_train_state, lm_loss
from backdoorlab.model import DecodeConfig, greedy_decode, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, exact_match


def main():
    d = int(sys.argv[1]) if len(sys.argv) > 1 else 32
    lr = float(sys.argv[2]) if len(sys.argv) > 2 else 3e-3
    place = Placement(sys.argv[3]) if len(sys.argv) > 3 else Placement.CENTER
    epochs = int(sys.argv[4]) if len(sys.argv) > 4 else 30
    path = sys.argv[5] if len(sys.argv) > 5 else f"/tmp/benign_d{d}_lr0.003.json"

    vocab = default_vocab()
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    params = load_checkpoint(path)
    print(f"benign exact {exact_match(params, holdout, limit=100):.2f}")

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=place)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    rng = Rng(12).split("ceiling")
    state = init_train_state(params)
    batch = 25
    for epoch in range(epochs):
        order = rng.split(f"e{epoch}").shuffled(poisoned.samples)
        for i in range(0, len(order), batch):
            loss, grads = lm_loss(params, order[i : i + batch])
            adam_step(params, grads, state, lr=lr)
        if epoch % 3 == 0 or epoch == epochs - 1:
            print(f"ep{epoch:3d} loss {loss:.3f} "
                  f"PI-asr {asr(params, eval_pi, target, limit=100):.2f} "
                  f"CI-asr {asr(params, holdout, target, limit=100):.2f}")
    for s in eval_pi.samples[:6]:
        out = greedy_decode(params, s.image, s.prompt, DecodeConfig())
        print(f"  PI out: {detokenize(out, vocab)!r}")


if __name__ == "__main__":
    main()

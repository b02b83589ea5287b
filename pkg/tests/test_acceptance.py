"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from helpers import model_gradient_errors, randomize, record, tiny_batch, tiny_config
from mmattn import synthetic
from mmattn.analysis import attention_entropy, attribute_accuracy
from mmattn.attention import AttentionWiring, build_variant, param_count
from mmattn.corpus import Dataset, EOS
from mmattn.metrics import corpus_bleu
from mmattn.model import ModelConfig, MultimodalNMT
from mmattn.search import BeamConfig, beam_search, greedy_translate
from mmattn.trainer import TrainConfig, dataset_nll, train
from mmattn.viz import plot_entropy
from test_attention import collapse_pair
from test_search import EMITTABLE, random_model, sequence_log_prob

pytestmark = pytest.mark.slow

WIRINGS = {label: AttentionWiring.from_label(label) for label in "ABCD"}
GROUNDING_EPOCHS = 40


def synthetic_model(ds: Dataset, label: str, fusion: str, seed: int = 0) -> MultimodalNMT:
    w = WIRINGS[label]
    cfg = ModelConfig(len(ds.src_vocab), len(ds.tgt_vocab), channels=ds.feature_shape[1],
                      encoder_dependent=w.encoder_dependent, decoder_dependent=w.decoder_dependent, fusion=fusion)
    return MultimodalNMT(cfg, rng=seed)


def zeroed(ds: Dataset) -> Dataset:
    feats = {k: np.zeros_like(v) for k, v in ds.features.items()}
    return Dataset(ds.examples, feats, ds.src_vocab, ds.tgt_vocab, ds.meta)


@pytest.fixture(scope="module")
def grounded():
    train_c, held_c = synthetic.generate(n_pairs=500, num_attributes=4, seed=0)
    train_ds = train_c.dataset()
    return train_ds, held_c.dataset(train_ds.src_vocab, train_ds.tgt_vocab)


@pytest.fixture(scope="module")
def grounding_runs(grounded):
    """Wiring B and wiring A, both CONCAT, plus wiring B trained on zeroed features."""
    train_ds, held_ds = grounded
    runs = {}
    for name, label, data in (("B", "B", train_ds), ("A", "A", train_ds), ("text", "B", zeroed(train_ds))):
        model = synthetic_model(data, label, "concat")
        train(model, data, TrainConfig(max_epochs=GROUNDING_EPOCHS))
        runs[name] = model
    return runs


def test_criterion_1_gradient_integrity():
    t0 = time.time()
    rng = np.random.default_rng(11)
    worst = 0.0
    for label, fusion in (("A", "sum"), ("B", "concat"), ("C", "concat"), ("D", "sum")):
        w = WIRINGS[label]
        cfg = tiny_config(encoder_dependent=w.encoder_dependent, decoder_dependent=w.decoder_dependent, fusion=fusion)
        assert (cfg.enc_hidden, cfg.dec_hidden, cfg.emb, cfg.tgt_vocab, cfg.channels) == (4, 4, 4, 6, 3)
        model = randomize(MultimodalNMT(cfg, rng=0), rng)
        errs = model_gradient_errors(model, tiny_batch(rng, regions=4, channels=3), l2=1e-5)
        worst = max(worst, max(errs.values()))
    elapsed = time.time() - t0
    ok = worst < 1e-4 and elapsed < 60
    record(1, ok, f"max relative gradient error {worst:.2e} over 4 models (< 1e-4), {elapsed:.1f}s")
    assert ok


def test_criterion_2_variant_coverage(grounded):
    train_ds, _ = grounded
    V = len(train_ds.tgt_vocab)
    threshold = math.log(V) / 2
    t0 = time.time()
    reached = {}
    for fusion in ("sum", "concat"):
        for label in "ABCD":
            model = synthetic_model(train_ds, label, fusion)
            res = train(model, train_ds, TrainConfig(max_epochs=50), on_epoch=lambda e: e.train_loss < threshold)
            final = res.log[-1]
            reached[f"{label}/{fusion}"] = (final.epoch, final.train_loss)
    elapsed = time.time() - t0
    ok = all(loss < threshold for _, loss in reached.values()) and elapsed < 600
    summary = ", ".join(f"{k}:{loss:.3f}@{ep}" for k, (ep, loss) in reached.items())
    record(2, ok, f"8 variants below ln({V})/2={threshold:.3f} within 50 epochs [{summary}], {elapsed:.0f}s")
    assert ok


def test_criterion_3_grounding_signal(grounded, grounding_runs):
    _, held_ds = grounded
    K = 4
    acc = attribute_accuracy(grounding_runs["B"], held_ds, synthetic.ATTRIBUTE_POSITION)
    chance = attribute_accuracy(grounding_runs["text"], zeroed(held_ds), synthetic.ATTRIBUTE_POSITION)
    ok = acc >= 0.95 and abs(chance - 1 / K) <= 0.1 / K
    record(3, ok, f"held-out attribute accuracy {acc:.3f} with image (>= 0.95), "
                  f"{chance:.3f} with zeroed features (1/K = {1 / K:.3f} +- 10%)")
    assert ok


def test_criterion_4_shared_attention_probe(grounded, grounding_runs, tmp_path):
    _, held_ds = grounded
    reports = {label: attention_entropy(grounding_runs[label], held_ds) for label in ("A", "B")}
    lines = [ln for label, rep in reports.items() for ln in rep.lines(f"wiring {label}")]
    for ln in lines:
        print(ln)
    fig = tmp_path / "entropy.png"
    plot_entropy(fig, {f"wiring {k}": r.txt for k, r in reports.items()}, uniform=reports["A"].txt_uniform)
    ok = len(lines) == 2 and fig.stat().st_size > 0 and all(np.isfinite(r.txt) for r in reports.values())
    a, b = reports["A"], reports["B"]
    record(4, ok, f"text-attention entropy A={a.txt:.4f} B={b.txt:.4f} nats (uniform {a.txt_uniform:.4f}); "
                  f"image A={a.im:.4f} B={b.im:.4f}")
    assert ok


def test_criterion_5_overfit_sanity():
    t0 = time.time()
    train_c, _ = synthetic.generate(n_pairs=8, heldout_sources=0, seed=3)
    ds = train_c.dataset()
    assert len(ds) == 8
    model = synthetic_model(ds, "B", "concat")
    refs = [[ds.tgt_vocab.decode(e.target_ids)] for e in ds.examples]
    state = {}

    def bleu():
        hyps = greedy_translate(model, ds, max_len=20)
        return corpus_bleu([(ds.tgt_vocab.decode(h.tokens), r) for h, r in zip(hyps, refs)]).score

    def done(entry):
        if entry.train_loss >= 0.05:
            return False
        state["nll"], state["bleu"], state["epoch"] = dataset_nll(model, ds), bleu(), entry.epoch
        return state["nll"] < 0.05 and state["bleu"] == 1.0

    res = train(model, ds, TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=200), on_epoch=done)
    elapsed = time.time() - t0
    nll, score = state.get("nll", dataset_nll(model, ds)), state.get("bleu", bleu())
    ok = nll < 0.05 and f"{100 * score:.2f}" == "100.00" and len(res.log) <= 200 and elapsed < 60
    record(5, ok, f"8-pair loss {nll:.4f} (< 0.05), greedy BLEU {100 * score:.2f} at epoch {len(res.log)}, {elapsed:.1f}s")
    assert ok


def test_criterion_6_beam_oracle():
    import itertools

    t0 = time.time()
    failures = 0
    for seed in range(20):
        model, feats = random_model(1000 + seed)
        src = list(np.random.default_rng(seed).integers(4, 7, size=3))
        hyp = beam_search(model, src, feats, BeamConfig(beam_size=12, max_len=3, length_norm=False))
        scored = []
        for n in range(1, 4):
            for body in itertools.product(EMITTABLE, repeat=n):
                if EOS in body[:-1] or (body[-1] != EOS and n < 3):
                    continue
                scored.append((sequence_log_prob(model, src, feats, body), body))
        best_lp, best_seq = max(scored)
        got = tuple(hyp.tokens) + ((EOS,) if hyp.complete else ())
        failures += not (abs(hyp.log_prob - best_lp) < 1e-12 and got == best_seq)
    elapsed = time.time() - t0
    ok = failures == 0 and elapsed < 60
    record(6, ok, f"beam 12 matched exhaustive search on {20 - failures}/20 random models, {elapsed:.1f}s")
    assert ok


def test_criterion_7_variant_collapse_and_counts():
    rng = np.random.default_rng(5)
    identical = True
    for fusion in ("sum", "concat"):
        shared, split = collapse_pair(rng, fusion)
        batch = tiny_batch(rng)
        _, s1 = shared.forward(batch, keep_steps=True)
        _, s2 = split.forward(batch, keep_steps=True)
        identical &= all(np.array_equal(a.logits.data, b.logits.data) and np.array_equal(a.alpha_im.data, b.alpha_im.data)
                         for a, b in zip(s1, s2))
    counts_ok = True
    for ctx, dec, H in ((8, 4, 8), (16, 8, 16), (6, 5, 7)):
        scorer, proj = ctx * H + H, dec * H
        closed = {"A": scorer + proj, "B": 2 * scorer + proj, "C": scorer + 2 * proj, "D": 2 * scorer + 2 * proj}
        for label, w in WIRINGS.items():
            counts_ok &= build_variant(w, ctx, dec, H).count() == param_count(w, ctx, dec, H) == closed[label]
    sizes = {label: MultimodalNMT(tiny_config(encoder_dependent=w.encoder_dependent,
                                              decoder_dependent=w.decoder_dependent), rng=0).num_parameters()
             for label, w in WIRINGS.items()}
    scorer, proj = 8 * 8 + 8, 4 * 8
    counts_ok &= sizes["D"] - sizes["A"] == scorer + proj and sizes["B"] - sizes["A"] == scorer
    ok = identical and counts_ok
    record(7, ok, f"collapsed D == A bit-identical: {identical}; closed-form counts exact: {counts_ok}")
    assert ok


def test_criterion_8_bleu_suite():
    def s(t):
        return t.split()

    checks = {
        "identical": corpus_bleu([(s("a man rides a red bike"), [s("a man rides a red bike")])]).score == 1.0,
        "disjoint": corpus_bleu([(s("x y z w"), [s("a b c d")])]).score == 0.0,
    }
    res = corpus_bleu([(s("the the the"), [s("the cat")])])
    checks["clipped"] = res.precisions[0] == 1 / 3 and res.precisions[1] == 0.0 and res.score == 0.0
    rng = np.random.default_rng(0)
    words = list("abcdef")
    perm = dup = True
    for _ in range(50):
        pairs = [([words[i] for i in rng.integers(6, size=rng.integers(1, 9))],
                  [[words[i] for i in rng.integers(6, size=rng.integers(1, 9))] for _ in range(rng.integers(1, 4))])
                 for _ in range(rng.integers(1, 7))]
        base = corpus_bleu(pairs)
        perm &= corpus_bleu([pairs[i] for i in rng.permutation(len(pairs))]).score == base.score
        dup &= corpus_bleu(pairs + pairs).score == base.score
    checks["permutation"], checks["duplication"] = perm, dup
    ok = all(checks.values())
    record(8, ok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
    assert ok

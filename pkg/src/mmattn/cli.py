"""Command-line entry point: ``mmattn {synth,train,translate,eval,attend,entropy}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import synthetic, viz
from .analysis import attention_entropy
from .config import ConfigError, ExperimentConfig, load_config
from .corpus import CorpusError, Dataset, Vocabulary, build_dataset, load_parallel, read_features, read_lines, tokenize, write_features
from .metrics import corpus_bleu
from .model import ModelConfig, MultimodalNMT
from .search import BeamConfig, beam_search, best_source_select, greedy_translate
from .tensor import ContractError, DimensionError, NumericalError
from .trainer import load_checkpoint, save_checkpoint, save_log, train

log = logging.getLogger("mmattn")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    """Bad input detected before any real work: exit code 2."""


# -- data ------------------------------------------------------------------


def _need(path: str, what: str) -> str:
    if not path:
        raise UsageError(f"config is missing {what}")
    if not Path(path).is_file():
        raise UsageError(f"{what}: no such file {path}")
    return path


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset | None]:
    d = cfg.data
    if d.synthetic:
        train_c, valid_c = synthetic.generate(
            n_pairs=d.synthetic_pairs,
            num_attributes=d.synthetic_attributes,
            heldout_sources=d.synthetic_valid_sources,
            seed=cfg.seed,
        )
        train_ds = train_c.dataset()
        return train_ds, valid_c.dataset(train_ds.src_vocab, train_ds.tgt_vocab)
    train_ds = load_parallel(
        _need(d.train_src, "data.train_src"), _need(d.train_tgt, "data.train_tgt"),
        _need(d.train_ids, "data.train_ids"), _need(d.features, "data.features"),
        src_vocab_size=d.src_vocab_size, tgt_vocab_size=d.tgt_vocab_size,
    )
    if not train_ds.examples:
        raise UsageError("no training pairs survive length filtering")
    valid_ds = None
    if d.valid_src or d.valid_tgt or d.valid_ids:
        valid_ds = load_parallel(
            _need(d.valid_src, "data.valid_src"), _need(d.valid_tgt, "data.valid_tgt"),
            _need(d.valid_ids, "data.valid_ids"), _need(d.valid_features or d.features, "data.valid_features"),
            src_vocab=train_ds.src_vocab, tgt_vocab=train_ds.tgt_vocab, apply_filter=False,
        )
    return train_ds, valid_ds


def model_config(cfg: ExperimentConfig, train_ds: Dataset) -> ModelConfig:
    m = cfg.model
    return ModelConfig(
        src_vocab=len(train_ds.src_vocab), tgt_vocab=len(train_ds.tgt_vocab),
        emb=m.emb, enc_hidden=m.enc_hidden, dec_hidden=m.dec_hidden, att_hidden=m.att_hidden,
        channels=train_ds.feature_shape[1], visual_dim=m.visual_dim,
        encoder_dependent=m.encoder_dependent, decoder_dependent=m.decoder_dependent,
        fusion=m.fusion, use_image=m.use_image,
    )


def bleu_evaluator(dataset: Dataset, max_len: int):
    refs = [[dataset.tgt_vocab.decode(e.target_ids)] for e in dataset.examples]

    def evaluate(model) -> float:
        hyps = greedy_translate(model, dataset, max_len=max_len)
        pairs = [(dataset.tgt_vocab.decode(h.tokens), r) for h, r in zip(hyps, refs)]
        return 100.0 * corpus_bleu(pairs).score

    return evaluate


# -- commands --------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_c, valid_c = synthetic.generate(
        n_pairs=args.pairs, num_attributes=args.attributes, seed=args.seed,
        heldout_sources=args.valid_sources,
    )
    for split, corp in (("train", train_c), ("valid", valid_c)):
        (out / f"{split}.src").write_text("\n".join(corp.src) + "\n", encoding="utf-8")
        (out / f"{split}.tgt").write_text("\n".join(corp.tgt) + "\n", encoding="utf-8")
        (out / f"{split}.ids").write_text("\n".join(corp.image_ids) + "\n", encoding="utf-8")
    feats = dict(train_c.features)
    feats.update(valid_c.features)
    write_features(out / "features.mmfeat", feats)
    cfg = ExperimentConfig()
    cfg.output_dir = str(out / "run")
    for split in ("train", "valid"):
        setattr(cfg.data, f"{split}_src", str(out / f"{split}.src"))
        setattr(cfg.data, f"{split}_tgt", str(out / f"{split}.tgt"))
        setattr(cfg.data, f"{split}_ids", str(out / f"{split}.ids"))
    cfg.data.features = str(out / "features.mmfeat")
    cfg.train.max_epochs = args.epochs
    cfg.search.max_len = 20
    cfg.dump(out / "quickstart.cfg")
    print(f"wrote {len(train_c.src)} training and {len(valid_c.src)} validation pairs to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg.output_dir = args.out
    if args.epochs:
        cfg.train.max_epochs = args.epochs
    cfg.train.validate()
    train_ds, valid_ds = load_data(cfg)
    mcfg = model_config(cfg, train_ds)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "resolved.cfg")

    model = MultimodalNMT(mcfg, rng=cfg.seed)
    evaluator = bleu_evaluator(valid_ds, cfg.search.max_len) if valid_ds is not None and len(valid_ds) else None
    result = train(model, train_ds, cfg.train, evaluator=evaluator)
    save_log(out / "metrics.tsv", result.log)
    extra = {
        "src_vocab": train_ds.src_vocab.words,
        "tgt_vocab": train_ds.tgt_vocab.words,
        "search": {"beam_size": cfg.search.beam_size, "max_len": cfg.search.max_len,
                   "length_norm": cfg.search.length_norm},
        "best_epoch": result.best_epoch,
    }
    model.load_state_dict(result.best_state)
    save_checkpoint(out / "best.ckpt", model, result.optimizer, extra)
    train_ds.src_vocab.save(out / "src.vocab")
    train_ds.tgt_vocab.save(out / "tgt.vocab")
    series = {"train loss": [e.train_loss for e in result.log]}
    viz.plot_curves(out / "loss.png", series, "per-token NLL", "training loss")
    scores = [e.score for e in result.log if e.score is not None]
    if scores:
        viz.plot_curves(out / "bleu.png", {"valid BLEU": scores}, "BLEU", "validation BLEU (greedy)")
    first, last = result.log[0], result.log[-1]
    best = "n/a" if result.best_score is None else f"{result.best_score:.2f}"
    print(f"epochs={len(result.log)} loss {first.train_loss:.4f} -> {last.train_loss:.4f} "
          f"best_bleu={best} best_epoch={result.best_epoch} checkpoint={out / 'best.ckpt'}")
    return EXIT_OK


def _load_model(path):
    if not Path(path).is_file():
        raise UsageError(f"no such checkpoint {path}")
    model, _, extra = load_checkpoint(path)
    return model, Vocabulary(extra["src_vocab"]), Vocabulary(extra["tgt_vocab"]), extra


def _translation_inputs(model, src_path, feat_path, ids_path):
    lines = read_lines(_need(src_path, "source file"))
    feats = read_features(_need(feat_path, "feature file"))
    if ids_path:
        ids = read_lines(_need(ids_path, "image id file"))
    else:
        ids = list(feats)
    if len(ids) != len(lines):
        raise UsageError(f"{len(lines)} source lines but {len(ids)} image ids")
    missing = [i for i in ids if i not in feats]
    if missing:
        raise UsageError(f"no feature map for image {missing[0]!r}")
    R, C = next(iter(feats.values())).shape
    if model.config.use_image and C != model.config.channels:
        raise UsageError(f"checkpoint expects {model.config.channels} feature channels, file has {C}")
    return lines, ids, feats


def _beam_config(args, extra) -> BeamConfig:
    base = extra.get("search", {})
    cfg = BeamConfig(
        beam_size=args.beam if args.beam is not None else base.get("beam_size", 12),
        max_len=args.max_len if args.max_len is not None else base.get("max_len", 50),
        length_norm=not args.no_length_norm and base.get("length_norm", True),
    )
    if cfg.beam_size < 1 or cfg.max_len < 1:
        raise UsageError("--beam and --max-len must be >= 1")
    return cfg


def cmd_translate(args) -> int:
    model, src_vocab, tgt_vocab, extra = _load_model(args.checkpoint)
    lines, ids, feats = _translation_inputs(model, args.source, args.features, args.ids)
    bcfg = _beam_config(args, extra)
    hyps = []
    for line, image_id in zip(lines, ids):
        src = src_vocab.encode(tokenize(line))
        if not src:
            raise UsageError("empty source sentence")
        hyps.append(beam_search(model, src, feats[image_id], bcfg))
    if args.best_source:
        groups: dict[str, list] = {}
        for h, image_id in zip(hyps, ids):
            groups.setdefault(image_id, []).append(h)
        hyps = [best_source_select(g, bcfg.length_norm) for g in groups.values()]
    text = "".join(" ".join(tgt_vocab.decode(h.tokens)) + "\n" for h in hyps)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    hyps = read_lines(_need(args.hypotheses, "hypothesis file"))
    refs = [read_lines(_need(r, "reference file")) for r in args.references]
    for path, r in zip(args.references, refs):
        if len(r) != len(hyps):
            raise UsageError(f"{path} has {len(r)} lines, hypotheses have {len(hyps)}")
    if not hyps:
        raise UsageError("no hypotheses")
    pairs = [(tokenize(h), [tokenize(r[i]) for r in refs]) for i, h in enumerate(hyps)]
    res = corpus_bleu(pairs)
    precs = " ".join(f"p{n}={p:.3f}" for n, p in enumerate(res.precisions, 1))
    print(f"BLEU = {100.0 * res.score:.2f}")
    print(f"{precs} BP={res.brevity_penalty:.3f} hyp_len={res.hyp_len} ref_len={res.ref_len}")
    return EXIT_OK


def cmd_attend(args) -> int:
    model, src_vocab, tgt_vocab, extra = _load_model(args.checkpoint)
    lines, ids, feats = _translation_inputs(model, args.source, args.features, args.ids)
    bcfg = _beam_config(args, extra)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    warned = False
    for k, (line, image_id) in enumerate(zip(lines, ids)):
        toks = tokenize(line)
        src = src_vocab.encode(toks)
        if not src:
            raise UsageError("empty source sentence")
        hyp = beam_search(model, src, feats[image_id], bcfg, keep_attention=True)
        words = tgt_vocab.decode(hyp.tokens) + (["<eos>"] if hyp.complete else [])
        R = feats[image_id].shape[0]
        rows = []
        for t, word in enumerate(words):
            im = hyp.alpha_im[t] if hyp.alpha_im else np.zeros(0)
            rows.append(viz.DumpRow(word, t + 1, hyp.alpha_txt[t], im))
        stem = f"{k:04d}"
        viz.write_dump(out / f"{stem}.att.tsv", rows)
        if viz.grid_side(R) is None:
            if not warned:
                log.warning("%d image regions do not form a square grid; skipping rasters", R)
                warned = True
        else:
            for r in rows:
                if r.alpha_im.size:
                    viz.write_pgm(out / f"{stem}_t{r.step:02d}.pgm", viz.attention_raster(r.alpha_im))
        viz.plot_alignment(out / f"{stem}.png", toks, rows, title=" ".join(words))
    print(f"wrote attention for {len(lines)} sentence(s) to {out}")
    return EXIT_OK


def cmd_entropy(args) -> int:
    model, src_vocab, tgt_vocab, _ = _load_model(args.checkpoint)
    lines, ids, feats = _translation_inputs(model, args.source, args.features, args.ids)
    refs = read_lines(_need(args.target, "target file"))
    if len(refs) != len(lines):
        raise UsageError(f"{len(refs)} target lines vs {len(lines)} source lines")
    ds = build_dataset(lines, refs, ids, feats, src_vocab=src_vocab, tgt_vocab=tgt_vocab, apply_filter=False)
    rep = attention_entropy(model, ds)
    for line in rep.lines(Path(args.checkpoint).stem):
        print(line)
    return EXIT_OK


# -- wiring ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmattn", description="Multimodal attentive translation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic image-grounded corpus and a quickstart config")
    s.add_argument("out_dir")
    s.add_argument("--pairs", type=int, default=500)
    s.add_argument("--attributes", type=int, default=4)
    s.add_argument("--valid-sources", type=int, default=10)
    s.add_argument("--epochs", type=int, default=60)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_synth)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("config")
    t.add_argument("--out", help="output directory (overrides output_dir)")
    t.add_argument("--epochs", type=int, help="override train.max_epochs")
    t.set_defaults(fn=cmd_train)

    def decode_flags(q):
        q.add_argument("checkpoint")
        q.add_argument("source")
        q.add_argument("features")
        q.add_argument("--ids", help="image id per source line (default: feature file order)")
        q.add_argument("--beam", type=int)
        q.add_argument("--max-len", type=int)
        q.add_argument("--no-length-norm", action="store_true")

    tr = sub.add_parser("translate", help="beam-search translation")
    decode_flags(tr)
    tr.add_argument("--best-source", action="store_true", help="one output per image, best of its sources")
    tr.add_argument("-o", "--output")
    tr.set_defaults(fn=cmd_translate)

    e = sub.add_parser("eval", help="corpus BLEU of a hypothesis file")
    e.add_argument("hypotheses")
    e.add_argument("references", nargs="+")
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("attend", help="export attention weights and heatmaps")
    decode_flags(a)
    a.add_argument("out_dir")
    a.set_defaults(fn=cmd_attend)

    en = sub.add_parser("entropy", help="mean attention entropy under teacher forcing")
    decode_flags(en)
    en.add_argument("--target", required=True)
    en.set_defaults(fn=cmd_entropy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (UsageError, ConfigError, CorpusError, ContractError, DimensionError) as exc:
        print(f"mmattn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"mmattn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"mmattn: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

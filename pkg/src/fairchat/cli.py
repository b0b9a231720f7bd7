"""Command-line pipeline: corpus building, training stages, evaluation, chat.

Exit codes: 0 success (and fairness-gate pass), 2 fairness-gate failure,
1 any other error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from fairchat import corpora as cp
from fairchat import dialogue as dl
from fairchat import disentangle as dt
from fairchat import evaluate as ev
from fairchat import serialize as sz
from fairchat.config import load_config
from fairchat.layers import ReluMLP
from fairchat.text import (
    GenderLabel,
    build_vocabulary,
    detect_gender,
    load_attribute_lexicons,
    load_gender_lexicon,
    swap_gender,
    tokenize,
)

log = logging.getLogger("fairchat")

GATE_FAIL = 2


class StageError(RuntimeError):
    pass


def _lexicon_dir(cfg):
    return None if cfg.paths.lexicons in ("", "builtin") else cfg.paths.lexicons


def _load_lexicons(cfg):
    try:
        glex = load_gender_lexicon(_lexicon_dir(cfg))
        alex = load_attribute_lexicons(_lexicon_dir(cfg))
    except FileNotFoundError as exc:
        raise StageError(str(exc)) from exc
    return glex, alex


def _classifiers(cfg, alex):
    return (
        cp.lexicon_offense_classifier(alex),
        cp.lexicon_sentiment_classifier(alex, threshold=cfg.corpora.sentiment_threshold),
    )


def _out_dir(cfg):
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(cfg, out, command, inputs, outputs):
    manifest = {
        "command": command,
        "seed": cfg.run.seed,
        "config_hash": sz.config_hash(cfg.resolved()),
        "inputs": {str(p): sz.file_hash(p) for p in inputs if Path(p).exists()},
        "outputs": [str(p) for p in outputs],
    }
    path = out / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def _log_config(cfg, out):
    resolved = cfg.resolved()
    log.info("resolved config (hash %s): %s", sz.config_hash(resolved), sz.canonical_json(resolved))
    (_out_dir(cfg) / "resolved_config.json").write_text(
        json.dumps(resolved, indent=2), encoding="utf-8"
    )
    return out


def _append_metrics(path, records):
    with open(path, "a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _require(path, stage):
    if not Path(path).exists():
        raise StageError(f"missing {path} - run '{stage}' first")
    return path


def _vocab(out):
    return sz.load_vocabulary(_require(out / "vocab.json", "build-corpora"))


# -- commands ---------------------------------------------------------------


def cmd_build_corpora(cfg):
    out = _out_dir(cfg)
    _log_config(cfg, out)
    glex, alex = _load_lexicons(cfg)
    offense_clf, senti_clf = _classifiers(cfg, alex)
    raw = _require(cfg.paths.raw, "provide paths.raw")
    dialogues = cp.read_dialogues(raw, max_len=cfg.corpora.max_len)
    if not dialogues:
        log.warning("raw corpus %s has no usable dialogues", raw)

    rng = sz.substream(cfg.run.seed, "corpora")
    order = rng.permutation(len(dialogues)) if dialogues else np.array([], dtype=int)
    n_test = int(round(cfg.corpora.holdout_fraction * len(dialogues)))
    test_idx = set(order[:n_test].tolist())
    train = [d for i, d in enumerate(dialogues) if i not in test_idx]
    test = [d for i, d in enumerate(dialogues) if i in test_idx]

    unbiased = cp.build_unbiased_utterances(train, offense_clf, senti_clf, alex, glex)
    gendered = cp.build_gendered_dialogues(train, glex)
    neutral = cp.build_neutral_dialogues(train, glex)
    fairness_source = test if cfg.corpora.fairness_from == "test" else train
    fairness = (
        cp.build_fairness_pairs(fairness_source, glex, cfg.corpora.n_fairness_pairs, rng)
        if fairness_source
        else []
    )
    vocab_corpus = [d.message for d in train] + [d.response for d in train]
    vocab = build_vocabulary(vocab_corpus, cfg.corpora.vocab_size)

    cp.write_jsonl(out / "train.jsonl", [cp.dialogue_record(d) for d in train])
    cp.write_jsonl(out / "test.jsonl", [cp.dialogue_record(d) for d in test])
    cp.write_jsonl(out / "unbiased.jsonl", [cp.utterance_record(u) for u in unbiased])
    cp.write_jsonl(
        out / "gendered.jsonl", [cp.dialogue_record(g.pair, g.gender) for g in gendered]
    )
    cp.write_jsonl(out / "neutral.jsonl", [cp.dialogue_record(d) for d in neutral])
    cp.write_jsonl(out / "fairness.jsonl", [cp.fairness_record(p) for p in fairness])
    sz.save_vocabulary(out / "vocab.json", vocab)

    counts = {
        "dialogues": len(dialogues),
        "train": len(train),
        "test": len(test),
        "unbiased_utterances": len(unbiased),
        "unbiased_male": sum(1 for u in unbiased if u.gender is GenderLabel.MALE),
        "unbiased_female": sum(1 for u in unbiased if u.gender is GenderLabel.FEMALE),
        "gendered_dialogues": len(gendered),
        "neutral_dialogues": len(neutral),
        "fairness_pairs": len(fairness),
        "vocab_size": len(vocab),
    }
    (out / "counts.json").write_text(json.dumps(counts, indent=2), encoding="utf-8")
    for key, val in counts.items():
        log.info("corpus stat %s = %d", key, val)
    _write_manifest(
        cfg,
        out,
        "build-corpora",
        [raw],
        [out / name for name in (
            "train.jsonl", "test.jsonl", "unbiased.jsonl", "gendered.jsonl",
            "neutral.jsonl", "fairness.jsonl", "vocab.json", "counts.json",
        )],
    )
    return 0


def cmd_train_disentangle(cfg):
    out = _out_dir(cfg)
    _log_config(cfg, out)
    glex, alex = _load_lexicons(cfg)
    vocab = _vocab(out)
    corpus = cp.read_labeled_utterances(_require(out / "unbiased.jsonl", "build-corpora"))
    rng = sz.substream(cfg.run.seed, "disentangle")
    model = dt.DetModel(vocab, cfg.disentangle, rng)
    history = dt.det_train(
        model,
        corpus,
        alex,
        glex,
        rng,
        probe_every=cfg.det_extra.probe_every,
        probe_rng=sz.substream(cfg.run.seed, "disentangle-probe"),
    )
    metrics = out / "det_metrics.jsonl"
    metrics.unlink(missing_ok=True)
    _append_metrics(metrics, history)
    ckpt = out / "det.npz"
    sz.save_checkpoint(
        ckpt,
        kind="det",
        config=asdict(cfg.disentangle),
        states={"det": model.state_dict()},
        vocab_hash=sz.file_hash(out / "vocab.json"),
    )
    _write_manifest(cfg, out, "train-disentangle", [out / "unbiased.jsonl", out / "vocab.json"], [ckpt, metrics])
    return 0


def _load_det(cfg, out, force=False):
    vocab = _vocab(out)
    ckpt = _require(out / "det.npz", "train-disentangle")
    meta, states = sz.load_checkpoint(
        ckpt,
        kind="det",
        config=None if force else asdict(cfg.disentangle),
        vocab_hash=sz.file_hash(out / "vocab.json"),
        force=force,
    )
    model = dt.DetModel(vocab, dt.DetConfig(**meta["config"]), sz.substream(0, "det-load"))
    model.load_state_dict(states["det"])
    return model, vocab


def _new_seq2seq(cfg, vocab, stream):
    return dl.Seq2Seq(vocab, cfg.seq2seq, sz.substream(cfg.run.seed, stream))


def _save_seq2seq(cfg, out, name, model, extra_states=None, extra_meta=None):
    ckpt = out / name
    states = {"g": model.state_dict()}
    if extra_states:
        states.update(extra_states)
    sz.save_checkpoint(
        ckpt,
        kind="seq2seq",
        config=asdict(cfg.seq2seq),
        states=states,
        vocab_hash=sz.file_hash(out / "vocab.json"),
        extra=extra_meta,
    )
    return ckpt


def _load_seq2seq(cfg, out, path, force=False):
    vocab = _vocab(out)
    meta, states = sz.load_checkpoint(
        path,
        kind="seq2seq",
        config=None if force else asdict(cfg.seq2seq),
        vocab_hash=sz.file_hash(out / "vocab.json"),
        force=force,
    )
    model = dl.Seq2Seq(vocab, dl.Seq2SeqConfig(**meta["config"]), sz.substream(0, "seq-load"))
    model.load_state_dict(states["g"])
    return model, vocab, meta


def _train_mle_command(cfg, mode):
    out = _out_dir(cfg)
    _log_config(cfg, out)
    vocab = _vocab(out)
    pairs = cp.read_dialogues(_require(out / "train.jsonl", "build-corpora"), cfg.corpora.max_len)
    if not pairs:
        raise StageError("training corpus is empty")
    rng = sz.substream(cfg.run.seed, mode)
    model = _new_seq2seq(cfg, vocab, f"{mode}-init")
    tr = cfg.dialogue_train
    if mode == "pretrain":
        history = dl.pretrain_mle(
            model, pairs, tr.pretrain_epochs, rng, lr=tr.pretrain_lr,
            clip_norm=tr.clip_norm, batch_size=tr.batch_size,
        )
        name = "dialogue_pretrained.npz"
    elif mode == "cda":
        glex, _ = _load_lexicons(cfg)
        history, total = dl.train_cda(
            model, pairs, glex, tr.pretrain_epochs, rng, lr=tr.pretrain_lr,
            clip_norm=tr.clip_norm, batch_size=tr.batch_size,
        )
        log.info("cda augmented training set size = %d", total)
        name = "dialogue_cda.npz"
    else:  # wer
        glex, _ = _load_lexicons(cfg)
        history = dl.train_wer(
            model, pairs, glex, tr.pretrain_epochs, rng, k=cfg.wer.k,
            lr=tr.pretrain_lr, clip_norm=tr.clip_norm, batch_size=tr.batch_size,
        )
        name = "dialogue_wer.npz"
    metrics = out / f"{mode}_metrics.jsonl"
    metrics.unlink(missing_ok=True)
    _append_metrics(metrics, history)
    ckpt = _save_seq2seq(cfg, out, name, model)
    _write_manifest(cfg, out, mode, [out / "train.jsonl", out / "vocab.json"], [ckpt, metrics])
    return 0


def cmd_pretrain(cfg):
    return _train_mle_command(cfg, "pretrain")


def cmd_train_cda(cfg):
    return _train_mle_command(cfg, "cda")


def cmd_train_wer(cfg):
    return _train_mle_command(cfg, "wer")


def cmd_train_debiased(cfg):
    out = _out_dir(cfg)
    _log_config(cfg, out)
    glex, alex = _load_lexicons(cfg)
    offense_clf, senti_clf = _classifiers(cfg, alex)
    det_model, vocab = _load_det(cfg, out)
    model, _, _ = _load_seq2seq(
        cfg, out, _require(out / "dialogue_pretrained.npz", "pretrain")
    )
    gendered = cp.read_gendered_dialogues(_require(out / "gendered.jsonl", "build-corpora"))
    neutral = cp.read_dialogues(_require(out / "neutral.jsonl", "build-corpora"), cfg.corpora.max_len)
    fairness = cp.read_fairness_pairs(_require(out / "fairness.jsonl", "build-corpora"))
    rng = sz.substream(cfg.run.seed, "debias")
    d1 = ReluMLP(cfg.disentangle.gender_dim, cfg.adversarial.disc_hidden, 2, rng)
    d2 = ReluMLP(cfg.disentangle.semantic_dim, cfg.adversarial.disc_hidden, 2, rng)

    metrics = out / "debias_metrics.jsonl"
    metrics.unlink(missing_ok=True)

    result = dl.adversarial_train(
        model, det_model, d1, d2, gendered, neutral, fairness,
        offense_clf, senti_clf, alex, cfg.adversarial, cfg.schedule, rng,
        log_record=lambda rec: _append_metrics(metrics, [rec]),
    )
    ckpt = _save_seq2seq(
        cfg, out, "dialogue_debiased.npz", model,
        extra_states={"d1": d1.state_dict(), "d2": d2.state_dict()},
        extra_meta={"gate_passed": result.passed, "loops": result.loops},
    )
    _write_manifest(
        cfg, out, "train-debiased",
        [out / p for p in ("det.npz", "dialogue_pretrained.npz", "gendered.jsonl", "neutral.jsonl", "fairness.jsonl")],
        [ckpt, metrics],
    )
    if result.report is not None:
        log.info("final fairness report:\n%s", ev.render_fairness_text(result.report))
    return 0 if result.passed else GATE_FAIL


def cmd_eval(cfg, checkpoint, which, force=False):
    out = _out_dir(cfg)
    _log_config(cfg, out)
    glex, alex = _load_lexicons(cfg)
    offense_clf, senti_clf = _classifiers(cfg, alex)
    model, vocab, _ = _load_seq2seq(cfg, out, _require(checkpoint, "a training stage"), force=force)
    stem = Path(checkpoint).stem
    outputs = []

    if which in ("fairness", "both"):
        fairness = cp.read_fairness_pairs(_require(out / "fairness.jsonl", "build-corpora"))
        passed, report = dl.fairness_gate(model, fairness, offense_clf, senti_clf, alex)
        text = ev.render_fairness_text(report)
        print(text)
        json_path = out / f"eval_fairness_{stem}.json"
        json_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        (out / f"eval_fairness_{stem}.txt").write_text(text + "\n", encoding="utf-8")
        outputs += [json_path, out / f"eval_fairness_{stem}.txt"]
        log.info("fairness gate %s", "passed" if passed else "failed")

    if which in ("quality", "both"):
        test = cp.read_dialogues(_require(out / "test.jsonl", "build-corpora"), cfg.corpora.max_len)
        if not test:
            raise StageError("test split is empty; cannot compute quality metrics")
        hyps = dl.generate_batch(model, [p.message for p in test])
        refs = [list(p.response.tokens) for p in test]
        report = ev.quality_report(hyps, refs)
        json_path = out / f"eval_quality_{stem}.json"
        json_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        outputs.append(json_path)
        log.info(
            "quality: BLEU-1 %.3f BLEU-2 %.3f BLEU-3 %.3f Distinct-1 %.3f Distinct-2 %.3f",
            report.bleu1, report.bleu2, report.bleu3, report.distinct1, report.distinct2,
        )

    _write_manifest(cfg, out, "eval", [checkpoint], outputs)
    return 0


def cmd_chat(cfg, checkpoint, input_path, output_path=None, paired=False, force=False):
    out = _out_dir(cfg)
    _log_config(cfg, out)
    model, vocab, _ = _load_seq2seq(cfg, out, _require(checkpoint, "a training stage"), force=force)
    glex, _ = _load_lexicons(cfg)
    lines = [ln.strip() for ln in Path(input_path).read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln]
    messages = [tokenize(ln) for ln in lines]
    responses = dl.generate_batch(model, messages)
    rows = []
    if paired:
        swapped = [swap_gender(m, glex)[0] for m in messages]
        swapped_responses = dl.generate_batch(model, swapped)
        for msg, resp, smsg, sresp in zip(messages, responses, swapped, swapped_responses):
            rows.append(f"{msg.raw}\t{' '.join(resp)}\t{smsg.raw}\t{' '.join(sresp)}")
    else:
        rows = [" ".join(resp) for resp in responses]
    output_path = Path(output_path) if output_path else out / "chat_responses.txt"
    output_path.write_text("\n".join(rows) + ("\n" if rows else ""), encoding="utf-8")
    log.info("wrote %d responses to %s", len(rows), output_path)
    _write_manifest(cfg, out, "chat", [input_path], [output_path])
    return 0


def cmd_export_features(cfg, input_path=None, output_path=None, force=False):
    out = _out_dir(cfg)
    _log_config(cfg, out)
    det_model, vocab = _load_det(cfg, out, force=force)
    source = input_path or (out / "unbiased.jsonl")
    corpus = cp.read_labeled_utterances(_require(source, "build-corpora"))
    output_path = Path(output_path) if output_path else out / "features.csv"
    dt.export_features(det_model, corpus, output_path)
    log.info("exported %d feature rows to %s", len(corpus), output_path)
    _write_manifest(cfg, out, "export-features", [source], [output_path])
    return 0


# -- argument parsing --------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fairchat",
        description="Train and audit gender-debiased Seq2Seq dialogue models.",
    )
    parser.add_argument("--config", help="INI config file", default=None)
    parser.add_argument("--seed", type=int, help="global seed (overrides config)", default=None)
    parser.add_argument("--out", help="output directory (overrides config)", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("build-corpora", help="derive the training/eval corpora from the raw corpus")
    sub.add_parser("train-disentangle", help="train the feature disentanglement model")
    sub.add_parser("pretrain", help="MLE-pretrain the dialogue model")
    sub.add_parser("train-debiased", help="run the adversarial debiasing loop")
    sub.add_parser("train-cda", help="counterpart-data-augmentation baseline")
    sub.add_parser("train-wer", help="word-embedding-regularization baseline")

    p_eval = sub.add_parser("eval", help="fairness/quality evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--which", choices=("fairness", "quality", "both"), default="both")
    p_eval.add_argument("--force", action="store_true", help="skip config-match checks")

    p_chat = sub.add_parser("chat", help="generate greedy responses for a message file")
    p_chat.add_argument("--checkpoint", required=True)
    p_chat.add_argument("--input", required=True)
    p_chat.add_argument("--output", default=None)
    p_chat.add_argument("--paired", action="store_true", help="also respond to the gender-swapped message")
    p_chat.add_argument("--force", action="store_true")

    p_exp = sub.add_parser("export-features", help="write disentangled features to CSV")
    p_exp.add_argument("--input", default=None, help="labeled utterance JSONL (default: unbiased.jsonl)")
    p_exp.add_argument("--output", default=None)
    p_exp.add_argument("--force", action="store_true")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.run.seed = args.seed
        if args.out is not None:
            cfg.paths.out = args.out

        if args.command == "build-corpora":
            return cmd_build_corpora(cfg)
        if args.command == "train-disentangle":
            return cmd_train_disentangle(cfg)
        if args.command == "pretrain":
            return cmd_pretrain(cfg)
        if args.command == "train-debiased":
            return cmd_train_debiased(cfg)
        if args.command == "train-cda":
            return cmd_train_cda(cfg)
        if args.command == "train-wer":
            return cmd_train_wer(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.which, force=args.force)
        if args.command == "chat":
            return cmd_chat(cfg, args.checkpoint, args.input, args.output, args.paired, args.force)
        if args.command == "export-features":
            return cmd_export_features(cfg, args.input, args.output, args.force)
        raise StageError(f"unknown command {args.command}")
    except (StageError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

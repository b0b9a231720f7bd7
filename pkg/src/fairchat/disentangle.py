"""Disentanglement autoencoder with adversarial gender/content discriminators.

A GRU autoencoder splits an utterance's latent state into gender features
f_u and semantic features f_s.  Four single-layer discriminators shape the
split: gender from f_u (trained with the autoencoder), gender from f_s
(adversary), bag-of-words from f_u (adversary), bag-of-words from f_s
(trained with the autoencoder).  The sign convention for the adversarial
generator-side losses is negative entropy, so minimizing drives the
adversaries' predictions toward the uniform distribution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from fairchat import autograd as ag
from fairchat.autograd import Tensor
from fairchat.layers import (
    Embedding,
    GRUCell,
    Linear,
    Module,
    SoftmaxClassifier,
    teacher_arrays,
)
from fairchat.optim import Adam
from fairchat.text import GenderLabel, bow_features

log = logging.getLogger(__name__)

GENDER_INDEX = {GenderLabel.MALE: 0, GenderLabel.FEMALE: 1}
EPS = 1e-12


@dataclass
class DetConfig:
    embed_dim: int = 300
    hidden_dim: int = 1000
    gender_dim: int = 200
    semantic_dim: int = 800
    k1: float = 10.0
    k2: float = 1.0
    k3: float = 1.0
    k4: float = 3.0
    n_epoch: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.gender_dim < 1 or self.semantic_dim < 1:
            raise ValueError("feature dimensions must be >= 1")

    @classmethod
    def desk(cls, **overrides):
        """Desk-scale defaults preserving the 1:3 gender:semantic ratio."""
        base = dict(embed_dim=32, hidden_dim=64, gender_dim=16, semantic_dim=48)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class DisentangledFeatures:
    f_u: np.ndarray
    f_s: np.ndarray


# -- loss primitives ------------------------------------------------------


def nll_rows(p, labels):
    """Mean over rows of -log p[row, label]."""
    picked = ag.select_columns(ag.log_clamped(p, EPS), labels)
    return ag.tsum(picked) * (-1.0 / p.shape[0])


def neg_entropy_rows(p):
    """Mean over rows of sum_i p_i log p_i (minimized at uniform)."""
    return ag.tsum(ag.mul(p, ag.log_clamped(p, EPS))) / p.shape[0]


def bow_xent_rows(p, bow_dense, row_weights):
    """Weighted mean over rows of -sum_i B_i log p_i; weights 0 skip rows."""
    total = float(row_weights.sum())
    if total == 0.0:
        return Tensor(0.0)
    weighted = ag.mul(ag.mul(ag.log_clamped(p, EPS), Tensor(bow_dense)), Tensor(row_weights[:, None]))
    return ag.tsum(weighted) * (-1.0 / total)


def loss_d1(p_u, g) -> float:
    """-log p_u[g] for a single 2-class distribution."""
    g = GENDER_INDEX[g] if isinstance(g, GenderLabel) else int(g)
    p = np.asarray(p_u, dtype=np.float64)
    return float(-np.log(np.maximum(p[g], EPS)))


def loss_d2(p_s) -> float:
    """Negative entropy of a 2-class distribution; minimum -ln 2 at uniform."""
    p = np.maximum(np.asarray(p_s, dtype=np.float64), EPS)
    return float(np.sum(p * np.log(p)))


def loss_d3(bow_pred_u) -> float:
    """Negative entropy of a vocabulary-sized distribution."""
    p = np.maximum(np.asarray(bow_pred_u, dtype=np.float64), EPS)
    return float(np.sum(p * np.log(p)))


def loss_d4(bow_pred_s, bow) -> float:
    """Cross-entropy -sum_i B_i log p_i; empty bag contributes zero."""
    dense = bow.to_dense() if hasattr(bow, "to_dense") else np.asarray(bow, dtype=np.float64)
    if not dense.any():
        return 0.0
    p = np.maximum(np.asarray(bow_pred_s, dtype=np.float64), EPS)
    return float(-np.sum(dense * np.log(p)))


# -- model ----------------------------------------------------------------


def pad_batch(id_lists, pad_id):
    """Right-pad integer id lists to (B, T) plus a float validity mask."""
    max_len = max(len(ids) for ids in id_lists)
    batch = np.full((len(id_lists), max_len), pad_id, dtype=np.int64)
    mask = np.zeros((len(id_lists), max_len))
    for i, ids in enumerate(id_lists):
        batch[i, : len(ids)] = ids
        mask[i, : len(ids)] = 1.0
    return batch, mask


class DetModel(Module):
    def __init__(self, vocab, cfg: DetConfig, rng):
        self.cfg = cfg
        self.vocab = vocab
        v = len(vocab)
        latent = cfg.gender_dim + cfg.semantic_dim
        self.emb = Embedding(v, cfg.embed_dim, rng)
        self.enc = GRUCell(cfg.embed_dim, cfg.hidden_dim, rng)
        self.proj_u = Linear(cfg.hidden_dim, cfg.gender_dim, rng)
        self.proj_s = Linear(cfg.hidden_dim, cfg.semantic_dim, rng)
        self.dec = GRUCell(cfg.embed_dim, latent, rng)
        self.out = Linear(latent, v, rng)
        self.d1 = SoftmaxClassifier(cfg.gender_dim, 2, rng)
        self.d2 = SoftmaxClassifier(cfg.semantic_dim, 2, rng)
        self.d3 = SoftmaxClassifier(cfg.gender_dim, v, rng)
        self.d4 = SoftmaxClassifier(cfg.semantic_dim, v, rng)

    # encoding ---------------------------------------------------------
    def encode_ids(self, ids, mask):
        x_seq = ag.embedding_seq(self.emb.weight, ids)
        states = self.enc.run_seq(x_seq, mask=np.ascontiguousarray(mask.T))
        return states[ids.shape[1] - 1]

    def encode_soft(self, soft_vectors, step_mask):
        """Encode a soft one-hot sequence via expected embeddings."""
        if not soft_vectors or not step_mask.any():
            raise ValueError("cannot encode an empty soft sequence")
        steps = len(soft_vectors)
        batch, v = soft_vectors[0].shape
        flat = ag.reshape(ag.stack(soft_vectors), (steps * batch, v))
        x_seq = ag.reshape(ag.matmul(flat, self.emb.weight), (steps, batch, self.cfg.embed_dim))
        states = self.enc.run_seq(x_seq, mask=np.ascontiguousarray(step_mask.T))
        return states[steps - 1]

    def split(self, h):
        return self.proj_u(h), self.proj_s(h)

    def encode_split(self, utterance) -> DisentangledFeatures:
        """Inference-mode features for one utterance."""
        if not utterance.tokens:
            raise ValueError("cannot encode an empty utterance")
        ids, mask = pad_batch([self.vocab.encode(utterance.tokens)], self.vocab.pad_id)
        with ag.no_grad():
            f_u, f_s = self.split(self.encode_ids(ids, mask))
        return DisentangledFeatures(f_u=f_u.data[0].copy(), f_s=f_s.data[0].copy())

    # decoding -----------------------------------------------------------
    def decoder_teacher_loss(self, ids, mask, h0):
        """Mean token cross-entropy of teacher-forced reconstruction."""
        inputs, targets, weights = teacher_arrays(
            ids, mask, self.vocab.bos_id, self.vocab.eos_id, self.vocab.pad_id
        )
        steps, batch = inputs.shape[1], inputs.shape[0]
        x_seq = ag.embedding_seq(self.emb.weight, inputs)
        states = self.dec.run_seq(x_seq, h0=h0)
        latent = self.cfg.gender_dim + self.cfg.semantic_dim
        logits = self.out(ag.reshape(states, (steps * batch, latent)))
        loss = ag.softmax_xent(logits, targets.T.ravel(), weights.T.ravel())
        return loss / float(weights.sum())

    def reconstruct(self, utterance, max_len=None):
        """Greedy decode of an utterance from its own features."""
        if not utterance.tokens:
            raise ValueError("cannot reconstruct an empty utterance")
        limit = max_len or (2 * len(utterance.tokens) + 5)
        ids, mask = pad_batch([self.vocab.encode(utterance.tokens)], self.vocab.pad_id)
        out_tokens = []
        with ag.no_grad():
            f_u, f_s = self.split(self.encode_ids(ids, mask))
            h = ag.concat([f_u, f_s], axis=1)
            token = self.vocab.bos_id
            for _ in range(limit):
                h = self.dec(self.emb(np.array([token])), h)
                token = int(np.argmax(self.out(h).data[0]))
                if token == self.vocab.eos_id:
                    break
                out_tokens.append(self.vocab.id_to_token[token])
        return out_tokens


# -- batched losses --------------------------------------------------------


class PreparedCorpus:
    """Pre-encoded ids, gender indices, and dense BoW targets for a corpus."""

    def __init__(self, model, corpus, lex, glex):
        self.ids = []
        for item in corpus:
            if not item.utterance.tokens:
                raise ValueError("corpus contains an empty utterance")
            self.ids.append(model.vocab.encode(item.utterance.tokens))
        self.genders = np.array([GENDER_INDEX[item.gender] for item in corpus], dtype=np.int64)
        bows = [bow_features(item.utterance, lex, glex, model.vocab) for item in corpus]
        self.bow_dense = np.stack([b.to_dense() for b in bows]) if bows else np.zeros((0, len(model.vocab)))
        self.bow_weight = np.array([0.0 if b.is_empty else 1.0 for b in bows])

    def batch(self, idx, pad_id):
        ids, mask = pad_batch([self.ids[i] for i in idx], pad_id)
        return ids, mask, self.genders[idx], self.bow_dense[idx], self.bow_weight[idx]


def _batch_arrays(model, batch, lex, glex):
    prep = PreparedCorpus(model, batch, lex, glex)
    return prep.batch(np.arange(len(batch)), model.vocab.pad_id)


def reconstruct_loss(model, utterance) -> float:
    """Teacher-forced reconstruction cross-entropy for a single utterance."""
    if not utterance.tokens:
        raise ValueError("cannot reconstruct an empty utterance")
    ids, mask = pad_batch([model.vocab.encode(utterance.tokens)], model.vocab.pad_id)
    with ag.no_grad():
        f_u, f_s = model.split(model.encode_ids(ids, mask))
        loss = model.decoder_teacher_loss(ids, mask, ag.concat([f_u, f_s], axis=1))
    return loss.item()


def _combined_loss_arrays(model, ids, mask, genders, bow_dense, bow_weights):
    cfg = model.cfg
    f_u, f_s = model.split(model.encode_ids(ids, mask))
    l_rec = model.decoder_teacher_loss(ids, mask, ag.concat([f_u, f_s], axis=1))
    l_d1 = nll_rows(model.d1(f_u), genders)
    l_d2 = neg_entropy_rows(model.d2(f_s))
    l_d3 = neg_entropy_rows(model.d3(f_u))
    l_d4 = bow_xent_rows(model.d4(f_s), bow_dense, bow_weights)
    total = l_rec + cfg.k1 * l_d1 + cfg.k2 * l_d2 + cfg.k3 * l_d3 + cfg.k4 * l_d4
    parts = {
        "l_rec": l_rec.item(),
        "l_d1": l_d1.item(),
        "l_d2": l_d2.item(),
        "l_d3": l_d3.item(),
        "l_d4": l_d4.item(),
        "l_det": total.item(),
    }
    return total, parts


def combined_loss(model, batch, lex, glex):
    """Weighted training objective with per-component values.

    Returns (loss tensor, dict of component floats).
    """
    return _combined_loss_arrays(model, *_batch_arrays(model, batch, lex, glex))


def _adversary_loss_arrays(model, ids, mask, genders, bow_dense, bow_weights):
    with ag.no_grad():
        f_u, f_s = model.split(model.encode_ids(ids, mask))
    d2_ce = nll_rows(model.d2(Tensor(f_s.data)), genders)
    d3_ce = bow_xent_rows(model.d3(Tensor(f_u.data)), bow_dense, bow_weights)
    return d2_ce + d3_ce, {"adv_d2_ce": d2_ce.item(), "adv_d3_ce": d3_ce.item()}


def adversary_loss(model, batch, lex, glex):
    """Phase-A objective: D2 predicts gender from f_s, D3 predicts the bag
    of words from f_u; features are detached so only D2/D3 receive gradients."""
    return _adversary_loss_arrays(model, *_batch_arrays(model, batch, lex, glex))


# -- training ---------------------------------------------------------------


def det_train(model, corpus, lex, glex, rng, probe_every=0, probe_rng=None):
    """Alternating training: adversaries (D2, D3) then the autoencoder side.

    Returns a per-epoch history list.  Requires both genders in the corpus.
    """
    cfg = model.cfg
    genders = {item.gender for item in corpus}
    if not {GenderLabel.MALE, GenderLabel.FEMALE} <= genders:
        raise ValueError("disentanglement training needs both genders in the corpus")

    adv_params = model.d2.parameters() + model.d3.parameters()
    adv_ids = {id(p) for p in adv_params}
    main_params = [p for p in model.parameters() if id(p) not in adv_ids]
    opt_adv = Adam(adv_params, lr=cfg.learning_rate)
    opt_main = Adam(main_params, lr=cfg.learning_rate)
    prepared = PreparedCorpus(model, corpus, lex, glex)

    history = []
    for epoch in range(cfg.n_epoch):
        order = rng.permutation(len(corpus))
        sums, batches = {}, 0
        for start in range(0, len(corpus), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            arrays = prepared.batch(idx, model.vocab.pad_id)

            adv_total, adv_parts = _adversary_loss_arrays(model, *arrays)
            opt_adv.zero_grad()
            adv_total.backward()
            opt_adv.step()

            total, parts = _combined_loss_arrays(model, *arrays)
            opt_main.zero_grad()
            opt_adv.zero_grad()
            total.backward()
            opt_main.step()
            opt_adv.zero_grad()  # D2/D4-adjacent grads from the joint graph are discarded

            batches += 1
            for key, val in {**parts, **adv_parts}.items():
                sums[key] = sums.get(key, 0.0) + val
        record = {"epoch": epoch, **{k: v / batches for k, v in sums.items()}}
        if probe_every and (epoch + 1) % probe_every == 0:
            record.update(run_probes(model, corpus, probe_rng or rng))
        history.append(record)
        log.info(
            "det epoch %d: l_det=%.4f l_rec=%.4f l_d1=%.4f", epoch, record["l_det"], record["l_rec"], record["l_d1"]
        )
    return history


def extract_features(model, corpus, batch_size=64):
    """Inference-mode f_u/f_s matrices and integer gender labels."""
    f_u_rows, f_s_rows = [], []
    labels = np.array([GENDER_INDEX[item.gender] for item in corpus], dtype=np.int64)
    with ag.no_grad():
        for start in range(0, len(corpus), batch_size):
            chunk = corpus[start : start + batch_size]
            ids, mask = pad_batch(
                [model.vocab.encode(item.utterance.tokens) for item in chunk], model.vocab.pad_id
            )
            f_u, f_s = model.split(model.encode_ids(ids, mask))
            f_u_rows.append(f_u.data)
            f_s_rows.append(f_s.data)
    return np.concatenate(f_u_rows), np.concatenate(f_s_rows), labels


def probe_accuracy(features, labels, rng, train_frac=0.8, steps=300, lr=0.05):
    """Held-out accuracy of a freshly trained single-layer gender classifier."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise ValueError("probe needs at least two classes")
    n = len(labels)
    if n < 5:
        raise ValueError("too few examples for a probe split")
    order = rng.permutation(n)
    cut = int(round(train_frac * n))
    train_idx, test_idx = order[:cut], order[cut:]
    if len(np.unique(labels[test_idx])) < 2:
        raise ValueError("degenerate single-class probe test split")

    mean = features[train_idx].mean(axis=0)
    std = features[train_idx].std(axis=0) + 1e-8
    train_x = (features[train_idx] - mean) / std
    test_x = (features[test_idx] - mean) / std

    probe = Linear(features.shape[1], 2, rng)
    opt = Adam(probe.parameters(), lr=lr)
    weights = np.full(len(train_idx), 1.0 / len(train_idx))
    for _ in range(steps):
        loss = ag.softmax_xent(probe(Tensor(train_x)), labels[train_idx], weights)
        opt.zero_grad()
        loss.backward()
        opt.step()
    with ag.no_grad():
        pred = np.argmax(probe(Tensor(test_x)).data, axis=1)
    return float((pred == labels[test_idx]).mean())


def run_probes(model, corpus, rng):
    f_u, f_s, labels = extract_features(model, corpus)
    return {
        "probe_u": probe_accuracy(f_u, labels, rng),
        "probe_s": probe_accuracy(f_s, labels, rng),
    }


def export_features(model, corpus, path):
    """CSV export: gender label plus the f_u and f_s feature columns."""
    f_u, f_s, labels = extract_features(model, corpus)
    names = ["gender"]
    names += [f"u{i}" for i in range(f_u.shape[1])]
    names += [f"s{i}" for i in range(f_s.shape[1])]
    inverse = {v: k.value for k, v in GENDER_INDEX.items()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for label, row_u, row_s in zip(labels, f_u, f_s):
            values = [inverse[int(label)]]
            values += [f"{v:.10g}" for v in row_u]
            values += [f"{v:.10g}" for v in row_s]
            fh.write(",".join(values) + "\n")

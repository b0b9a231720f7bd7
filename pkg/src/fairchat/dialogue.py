"""Seq2Seq dialogue model, adversarial debiasing loop, and the CDA/WER baselines.

The generator is an LSTM encoder-decoder.  Debiasing alternates three
phases per loop: train the semantic-feature adversary on sampled responses,
update the generator (jointly with the gender-feature discriminator) on the
compound loss, then stabilize with a teacher-forcing step on neutral
dialogues.  Generated responses reach the frozen disentanglement encoder as
Gumbel-Softmax soft one-hots via expected embeddings, which keeps the whole
path differentiable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from fairchat import autograd as ag
from fairchat import evaluate
from fairchat.autograd import Tensor
from fairchat.corpora import DialoguePair
from fairchat.disentangle import GENDER_INDEX, neg_entropy_rows, nll_rows, pad_batch
from fairchat.layers import Embedding, Linear, LSTMStack, Module, ReluMLP, teacher_arrays
from fairchat.optim import SGD, Adam
from fairchat.text import Utterance, swap_gender

log = logging.getLogger(__name__)


@dataclass
class Seq2SeqConfig:
    embed_dim: int = 300
    hidden_dim: int = 1024
    num_layers: int = 3
    max_decode_len: int = 30

    @classmethod
    def desk(cls, **overrides):
        base = dict(embed_dim=32, hidden_dim=64, num_layers=1, max_decode_len=16)
        base.update(overrides)
        return cls(**base)


@dataclass
class GumbelSchedule:
    tau0: float = 1.0
    divisor: float = 1.1
    interval: int = 200
    floor: float = 0.3

    def tau_at(self, iteration):
        """tau0 / divisor^(iteration // interval), frozen at the first value
        that falls below the floor."""
        tau = self.tau0
        for _ in range(iteration // self.interval):
            if tau < self.floor:
                break
            tau /= self.divisor
        return tau


@dataclass
class AdvConfig:
    kp1: float = 1.0
    kp2: float = 1.0
    d_steps: int = 2
    g_steps: int = 2
    g_teach_steps: int = 1
    batch_size: int = 32
    max_loops: int = 200
    gate_every: int = 10
    learning_rate: float = 1e-3
    disc_hidden: int = 64

    def __post_init__(self):
        if self.max_loops < 1:
            raise ValueError("max_loops must be >= 1")
        if min(self.d_steps, self.g_steps, self.g_teach_steps) < 0:
            raise ValueError("step counts must be >= 0")


class Seq2Seq(Module):
    def __init__(self, vocab, cfg: Seq2SeqConfig, rng):
        self.cfg = cfg
        self.vocab = vocab
        self.emb = Embedding(len(vocab), cfg.embed_dim, rng)
        self.enc = LSTMStack(cfg.embed_dim, cfg.hidden_dim, cfg.num_layers, rng)
        self.dec = LSTMStack(cfg.embed_dim, cfg.hidden_dim, cfg.num_layers, rng)
        self.out = Linear(cfg.hidden_dim, len(vocab), rng)

    def encode(self, ids, mask):
        x_seq = ag.embedding_seq(self.emb.weight, ids)
        _, finals = self.enc.run_seq(x_seq, mask=np.ascontiguousarray(mask.T))
        return finals

    def mle_loss(self, msg_ids, msg_mask, resp_ids, resp_mask):
        """Teacher-forced mean token cross-entropy."""
        states = self.encode(msg_ids, msg_mask)
        inputs, targets, weights = teacher_arrays(
            resp_ids, resp_mask, self.vocab.bos_id, self.vocab.eos_id, self.vocab.pad_id
        )
        steps, batch = inputs.shape[1], inputs.shape[0]
        x_seq = ag.embedding_seq(self.emb.weight, inputs)
        top, _ = self.dec.run_seq(x_seq, states=states)
        logits = self.out(ag.reshape(top, (steps * batch, self.cfg.hidden_dim)))
        loss = ag.softmax_xent(logits, targets.T.ravel(), weights.T.ravel())
        return loss / float(weights.sum())


def encode_pairs(pairs, vocab):
    return [(vocab.encode(p.message.tokens), vocab.encode(p.response.tokens)) for p in pairs]


def _batch_encoded(encoded, idx, pad_id):
    msg_ids, msg_mask = pad_batch([encoded[i][0] for i in idx], pad_id)
    resp_ids, resp_mask = pad_batch([encoded[i][1] for i in idx], pad_id)
    return msg_ids, msg_mask, resp_ids, resp_mask


def batch_pairs(pairs, vocab):
    return _batch_encoded(encode_pairs(pairs, vocab), range(len(pairs)), vocab.pad_id)


def generate_batch(model, messages, max_len=None):
    """Greedy responses (token lists) for a list of message utterances."""
    vocab = model.vocab
    limit = max_len or model.cfg.max_decode_len
    outs = [[] for _ in messages]
    with ag.no_grad():
        ids, mask = pad_batch([vocab.encode(m.tokens) for m in messages], vocab.pad_id)
        states = model.encode(ids, mask)
        token = np.full(len(messages), vocab.bos_id, dtype=np.int64)
        done = np.zeros(len(messages), dtype=bool)
        for _ in range(limit):
            h_top, states = model.dec(model.emb(token), states)
            token = np.argmax(model.out(h_top).data, axis=1)
            for i, t in enumerate(token):
                if done[i]:
                    continue
                if t == vocab.eos_id:
                    done[i] = True
                else:
                    outs[i].append(vocab.id_to_token[t])
            if done.all():
                break
    return outs


def generate(model, message: Utterance, max_len=None) -> Utterance:
    """Deterministic greedy response to one message."""
    return Utterance.from_tokens(generate_batch(model, [message], max_len)[0])


def gumbel_softmax_sample(logits, tau, rng):
    """softmax((logits + Gumbel noise) / tau); rows sum to one."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    uniform = rng.uniform(low=np.nextafter(0.0, 1.0), high=1.0, size=logits.shape)
    noise = -np.log(-np.log(uniform))
    return ag.softmax(ag.add(logits, Tensor(noise)) * (1.0 / tau))


def soft_decode(model, msg_ids, msg_mask, tau, rng, max_len=None):
    """Autoregressive Gumbel-Softmax decoding.

    Each step feeds the expected embedding of the previous soft sample.
    Returns (soft vectors, step mask, sampled ids); the step emitting EOS is
    included, so every row has at least one unmasked step.
    """
    limit = max_len or model.cfg.max_decode_len
    batch = msg_ids.shape[0]
    states = model.encode(msg_ids, msg_mask)
    x = model.emb(np.full(batch, model.vocab.bos_id, dtype=np.int64))
    done = np.zeros(batch, dtype=bool)
    soft, mask_cols, id_cols = [], [], []
    for _ in range(limit):
        h_top, states = model.dec(x, states)
        y = gumbel_softmax_sample(model.out(h_top), tau, rng)
        soft.append(y)
        mask_cols.append((~done).astype(np.float64))
        ids = np.argmax(y.data, axis=1)
        id_cols.append(ids)
        done |= ids == model.vocab.eos_id
        if done.all():
            break
        x = model.emb.soft(y)
    return soft, np.column_stack(mask_cols), np.column_stack(id_cols)


def adv_losses(det_model, d1, d2, soft_seq, step_mask, genders):
    """Compound-loss components from the frozen feature splitter.

    l_d1: cross-entropy of the gender discriminator on f_u; l_d2: negative
    entropy of the adversary on f_s (minimized at uniform).
    """
    h = det_model.encode_soft(soft_seq, step_mask)
    f_u = det_model.proj_u(h)
    f_s = det_model.proj_s(h)
    l_d1 = nll_rows(d1(f_u), genders)
    l_d2 = neg_entropy_rows(d2(f_s))
    return l_d1, l_d2


# -- pretraining and baselines ---------------------------------------------


def pretrain_mle(model, pairs, epochs, rng, lr=1.0, clip_norm=5.0, batch_size=32):
    """Plain MLE teacher forcing with SGD; returns per-epoch history."""
    if not pairs:
        raise ValueError("pretraining corpus is empty")
    opt = SGD(model.parameters(), lr=lr, clip_norm=clip_norm)
    encoded = encode_pairs(pairs, model.vocab)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        total, batches = 0.0, 0
        for start in range(0, len(pairs), batch_size):
            idx = order[start : start + batch_size]
            loss = model.mle_loss(*_batch_encoded(encoded, idx, model.vocab.pad_id))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            batches += 1
        record = {"epoch": epoch, "mle": total / batches, "ppl": float(np.exp(total / batches))}
        history.append(record)
        log.info("pretrain epoch %d: mle=%.4f ppl=%.2f", epoch, record["mle"], record["ppl"])
    return history


def augment_cda(pairs, glex):
    """Swapped copies of every pair containing a gender word on either side."""
    added = []
    for pair in pairs:
        if any(glex.is_gendered(t) for t in pair.message.tokens + pair.response.tokens):
            swapped_msg, _ = swap_gender(pair.message, glex)
            swapped_resp, _ = swap_gender(pair.response, glex)
            added.append(DialoguePair(message=swapped_msg, response=swapped_resp))
    return added


def train_cda(model, pairs, glex, epochs, rng, lr=1.0, clip_norm=5.0, batch_size=32):
    """Counterpart data augmentation baseline: MLE on originals plus swaps."""
    augmented = list(pairs) + augment_cda(pairs, glex)
    log.info("cda: %d original + %d augmented = %d pairs", len(pairs), len(augmented) - len(pairs), len(augmented))
    history = pretrain_mle(model, augmented, epochs, rng, lr=lr, clip_norm=clip_norm, batch_size=batch_size)
    return history, len(augmented)


def resolvable_pairs(glex, vocab):
    """Counterpart id pairs whose both words are in-vocabulary."""
    ids = [
        (vocab.token_to_id[m], vocab.token_to_id[f])
        for m, f in glex.pairs
        if m in vocab.token_to_id and f in vocab.token_to_id
    ]
    return np.array(ids, dtype=np.int64)


def counterpart_distance(model, id_pairs) -> float:
    """Mean squared Euclidean distance between counterpart embeddings."""
    emb = model.emb.weight.data
    diff = emb[id_pairs[:, 0]] - emb[id_pairs[:, 1]]
    return float((diff * diff).sum(axis=1).mean())


def train_wer(model, pairs, glex, epochs, rng, k=0.25, lr=1.0, clip_norm=5.0, batch_size=32):
    """Word-embedding regularization baseline: MLE plus k * mean squared
    distance between counterpart embeddings."""
    id_pairs = resolvable_pairs(glex, model.vocab)
    if id_pairs.size == 0:
        raise ValueError("no gender word pairs resolvable in the vocabulary")
    opt = SGD(model.parameters(), lr=lr, clip_norm=clip_norm)
    encoded = encode_pairs(pairs, model.vocab)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        total, batches = 0.0, 0
        for start in range(0, len(pairs), batch_size):
            idx = order[start : start + batch_size]
            mle = model.mle_loss(*_batch_encoded(encoded, idx, model.vocab.pad_id))
            male_e = ag.embedding(model.emb.weight, id_pairs[:, 0])
            female_e = ag.embedding(model.emb.weight, id_pairs[:, 1])
            diff = male_e - female_e
            reg = ag.tsum(ag.mul(diff, diff)) / id_pairs.shape[0]
            loss = mle + k * reg
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            batches += 1
        history.append(
            {"epoch": epoch, "loss": total / batches, "pair_distance": counterpart_distance(model, id_pairs)}
        )
    return history


# -- fairness gate and the adversarial loop ---------------------------------


def fairness_gate(model, fairness_pairs, offense_clf, sentiment_clf, lexicons, max_len=None, alpha=0.05):
    """Generate responses to both sides of the fairness corpus and test all
    five measurements; passes iff every p-value is >= alpha."""
    if not fairness_pairs:
        raise ValueError("fairness corpus is empty")
    male_resp = generate_batch(model, [p.male_message for p in fairness_pairs], max_len)
    female_resp = generate_batch(model, [p.female_message for p in fairness_pairs], max_len)
    report = evaluate.fairness_report(
        male_resp, female_resp, offense_clf, sentiment_clf, lexicons, alpha=alpha
    )
    return report.passed, report


@dataclass
class AdvResult:
    passed: bool
    loops: int
    history: list = field(default_factory=list)
    report: object = None


def adversarial_train(
    model,
    det_model,
    d1,
    d2,
    gendered,
    neutral,
    fairness_pairs,
    offense_clf,
    sentiment_clf,
    lexicons,
    cfg: AdvConfig,
    schedule: GumbelSchedule,
    rng,
    max_len=None,
    log_record=None,
):
    """Alternating debiasing loop with a fairness-gate stopping rule.

    The disentanglement model is frozen throughout.  If the gate never
    passes within cfg.max_loops, the generator is restored to the state
    with the best (largest) minimum p-value and the result is flagged.
    """
    if not gendered:
        raise ValueError("gendered dialogue corpus is empty")
    if cfg.g_teach_steps > 0 and not neutral:
        raise ValueError("neutral dialogue corpus is empty but g_teach_steps > 0")
    det_model.freeze()
    vocab = model.vocab

    opt_d2 = Adam(d2.parameters(), lr=cfg.learning_rate)
    opt_g = Adam(model.parameters() + d1.parameters(), lr=cfg.learning_rate)

    gendered_enc = encode_pairs([g.pair for g in gendered], vocab)
    gendered_lbl = np.array([GENDER_INDEX[g.gender] for g in gendered], dtype=np.int64)
    neutral_enc = encode_pairs(neutral, vocab)

    def sample_idx(n):
        return rng.choice(n, size=min(cfg.batch_size, n), replace=False)

    def gendered_arrays():
        idx = sample_idx(len(gendered))
        return _batch_encoded(gendered_enc, idx, vocab.pad_id), gendered_lbl[idx]

    g_iter = 0
    history = []
    best_min_p, best_state, best_report = -1.0, None, None
    for loop in range(cfg.max_loops):
        tau = schedule.tau_at(g_iter)
        record = {"loop": loop, "tau": tau}

        d2_ce = []
        for _ in range(cfg.d_steps):
            (msg_ids, msg_mask, _, _), genders = gendered_arrays()
            with ag.no_grad():
                soft, smask, _ = soft_decode(model, msg_ids, msg_mask, tau, rng, max_len)
                f_s = det_model.proj_s(det_model.encode_soft(soft, smask))
            ce = nll_rows(d2(Tensor(f_s.data)), genders)
            opt_d2.zero_grad()
            ce.backward()
            opt_d2.step()
            d2_ce.append(ce.item())
        record["d2_ce"] = float(np.mean(d2_ce)) if d2_ce else None

        g_parts = {"l_mle": [], "l_d1": [], "l_d2": [], "l": []}
        for _ in range(cfg.g_steps):
            (msg_ids, msg_mask, resp_ids, resp_mask), genders = gendered_arrays()
            l_mle = model.mle_loss(msg_ids, msg_mask, resp_ids, resp_mask)
            tau = schedule.tau_at(g_iter)
            soft, smask, _ = soft_decode(model, msg_ids, msg_mask, tau, rng, max_len)
            l_d1, l_d2 = adv_losses(det_model, d1, d2, soft, smask, genders)
            loss = l_mle + cfg.kp1 * l_d1 + cfg.kp2 * l_d2
            opt_g.zero_grad()
            loss.backward()
            opt_g.step()
            d2.zero_grad()  # gradients flowed through D2 but it is not updated here
            g_iter += 1
            for key, val in zip(("l_mle", "l_d1", "l_d2", "l"), (l_mle, l_d1, l_d2, loss)):
                g_parts[key].append(val.item())
        record.update({k: (float(np.mean(v)) if v else None) for k, v in g_parts.items()})

        teach = []
        for _ in range(cfg.g_teach_steps):
            idx = sample_idx(len(neutral))
            loss = model.mle_loss(*_batch_encoded(neutral_enc, idx, vocab.pad_id))
            opt_g.zero_grad()
            loss.backward()
            opt_g.step()
            teach.append(loss.item())
        record["teach_mle"] = float(np.mean(teach)) if teach else None

        if (loop + 1) % cfg.gate_every == 0 or loop + 1 == cfg.max_loops:
            passed, report = fairness_gate(
                model, fairness_pairs, offense_clf, sentiment_clf, lexicons, max_len
            )
            min_p = min(m.p_value for m in report.measurements)
            record["gate_min_p"] = min_p
            record["gate_passed"] = passed
            if min_p > best_min_p:
                best_min_p = min_p
                best_state = model.state_dict()
                best_report = report
            history.append(record)
            if log_record:
                log_record(record)
            if passed:
                log.info("fairness gate passed at loop %d (min p=%.4f)", loop + 1, min_p)
                return AdvResult(passed=True, loops=loop + 1, history=history, report=report)
            continue
        history.append(record)
        if log_record:
            log_record(record)

    if best_state is not None:
        model.load_state_dict(best_state)
    log.warning("fairness gate not passed within %d loops; restored best state", cfg.max_loops)
    return AdvResult(passed=False, loops=cfg.max_loops, history=history, report=best_report)

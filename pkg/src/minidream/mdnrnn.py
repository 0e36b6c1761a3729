"""Dynamics model: LSTM with a mixture-of-Gaussians output head.

The head parameterizes, per latent dimension, K mixture components
(logit, mu, log_sigma) for the next latent vector, plus an optional
done logit. Mixture selection is independent per dimension (factored).
Temperature tau divides the mixture logits and scales each component's
sigma by sqrt(tau).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from minidream import autodiff as ad
from minidream.autodiff import Tensor
from minidream.checkpoint import load_checkpoint, save_checkpoint
from minidream.latents import LatentEpisode
from minidream.optim import Adam
from minidream.rng import RngStream

LOG_2PI = float(np.log(2.0 * np.pi))
SIGMA_FLOOR = 1e-4


@dataclass
class MdnRnnConfig:
    n_z: int = 32
    n_hidden: int = 256
    n_mixtures: int = 5
    action_dim: int = 3
    predict_done: bool = False

    def __post_init__(self):
        assert self.n_mixtures >= 1 and self.n_hidden >= 1

    @property
    def head_dim(self) -> int:
        return 3 * self.n_mixtures * self.n_z + (1 if self.predict_done else 0)

    def to_dict(self) -> Dict:
        return {"n_z": self.n_z, "n_hidden": self.n_hidden,
                "n_mixtures": self.n_mixtures, "action_dim": self.action_dim,
                "predict_done": self.predict_done}

    @classmethod
    def from_dict(cls, d: Dict) -> "MdnRnnConfig":
        return cls(**d)


@dataclass
class RnnState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, n_hidden: int) -> "RnnState":
        return cls(np.zeros(n_hidden), np.zeros(n_hidden))


@dataclass
class MdnOutput:
    logits: np.ndarray      # (K, n_z)
    mu: np.ndarray          # (K, n_z)
    log_sigma: np.ndarray   # (K, n_z)
    done_logit: Optional[float] = None


def mixture_weights(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """softmax over components (axis 0) at temperature tau."""
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    a = logits / tau
    a = a - a.max(axis=0, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=0, keepdims=True)


def sample_z(output: MdnOutput, tau: float, rng: RngStream) -> np.ndarray:
    """Per dimension: k ~ Cat(softmax(logits/tau)); z ~ N(mu_k, sigma_k*sqrt(tau))."""
    w = mixture_weights(output.logits, tau)          # (K, n_z)
    n_z = w.shape[1]
    cum = np.cumsum(w, axis=0)
    u = rng.uniform(size=n_z)
    ks = (u[None, :] > cum).sum(axis=0)              # first k with cum >= u
    dims = np.arange(n_z)
    mu = output.mu[ks, dims]
    sigma = np.maximum(np.exp(output.log_sigma[ks, dims]), SIGMA_FLOOR)
    return mu + sigma * np.sqrt(tau) * rng.normal(n_z)


def predict_done(output: MdnOutput, threshold: float = 0.5) -> bool:
    if output.done_logit is None:
        raise ValueError("this model was configured without done prediction")
    return bool(1.0 / (1.0 + np.exp(-output.done_logit)) > threshold)


def mdn_nll(output: MdnOutput, target: np.ndarray) -> float:
    """-sum_d logsumexp_k [log pi_kd + log N(z_d; mu_kd, sigma_kd)]."""
    target = np.asarray(target, dtype=np.float64)
    log_pi = output.logits - _lse(output.logits, axis=0)
    log_n = -0.5 * LOG_2PI - output.log_sigma \
        - 0.5 * ((target[None, :] - output.mu) * np.exp(-output.log_sigma)) ** 2
    return float(-_lse(log_pi + log_n, axis=0).sum())


def _lse(a, axis):
    m = a.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))


class MdnRnn:
    def __init__(self, config: MdnRnnConfig, rng: Optional[RngStream] = None):
        self.cfg = config
        rng = rng or RngStream(0, "mdnrnn-init")
        n_in = config.n_z + config.action_dim
        n_h = config.n_hidden
        self.params: Dict[str, Tensor] = {
            "lstm_w": Tensor(rng.normal((n_in + n_h, 4 * n_h)) / np.sqrt(n_in + n_h),
                             requires_grad=True, name="lstm_w"),
            "lstm_b": Tensor(np.zeros(4 * n_h), requires_grad=True, name="lstm_b"),
            "head_w": Tensor(rng.normal((n_h, config.head_dim)) / np.sqrt(n_h),
                             requires_grad=True, name="head_w"),
            "head_b": Tensor(np.zeros(config.head_dim), requires_grad=True,
                             name="head_b"),
        }

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- batched tensor step (training) ---------------------------------------
    def step_t(self, z: Tensor, a: Tensor, h: Tensor, c: Tensor):
        """One LSTM step. z: (N, n_z), a: (N, action_dim), h/c: (N, n_hidden)."""
        n_h = self.cfg.n_hidden
        x = ad.concat([z, a, h], axis=1)
        gates = x @ self.params["lstm_w"] + self.params["lstm_b"]
        i = ad.sigmoid(gates[:, 0:n_h])
        f = ad.sigmoid(gates[:, n_h:2 * n_h])
        g = ad.tanh(gates[:, 2 * n_h:3 * n_h])
        o = ad.sigmoid(gates[:, 3 * n_h:4 * n_h])
        c_new = f * c + i * g
        h_new = o * ad.tanh(c_new)
        head = h_new @ self.params["head_w"] + self.params["head_b"]
        return head, h_new, c_new

    def split_head_t(self, head: Tensor):
        """head: (N, head_dim) -> logits/mu/log_sigma (N, K, n_z) [+ done (N,)]."""
        k, n_z = self.cfg.n_mixtures, self.cfg.n_z
        kz = k * n_z
        logits = ad.reshape(head[:, 0:kz], (-1, k, n_z))
        mu = ad.reshape(head[:, kz:2 * kz], (-1, k, n_z))
        log_sigma = ad.reshape(head[:, 2 * kz:3 * kz], (-1, k, n_z))
        done = head[:, 3 * kz] if self.cfg.predict_done else None
        return logits, mu, log_sigma, done

    # -- single-instance inference (numpy, no tape) ---------------------------
    def rnn_step(self, z: np.ndarray, a: np.ndarray,
                 state: RnnState) -> Tuple[MdnOutput, RnnState]:
        cfg = self.cfg
        z = np.asarray(z, dtype=np.float64).reshape(cfg.n_z)
        a = np.asarray(a, dtype=np.float64).reshape(cfg.action_dim)
        n_h = cfg.n_hidden
        x = np.concatenate([z, a, state.h])
        gates = x @ self.params["lstm_w"].data + self.params["lstm_b"].data
        i = _np_sigmoid(gates[0:n_h])
        f = _np_sigmoid(gates[n_h:2 * n_h])
        g = np.tanh(gates[2 * n_h:3 * n_h])
        o = _np_sigmoid(gates[3 * n_h:4 * n_h])
        c = f * state.c + i * g
        h = o * np.tanh(c)
        head = h @ self.params["head_w"].data + self.params["head_b"].data
        k, n_z = cfg.n_mixtures, cfg.n_z
        kz = k * n_z
        out = MdnOutput(
            logits=head[0:kz].reshape(k, n_z),
            mu=head[kz:2 * kz].reshape(k, n_z),
            log_sigma=head[2 * kz:3 * kz].reshape(k, n_z),
            done_logit=float(head[3 * kz]) if cfg.predict_done else None)
        return out, RnnState(h, c)

    # -- persistence -----------------------------------------------------------
    def save(self, path):
        save_checkpoint(path, {k: v.data for k, v in self.params.items()},
                        meta={"kind": "mdnrnn", "config": self.cfg.to_dict()})

    @classmethod
    def load(cls, path) -> "MdnRnn":
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "mdnrnn":
            raise ValueError(f"{path} is not an mdnrnn checkpoint")
        model = cls(MdnRnnConfig.from_dict(meta["config"]))
        for k, p in model.params.items():
            p.data = tensors[k]
        return model


def _np_sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def mdn_nll_t(logits: Tensor, mu: Tensor, log_sigma: Tensor,
              target: Tensor) -> Tensor:
    """Per-sample NLL, shape (N,). logits/mu/log_sigma: (N, K, n_z),
    target: (N, n_z)."""
    log_pi = logits - ad.logsumexp(logits, axis=1, keepdims=True)
    tgt = ad.reshape(target, (-1, 1, target.shape[1]))
    log_n = -0.5 * LOG_2PI - log_sigma \
        - ad.square((tgt - mu) * ad.exp(-log_sigma)) * 0.5
    return -ad.tsum(ad.logsumexp(log_pi + log_n, axis=1), axis=1)


def bce_with_logits_t(logit: Tensor, target: Tensor) -> Tensor:
    """Elementwise stable binary cross-entropy from logits."""
    # max(x,0) - x*t + log(1 + exp(-|x|))
    return ad.relu(logit) - logit * target \
        + ad.log(1.0 + ad.exp(-(ad.relu(logit) + ad.relu(-logit))))


def train_mdnrnn(model: MdnRnn, episodes: List[LatentEpisode], epochs: int,
                 lr: float, seed: int, batch_eps: int = 16,
                 done_loss_weight: float = 1.0, checkpoint_path=None,
                 metrics_path=None, config_hash: str = "") -> List[Dict]:
    """Teacher-forced training. Each batch resamples its inputs z ~ N(mu, sigma).

    Loss = mean MDN NLL per step (+ BCE on done when enabled), masked over
    padded positions. NaN aborts keep the last-good checkpoint.
    """
    cfg = model.cfg
    rng = RngStream(seed, "train-mdnrnn")
    opt = Adam(list(model.params.values()), lr=lr)
    rows = []
    order_src = rng.substream("shuffle")
    for epoch in range(epochs):
        order = order_src.gen.permutation(len(episodes))
        nll_total = bce_total = 0.0
        steps_total = 0
        for b_start in range(0, len(episodes), batch_eps):
            batch = [episodes[i] for i in order[b_start:b_start + batch_eps]]
            loss, nll_sum, bce_sum, n_steps = _batch_loss(
                model, batch, rng.substream(f"z-{epoch}-{b_start}"),
                done_loss_weight)
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    f"mdnrnn loss became non-finite at epoch {epoch}; "
                    f"last-good checkpoint retained")
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            nll_total += nll_sum
            bce_total += bce_sum
            steps_total += n_steps
        rows.append({"epoch": epoch, "nll": nll_total / steps_total,
                     "bce": bce_total / steps_total})
        if checkpoint_path is not None:
            model.save(checkpoint_path)
    if metrics_path is not None:
        with open(metrics_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["config_hash", "epoch", "nll", "bce"])
            for r in rows:
                w.writerow([config_hash, r["epoch"],
                            f"{r['nll']:.6f}", f"{r['bce']:.6f}"])
    return rows


def _batch_loss(model: MdnRnn, batch: List[LatentEpisode], rng: RngStream,
                done_loss_weight: float):
    cfg = model.cfg
    n = len(batch)
    t_max = max(ep.mu.shape[0] for ep in batch)
    z_all = np.zeros((n, t_max, cfg.n_z))
    a_all = np.zeros((n, t_max - 1, cfg.action_dim))
    d_all = np.zeros((n, t_max - 1))
    mask = np.zeros((n, t_max - 1))
    for j, ep in enumerate(batch):
        t = ep.mu.shape[0]
        eps = rng.substream(f"ep-{j}").normal(ep.mu.shape)
        z_all[j, :t] = ep.mu + ep.sigma * eps      # fresh sample per batch build
        a_all[j, :t - 1] = ep.actions
        d_all[j, :t - 1] = ep.dones.astype(np.float64)
        mask[j, :t - 1] = 1.0

    h = Tensor(np.zeros((n, cfg.n_hidden)))
    c = Tensor(np.zeros((n, cfg.n_hidden)))
    step_losses = []
    nll_sum = bce_sum = 0.0
    for t in range(t_max - 1):
        head, h, c = model.step_t(Tensor(z_all[:, t]), Tensor(a_all[:, t]), h, c)
        logits, mu, log_sigma, done = model.split_head_t(head)
        m = Tensor(mask[:, t])
        nll = mdn_nll_t(logits, mu, log_sigma, Tensor(z_all[:, t + 1])) * m
        step_loss = ad.tsum(nll)
        nll_sum += float(step_loss.data)
        if cfg.predict_done:
            bce = bce_with_logits_t(done, Tensor(d_all[:, t])) * m
            bce_term = ad.tsum(bce)
            bce_sum += float(bce_term.data)
            step_loss = step_loss + bce_term * done_loss_weight
        step_losses = step_losses + [step_loss]
    n_steps = int(mask.sum())
    total = step_losses[0]
    for sl in step_losses[1:]:
        total = total + sl
    loss = total * (1.0 / n_steps)
    return loss, nll_sum, bce_sum, n_steps

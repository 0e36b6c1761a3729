"""Vision model: convolutional variational autoencoder.

Encoder: 4x4 stride-2 valid convolutions (relu) followed by linear heads for
mu and logvar. Decoder: linear from z to the flattened encoder output,
reshaped to a 1x1 spatial map, then stride-2 transposed convolutions (relu,
sigmoid on the output layer). At 64x64 with n_z=32 and channels
(32, 64, 128, 256) this comes to 4,348,547 parameters.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from minidream import autodiff as ad
from minidream.autodiff import Tensor
from minidream.checkpoint import load_checkpoint, save_checkpoint
from minidream.optim import Adam
from minidream.rng import RngStream

# decoder kernel plans known to hit the target size exactly from 1x1
_DECODER_PLANS = {
    (64, 4): (5, 5, 6, 6),
    (32, 3): (6, 4, 6),
    (16, 2): (6, 6),
}


def plan_decoder_kernels(target: int, n_layers: int) -> Tuple[int, ...]:
    """Kernel sizes k_i with h <- (h-1)*2 + k_i reaching `target` from 1."""
    if (target, n_layers) in _DECODER_PLANS:
        return _DECODER_PLANS[(target, n_layers)]

    def search(h: int, depth: int):
        if depth == 0:
            return () if h == target else None
        for k in (4, 5, 6, 3, 7, 8):
            nh = (h - 1) * 2 + k
            if nh > target:
                continue
            rest = search(nh, depth - 1)
            if rest is not None:
                return (k,) + rest
        return None

    plan = search(1, n_layers)
    if plan is None:
        raise ValueError(f"no decoder kernel plan reaches {target} in {n_layers} layers")
    return plan


def conv_sizes(size: int, n_layers: int, k: int = 4, stride: int = 2) -> List[int]:
    sizes = [size]
    for _ in range(n_layers):
        nxt = (sizes[-1] - k) // stride + 1
        if nxt < 1:
            raise ValueError(f"input {size} too small for {n_layers} conv layers")
        sizes.append(nxt)
    return sizes


@dataclass
class VaeConfig:
    n_z: int = 32
    size: int = 64
    channels: Tuple[int, ...] = (32, 64, 128, 256)
    beta: float = 1.0              # KL weight

    def __post_init__(self):
        self.channels = tuple(self.channels)
        assert self.n_z >= 1
        self.spatial = conv_sizes(self.size, len(self.channels))
        assert self.spatial[-1] >= 1
        self.flat = self.channels[-1] * self.spatial[-1] ** 2
        self.decoder_kernels = plan_decoder_kernels(self.size, len(self.channels))

    def to_dict(self) -> Dict:
        return {"n_z": self.n_z, "size": self.size,
                "channels": list(self.channels), "beta": self.beta}

    @classmethod
    def from_dict(cls, d: Dict) -> "VaeConfig":
        return cls(n_z=d["n_z"], size=d["size"],
                   channels=tuple(d["channels"]), beta=d["beta"])


@dataclass
class LatentCode:
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray


class ConvVae:
    def __init__(self, config: VaeConfig, rng: Optional[RngStream] = None):
        self.cfg = config
        rng = rng or RngStream(0, "vae-init")
        self.params: Dict[str, Tensor] = {}
        cin = 3
        for i, cout in enumerate(config.channels):
            self._add(f"enc{i}_w", rng.normal((cout, cin, 4, 4)) / np.sqrt(cin * 16))
            self._add(f"enc{i}_b", np.zeros(cout))
            cin = cout
        flat = config.flat
        for head in ("mu", "logvar"):
            self._add(f"fc_{head}_w", rng.normal((flat, config.n_z)) / np.sqrt(flat))
            self._add(f"fc_{head}_b", np.zeros(config.n_z))
        self._add("dec_fc_w", rng.normal((config.n_z, flat)) / np.sqrt(config.n_z))
        self._add("dec_fc_b", np.zeros(flat))
        dec_channels = list(reversed(config.channels[:-1])) + [3]
        cin = flat
        for i, (cout, k) in enumerate(zip(dec_channels, config.decoder_kernels)):
            self._add(f"dec{i}_w", rng.normal((cin, cout, k, k)) / np.sqrt(cin * k * k))
            self._add(f"dec{i}_b", np.zeros(cout))
            cin = cout

    def _add(self, name: str, value: np.ndarray):
        self.params[name] = Tensor(value, requires_grad=True, name=name)

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward -------------------------------------------------------------
    def encode_params(self, frames: np.ndarray) -> Tuple[Tensor, Tensor]:
        """frames: (N, H, W, 3) in [0,1] -> (mu, logvar), each (N, n_z)."""
        if frames.ndim == 3:
            frames = frames[None]
        if frames.shape[1:] != (self.cfg.size, self.cfg.size, 3):
            raise ad.ShapeError(
                f"encode expects (N, {self.cfg.size}, {self.cfg.size}, 3), "
                f"got {frames.shape}")
        x = ad.transpose(Tensor(frames), (0, 3, 1, 2))
        for i in range(len(self.cfg.channels)):
            b = ad.reshape(self.params[f"enc{i}_b"], (1, -1, 1, 1))
            x = ad.relu(ad.conv2d(x, self.params[f"enc{i}_w"], 2) + b)
        x = ad.reshape(x, (frames.shape[0], self.cfg.flat))
        mu = x @ self.params["fc_mu_w"] + self.params["fc_mu_b"]
        logvar = x @ self.params["fc_logvar_w"] + self.params["fc_logvar_b"]
        return mu, logvar

    def encode(self, frame: np.ndarray, rng: RngStream) -> LatentCode:
        """Single-frame encode with a fresh posterior sample."""
        with ad.no_grad():
            mu, logvar = self.encode_params(frame[None] if frame.ndim == 3 else frame)
        mu = mu.data[0]
        sigma = np.exp(logvar.data[0] / 2.0)
        z = mu + sigma * rng.normal(self.cfg.n_z)
        return LatentCode(mu=mu, sigma=sigma, z=z)

    def decode_t(self, z: Tensor) -> Tensor:
        """z: (N, n_z) -> frames (N, H, W, 3) in [0,1]."""
        x = z @ self.params["dec_fc_w"] + self.params["dec_fc_b"]
        x = ad.reshape(x, (-1, self.cfg.flat, 1, 1))
        n_dec = len(self.cfg.decoder_kernels)
        for i in range(n_dec):
            b = ad.reshape(self.params[f"dec{i}_b"], (1, -1, 1, 1))
            x = ad.deconv2d(x, self.params[f"dec{i}_w"], 2) + b
            x = ad.sigmoid(x) if i == n_dec - 1 else ad.relu(x)
        return ad.transpose(x, (0, 2, 3, 1))

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            if z.shape[0] != self.cfg.n_z:
                raise ad.ShapeError(f"decode expects n_z={self.cfg.n_z}, got {z.shape}")
            with ad.no_grad():
                return self.decode_t(Tensor(z[None])).data[0]
        with ad.no_grad():
            return self.decode_t(Tensor(z)).data

    # -- loss ----------------------------------------------------------------
    def loss_terms(self, frames: np.ndarray, rng: RngStream) -> Tuple[Tensor, Tensor]:
        """Per-batch (recon_l2, kl), both averaged over the batch."""
        n = frames.shape[0]
        mu, logvar = self.encode_params(frames)
        eps = rng.normal((n, self.cfg.n_z))
        z = mu + ad.exp(mul_half(logvar)) * Tensor(eps)
        recon = self.decode_t(z)
        recon_l2 = ad.tsum(ad.square(recon - Tensor(frames))) * (1.0 / n)
        kl = kl_gaussian(mu, logvar) * (1.0 / n)
        return recon_l2, kl

    # -- persistence ---------------------------------------------------------
    def save(self, path):
        save_checkpoint(path, {k: v.data for k, v in self.params.items()},
                        meta={"kind": "vae", "config": self.cfg.to_dict()})

    @classmethod
    def load(cls, path) -> "ConvVae":
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "vae":
            raise ValueError(f"{path} is not a vae checkpoint")
        model = cls(VaeConfig.from_dict(meta["config"]))
        for k, p in model.params.items():
            p.data = tensors[k]
        return model


def mul_half(t: Tensor) -> Tensor:
    return t * 0.5


def kl_gaussian(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, sigma) || N(0, I)) summed over batch and dims (closed form)."""
    return ad.tsum(mu * mu + ad.exp(logvar) - logvar - 1.0) * 0.5


def vae_loss(frame: np.ndarray, reconstruction: np.ndarray,
             mu: np.ndarray, sigma: np.ndarray) -> Tuple[float, float]:
    """Numpy evaluation of the two loss terms for one frame."""
    recon_l2 = float(np.sum((frame - reconstruction) ** 2))
    s2 = sigma ** 2
    kl = float(-0.5 * np.sum(1.0 + np.log(s2) - mu ** 2 - s2))
    return recon_l2, kl


def train_vae(model: ConvVae, frames: np.ndarray, epochs: int, lr: float,
              batch: int, seed: int, checkpoint_path=None,
              metrics_path=None, config_hash: str = "") -> List[Dict]:
    """Minimize recon + beta * KL with Adam. NaN aborts keep the last-good
    checkpoint on disk. Returns per-epoch metric rows."""
    rng = RngStream(seed, "train-vae")
    opt = Adam(list(model.params.values()), lr=lr)
    rows = []
    n = frames.shape[0]
    for epoch in range(epochs):
        order = rng.substream(f"shuffle-{epoch}").gen.permutation(n)
        recon_sum = kl_sum = 0.0
        n_batches = 0
        for start in range(0, n - batch + 1, batch):
            idx = order[start:start + batch]
            recon, kl = model.loss_terms(frames[idx],
                                         rng.substream(f"eps-{epoch}-{start}"))
            loss = recon + model.cfg.beta * kl
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    f"vae loss became non-finite at epoch {epoch}; "
                    f"last-good checkpoint retained")
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            recon_sum += float(recon.data)
            kl_sum += float(kl.data)
            n_batches += 1
        rows.append({"epoch": epoch, "recon": recon_sum / n_batches,
                     "kl": kl_sum / n_batches,
                     "loss": (recon_sum + model.cfg.beta * kl_sum) / n_batches})
        if checkpoint_path is not None:
            model.save(checkpoint_path)
    if metrics_path is not None:
        with open(metrics_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["config_hash", "epoch", "recon", "kl", "loss"])
            for r in rows:
                w.writerow([config_hash, r["epoch"],
                            f"{r['recon']:.6f}", f"{r['kl']:.6f}", f"{r['loss']:.6f}"])
    return rows

"""Two-step training: an L2 autodecoder pass that also moves the encoder and the
per-sample normal codes, then a weight-clipped Wasserstein pass whose "real"
sample is the stored pattern nearest to the fake's latent representation."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .grid import GridMeta
from .gssdf import GssdfField, from_network, to_network
from .impulse import ImpulseRaw, sample_normal_code, siren_encode
from .nn.autograd import Tensor, mse_loss, reshape
from .nn.models import Critic, Generator, ModelConfig, SineEncoder, condition
from .nn.optim import Adam

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 1
    lr: float = 1e-4
    lr_z: float = 1e-3
    betas: tuple = (0.5, 0.9)
    clip: float = 0.01
    n_critic: int = 5
    lr_decay: float = 1.0  # per L2 step, generator/encoder/code learning rates
    seed: int = 0
    adversarial: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size != 1:
            raise ValueError("only batch_size 1 is supported")
        if min(self.lr, self.lr_z, self.clip) <= 0 or self.n_critic < 1:
            raise ValueError("learning rates, clip bound and n_critic must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        self.betas = tuple(self.betas)

    @classmethod
    def from_json(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


# ---------------------------------------------------------------------------
# dataset


@dataclass
class Dataset:
    meta: GridMeta
    i_max: float
    v_norm: np.ndarray  # (N, 7)
    fields: np.ndarray  # (N, R, R, R), world units
    zcodes: np.ndarray  # (N, dz) initial normal codes
    raw: list = field(default_factory=list)
    target: str = ""
    transform: list = None

    def __post_init__(self):
        self.v_norm = np.asarray(self.v_norm, dtype=np.float32).reshape(-1, 7)
        self.fields = np.asarray(self.fields, dtype=np.float32)
        self.zcodes = np.asarray(self.zcodes, dtype=np.float32)
        n = len(self.v_norm)
        if self.fields.shape != (n, *self.meta.shape) or len(self.zcodes) != n:
            raise ValueError("dataset arrays disagree in length or grid shape")
        if np.abs(self.v_norm).max(initial=0) > 1:
            raise ValueError("normalized impulses must lie in [-1, 1]")

    def __len__(self):
        return len(self.v_norm)

    @property
    def dz(self):
        return self.zcodes.shape[1]

    def field(self, i) -> GssdfField:
        return GssdfField.from_array(self.meta, self.fields[i])

    def save(self, out_dir, name="manifest.json"):
        out_dir = Path(out_dir)
        (out_dir / "fields").mkdir(parents=True, exist_ok=True)
        pairs = []
        for i in range(len(self)):
            rel = f"fields/pair_{i:04d}.gsf"
            io.write_gsf(out_dir / rel, self.fields[i], io.KIND_SCALAR, self.target, self.transform)
            rec = {"impulse": [float(x) for x in self.v_norm[i]], "field": rel,
                   "zcode": [float(x) for x in self.zcodes[i]]}
            if i < len(self.raw) and self.raw[i] is not None:
                rec["raw"] = self.raw[i].to_json()
            pairs.append(rec)
        manifest = {"meta": self.meta.to_dict(), "i_max": self.i_max, "target": self.target, "pairs": pairs}
        path = out_dir / name
        io.atomic_write_text(path, io.dump_json(manifest))
        return path

    @classmethod
    def load(cls, manifest_path):
        manifest_path = Path(manifest_path)
        m = json.loads(manifest_path.read_text())
        meta = GridMeta(int(m["meta"]["resolution"]))
        fields, v, z, raw = [], [], [], []
        transform = None
        for rec in m["pairs"]:
            path = manifest_path.parent / rec["field"]
            kind, r, arr = io.read_gsf(path)
            if kind != io.KIND_SCALAR or r != meta.resolution:
                raise io.FormatError(f"{path}: expected a kind-0 field at R={meta.resolution}")
            side = io.read_sidecar(path)
            if side is not None:
                transform = side.get("transform")
            fields.append(arr)
            v.append(rec["impulse"])
            z.append(rec["zcode"])
            raw.append(ImpulseRaw.from_json(rec["raw"]) if "raw" in rec else None)
        if not fields:
            raise ValueError("dataset manifest lists no pairs")
        return cls(meta, float(m["i_max"]), np.array(v), np.stack(fields), np.array(z), raw,
                   m.get("target", ""), transform)


# ---------------------------------------------------------------------------
# model


class FractureModel:
    """Encoder + generator + critic + one trainable normal code per training pair."""

    def __init__(self, cfg: ModelConfig, zcodes=None, seed=0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.encoder = SineEncoder(rng, cfg.omega0)
        self.generator = Generator(cfg, rng)
        self.critic = Critic(cfg, rng)
        zcodes = np.zeros((0, cfg.dz), np.float32) if zcodes is None else np.asarray(zcodes, np.float32)
        if zcodes.ndim != 2 or zcodes.shape[1] != cfg.dz:
            raise ValueError(f"normal codes must have {cfg.dz} entries")
        self.zcodes = [Tensor(z.copy(), requires_grad=True, name=f"zcode{i}") for i, z in enumerate(zcodes)]
        self.l2_steps = 0
        self.wgan_steps = 0
        self.critic_updates = 0

    # encoding -------------------------------------------------------------
    def latents(self, v_norm):
        """Encoded conditions as a plain array, (N, 128)."""
        v = np.asarray(v_norm, dtype=np.float32).reshape(-1, 7)
        return np.stack([siren_encode(row, self.encoder.as_params()) for row in v]).astype(np.float32)

    def code_matrix(self):
        return np.stack([z.data for z in self.zcodes]) if self.zcodes else np.zeros((0, self.cfg.dz), np.float32)

    def generate(self, v_latent, z):
        """Network output for plain (128,) and (dz,) arrays, shape (R, R, R)."""
        cond = Tensor(np.concatenate([v_latent, z]).astype(np.float32)[None])
        return self.generator(cond).data[0, 0]

    # persistence ----------------------------------------------------------
    def tensors(self):
        t = {}
        t.update(self.encoder.state("encoder"))
        t.update(self.generator.state("generator"))
        t.update(self.critic.state("critic"))
        t["zcodes"] = self.code_matrix()
        return t

    def save(self, path):
        path = Path(path)
        io.write_checkpoint(path, self.tensors())
        meta = {"model": self.cfg.to_json(), "n_codes": len(self.zcodes),
                "steps": {"l2": self.l2_steps, "wgan": self.wgan_steps}}
        io.atomic_write_text(config_path(path), io.dump_json(meta))
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(config_path(path).read_text())
        cfg = ModelConfig.from_json(meta["model"])
        tensors = io.read_checkpoint(path)
        model = cls(cfg, tensors["zcodes"].reshape(-1, cfg.dz))
        model.encoder.load_state("encoder", tensors)
        model.generator.load_state("generator", tensors)
        model.critic.load_state("critic", tensors)
        steps = meta.get("steps", {})
        model.l2_steps = int(steps.get("l2", 0))
        model.wgan_steps = int(steps.get("wgan", 0))
        return model


def config_path(ckpt_path):
    ckpt_path = Path(ckpt_path)
    return ckpt_path.with_name(ckpt_path.stem + ".config.json")


def closest_sample(keys, query):
    """Index of the row of ``keys`` nearest to ``query`` (lowest index on ties)."""
    keys = np.asarray(keys, dtype=np.float64)
    if len(keys) == 0:
        raise ValueError("empty dataset")
    d = np.linalg.norm(keys - np.asarray(query, dtype=np.float64), axis=1)
    return int(np.argmin(d))


def _check(value, what):
    if not np.isfinite(value):
        raise NumericalError(f"{what} became non-finite ({value})")
    return value


class Trainer:
    def __init__(self, model: FractureModel, dataset: Dataset, cfg: TrainConfig):
        if len(model.zcodes) != len(dataset):
            raise ValueError("model has a different number of normal codes than the dataset has pairs")
        if model.cfg.resolution != dataset.meta.resolution:
            raise ValueError("model and dataset resolutions differ")
        self.model = model
        self.data = dataset
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.targets = to_network(dataset.fields)[:, None, None]  # (N, 1, 1, R, R, R)
        m = model
        # the two objectives keep separate moment estimates for the generator
        self.opt_g = Adam(m.generator.parameters(), cfg.lr, cfg.betas)
        self.opt_g_adv = Adam(m.generator.parameters(), cfg.lr, cfg.betas)
        self.opt_e = Adam(m.encoder.parameters(), cfg.lr, cfg.betas)
        self.opt_d = Adam(m.critic.parameters(), cfg.lr, cfg.betas)
        self.opt_z = [Adam([z], cfg.lr_z, cfg.betas) for z in m.zcodes]

    def l2_step(self, i):
        """One autodecoder update on pair ``i``; returns the loss before the update."""
        m = self.model
        v = Tensor(self.data.v_norm[i:i + 1])
        z = reshape(m.zcodes[i], (1, -1))
        out = m.generator(condition(m.encoder(v), z))
        loss = mse_loss(out, self.targets[i])
        _check(loss.item(), "L2 loss")
        m.generator.zero_grad()
        m.encoder.zero_grad()
        m.zcodes[i].zero_grad()
        loss.backward()
        self.opt_g.step()
        self.opt_e.step()
        self.opt_z[i].step()
        m.l2_steps += 1
        if self.cfg.lr_decay != 1.0:
            for opt in (self.opt_g, self.opt_e, *self.opt_z):
                opt.lr *= self.cfg.lr_decay
        return loss.item()

    def closest(self, query):
        keys = np.concatenate([self.model.latents(self.data.v_norm), self.model.code_matrix()], axis=1)
        return closest_sample(keys, query)

    def wgan_step(self):
        """Critic updated ``n_critic`` times, then one generator update.

        The encoder is locked: the condition enters as a constant.
        """
        m, cfg = self.model, self.cfg
        if m.l2_steps < len(self.data):
            raise RuntimeError("adversarial updates need at least one full L2 epoch first")
        i = int(self.rng.integers(len(self.data)))
        v_latent = m.latents(self.data.v_norm[i:i + 1])[0]
        z = self.rng.standard_normal(m.cfg.dz).astype(np.float32)
        query = np.concatenate([v_latent, z])
        real = Tensor(self.targets[self.closest(query)])
        cond = Tensor(query[None])
        fake = m.generator(cond).detach()
        for _ in range(cfg.n_critic):
            m.critic.zero_grad()
            loss_d = m.critic(fake).mean() - m.critic(real).mean()
            _check(loss_d.item(), "critic loss")
            loss_d.backward()
            self.opt_d.step()
            m.critic.clip_(cfg.clip)
            m.critic_updates += 1
        m.generator.zero_grad()
        loss_g = -m.critic(m.generator(cond)).mean()
        _check(loss_g.item(), "generator loss")
        loss_g.backward()
        self.opt_g_adv.step()
        m.critic.zero_grad()
        m.wgan_steps += 1
        return loss_d.item(), loss_g.item()

    def epoch(self):
        n = len(self.data)
        l2 = [self.l2_step(int(i)) for i in self.rng.permutation(n)]
        row = {"l2_loss": float(np.mean(l2)), "critic_loss": float("nan"), "gen_loss": float("nan")}
        if self.cfg.adversarial:
            adv = np.array([self.wgan_step() for _ in range(n)])
            row["critic_loss"] = float(adv[:, 0].mean())
            row["gen_loss"] = float(adv[:, 1].mean())
        return row


METRIC_FIELDS = ["epoch", "l2_loss", "critic_loss", "gen_loss"]


def write_metrics(path, rows):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.9g}" if isinstance(r[k], float) else r[k]) for k in METRIC_FIELDS})
    tmp.replace(path)


def train(dataset: Dataset, cfg: TrainConfig, model_cfg: ModelConfig = None, out_dir=None, progress=None):
    """Fit a model; writes ``model.gck`` (+ config) and ``metrics.csv`` when ``out_dir`` is given."""
    if model_cfg is None:
        model_cfg = ModelConfig.for_resolution(dataset.meta.resolution, dz=dataset.dz)
    if model_cfg.dz != dataset.dz:
        raise ValueError(f"model dz={model_cfg.dz} but dataset codes have {dataset.dz} entries")
    model = FractureModel(model_cfg, dataset.zcodes, seed=cfg.seed)
    trainer = Trainer(model, dataset, cfg)
    rows = []
    for ep in range(cfg.epochs):
        row = {"epoch": ep, **trainer.epoch()}
        rows.append(row)
        log.info("epoch %d  l2 %.5f  critic %.5f  gen %.5f", ep, row["l2_loss"], row["critic_loss"], row["gen_loss"])
        if progress is not None:
            progress(row)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        model.save(out_dir / "model.gck")
        write_metrics(out_dir / "metrics.csv", rows)
    return model, rows


def predict(model: FractureModel, v_norm, seed=None, z=None) -> GssdfField:
    """Field for a normalized impulse and a normal code (drawn from ``seed`` unless given)."""
    v_norm = np.asarray(v_norm, dtype=np.float32)
    if v_norm.shape != (7,):
        raise ValueError(f"expected a 7-entry normalized impulse, got shape {v_norm.shape}")
    if z is None:
        z = sample_normal_code(seed, model.cfg.dz)
    z = np.asarray(z, dtype=np.float32)
    if z.shape != (model.cfg.dz,):
        raise ValueError(f"normal code must have {model.cfg.dz} entries, model was trained with dz={model.cfg.dz}")
    out = model.generate(model.latents(v_norm[None])[0], z)
    if not np.isfinite(out).all():
        raise NumericalError("prediction contains non-finite values")
    return GssdfField.from_array(GridMeta(model.cfg.resolution), from_network(out))

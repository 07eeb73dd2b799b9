"""Alternating discriminator/generator optimisation with Adam.

Per batch: discriminator step on (real, detached fake), packet transform of
the HR batch, then a generator step on the composite loss.

Parameters and Adam moments are rounded to float32 after every update.
Compute stays float64, but stored state is then exactly representable in
the float32 checkpoint, which is what makes resume bit-identical.
"""
import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from . import wavelet
from .data import CropSampler, SCALE
from .errors import AuditError, ConfigError, DimensionError, FormatError, NonFiniteError
from .loss import FeatureExtractor, LossWeights, discriminator_loss_grad, generator_total_loss
from .network import Discriminator, Generator, init_discriminator, init_generator, sr_backward, sr_reconstruct

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "l_d", "l_c", "l_a", "l_wavelet", "l_total")


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class TrainConfig:
    data: str = ""
    learning_rate: float = 2e-4
    batch_size: int = 16
    crop_size: int = 88
    scale: int = SCALE
    iterations: int = 500
    epochs: int = 0
    seed: int = 0
    features: int = 64
    blocks: int = 8
    disc_channels: int = 32
    input_mode: str = "pixels"
    lambda_adv: float = 1e-3
    lambda_wavelet: float = 1.0
    alpha: tuple = (1.0,) * wavelet.N_BANDS
    extractor: str = "random"
    extractor_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_interval: int = 100
    output_dir: str = "run"
    debug: bool = False

    def __post_init__(self):
        self.alpha = tuple(float(a) for a in self.alpha)
        self.validate()

    def validate(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.scale != SCALE:
            raise ConfigError(f"scale is fixed at {SCALE}, got {self.scale}")
        if self.crop_size < 16 or self.crop_size % SCALE:
            raise ConfigError(f"crop_size must be a multiple of 4 and >= 16, got {self.crop_size}")
        if self.iterations < 0 or self.epochs < 0:
            raise ConfigError("iterations and epochs must be non-negative")
        if self.features < 1 or self.blocks < 0 or self.disc_channels < 1:
            raise ConfigError("model sizes must be positive")
        if self.input_mode not in ("pixels", "wavelet"):
            raise ConfigError(f"input_mode must be 'pixels' or 'wavelet', got {self.input_mode!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("adam betas must be in [0, 1) and epsilon positive")
        if self.checkpoint_interval < 0:
            raise ConfigError("checkpoint_interval must be >= 0")
        self.loss_weights()

    def loss_weights(self):
        return LossWeights(self.lambda_adv, self.lambda_wavelet, np.array(self.alpha))

    # -- key = value text format ---------------------------------------------------------------

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "alpha":
                v = ", ".join(repr(a) for a in v)
            elif isinstance(v, float):
                v = repr(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, source="<config>"):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
            values[key] = cls._convert(key, types[key], value, f"{source}:{lineno}")
        return cls(**values)

    @staticmethod
    def _convert(key, typ, value, where):
        try:
            if key == "alpha":
                return tuple(float(v) for v in value.split(","))
            if typ in (bool, "bool"):
                return _parse_bool(value)
            if typ in (int, "int"):
                return int(value)
            if typ in (float, "float"):
                return float(value)
            return value
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), source=str(path))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


class Adam:
    """Bias-corrected Adam over a ``name -> Tensor`` mapping."""

    def __init__(self, params, lr=2e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros(p.shape) for k, p in params.items()}
        self.v = {k: np.zeros(p.shape) for k, p in params.items()}

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros(p.shape)
            if g.shape != p.shape:
                raise DimensionError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
            m = _f32(self.beta1 * self.m[name] + (1.0 - self.beta1) * g)
            v = _f32(self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g)
            self.m[name], self.v[name] = m, v
            p.data = _f32(p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))

    def state_entries(self, prefix):
        out = {}
        for name in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name]
            out[f"{prefix}.v.{name}"] = self.v[name]
        return out

    def load_entries(self, entries, prefix, step_count):
        for name, p in self.params.items():
            for slot, store in (("m", self.m), ("v", self.v)):
                key = f"{prefix}.{slot}.{name}"
                if key not in entries:
                    raise FormatError(f"checkpoint lacks optimizer entry {key!r}")
                store[name] = np.asarray(entries[key], dtype=np.float64).reshape(p.shape)
        self.step_count = step_count


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """Functional form: update ``params`` (name -> array) in place using ``state`` (an :class:`Adam`)."""
    for name, g in grads.items():
        if np.shape(g) != np.shape(params[name].data):
            raise DimensionError(f"{name}: gradient shape {np.shape(g)} != parameter shape {params[name].shape}")
        params[name].grad = np.asarray(g, dtype=np.float64)
    state.lr, (state.beta1, state.beta2), state.eps = lr, betas, eps
    state.step()


def _f32(x):
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def quantize(module):
    for _, p in module.named_parameters():
        p.data = _f32(p.data)


@dataclass
class StepLog:
    iteration: int
    l_d: float
    l_c: float
    l_a: float
    l_wavelet: float
    l_total: float
    audit: dict = field(default=None, repr=False)

    def row(self):
        return (self.iteration, self.l_d, self.l_c, self.l_a, self.l_wavelet, self.l_total)


def build_extractor(config):
    if config.extractor in ("random", "identity"):
        return FeatureExtractor(config.extractor, seed=config.extractor_seed)
    return FeatureExtractor.from_file(config.extractor)


class Trainer:
    """Holds models, optimisers and the iteration counter for one run."""

    def __init__(self, config, sampler=None):
        self.config = config
        self.gen = init_generator(config.seed, config.features, config.blocks, config.input_mode)
        self.disc = init_discriminator(config.seed, config.disc_channels)
        quantize(self.gen)
        quantize(self.disc)
        betas = (config.beta1, config.beta2)
        self.adam_g = Adam(self.gen.parameters(), config.learning_rate, betas, config.adam_eps)
        self.adam_d = Adam(self.disc.parameters(), config.learning_rate, betas, config.adam_eps)
        self.extractor = build_extractor(config)
        self.weights = config.loss_weights()
        self.iteration = 0
        self._sampler = sampler

    @property
    def sampler(self):
        if self._sampler is None:
            if not self.config.data:
                raise ConfigError("no dataset configured (set 'data')")
            self._sampler = CropSampler.from_directory(self.config.data, self.config.crop_size, self.config.seed)
        return self._sampler

    def batches_per_epoch(self):
        return max(1, math.ceil(len(self.sampler) / self.config.batch_size))

    def total_iterations(self):
        """The iteration budget wins; ``epochs`` is used only when ``iterations`` is 0."""
        if self.config.iterations > 0:
            return self.config.iterations
        return self.config.epochs * self.batches_per_epoch()

    # -- one step ------------------------------------------------------------------------------

    def step(self, lr=None, hr=None):
        """Run one discriminator + generator update and return its :class:`StepLog`."""
        if lr is None:
            lr, hr = self.sampler.batch(self.iteration, self.config.batch_size)
        debug = self.config.debug
        audit = {} if debug else None
        n = lr.shape[0]

        # discriminator update on real HR and detached fakes
        sr, coeffs = sr_reconstruct(self.gen, lr)
        d_out = self.disc.forward(np.concatenate([hr, sr]))
        l_d, g_real, g_fake = discriminator_loss_grad(d_out[:n], d_out[n:])
        self.disc.zero_grad()
        self.disc.backward(np.concatenate([g_real, g_fake]))
        snap_g = self.gen.state_dict() if debug else None
        snap_d = self.disc.state_dict() if debug else None
        self.adam_d.step()
        if debug:
            audit["d_step_gen_unchanged"] = _unchanged(snap_g, self.gen)
            audit["d_step_disc_changed"] = sorted(_changed_names(snap_d, self.disc))
            if not audit["d_step_gen_unchanged"]:
                raise AuditError(f"iteration {self.iteration}: discriminator update modified generator parameters")

        # wavelet targets: 16 bands per colour channel
        target = wavelet.wpt2(hr)
        if debug:
            audit["target_shape"] = target.shape
            if target.shape[1:3] != (3, wavelet.N_BANDS):
                raise AuditError(f"iteration {self.iteration}: target sub-bands have shape {target.shape}")

        # generator update; the generator caches from the forward above are still current
        d_fake = self.disc.forward(sr)
        breakdown, grads = generator_total_loss(
            sr, hr, d_fake, coeffs, wavelet.bands_to_channels(target), self.weights, self.extractor, need_grad=True
        )
        g_sr = grads.sr + self.disc.backward(grads.d_fake, param_grads=False)
        g_coeffs = sr_backward(g_sr) + grads.coeffs
        self.gen.zero_grad()
        self.gen.backward(g_coeffs)
        snap_d = self.disc.state_dict() if debug else None
        snap_g = self.gen.state_dict() if debug else None
        self.adam_g.step()
        if debug:
            audit["g_step_disc_unchanged"] = _unchanged(snap_d, self.disc)
            audit["g_step_gen_changed"] = sorted(_changed_names(snap_g, self.gen))
            if not audit["g_step_disc_unchanged"]:
                raise AuditError(f"iteration {self.iteration}: generator update modified discriminator parameters")

        self.iteration += 1
        entry = StepLog(self.iteration, l_d, breakdown.content, breakdown.adversarial, breakdown.wavelet,
                        breakdown.total, audit)
        values = entry.row()[1:]
        if not all(math.isfinite(v) for v in values):
            raise NonFiniteError(
                f"non-finite loss at iteration {entry.iteration}: "
                + ", ".join(f"{k}={v}" for k, v in zip(LOG_COLUMNS[1:], values))
            )
        return entry

    def train_epoch(self):
        """One pass of ``ceil(len(dataset) / batch_size)`` steps."""
        return [self.step() for _ in range(self.batches_per_epoch())]

    def train(self, log_path=None, checkpoint_dir=None, callback=None):
        """Run up to the iteration budget, checkpointing and logging along the way."""
        total = self.total_iterations()
        interval = self.config.checkpoint_interval
        entries = []
        writer = None
        fh = None
        if log_path is not None:
            resume = self.iteration > 0 and os.path.exists(log_path)
            fh = open(log_path, "a" if resume else "w", newline="", encoding="utf-8")
            writer = csv.writer(fh)
            if not resume:
                writer.writerow(LOG_COLUMNS)
        try:
            while self.iteration < total:
                entry = self.step()
                entries.append(entry)
                if writer is not None:
                    writer.writerow([entry.iteration] + [repr(v) for v in entry.row()[1:]])
                log.info(
                    "iter %d l_d=%.5g l_c=%.5g l_a=%.5g l_wavelet=%.5g l_total=%.5g", *entry.row()
                )
                if callback is not None:
                    callback(entry)
                if checkpoint_dir is not None and interval and entry.iteration % interval == 0:
                    save_checkpoint(os.path.join(checkpoint_dir, f"ckpt_{entry.iteration:07d}.wsr"), self)
        finally:
            if fh is not None:
                fh.close()
        if checkpoint_dir is not None:
            save_checkpoint(os.path.join(checkpoint_dir, "final.wsr"), self)
        return entries


def _unchanged(snapshot, module):
    return not _changed_names(snapshot, module)


def _changed_names(snapshot, module):
    return [k for k, p in module.named_parameters() if not np.array_equal(snapshot[k], p.data)]


# -- checkpoints ---------------------------------------------------------------------------------


def checkpoint_entries(trainer):
    entries = {}
    for name, p in trainer.gen.named_parameters():
        entries[f"gen.{name}"] = p.data
    for name, p in trainer.disc.named_parameters():
        entries[f"disc.{name}"] = p.data
    entries.update(trainer.adam_g.state_entries("adam_g"))
    entries.update(trainer.adam_d.state_entries("adam_d"))
    meta = (
        f"iteration = {trainer.iteration}\n"
        f"adam_g_step = {trainer.adam_g.step_count}\n"
        f"adam_d_step = {trainer.adam_d.step_count}\n"
    )
    entries["meta.state"] = checkpoint.encode_text(meta)
    entries["meta.config"] = checkpoint.encode_text(trainer.config.to_text())
    return entries


def save_checkpoint(path, trainer):
    checkpoint.save(path, checkpoint_entries(trainer))


def _parse_meta(text):
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = int(v)
    return out


def load_checkpoint(path, sampler=None, config=None):
    """Rebuild a :class:`Trainer` from a checkpoint; ``config`` overrides the stored one."""
    entries = checkpoint.load(path)
    for key in ("meta.config", "meta.state"):
        if key not in entries:
            raise FormatError(f"{path}: missing {key!r} entry")
    stored = TrainConfig.from_text(checkpoint.decode_text(entries["meta.config"]), source=f"{path}[meta.config]")
    trainer = Trainer(config or stored, sampler)
    meta = _parse_meta(checkpoint.decode_text(entries["meta.state"]))
    _load_module(trainer.gen, entries, "gen.")
    _load_module(trainer.disc, entries, "disc.")
    trainer.adam_g.load_entries(entries, "adam_g", meta["adam_g_step"])
    trainer.adam_d.load_entries(entries, "adam_d", meta["adam_d_step"])
    trainer.iteration = meta["iteration"]
    return trainer


def _load_module(module, entries, prefix):
    state = {k[len(prefix):]: v for k, v in entries.items() if k.startswith(prefix)}
    module.load_state_dict(state)


def load_generator(path):
    """Generator only, for inference. Accepts a full training checkpoint."""
    entries = checkpoint.load(path)
    if "meta.config" in entries:
        cfg = TrainConfig.from_text(checkpoint.decode_text(entries["meta.config"]), source=f"{path}[meta.config]")
        gen = Generator(cfg.features, cfg.blocks, cfg.input_mode)
    else:
        raise FormatError(f"{path}: missing 'meta.config' entry")
    _load_module(gen, entries, "gen.")
    return gen

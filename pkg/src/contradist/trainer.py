"""Joint training loop: supervised sources plus an unsupervised target.

Per step the loop draws one mini-batch per source domain and one target
batch, then combines the enabled loss terms:

  ss  cross-entropy on labeled source batches (summed over sources)
  tu  pseudo-label selection + contradistinguish loss on the target batch
  su  the same unsupervised pair on source batches, labels ignored
  ta  multi-label adversarial loss on fakes drawn near the target batch
  sa  the adversarial loss on fakes drawn near each source batch

Fakes come either from per-dimension Gaussians fit to the batch, or from a
small generator network trained to match the classifier's embedding of the
target via a kernel two-sample loss.  The target dataset must arrive
unlabeled; nothing in here reads target labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import DomainDataset, Priors, estimate_prior
from .errors import NumericError, ValidationError
from .evaluation import predict
from .losses import (
    LossValue,
    MmdConfig,
    adv_multilabel_loss,
    ce_loss,
    contradistinguish_loss,
    kernel_mmd,
    multi_source_supervised,
    pseudo_label_select,
)
from .model import GeneratorParams, Gradients, ModelParams, backward, forward, init_params
from .rng import Rng, derive_seed

TERMS = ("ss", "su", "tu", "sa", "ta")


@dataclass(frozen=True)
class GeneratorSettings:
    """Toy generator: noise_dim -> hidden_dims -> feature dim, own Adam lr."""

    noise_dim: int = 8
    hidden_dims: tuple[int, ...] = (64, 64)
    lr: float = 1e-3

    def __post_init__(self):
        if self.noise_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValidationError("generator dims must be positive")
        if not (self.lr >= 0 and np.isfinite(self.lr)):
            raise ValidationError("generator lr must be a finite non-negative real")


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 100
    lr: float = 1e-3
    optimizer: str = "adam"  # adam(b1=0.9, b2=0.999, eps=1e-8) or sgd
    enabled_terms: tuple[str, ...] = ("ss", "tu", "ta")
    term_weights: dict[str, float] = field(default_factory=dict)
    prior_mode: Priors | str = "estimate_from_source"
    fake_sampler: GeneratorSettings | str = "gaussian_input"
    mmd: MmdConfig = field(default_factory=MmdConfig)
    hidden_dims: tuple[int, ...] = (64, 64)
    # Pseudo-labels picked from a freshly initialized network are arbitrary
    # and the contradistinguish term locks them in (Adam rescales even a
    # small weight to a full-size step), so the loss terms are staged:
    # epochs <= warmup train ss only, then tu/su ramp linearly to full over
    # ramp_epochs, then ta/sa ramp over the following ramp_epochs.  The
    # adversarial push toward uniform outputs can tip a freshly locked
    # assignment into its mirror image unless the unsupervised terms are at
    # full strength first.
    warmup_epochs: int = 10
    ramp_epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        self.enabled_terms = tuple(self.enabled_terms)
        self.hidden_dims = tuple(self.hidden_dims)

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not (self.lr >= 0 and np.isfinite(self.lr)):
            raise ValidationError("lr must be a finite non-negative real")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        seen = set()
        for term in self.enabled_terms:
            if term not in TERMS:
                raise ValidationError(f"unknown loss term {term!r}")
            if term in seen:
                raise ValidationError(f"duplicate loss term {term!r}")
            seen.add(term)
        if "ss" not in seen:
            raise ValidationError("the ss term is the anchor and must stay enabled")
        if "tu" in seen and self.batch_size < 2:
            raise ValidationError("tu needs batch_size >= 2")
        for term, w in self.term_weights.items():
            if term not in TERMS + ("gen",):
                raise ValidationError(f"unknown term weight {term!r}")
            if not (w >= 0 and np.isfinite(w)):
                raise ValidationError(f"weight for {term!r} must be >= 0")
        if isinstance(self.prior_mode, str) and self.prior_mode != "estimate_from_source":
            raise ValidationError(f"unknown prior mode {self.prior_mode!r}")
        if isinstance(self.fake_sampler, str) and self.fake_sampler != "gaussian_input":
            raise ValidationError(f"unknown fake sampler {self.fake_sampler!r}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValidationError("hidden dims must be positive")
        if self.warmup_epochs < 0:
            raise ValidationError("warmup_epochs must be >= 0")
        if self.ramp_epochs < 0:
            raise ValidationError("ramp_epochs must be >= 0")

    def weight(self, term: str) -> float:
        return float(self.term_weights.get(term, 1.0))


def train_config_to_dict(cfg: TrainConfig) -> dict:
    """JSON-ready view of a TrainConfig (inverse of train_config_from_dict)."""
    if isinstance(cfg.prior_mode, Priors):
        prior = cfg.prior_mode.probs.tolist()
    else:
        prior = cfg.prior_mode
    if isinstance(cfg.fake_sampler, GeneratorSettings):
        sampler = {
            "noise_dim": cfg.fake_sampler.noise_dim,
            "hidden_dims": list(cfg.fake_sampler.hidden_dims),
            "lr": cfg.fake_sampler.lr,
        }
    else:
        sampler = cfg.fake_sampler
    gamma = cfg.mmd.gamma
    return {
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "optimizer": cfg.optimizer,
        "terms": list(cfg.enabled_terms),
        "term_weights": dict(cfg.term_weights),
        "prior": prior,
        "fake_sampler": sampler,
        "mmd_gamma": gamma,
        "hidden_dims": list(cfg.hidden_dims),
        "warmup_epochs": cfg.warmup_epochs,
        "ramp_epochs": cfg.ramp_epochs,
        "seed": cfg.seed,
    }


def train_config_from_dict(obj: dict) -> TrainConfig:
    defaults = TrainConfig()
    prior = obj.get("prior", "estimate_from_source")
    prior_mode: Priors | str = (
        prior if isinstance(prior, str) else Priors(np.asarray(prior, dtype=np.float64))
    )
    sampler = obj.get("fake_sampler", "gaussian_input")
    fake_sampler: GeneratorSettings | str
    if isinstance(sampler, dict):
        fake_sampler = GeneratorSettings(
            noise_dim=int(sampler.get("noise_dim", 8)),
            hidden_dims=tuple(int(h) for h in sampler.get("hidden_dims", (64, 64))),
            lr=float(sampler.get("lr", 1e-3)),
        )
    else:
        fake_sampler = sampler
    gamma = obj.get("mmd_gamma", "median-heuristic")
    cfg = TrainConfig(
        batch_size=int(obj.get("batch_size", defaults.batch_size)),
        epochs=int(obj.get("epochs", defaults.epochs)),
        lr=float(obj.get("lr", defaults.lr)),
        optimizer=str(obj.get("optimizer", defaults.optimizer)),
        enabled_terms=tuple(obj.get("terms", defaults.enabled_terms)),
        term_weights={k: float(v) for k, v in obj.get("term_weights", {}).items()},
        prior_mode=prior_mode,
        fake_sampler=fake_sampler,
        mmd=MmdConfig(gamma if isinstance(gamma, str) else float(gamma)),
        hidden_dims=tuple(int(h) for h in obj.get("hidden_dims", defaults.hidden_dims)),
        warmup_epochs=int(obj.get("warmup_epochs", defaults.warmup_epochs)),
        ramp_epochs=int(obj.get("ramp_epochs", defaults.ramp_epochs)),
        seed=int(obj.get("seed", defaults.seed)),
    )
    cfg.validate()
    return cfg


@dataclass
class EpochRecord:
    epoch: int
    losses: dict[str, float]
    total: float
    source_train_accuracy: float
    target_train_accuracy: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def save_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.records:
                fh.write(json.dumps(asdict(rec)) + "\n")


class Adam:
    """Classic first/second-moment optimizer with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None
        self._t = 0

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(a) for a in arrays]
            self._v = [np.zeros_like(a) for a in arrays]
        self._t += 1
        c1 = 1.0 - self.beta1**self._t
        c2 = 1.0 - self.beta2**self._t
        for a, g, m, v in zip(arrays, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for a, g in zip(arrays, grads):
            a -= self.lr * g


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return Sgd(lr)
    raise ValidationError(f"unknown optimizer {name!r}")


def sample_fake_gaussian(features: np.ndarray, n_f: int, seed: int) -> np.ndarray:
    """Fakes from per-dimension Gaussians with the batch's mean and std."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValidationError("need at least 2 rows to estimate a std")
    if n_f < 1:
        raise ValidationError("n_f must be >= 1")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    d = features.shape[1]
    z = Rng(seed).normal(n_f * d).reshape(n_f, d)
    return mean + std * z


def estimate_target_prior(cfg: TrainConfig, sources: list[DomainDataset]) -> Priors:
    """The given target prior, or pooled source label frequencies."""
    if isinstance(cfg.prior_mode, Priors):
        return cfg.prior_mode
    labels = np.concatenate([s.labels for s in sources])
    return estimate_prior(labels, int(labels.max()) + 1)


class _BatchStream:
    """Cycling mini-batch index stream; reshuffles whenever a pass ends.

    Batches always have exactly batch_size rows: a partial tail is topped
    up from the start of the next (freshly shuffled) pass.
    """

    def __init__(self, n: int, batch_size: int, rng: Rng):
        self._n = n
        self._b = batch_size
        self._rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        chunks = []
        need = self._b
        while need > 0:
            avail = self._n - self._pos
            if avail == 0:
                self._order = self._rng.permutation(self._n)
                self._pos = 0
                continue
            k = min(need, avail)
            chunks.append(self._order[self._pos : self._pos + k])
            self._pos += k
            need -= k
        return chunks[0] if len(chunks) == 1 else np.concatenate(chunks)


def _encoder_input_grad(clf: ModelParams, x: np.ndarray, d_emb: np.ndarray) -> np.ndarray:
    """Gradient of a loss on the last hidden activation wrt the input."""
    if len(clf.layer_dims) < 3:
        raise ValidationError("classifier needs a hidden layer to expose an embedding")
    enc = ModelParams(clf.layer_dims[:-1], clf.weights[:-1], clf.biases[:-1])
    trace = forward(enc, x)
    # embedding = relu(trace.logits); push the gradient through the relu
    d_pre = d_emb * (trace.logits > 0.0)
    return backward(enc, trace, d_pre).inputs


def generator_loss(
    gen: GeneratorParams,
    clf: ModelParams,
    noise: np.ndarray,
    target_batch: np.ndarray,
    mmd_cfg: MmdConfig,
) -> tuple[float, Gradients]:
    """Embedding-matching loss for the generator and its parameter gradients.

    Fakes G(noise) and the real target batch are both pushed through the
    classifier up to its last hidden layer; the kernel two-sample loss
    between the two embedding sets is differentiated with respect to the
    generator parameters only.
    """
    gen_trace = forward(gen, noise)
    fakes = gen_trace.logits
    emb_fake = forward(clf, fakes).activations[-1]
    emb_real = forward(clf, np.asarray(target_batch, dtype=np.float64)).activations[-1]
    mmd = kernel_mmd(emb_fake, emb_real, mmd_cfg)
    d_fakes = _encoder_input_grad(clf, fakes, mmd.d_emb_a)
    return mmd.value, backward(gen, gen_trace, d_fakes)


def generator_step(
    gen: GeneratorParams,
    clf: ModelParams,
    target_batch: np.ndarray,
    cfg: TrainConfig,
    optimizer,
    rng: Rng,
) -> tuple[GeneratorParams, float]:
    """One optimizer step on the generator parameters; returns the loss."""
    if not isinstance(cfg.fake_sampler, GeneratorSettings):
        raise ValidationError("generator_step requires the generator fake sampler")
    n_f = np.asarray(target_batch).shape[0]
    noise = rng.normal(n_f * gen.input_dim).reshape(n_f, gen.input_dim)
    value, grads = generator_loss(gen, clf, noise, target_batch, cfg.mmd)
    w = cfg.weight("gen")
    if w != 0.0:
        optimizer.step(
            gen.weights + gen.biases,
            [w * g for g in grads.weights] + [w * g for g in grads.biases],
        )
    return gen, value


def _validate_inputs(
    cfg: TrainConfig, sources: list[DomainDataset], target: DomainDataset
) -> int:
    if not sources:
        raise ValidationError("need at least one source domain")
    d = sources[0].dim
    for src in sources:
        if src.labels is None:
            raise ValidationError(f"source {src.domain_id!r} must be labeled")
        if src.dim != d:
            raise ValidationError("all domains must share the feature width")
    if target.labels is not None:
        raise ValidationError(
            "target must be passed unlabeled (use DomainDataset.without_labels)"
        )
    if target.dim != d:
        raise ValidationError("all domains must share the feature width")
    k = int(max(int(s.labels.max()) for s in sources)) + 1
    if k < 2:
        raise ValidationError("need at least 2 classes across the sources")
    if isinstance(cfg.prior_mode, Priors) and cfg.prior_mode.num_classes != k:
        raise ValidationError(
            f"given prior has {cfg.prior_mode.num_classes} classes, sources have {k}"
        )
    return k


def train(
    cfg: TrainConfig, sources: list[DomainDataset], target: DomainDataset
) -> tuple[ModelParams, TrainHistory]:
    """Run the joint loop and return the final classifier plus history.

    Per epoch there are ceil(max(n_s, n_t) / batch_size) steps; each step
    draws one batch per source and one target batch, accumulates the
    enabled loss gradients, and applies one optimizer update.  Everything
    is deterministic given (cfg, datasets).
    """
    cfg.validate()
    k = _validate_inputs(cfg, sources, target)
    d = sources[0].dim
    terms = set(cfg.enabled_terms)

    params = init_params((d, *cfg.hidden_dims, k), derive_seed(cfg.seed, "init"))
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    prior_t = estimate_target_prior(cfg, sources)
    if prior_t.num_classes != k:
        raise ValidationError("target prior class count mismatch")
    source_priors = [estimate_prior(s.labels, k) for s in sources]

    src_streams = [
        _BatchStream(s.n, cfg.batch_size, Rng(derive_seed(cfg.seed, f"shuffle/source/{r}")))
        for r, s in enumerate(sources)
    ]
    tgt_stream = _BatchStream(
        target.n, cfg.batch_size, Rng(derive_seed(cfg.seed, "shuffle/target"))
    )
    # independent fake-sample seed streams so enabling one adversarial term
    # never shifts the other's draws
    fake_seeds_ta = Rng(derive_seed(cfg.seed, "fake/ta"))
    fake_seeds_sa = Rng(derive_seed(cfg.seed, "fake/sa"))

    gen = None
    gen_optimizer = None
    gen_noise = None
    use_generator = isinstance(cfg.fake_sampler, GeneratorSettings)
    if use_generator:
        gs = cfg.fake_sampler
        gen = init_params(
            (gs.noise_dim, *gs.hidden_dims, d), derive_seed(cfg.seed, "gen-init")
        )
        gen_optimizer = make_optimizer(cfg.optimizer, gs.lr)
        gen_noise = Rng(derive_seed(cfg.seed, "gen-noise"))

    grads_w = [np.zeros_like(w) for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]

    def accumulate(scale: float, grads: Gradients) -> None:
        for acc, g in zip(grads_w, grads.weights):
            acc += scale * g
        for acc, g in zip(grads_b, grads.biases):
            acc += scale * g

    pooled_x = np.vstack([s.features for s in sources])
    pooled_y = np.concatenate([s.labels for s in sources])
    n_batch = -(-max(max(s.n for s in sources), target.n) // cfg.batch_size)
    loss_keys = [t for t in TERMS if t in terms]
    if use_generator and "ta" in terms:
        loss_keys.append("gen")

    def stage_ramp(epoch: int, start: int) -> float:
        if epoch <= start:
            return 0.0
        if cfg.ramp_epochs == 0:
            return 1.0
        return min(1.0, (epoch - start) / cfg.ramp_epochs)

    history = TrainHistory()
    for epoch in range(1, cfg.epochs + 1):
        unsup_ramp = stage_ramp(epoch, cfg.warmup_epochs)
        adv_ramp = stage_ramp(epoch, cfg.warmup_epochs + cfg.ramp_epochs)
        w_ss = cfg.weight("ss")
        w_tu = unsup_ramp * cfg.weight("tu")
        w_su = unsup_ramp * cfg.weight("su")
        w_ta = adv_ramp * cfg.weight("ta")
        w_sa = adv_ramp * cfg.weight("sa")
        sums = {key: 0.0 for key in loss_keys}
        total_sum = 0.0
        for _ in range(n_batch):
            for acc in grads_w:
                acc.fill(0.0)
            for acc in grads_b:
                acc.fill(0.0)
            step_total = 0.0

            src_batches = []  # (trace, features) per source, reused by su/sa
            ce_values: list[LossValue] = []
            for r, src in enumerate(sources):
                idx = src_streams[r].next()
                xb = src.features[idx]
                trace = forward(params, xb)
                lv = ce_loss(trace, src.labels[idx])
                src_batches.append((trace, xb))
                ce_values.append(lv)
                if w_ss != 0.0:
                    accumulate(w_ss, backward(params, trace, lv.dlogits))
            ss_value = multi_source_supervised(ce_values).value
            sums["ss"] += ss_value
            step_total += w_ss * ss_value

            tgt_batch = target.features[tgt_stream.next()]

            if "tu" in terms:
                trace = forward(params, tgt_batch)
                pseudo = pseudo_label_select(trace.probs, prior_t)
                lv = contradistinguish_loss(trace, pseudo, prior_t)
                sums["tu"] += lv.value
                step_total += w_tu * lv.value
                if w_tu != 0.0:
                    accumulate(w_tu, backward(params, trace, lv.dlogits))

            if "su" in terms:
                su_value = 0.0
                for r, (trace, _) in enumerate(src_batches):
                    pseudo = pseudo_label_select(trace.probs, source_priors[r])
                    lv = contradistinguish_loss(trace, pseudo, source_priors[r])
                    su_value += lv.value
                    if w_su != 0.0:
                        accumulate(w_su, backward(params, trace, lv.dlogits))
                sums["su"] += su_value
                step_total += w_su * su_value

            if "ta" in terms:
                if use_generator:
                    noise = gen_noise.normal(
                        cfg.batch_size * gen.input_dim
                    ).reshape(cfg.batch_size, gen.input_dim)
                    fakes = forward(gen, noise).logits
                else:
                    fakes = sample_fake_gaussian(
                        tgt_batch, cfg.batch_size, fake_seeds_ta.next_u64()
                    )
                trace = forward(params, fakes)
                lv = adv_multilabel_loss(trace)
                sums["ta"] += lv.value
                step_total += w_ta * lv.value
                if w_ta != 0.0:
                    accumulate(w_ta, backward(params, trace, lv.dlogits))
                if use_generator:
                    gen, gen_value = generator_step(
                        gen, params, tgt_batch, cfg, gen_optimizer, gen_noise
                    )
                    sums["gen"] += gen_value

            if "sa" in terms:
                sa_value = 0.0
                for _, xb in src_batches:
                    fakes = sample_fake_gaussian(xb, cfg.batch_size, fake_seeds_sa.next_u64())
                    trace = forward(params, fakes)
                    lv = adv_multilabel_loss(trace)
                    sa_value += lv.value
                    if w_sa != 0.0:
                        accumulate(w_sa, backward(params, trace, lv.dlogits))
                sums["sa"] += sa_value
                step_total += w_sa * sa_value

            optimizer.step(params.weights + params.biases, grads_w + grads_b)
            total_sum += step_total

        losses = {key: sums[key] / n_batch for key in loss_keys}
        if any(not np.isfinite(v) for v in losses.values()):
            raise NumericError(f"non-finite loss in epoch {epoch}: {losses}")
        source_acc = float((predict(params, pooled_x) == pooled_y).mean())
        history.records.append(
            EpochRecord(
                epoch=epoch,
                losses=losses,
                total=total_sum / n_batch,
                source_train_accuracy=source_acc,
                target_train_accuracy=None,
            )
        )
    return params, history

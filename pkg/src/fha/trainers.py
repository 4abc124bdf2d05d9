"""Training routines: source fitting, the benchmark family, and one-step
hypothesis adaptation with generated intermediate data.

Methods (names match the results schema):
  * wa    -- apply the frozen source model to the target directly;
  * ft    -- freeze the encoder, fit the classifier on the few-shots;
  * shot  -- freeze the classifier, fit the encoder on the few-shots;
  * sfada -- two-step: generator trained for source compatibility only,
             then pairwise adversarial adaptation against the frozen pool;
  * tfada -- two-step with a generator trained for target proximity only;
  * stfada-- two-step with the combined generator objective;
  * tohan -- one-step: generators keep training every epoch, and for the
             final adapt_epochs the model and group discriminator update in
             alternation against the freshly generated pool.

All routines are functional: the source hypothesis is never mutated (its
parameter arrays are read-only), and every update builds new parameter
vectors. Equal seeds give bit-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import losses, nn
from .data import Dataset, FewShotSet
from .errors import (
    ConfigError,
    InsufficientDataError,
    NumericalError,
    QualityGateError,
)
from .pairing import LabeledPool, build_groups, phi, sample_group_pairs

TWO_STEP_MODES = {"sfada": "source_only", "tfada": "target_only", "stfada": "combined"}
METHODS = ("wa", "ft", "shot", "sfada", "tfada", "stfada", "tohan")


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class SourceTrainConfig:
    """Source fitting: minibatch cross-entropy with Adam, stratified holdout."""

    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    holdout_fraction: float = 0.2
    min_test_accuracy: float = 0.8
    encoder_width: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.encoder_width < 1:
            raise ConfigError("epochs, batch_size, and encoder_width must be positive")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        if not 0.0 <= self.min_test_accuracy <= 1.0:
            raise ConfigError("min_test_accuracy must lie in [0, 1]")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


@dataclass(frozen=True)
class BaselineConfig:
    """Few-shot fitting for the ft and shot benchmarks (full batch)."""

    epochs: int = 100
    lr: float = 1e-3

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


@dataclass(frozen=True)
class TohanConfig:
    """Schedule and sizes of the generation + adaptation runs.

    ``pair_batch`` is the number of pairs each adaptation update consumes:
    the discriminator step uses ``per_group`` pairs of each of the 4 groups,
    the model step uses ``2 * per_group`` pairs of each cross-domain group,
    so ``pair_batch`` must equal ``4 * per_group``. The final
    ``adapt_epochs`` epochs of ``total_epochs`` are the adaptation phase;
    the discriminator is pretrained for ``disc_pretrain_epochs`` right
    before it.
    """

    tradeoff: float = 0.2
    gen_batch: int = 32
    pair_batch: int = 64
    per_group: int = 16
    z_dim: int = 8
    gen_hidden: int = 32
    disc_hidden: int = 32
    total_epochs: int = 500
    disc_pretrain_epochs: int = 100
    adapt_epochs: int = 50
    lr_gen: float = 1e-3
    lr_disc_pretrain: float = 1e-3
    lr_model: float = 1e-3
    lr_disc_adapt: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.gen_batch, self.per_group, self.z_dim, self.gen_hidden,
               self.disc_hidden, self.total_epochs) < 1:
            raise ConfigError("batch sizes, widths, and total_epochs must be positive")
        if self.adapt_epochs < 0 or self.disc_pretrain_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.adapt_epochs >= self.total_epochs:
            raise ConfigError("adapt_epochs must be smaller than total_epochs")
        if self.pair_batch != 4 * self.per_group:
            raise ConfigError("pair_batch must equal 4 * per_group")
        if self.tradeoff < 0:
            raise ConfigError("tradeoff must be non-negative")
        if min(self.lr_gen, self.lr_disc_pretrain, self.lr_model, self.lr_disc_adapt) <= 0:
            raise ConfigError("learning rates must be positive")


# ---------------------------------------------------------------------------
# model containers


@dataclass(frozen=True)
class SourceHypothesis:
    """A trained source model; frozen after creation (read-only params)."""

    enc: nn.Net
    cls: nn.Net
    seed: int
    train_accuracy: float
    test_accuracy: float

    def __post_init__(self) -> None:
        if self.enc.arch.out_width != self.cls.arch.in_width:
            raise ConfigError("encoder output width must feed the classifier")
        if self.cls.arch.head != "softmax":
            raise ConfigError("the classifier must end in a softmax head")


@dataclass(frozen=True)
class TargetModel:
    """The adapted encoder + classifier pair."""

    enc: nn.Net
    cls: nn.Net

    def __post_init__(self) -> None:
        if self.enc.arch.out_width != self.cls.arch.in_width:
            raise ConfigError("encoder output width must feed the classifier")


@dataclass(frozen=True)
class GeneratorBank:
    """One generator per class, shared architecture, plus its seed root."""

    nets: tuple[nn.Net, ...]
    z_dim: int
    seed: int

    def __post_init__(self) -> None:
        if len(self.nets) < 2:
            raise ConfigError("a bank needs one generator per class (at least 2)")
        arch0 = self.nets[0].arch
        if any(g.arch != arch0 for g in self.nets):
            raise ConfigError("all generators in a bank must share an architecture")
        if arch0.in_width != self.z_dim:
            raise ConfigError("generator input width must equal z_dim")
        object.__setattr__(self, "nets", tuple(self.nets))

    @property
    def num_classes(self) -> int:
        return len(self.nets)


def default_encoder_arch(dim: int, width: int = 32) -> nn.ArchSpec:
    return nn.ArchSpec((dim, width, width), activation="tanh", head="linear")


def default_classifier_arch(width: int, num_classes: int) -> nn.ArchSpec:
    return nn.ArchSpec((width, num_classes), activation="tanh", head="softmax")


def default_generator_arch(z_dim: int, dim: int, hidden: int = 32) -> nn.ArchSpec:
    return nn.ArchSpec((z_dim, hidden, dim), activation="tanh", head="sigmoid")


def default_discriminator_arch(emb_width: int, hidden: int = 32) -> nn.ArchSpec:
    return nn.ArchSpec((2 * emb_width, hidden, 4), activation="tanh", head="softmax")


# ---------------------------------------------------------------------------
# phase trace


@dataclass(frozen=True)
class PhaseEvent:
    """One training event: which phase ran, its losses, and state digests.

    ``digests`` holds short content hashes of each parameter set after the
    event, so a trace doubles as a freeze-contract witness: an event must
    change its own parameter set and no other.
    """

    epoch: int
    phase: str
    losses: dict[str, float]
    digests: dict[str, str] = field(default_factory=dict)


def _digest(*param_arrays: np.ndarray) -> str:
    h = hashlib.sha1()
    for arr in param_arrays:
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def write_trace(events, path) -> None:
    """Write phase events as line-delimited JSON records."""
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps({
                "epoch": ev.epoch,
                "phase": ev.phase,
                "losses": ev.losses,
                "digests": ev.digests,
            }))
            fh.write("\n")


# ---------------------------------------------------------------------------
# evaluation core (single code path shared with the harness)


def predict_proba(model, batch: np.ndarray) -> np.ndarray:
    """Class probabilities of an encoder+classifier pair on a batch."""
    emb = model.enc(np.asarray(batch, dtype=np.float64))
    return model.cls(emb)


def _accuracy_core(enc: nn.Net, cls: nn.Net, feats: np.ndarray, labels: np.ndarray) -> float:
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if feats.shape[0] == 0:
        raise InsufficientDataError("cannot evaluate accuracy on an empty set")
    probs = cls(enc(feats))
    pred = np.argmax(probs, axis=1)  # ties resolve to the lowest index
    return float(np.mean(pred == labels))


def eval_wa(hypothesis: SourceHypothesis, target_test: Dataset) -> float:
    """Accuracy of the unmodified source model on the target test split."""
    return _accuracy_core(
        hypothesis.enc, hypothesis.cls, target_test.features, target_test.labels
    )


# ---------------------------------------------------------------------------
# source training


def _stratified_holdout(labels: np.ndarray, fraction: float, rng: np.random.Generator):
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = rng.permutation(idx)
        k = max(1, int(round(fraction * idx.size)))
        if k >= idx.size:
            raise InsufficientDataError(f"class {c} too small for a holdout split")
        test_idx.append(idx[:k])
        train_idx.append(idx[k:])
    return np.concatenate(train_idx), np.concatenate(test_idx)


def train_source(source: Dataset, cfg: SourceTrainConfig) -> SourceHypothesis:
    """Fit encoder + classifier on the source split with minibatch Adam.

    A stratified holdout (cfg.holdout_fraction) estimates generalization;
    the hypothesis is rejected when holdout accuracy falls below
    cfg.min_test_accuracy. Deterministic under cfg.seed.
    """
    split_seed, enc_seed, cls_seed, shuffle_seed = nn.derive_seeds(cfg.seed, 4)
    rng = np.random.default_rng(split_seed)
    train_idx, test_idx = _stratified_holdout(source.labels, cfg.holdout_fraction, rng)
    x_train = source.features[train_idx].astype(np.float64)
    y_train = source.labels[train_idx]
    x_test = source.features[test_idx].astype(np.float64)
    y_test = source.labels[test_idx]

    enc_arch = default_encoder_arch(source.dim, cfg.encoder_width)
    cls_arch = default_classifier_arch(cfg.encoder_width, source.num_classes)
    enc_params = nn.init_params(enc_arch, enc_seed)
    cls_params = nn.init_params(cls_arch, cls_seed)
    enc_state = nn.AdamState.init(enc_params.size, cfg.lr)
    cls_state = nn.AdamState.init(cls_params.size, cfg.lr)

    shuffle_rng = np.random.default_rng(shuffle_seed)
    n = x_train.shape[0]
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            xb, yb = x_train[rows], y_train[rows]
            emb, enc_cache = nn.forward_and_cache(enc_arch, enc_params, xb)
            probs, cls_cache = nn.forward_and_cache(cls_arch, cls_params, emb)
            loss = losses.cross_entropy(probs, yb)
            if not math.isfinite(loss):
                raise NumericalError("source training diverged (non-finite loss)")
            up = losses.cross_entropy_grad(probs, yb)
            cls_grad, emb_up = nn.backward_from_cache(cls_arch, cls_params, cls_cache, up)
            enc_grad, _ = nn.backward_from_cache(enc_arch, enc_params, enc_cache, emb_up)
            enc_params, enc_state = nn.adam_step(enc_state, enc_params, enc_grad)
            cls_params, cls_state = nn.adam_step(cls_state, cls_params, cls_grad)

    enc = nn.Net(enc_arch, enc_params)
    cls = nn.Net(cls_arch, cls_params)
    train_acc = _accuracy_core(enc, cls, x_train, y_train)
    test_acc = _accuracy_core(enc, cls, x_test, y_test)
    if test_acc < cfg.min_test_accuracy:
        raise QualityGateError(
            f"source holdout accuracy {test_acc:.3f} below the "
            f"{cfg.min_test_accuracy:.2f} gate"
        )
    return SourceHypothesis(
        enc=enc, cls=cls, seed=cfg.seed,
        train_accuracy=train_acc, test_accuracy=test_acc,
    )


# ---------------------------------------------------------------------------
# few-shot benchmarks


def train_ft(hypothesis: SourceHypothesis, fewshot: FewShotSet,
             cfg: BaselineConfig) -> TargetModel:
    """Freeze the encoder, fit the classifier on the few-shots (full batch)."""
    emb = hypothesis.enc(fewshot.features.astype(np.float64))
    labels = fewshot.labels
    arch = hypothesis.cls.arch
    params = np.array(hypothesis.cls.params)
    state = nn.AdamState.init(params.size, cfg.lr)
    for _ in range(cfg.epochs):
        probs, cache = nn.forward_and_cache(arch, params, emb)
        up = losses.cross_entropy_grad(probs, labels)
        grad, _ = nn.backward_from_cache(arch, params, cache, up)
        params, state = nn.adam_step(state, params, grad)
    return TargetModel(enc=hypothesis.enc, cls=nn.Net(arch, params))


def train_shot(hypothesis: SourceHypothesis, fewshot: FewShotSet,
               cfg: BaselineConfig) -> TargetModel:
    """Freeze the classifier, fit the encoder on the few-shots (full batch)."""
    x = fewshot.features.astype(np.float64)
    labels = fewshot.labels
    enc_arch = hypothesis.enc.arch
    cls = hypothesis.cls
    params = np.array(hypothesis.enc.params)
    state = nn.AdamState.init(params.size, cfg.lr)
    for _ in range(cfg.epochs):
        emb, enc_cache = nn.forward_and_cache(enc_arch, params, x)
        probs, cls_cache = nn.forward_and_cache(cls.arch, cls.params, emb)
        up = losses.cross_entropy_grad(probs, labels)
        _, emb_up = nn.backward_from_cache(cls.arch, cls.params, cls_cache, up)
        grad, _ = nn.backward_from_cache(enc_arch, params, enc_cache, emb_up)
        params, state = nn.adam_step(state, params, grad)
    return TargetModel(enc=nn.Net(enc_arch, params), cls=cls)


# ---------------------------------------------------------------------------
# generators


def _gen_loss_config(n: int, cfg: TohanConfig, dim: int) -> losses.GenLossConfig:
    return losses.GenLossConfig(
        class_index=n,
        batch_size=cfg.gen_batch,
        tradeoff=cfg.tradeoff,
        diameter=losses.l1_diameter(dim),
    )


def train_generator_bank(hypothesis: SourceHypothesis, fewshot: FewShotSet | None,
                         mode: str, cfg: TohanConfig, *, seed: int | None = None,
                         epochs: int | None = None) -> GeneratorBank:
    """Train one generator per class on the chosen objective.

    ``mode`` is source_only, target_only, or combined. source_only ignores
    the few-shots entirely; combined with tradeoff 0 follows the exact same
    trajectory as source_only under equal seeds.
    """
    if mode not in ("source_only", "target_only", "combined"):
        raise ConfigError(f"unknown generator mode {mode!r}")
    if mode != "source_only" and fewshot is None:
        raise ConfigError(f"mode {mode!r} needs a few-shot set")
    root = cfg.seed if seed is None else seed
    num_classes = hypothesis.cls.arch.out_width
    dim = hypothesis.enc.arch.in_width
    steps = cfg.total_epochs if epochs is None else epochs
    child = nn.derive_seeds(root, 2 * num_classes)
    arch = default_generator_arch(cfg.z_dim, dim, cfg.gen_hidden)
    nets, states, noise = [], [], []
    for n in range(num_classes):
        params = nn.init_params(arch, child[2 * n])
        nets.append(nn.Net(arch, params))
        states.append(nn.AdamState.init(params.size, cfg.lr_gen))
        noise.append(np.random.default_rng(child[2 * n + 1]))
    targets = [
        None if fewshot is None else fewshot.class_features(n).astype(np.float64)
        for n in range(num_classes)
    ]
    for _ in range(steps):
        for n in range(num_classes):
            z = noise[n].standard_normal((cfg.gen_batch, cfg.z_dim))
            _, grad, _ = losses.generator_objective_and_grad(
                nets[n], hypothesis.enc, hypothesis.cls, z, targets[n],
                _gen_loss_config(n, cfg, dim), mode,
            )
            params, states[n] = nn.adam_step(states[n], nets[n].params, grad)
            nets[n] = nets[n].with_params(params)
    return GeneratorBank(nets=tuple(nets), z_dim=cfg.z_dim, seed=root)


def sample_pool(bank: GeneratorBank, per_class: int, seed: int) -> LabeledPool:
    """Generate a labeled intermediate pool: per_class samples per generator."""
    if per_class < 1:
        raise ConfigError("per_class must be positive")
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for n, gen in enumerate(bank.nets):
        z = rng.standard_normal((per_class, bank.z_dim))
        feats.append(gen(z))
        labels.append(np.full(per_class, n, dtype=np.int64))
    return LabeledPool("intermediate", np.concatenate(feats), np.concatenate(labels))


# ---------------------------------------------------------------------------
# pairwise adaptation


def _state_digests(gens, enc, cls, disc) -> dict[str, str]:
    digests = {
        "enc": _digest(enc.params),
        "cls": _digest(cls.params),
        "disc": _digest(disc.params),
    }
    if gens is not None:
        digests["gens"] = _digest(*[g.params for g in gens])
    return digests


def _disc_update(disc, disc_state, enc, pool, fewshot, cfg, rng):
    pairs = build_groups(pool, fewshot, cfg.per_group, rng)
    loss, grad = losses.group_ce_and_disc_grad(disc, enc, pairs)
    params, disc_state = nn.adam_step(disc_state, disc.params, grad)
    return disc.with_params(params), disc_state, loss


def _model_update(enc, cls, enc_state, cls_state, disc, pool, fewshot, beta, cfg, rng):
    count = 2 * cfg.per_group
    g2 = sample_group_pairs(pool, fewshot, 2, count, rng)
    g4 = sample_group_pairs(pool, fewshot, 4, count, rng)
    loss, enc_grad, cls_grad = losses.adaptation_loss_and_grads(
        g2, g4, disc, enc, cls, fewshot, beta
    )
    enc_params, enc_state = nn.adam_step(enc_state, enc.params, enc_grad)
    cls_params, cls_state = nn.adam_step(cls_state, cls.params, cls_grad)
    return enc.with_params(enc_params), cls.with_params(cls_params), enc_state, cls_state, loss


def adapt_pairwise(intermediate: LabeledPool, fewshot: FewShotSet,
                   hypothesis: SourceHypothesis, cfg: TohanConfig, *,
                   seed: int | None = None, trace: list | None = None) -> TargetModel:
    """Adversarial adaptation against a fixed intermediate pool.

    Initializes the target model from the source hypothesis, pretrains the
    group discriminator for cfg.disc_pretrain_epochs, then alternates one
    model update (discriminator frozen) and one discriminator update
    (encoder frozen) per epoch for cfg.adapt_epochs. With adapt_epochs 0
    the initialized copy is returned untouched.
    """
    enc, cls = hypothesis.enc, hypothesis.cls
    if cfg.adapt_epochs == 0:
        return TargetModel(enc=enc, cls=cls)
    root = cfg.seed if seed is None else seed
    disc_seed, pair_seed = nn.derive_seeds(root, 2)
    disc_arch = default_discriminator_arch(enc.arch.out_width, cfg.disc_hidden)
    disc = nn.Net(disc_arch, nn.init_params(disc_arch, disc_seed))
    pair_rng = np.random.default_rng(pair_seed)

    if trace is not None:
        trace.append(PhaseEvent(-1, "init", {}, _state_digests(None, enc, cls, disc)))
    disc_state = nn.AdamState.init(disc.params.size, cfg.lr_disc_pretrain)
    for _ in range(cfg.disc_pretrain_epochs):
        disc, disc_state, loss = _disc_update(disc, disc_state, enc, intermediate,
                                              fewshot, cfg, pair_rng)
        if trace is not None:
            trace.append(PhaseEvent(0, "pretrain_disc", {"group_ce": loss},
                                    _state_digests(None, enc, cls, disc)))

    enc_state = nn.AdamState.init(enc.params.size, cfg.lr_model)
    cls_state = nn.AdamState.init(cls.params.size, cfg.lr_model)
    disc_state = nn.AdamState.init(disc.params.size, cfg.lr_disc_adapt)
    for epoch in range(cfg.adapt_epochs):
        beta = losses.beta_schedule(epoch / cfg.adapt_epochs)
        enc, cls, enc_state, cls_state, model_loss = _model_update(
            enc, cls, enc_state, cls_state, disc, intermediate, fewshot, beta,
            cfg, pair_rng,
        )
        if trace is not None:
            trace.append(PhaseEvent(epoch, "model_update",
                                    {"adaptation": model_loss, "beta": beta},
                                    _state_digests(None, enc, cls, disc)))
        disc, disc_state, disc_loss = _disc_update(disc, disc_state, enc,
                                                   intermediate, fewshot, cfg, pair_rng)
        if trace is not None:
            trace.append(PhaseEvent(epoch, "disc_update", {"group_ce": disc_loss},
                                    _state_digests(None, enc, cls, disc)))
    return TargetModel(enc=enc, cls=cls)


def run_two_step(method: str, hypothesis: SourceHypothesis, fewshot: FewShotSet,
                 cfg: TohanConfig, *, trace: list | None = None) -> TargetModel:
    """Train a generator bank, freeze a pool, then adapt against it.

    ``method`` picks the generator objective: sfada (source term only),
    tfada (target term only), stfada (combined).
    """
    if method not in TWO_STEP_MODES:
        raise ConfigError(f"method must be one of {sorted(TWO_STEP_MODES)}")
    bank_seed, pool_seed, adapt_seed = nn.derive_seeds(cfg.seed, 3)
    if cfg.adapt_epochs == 0:
        return TargetModel(enc=hypothesis.enc, cls=hypothesis.cls)
    bank = train_generator_bank(hypothesis, fewshot, TWO_STEP_MODES[method], cfg,
                                seed=bank_seed)
    pool = sample_pool(bank, cfg.gen_batch, pool_seed)
    return adapt_pairwise(pool, fewshot, hypothesis, cfg, seed=adapt_seed, trace=trace)


def train_tohan(hypothesis: SourceHypothesis, fewshot: FewShotSet, cfg: TohanConfig,
                *, trace: list | None = None) -> TargetModel:
    """One-step adaptation: generation and adaptation share one loop.

    Every epoch regenerates the intermediate pool (gen_batch samples per
    class, taken before that epoch's generator update) and updates each
    generator on the combined objective. At epoch total_epochs -
    adapt_epochs the group discriminator is pretrained once for
    disc_pretrain_epochs; from that epoch on, each epoch also runs one
    model update and one discriminator update against the fresh pool.
    """
    num_classes = hypothesis.cls.arch.out_width
    dim = hypothesis.enc.arch.in_width
    gen_root, disc_seed, pair_seed = nn.derive_seeds(cfg.seed, 3)
    child = nn.derive_seeds(gen_root, 2 * num_classes)
    gen_arch = default_generator_arch(cfg.z_dim, dim, cfg.gen_hidden)
    gens, gen_states, noise = [], [], []
    for n in range(num_classes):
        params = nn.init_params(gen_arch, child[2 * n])
        gens.append(nn.Net(gen_arch, params))
        gen_states.append(nn.AdamState.init(params.size, cfg.lr_gen))
        noise.append(np.random.default_rng(child[2 * n + 1]))
    targets = [fewshot.class_features(n).astype(np.float64) for n in range(num_classes)]

    enc, cls = hypothesis.enc, hypothesis.cls
    disc_arch = default_discriminator_arch(enc.arch.out_width, cfg.disc_hidden)
    disc = nn.Net(disc_arch, nn.init_params(disc_arch, disc_seed))
    pair_rng = np.random.default_rng(pair_seed)
    enc_state = nn.AdamState.init(enc.params.size, cfg.lr_model)
    cls_state = nn.AdamState.init(cls.params.size, cfg.lr_model)
    disc_state = None  # created by the pretraining block

    if trace is not None:
        trace.append(PhaseEvent(-1, "init", {}, _state_digests(gens, enc, cls, disc)))
    adapt_start = cfg.total_epochs - cfg.adapt_epochs
    for epoch in range(cfg.total_epochs):
        feats, labels, gen_losses = [], [], []
        for n in range(num_classes):
            z = noise[n].standard_normal((cfg.gen_batch, cfg.z_dim))
            loss, grad, generated = losses.generator_objective_and_grad(
                gens[n], hypothesis.enc, hypothesis.cls, z, targets[n],
                _gen_loss_config(n, cfg, dim), "combined",
            )
            feats.append(generated)
            labels.append(np.full(cfg.gen_batch, n, dtype=np.int64))
            gen_losses.append(loss)
            params, gen_states[n] = nn.adam_step(gen_states[n], gens[n].params, grad)
            gens[n] = gens[n].with_params(params)
        pool = LabeledPool("intermediate", np.concatenate(feats), np.concatenate(labels))
        if trace is not None:
            trace.append(PhaseEvent(
                epoch, "generate",
                {"gen_loss_mean": float(np.mean(gen_losses)),
                 "dm_size": float(pool.size)},
                _state_digests(gens, enc, cls, disc),
            ))
        if epoch == adapt_start:
            disc_state = nn.AdamState.init(disc.params.size, cfg.lr_disc_pretrain)
            for _ in range(cfg.disc_pretrain_epochs):
                disc, disc_state, loss = _disc_update(disc, disc_state, enc, pool,
                                                      fewshot, cfg, pair_rng)
                if trace is not None:
                    trace.append(PhaseEvent(epoch, "pretrain_disc", {"group_ce": loss},
                                            _state_digests(gens, enc, cls, disc)))
            disc_state = nn.AdamState.init(disc.params.size, cfg.lr_disc_adapt)
        if epoch >= adapt_start:
            beta = losses.beta_schedule((epoch - adapt_start) / cfg.adapt_epochs)
            enc, cls, enc_state, cls_state, model_loss = _model_update(
                enc, cls, enc_state, cls_state, disc, pool, fewshot, beta, cfg, pair_rng,
            )
            if trace is not None:
                trace.append(PhaseEvent(epoch, "model_update",
                                        {"adaptation": model_loss, "beta": beta},
                                        _state_digests(gens, enc, cls, disc)))
            disc, disc_state, disc_loss = _disc_update(disc, disc_state, enc, pool,
                                                       fewshot, cfg, pair_rng)
            if trace is not None:
                trace.append(PhaseEvent(epoch, "disc_update", {"group_ce": disc_loss},
                                        _state_digests(gens, enc, cls, disc)))
    return TargetModel(enc=enc, cls=cls)


def group_discriminator_accuracy(disc: nn.Net, enc: nn.Net, intermediate: LabeledPool,
                                 fewshot, per_group: int, seed: int) -> float:
    """Held-out group classification accuracy of a discriminator."""
    pairs = build_groups(intermediate, fewshot, per_group, seed)
    probs = disc(phi(enc, pairs.x1, pairs.x2))
    pred = np.argmax(probs, axis=1) + 1
    return float(np.mean(pred == pairs.group))


# ---------------------------------------------------------------------------
# model file round trips


def save_hypothesis(path, hypothesis: SourceHypothesis) -> None:
    nn.save_model(
        path,
        {"encoder": hypothesis.enc, "classifier": hypothesis.cls},
        hypothesis.seed,
        {
            "role": "source_hypothesis",
            "train_accuracy": hypothesis.train_accuracy,
            "test_accuracy": hypothesis.test_accuracy,
        },
    )


def load_hypothesis(path) -> SourceHypothesis:
    nets, seed, meta = nn.load_model(path)
    try:
        return SourceHypothesis(
            enc=nets["encoder"],
            cls=nets["classifier"],
            seed=seed,
            train_accuracy=float(meta.get("train_accuracy", float("nan"))),
            test_accuracy=float(meta.get("test_accuracy", float("nan"))),
        )
    except KeyError as exc:
        raise ConfigError(f"model file lacks a net: {exc}") from exc


def save_target_model(path, model: TargetModel, seed: int = 0) -> None:
    nn.save_model(path, {"encoder": model.enc, "classifier": model.cls}, seed,
                  {"role": "target_model"})


def load_target_model(path) -> TargetModel:
    nets, _, _ = nn.load_model(path)
    try:
        return TargetModel(enc=nets["encoder"], cls=nets["classifier"])
    except KeyError as exc:
        raise ConfigError(f"model file lacks a net: {exc}") from exc

"""Objectives for intermediate-domain generation and pairwise adaptation.

Generator side, for class n with batch size B:
  * source-compatibility term: mean squared gap between the generated
    batch's class-n probabilities (under the frozen source model) and 1,
    (1/B) * sum_i (l_i - 1)^2;
  * target-proximity term: mean augmented-L1 distance between generated
    points and the class-n few-shot samples, normalized by the distance
    diameter M of the unit cube so the term lies in [0, 1];
  * total: source + tradeoff * target.

The augmented L1 distance reweights each coordinate gap by its share of the
squared error: sum_i w_i |x_i - y_i| with w_i = |x_i - y_i|^2 / ||x - y||_2,
which collapses to sum_i |d_i|^3 / ||d||_2 and is 0 exactly when x == y.

Adaptation side: a 4-way group discriminator is trained with categorical
cross-entropy over pair groups; the encoder/classifier update flips the
group-2 and group-4 pair labels toward their same-domain twins (confusion
terms, weighted by a warm-up factor beta) and adds plain cross-entropy on
the labeled target samples. Probabilities are clamped at 1e-12 before logs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, MissingClassError
from .pairing import (
    GROUP_BOTH_INTERMEDIATE_DIFF,
    GROUP_BOTH_INTERMEDIATE_SAME,
    GROUP_CROSS_DOMAIN_SAME,
    PairBatch,
)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class GenLossConfig:
    """Knobs of the per-class generator objective."""

    class_index: int
    batch_size: int = 32
    tradeoff: float = 0.2
    diameter: float | None = None

    def __post_init__(self) -> None:
        if self.class_index < 0:
            raise ConfigError("class_index must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.tradeoff < 0:
            raise ConfigError("tradeoff must be non-negative")


def _check_probs(p: np.ndarray, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ConfigError(f"{what} must lie in [0, 1]")
    return p


def gen_source_loss(class_probs: np.ndarray) -> float:
    """(1/B) * sum_i (p_i - 1)^2 for the generated batch's class probabilities."""
    p = _check_probs(class_probs, "class probabilities")
    if p.ndim != 1 or p.size == 0:
        raise ConfigError("class_probs must be a non-empty vector")
    return float(np.mean((p - 1.0) ** 2))

def gen_source_loss_grad(class_probs: np.ndarray) -> np.ndarray:
    p = _check_probs(class_probs, "class probabilities")
    return 2.0 * (p - 1.0) / p.size


def augmented_l1(x: np.ndarray, y: np.ndarray) -> float:
    """sum_i |d_i|^3 / ||d||_2 with d = x - y; zero exactly at x == y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigError(f"shape mismatch: {x.shape} vs {y.shape}")
    d = x - y
    norm = np.sqrt(np.sum(d * d))
    if norm == 0.0:
        return 0.0
    return float(np.sum(np.abs(d) ** 3) / norm)


def augmented_l1_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of augmented_l1 with respect to x (zero at x == y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigError(f"shape mismatch: {x.shape} vs {y.shape}")
    d = x - y
    norm = np.sqrt(np.sum(d * d))
    if norm == 0.0:
        return np.zeros_like(d)
    cube = np.sum(np.abs(d) ** 3)
    return 3.0 * d * np.abs(d) / norm - d * cube / norm**3


def l1_diameter(dim: int) -> float:
    """Largest augmented-L1 distance between two points of [0, 1]^dim.

    The maximum sits at |d_i| = 1 for every coordinate, giving
    dim / sqrt(dim) = sqrt(dim).
    """
    if dim < 1:
        raise ConfigError("dimension must be positive")
    return float(np.sqrt(dim))


def _pairwise_augmented_l1(generated: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # (B, K) matrix of distances, vectorized over both batches
    d = generated[:, None, :] - targets[None, :, :]
    norm = np.sqrt(np.sum(d * d, axis=2))
    cube = np.sum(np.abs(d) ** 3, axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(norm > 0.0, cube / np.where(norm > 0.0, norm, 1.0), 0.0)
    return vals


def gen_target_loss(generated: np.ndarray, targets_n: np.ndarray,
                    diameter: float) -> float:
    """Mean augmented-L1 distance to the class few-shots, scaled into [0, 1].

    (1/(M*B*K)) * sum_i sum_k augmented_l1(x_i, t_k) with M = diameter.
    """
    generated = np.asarray(generated, dtype=np.float64)
    targets_n = np.asarray(targets_n, dtype=np.float64)
    if generated.ndim != 2 or targets_n.ndim != 2:
        raise ConfigError("generated and targets must be 2-d arrays")
    if generated.shape[0] == 0:
        raise ConfigError("generated batch is empty")
    if targets_n.shape[0] == 0:
        raise MissingClassError("no few-shot samples for this class")
    if generated.shape[1] != targets_n.shape[1]:
        raise ConfigError("generated and targets must share a feature dimension")
    if diameter <= 0:
        raise ConfigError("diameter must be positive")
    vals = _pairwise_augmented_l1(generated, targets_n)
    return float(vals.sum() / (diameter * generated.shape[0] * targets_n.shape[0]))


def gen_target_loss_grad(generated: np.ndarray, targets_n: np.ndarray,
                         diameter: float) -> np.ndarray:
    """Gradient of gen_target_loss with respect to the generated batch."""
    generated = np.asarray(generated, dtype=np.float64)
    targets_n = np.asarray(targets_n, dtype=np.float64)
    b, k = generated.shape[0], targets_n.shape[0]
    d = generated[:, None, :] - targets_n[None, :, :]
    norm = np.sqrt(np.sum(d * d, axis=2, keepdims=True))
    cube = np.sum(np.abs(d) ** 3, axis=2, keepdims=True)
    safe = np.where(norm > 0.0, norm, 1.0)
    g = np.where(
        norm > 0.0,
        3.0 * d * np.abs(d) / safe - d * cube / safe**3,
        0.0,
    )
    return g.sum(axis=1) / (diameter * b * k)


def gen_total_loss(class_probs: np.ndarray, generated: np.ndarray,
                   targets_n: np.ndarray, cfg: GenLossConfig) -> float:
    """Source-compatibility term plus tradeoff * target-proximity term."""
    source = gen_source_loss(class_probs)
    if cfg.tradeoff == 0.0:
        return source
    diameter = cfg.diameter
    if diameter is None:
        diameter = l1_diameter(np.asarray(generated).shape[1])
    return source + cfg.tradeoff * gen_target_loss(generated, targets_n, diameter)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class, clamped at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.ndim != 1 or probs.shape[0] != labels.shape[0]:
        raise ConfigError("probs must be (B, C) aligned with (B,) labels")
    if probs.shape[0] == 0:
        raise ConfigError("cross_entropy on an empty batch")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ConfigError("labels outside the class range")
    picked = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def cross_entropy_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(cross_entropy)/d(probs); zero inside the clamped region."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    grad = np.zeros_like(probs)
    rows = np.arange(labels.size)
    picked = probs[rows, labels]
    grad[rows, labels] = np.where(
        picked >= PROB_FLOOR, -1.0 / (labels.size * np.maximum(picked, PROB_FLOOR)), 0.0
    )
    return grad


def group_ce_loss(pair_probs: np.ndarray, group_labels: np.ndarray) -> float:
    """4-way cross-entropy over pair groups; labels are 1-based (1..4)."""
    pair_probs = _check_probs(pair_probs, "pair probabilities")
    group_labels = np.asarray(group_labels, dtype=np.int64)
    if pair_probs.ndim != 2 or pair_probs.shape[1] != 4:
        raise ConfigError("pair_probs must be (P, 4)")
    if pair_probs.size and np.max(np.abs(pair_probs.sum(axis=1) - 1.0)) > 1e-6:
        raise ConfigError("pair probability rows must sum to 1")
    if group_labels.size == 0:
        raise ConfigError("group_ce_loss on an empty batch")
    if group_labels.min() < 1 or group_labels.max() > 4:
        raise ConfigError("group labels must lie in {1, 2, 3, 4}")
    return cross_entropy(pair_probs, group_labels - 1)


def group_ce_loss_grad(pair_probs: np.ndarray, group_labels: np.ndarray) -> np.ndarray:
    group_labels = np.asarray(group_labels, dtype=np.int64)
    if group_labels.min() < 1 or group_labels.max() > 4:
        raise ConfigError("group labels must lie in {1, 2, 3, 4}")
    return cross_entropy_grad(np.asarray(pair_probs, dtype=np.float64), group_labels - 1)


def beta_schedule(progress: float) -> float:
    """Warm-up factor 2 / (1 + exp(-10 q)) - 1 with q clamped into [0, 1].

    Starts at exactly 0, increases monotonically, stays below 1.
    """
    q = min(max(float(progress), 0.0), 1.0)
    return 2.0 / (1.0 + np.exp(-10.0 * q)) - 1.0


def _confusion_target(group: int) -> int:
    # cross-domain groups are pushed toward their same-domain twins:
    # group 2 -> group 1, group 4 -> group 3 (0-based column below)
    if group == GROUP_CROSS_DOMAIN_SAME:
        return GROUP_BOTH_INTERMEDIATE_SAME - 1
    return GROUP_BOTH_INTERMEDIATE_DIFF - 1


def _adaptation_terms(g2_pairs, g4_pairs, disc, enc, cls, fewshot, beta,
                      want_grads: bool):
    x_t = np.asarray(fewshot.features, dtype=np.float64)
    y_t = np.asarray(fewshot.labels, dtype=np.int64)
    emb_t, emb_cache = nn.forward_and_cache(enc.arch, enc.params, x_t)
    probs_t, cls_cache = nn.forward_and_cache(cls.arch, cls.params, emb_t)
    target_ce = cross_entropy(probs_t, y_t)

    enc_grad = np.zeros(nn.num_params(enc.arch))
    cls_grad = np.zeros(nn.num_params(cls.arch))
    if want_grads:
        up = cross_entropy_grad(probs_t, y_t)
        cls_grad, emb_up = nn.backward_from_cache(cls.arch, cls.params, cls_cache, up)
        enc_grad, _ = nn.backward_from_cache(enc.arch, enc.params, emb_cache, emb_up)

    confusion = 0.0
    width = enc.arch.out_width
    for pairs, expected_group in ((g2_pairs, 2), (g4_pairs, 4)):
        if pairs is None or pairs.size == 0:
            warnings.warn(
                f"no group-{expected_group} pairs; confusion term contributes zero",
                stacklevel=3,
            )
            continue
        if not np.all(pairs.group == expected_group):
            raise ConfigError(f"expected only group-{expected_group} pairs")
        col = _confusion_target(expected_group)
        e1, c1 = nn.forward_and_cache(enc.arch, enc.params, pairs.x1)
        e2, c2 = nn.forward_and_cache(enc.arch, enc.params, pairs.x2)
        joint = np.hstack([e1, e2])
        d_probs, d_cache = nn.forward_and_cache(disc.arch, disc.params, joint)
        picked = np.maximum(d_probs[:, col], PROB_FLOOR)
        confusion += float(-np.mean(np.log(picked)))
        if want_grads and beta != 0.0:
            up_d = np.zeros_like(d_probs)
            up_d[:, col] = np.where(
                d_probs[:, col] >= PROB_FLOOR, -beta / (pairs.size * picked), 0.0
            )
            _, joint_up = nn.backward_from_cache(disc.arch, disc.params, d_cache, up_d)
            g1, _ = nn.backward_from_cache(enc.arch, enc.params, c1, joint_up[:, :width])
            g2, _ = nn.backward_from_cache(enc.arch, enc.params, c2, joint_up[:, width:])
            enc_grad = enc_grad + g1 + g2
    loss = float(beta) * confusion + target_ce
    return loss, confusion, target_ce, enc_grad, cls_grad


def adaptation_loss(g2_pairs, g4_pairs, disc: nn.Net, enc: nn.Net, cls: nn.Net,
                    fewshot, beta: float) -> float:
    """beta * (confusion of cross-domain pairs) + CE on the few-shot samples.

    The confusion terms score group-2 pairs against the group-1 label and
    group-4 pairs against the group-3 label under the (frozen) group
    discriminator. Empty pair sets contribute zero with a warning.
    """
    if not 0.0 <= beta <= 1.0:
        raise ConfigError("beta must lie in [0, 1]")
    loss, _, _, _, _ = _adaptation_terms(
        g2_pairs, g4_pairs, disc, enc, cls, fewshot, beta, want_grads=False
    )
    return loss


def adaptation_loss_and_grads(g2_pairs, g4_pairs, disc: nn.Net, enc: nn.Net,
                              cls: nn.Net, fewshot, beta: float):
    """adaptation_loss plus gradients for the encoder and classifier only.

    The discriminator is a frozen scorer here: no gradient is produced for
    it, by construction.
    """
    if not 0.0 <= beta <= 1.0:
        raise ConfigError("beta must lie in [0, 1]")
    loss, _, _, enc_grad, cls_grad = _adaptation_terms(
        g2_pairs, g4_pairs, disc, enc, cls, fewshot, beta, want_grads=True
    )
    return loss, enc_grad, cls_grad


def group_ce_and_disc_grad(disc: nn.Net, enc: nn.Net, pairs: PairBatch):
    """Group cross-entropy of a pair batch and its discriminator gradient.

    The encoder only embeds the pairs (frozen): the gradient is taken with
    respect to the discriminator parameters alone.
    """
    if pairs.size == 0:
        raise ConfigError("cannot score an empty pair batch")
    e1 = nn.forward(enc.arch, enc.params, pairs.x1)
    e2 = nn.forward(enc.arch, enc.params, pairs.x2)
    joint = np.hstack([e1, e2])
    d_probs, cache = nn.forward_and_cache(disc.arch, disc.params, joint)
    loss = group_ce_loss(d_probs, pairs.group)
    up = group_ce_loss_grad(d_probs, pairs.group)
    disc_grad, _ = nn.backward_from_cache(disc.arch, disc.params, cache, up)
    return loss, disc_grad


def generator_objective_and_grad(gen: nn.Net, source_enc: nn.Net, source_cls: nn.Net,
                                 z: np.ndarray, targets_n: np.ndarray | None,
                                 cfg: GenLossConfig, mode: str = "combined"):
    """Evaluate one generator objective on a noise batch.

    Returns (loss, generator parameter gradient, generated batch). The
    source model is a frozen scorer: gradients flow through it into the
    generator but are never produced for it. Modes:
      * ``source_only``: compatibility term alone (few-shots unused);
      * ``target_only``: proximity term alone;
      * ``combined``: compatibility + tradeoff * proximity. With tradeoff 0
        the proximity term is skipped entirely, so the trajectory matches
        source_only bit for bit.
    """
    if mode not in ("source_only", "target_only", "combined"):
        raise ConfigError(f"unknown generator mode {mode!r}")
    generated, gen_cache = nn.forward_and_cache(gen.arch, gen.params, z)
    x_up = np.zeros_like(generated)
    loss = 0.0
    if mode != "target_only":
        emb, enc_cache = nn.forward_and_cache(source_enc.arch, source_enc.params, generated)
        probs, cls_cache = nn.forward_and_cache(source_cls.arch, source_cls.params, emb)
        class_probs = probs[:, cfg.class_index]
        loss += gen_source_loss(class_probs)
        up_probs = np.zeros_like(probs)
        up_probs[:, cfg.class_index] = gen_source_loss_grad(class_probs)
        _, emb_up = nn.backward_from_cache(
            source_cls.arch, source_cls.params, cls_cache, up_probs
        )
        _, x_up_src = nn.backward_from_cache(
            source_enc.arch, source_enc.params, enc_cache, emb_up
        )
        x_up = x_up + x_up_src
    include_target = mode == "target_only" or (mode == "combined" and cfg.tradeoff != 0.0)
    if include_target:
        if targets_n is None:
            raise MissingClassError("target-proximity term needs few-shot samples")
        diameter = cfg.diameter if cfg.diameter is not None else l1_diameter(generated.shape[1])
        weight = 1.0 if mode == "target_only" else cfg.tradeoff
        loss += weight * gen_target_loss(generated, targets_n, diameter)
        x_up = x_up + weight * gen_target_loss_grad(generated, targets_n, diameter)
    gen_grad, _ = nn.backward_from_cache(gen.arch, gen.params, gen_cache, x_up)
    return float(loss), gen_grad, generated

"""Size-aware classification loss for small-object detection.

A category-size soft label cs = sqrt((h/H) * (w/W)) * y folds the normalized
box size into the class target. The boost loss re-weights each positive term
by alpha * (1 - cs_hat^beta)^gamma * cs^beta, where cs_hat is the predicted
box's size factor, so small positives carry more weight than large ones; the
negative term is the alpha-balanced focal term unchanged. beta < 1 spreads
the weights of near-zero size factors apart, which is what makes the
re-weighting effective on very small objects.

The weight-table builder reproduces the published per-size weight analysis:
size factors are rounded half-away-from-zero to 4 decimals before the weight
columns are computed, relative distances between consecutive sizes are
computed from the rounded weights, and amplification ratios from the rounded
relative distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .errors import DomainError

P_CLAMP = 1e-12


@dataclass(frozen=True)
class BoxSample:
    """One matched (prediction, target) pair.

    H, W are the image extents; h, w the ground-truth box extents; y the
    binary class indicator; p the predicted class probability; h_hat, w_hat
    the predicted box extents.
    """

    H: float
    W: float
    h: float
    w: float
    y: int
    p: float
    h_hat: float
    w_hat: float

    def __post_init__(self):
        if self.y not in (0, 1):
            raise DomainError(f"class indicator must be 0 or 1, got {self.y}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"probability must lie in [0, 1], got {self.p}")
        if self.y == 1 and not (0 < self.h <= self.H and 0 < self.w <= self.W):
            raise DomainError(
                f"positive box {self.h}x{self.w} must fit inside image {self.H}x{self.W}"
            )


@dataclass(frozen=True)
class BoostConfig:
    """Loss hyper-parameters; N is the object count for the 1/N reduction."""

    alpha: float = 0.25
    beta: float = 1.0
    gamma: float = 2.0
    N: int = 1

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise DomainError(f"beta must lie in (0, 1], got {self.beta}")
        if self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")


def size_factor(h: float, w: float, H: float, W: float) -> float:
    """Geometric normalized size sqrt((h/H) * (w/W)) in (0, 1]."""
    if h <= 0 or w <= 0 or H <= 0 or W <= 0:
        raise DomainError(f"extents must be positive, got box {h}x{w} in image {H}x{W}")
    if h > H or w > W:
        raise DomainError(f"box {h}x{w} exceeds image {H}x{W}")
    return math.sqrt((h / H) * (w / W))


def cs_label(s: BoxSample) -> float:
    """Category-size soft label: size factor for positives, 0 for negatives."""
    if s.y == 0:
        return 0.0
    return size_factor(s.h, s.w, s.H, s.W)


def cs_pred(s: BoxSample) -> float:
    """Size factor of the predicted box."""
    return size_factor(s.h_hat, s.w_hat, s.H, s.W)


def positive_weight(cs_hat: float, cs: float, cfg: BoostConfig) -> float:
    """Weight on -log(p) for a positive: alpha (1 - cs_hat^beta)^gamma cs^beta."""
    if not (0.0 <= cs_hat <= 1.0 and 0.0 <= cs <= 1.0):
        raise DomainError(f"size factors must lie in [0, 1], got {cs_hat}, {cs}")
    return cfg.alpha * (1.0 - cs_hat**cfg.beta) ** cfg.gamma * cs**cfg.beta


def _clamp(p: float) -> float:
    return min(max(p, P_CLAMP), 1.0 - P_CLAMP)


def boost_loss(samples: list[BoxSample], cfg: BoostConfig) -> float:
    """Size-reweighted loss, reduced by 1/cfg.N.

    Positives contribute -alpha (1 - cs_hat^beta)^gamma cs^beta log(p);
    negatives contribute -(1 - alpha) p^gamma log(1 - p).
    """
    if not samples:
        raise DomainError("empty sample list")
    total = 0.0
    for s in samples:
        p = _clamp(s.p)
        if s.y == 1:
            total += positive_weight(cs_pred(s), cs_label(s), cfg) * math.log(p)
        else:
            total += (1.0 - cfg.alpha) * p**cfg.gamma * math.log(1.0 - p)
    return -total / cfg.N


def boost_loss_grad(samples: list[BoxSample], cfg: BoostConfig) -> list[float]:
    """dL/dp per sample; size factors are constants w.r.t. p (no gradient
    flows into box extents)."""
    if not samples:
        raise DomainError("empty sample list")
    grads = []
    for s in samples:
        p = _clamp(s.p)
        if s.y == 1:
            g = -positive_weight(cs_pred(s), cs_label(s), cfg) / p
        else:
            g = -(1.0 - cfg.alpha) * (
                cfg.gamma * p ** (cfg.gamma - 1.0) * math.log(1.0 - p)
                - p**cfg.gamma / (1.0 - p)
            )
        grads.append(g / cfg.N)
    return grads


def focal_loss(samples: list[BoxSample], alpha: float, gamma: float, n: int | None = None) -> float:
    """Alpha-balanced focal baseline with the identical negative term.

    The reduction count defaults to the number of positives (at least 1);
    pass n explicitly to match a BoostConfig.N.
    """
    if not samples:
        raise DomainError("empty sample list")
    if n is None:
        n = max(1, sum(s.y for s in samples))
    total = 0.0
    for s in samples:
        p = _clamp(s.p)
        if s.y == 1:
            total += alpha * (1.0 - p) ** gamma * math.log(p)
        else:
            total += (1.0 - alpha) * p**gamma * math.log(1.0 - p)
    return -total / n


def focal_loss_grad(
    samples: list[BoxSample], alpha: float, gamma: float, n: int | None = None
) -> list[float]:
    """dL/dp per sample for the focal baseline."""
    if not samples:
        raise DomainError("empty sample list")
    if n is None:
        n = max(1, sum(s.y for s in samples))
    grads = []
    for s in samples:
        p = _clamp(s.p)
        if s.y == 1:
            g = -alpha * (
                -gamma * (1.0 - p) ** (gamma - 1.0) * math.log(p) + (1.0 - p) ** gamma / p
            )
        else:
            g = -(1.0 - alpha) * (
                gamma * p ** (gamma - 1.0) * math.log(1.0 - p) - p**gamma / (1.0 - p)
            )
        grads.append(g / n)
    return grads


def round4(x: float) -> float:
    """Round half away from zero to 4 decimal places."""
    return float(Decimal(repr(x)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


@dataclass
class WeightTable:
    """Per-size positive-term weight factors plus pairwise relative distances."""

    gamma: float
    betas: list[float]
    sizes: list[tuple[float, float]]
    cs_hats: list[float] = field(default_factory=list)
    weights: list[list[float]] = field(default_factory=list)   # [size][beta]
    rd: list[list[float]] = field(default_factory=list)        # [pair][beta]
    amplification: list[list[float | None]] = field(default_factory=list)

    def csv_lines(self) -> list[str]:
        head = "size,cs_hat," + ",".join(f"w_beta_{b:g}" for b in self.betas)
        lines = [head]
        for (h, w), cs, row in zip(self.sizes, self.cs_hats, self.weights):
            cells = ",".join(f"{v:.4f}" for v in row)
            lines.append(f"{h:g}x{w:g},{cs:.4f},{cells}")
        for i, (rd_row, amp_row) in enumerate(zip(self.rd, self.amplification)):
            a, b = self.sizes[i], self.sizes[i + 1]
            cells = ",".join(
                f"{v:.4f}" if amp is None else f"{v:.4f} ({amp:.1f}x)"
                for v, amp in zip(rd_row, amp_row)
            )
            lines.append(f"RD {a[0]:g}x{a[1]:g} vs {b[0]:g}x{b[1]:g},,{cells}")
        return lines


def weight_table(
    object_sizes: list[tuple[float, float]],
    H: float,
    W: float,
    gamma: float,
    betas: list[float],
) -> WeightTable:
    """Weight factors (1 - cs_hat^beta)^gamma per size and beta, with the
    relative distance |w_a - w_b| / min(w_a, w_b) between consecutive sizes.

    All displayed quantities are rounded half away from zero to 4 decimals,
    and each stage consumes the previous stage's rounded values. When 1.0 is
    among the betas, each relative distance also carries its amplification
    ratio over the beta = 1.0 column.
    """
    table = WeightTable(gamma=gamma, betas=list(betas), sizes=[tuple(s) for s in object_sizes])
    for h, w in table.sizes:
        cs = round4(size_factor(h, w, H, W))
        table.cs_hats.append(cs)
        table.weights.append([round4((1.0 - cs**b) ** gamma) for b in betas])
    unit = betas.index(1.0) if 1.0 in betas else None
    for row_a, row_b in zip(table.weights, table.weights[1:]):
        rd_row = [round4(abs(wa - wb) / min(wa, wb)) for wa, wb in zip(row_a, row_b)]
        table.rd.append(rd_row)
        if unit is None or rd_row[unit] == 0:
            table.amplification.append([None] * len(betas))
        else:
            table.amplification.append(
                [None if i == unit else rd / rd_row[unit] for i, rd in enumerate(rd_row)]
            )
    return table

"""Rank-difference-conditioned state transition model.

Estimates the smoothed transition prior P(state_t | state_{t-1}) from label
counts and Gaussian-kernel densities of the normalized rank difference for
every (previous state, current state) cell, then fuses them by Bayes'
theorem into a transition distribution that varies with the observed rank
difference:

    P(j | i, d) ~ P(d | i, j) * P(j | i) / P(d | i)

The denominator is either its own fitted density (default) or the exact
marginalization over j; either way the output row is renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from domm.core import AolSequence, DataError, RolSequence

__all__ = [
    "KdeModel",
    "TransitionModel",
    "fit_kde",
    "fit_transition_model",
    "kde_density",
    "silverman_bandwidth",
    "transition_distribution",
    "transition_matrices",
]

DENOMINATOR_MODES = ("separate-kde", "marginalized")
BANDWIDTH_FLOOR = 1e-3
SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KdeModel:
    """Gaussian-kernel density carried as its training samples plus bandwidth."""

    samples: np.ndarray
    bandwidth: float
    density_floor: float = 1e-9

    def __post_init__(self):
        if self.samples.size < 1:
            raise DataError("KDE needs at least one sample")
        if not self.bandwidth > 0 or not self.density_floor > 0:
            raise DataError("KDE bandwidth and density floor must be positive")

    def to_dict(self) -> dict:
        return {
            "samples": self.samples.tolist(),
            "bandwidth": float(self.bandwidth),
            "density_floor": float(self.density_floor),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KdeModel":
        return cls(
            samples=np.asarray(d["samples"], dtype=float),
            bandwidth=float(d["bandwidth"]),
            density_floor=float(d["density_floor"]),
        )


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 * min(std, IQR/1.34) * n^(-1/5), floored for degenerate spreads."""
    n = samples.size
    if n < 2:
        return BANDWIDTH_FLOOR
    std = samples.std(ddof=1)
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    return max(0.9 * spread * n ** (-0.2), BANDWIDTH_FLOOR)


def fit_kde(samples, bandwidth="silverman") -> KdeModel:
    """Fit a Gaussian KDE; ``bandwidth`` is "silverman" or an explicit positive value."""
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise DataError("cannot fit a KDE on zero samples")
    if not np.all(np.isfinite(s)):
        raise DataError("KDE samples contain non-finite values")
    if bandwidth == "silverman":
        h = silverman_bandwidth(s)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise DataError("explicit bandwidth must be positive")
    return KdeModel(samples=s, bandwidth=h)


def kde_density(model: KdeModel, delta):
    """Density (1/(n h)) * sum_k phi((delta - s_k)/h), floored at density_floor.

    Accepts a scalar or an array of query points.
    """
    d = np.asarray(delta, dtype=float)
    u = (d[..., None] - model.samples) / model.bandwidth
    dens = np.exp(-0.5 * u * u).sum(axis=-1) / (model.samples.size * model.bandwidth * SQRT_2PI)
    out = np.maximum(dens, model.density_floor)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TransitionModel:
    """Smoothed transition prior plus conditional/marginal rank-difference densities."""

    prior: np.ndarray
    conditional_kdes: tuple
    marginal_kdes: tuple
    counts: np.ndarray
    denominator_mode: str = "separate-kde"
    # which rank representation the densities were fit on; queries must match
    use_normalized_ranks: bool = True

    def __post_init__(self):
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise DataError(f"unknown denominator_mode {self.denominator_mode!r}")
        if self.prior.shape != (3, 3) or np.any(self.prior <= 0):
            raise DataError("prior must be a strictly positive 3x3 matrix")
        if np.max(np.abs(self.prior.sum(axis=1) - 1.0)) > 1e-12:
            raise DataError("prior rows must sum to 1")

    def to_dict(self) -> dict:
        return {
            "prior": self.prior.tolist(),
            "conditional_kdes": [
                [kde.to_dict() for kde in row] for row in self.conditional_kdes
            ],
            "marginal_kdes": [kde.to_dict() for kde in self.marginal_kdes],
            "counts": self.counts.tolist(),
            "denominator_mode": self.denominator_mode,
            "use_normalized_ranks": self.use_normalized_ranks,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionModel":
        return cls(
            prior=np.asarray(d["prior"], dtype=float),
            conditional_kdes=tuple(
                tuple(KdeModel.from_dict(k) for k in row) for row in d["conditional_kdes"]
            ),
            marginal_kdes=tuple(KdeModel.from_dict(k) for k in d["marginal_kdes"]),
            counts=np.asarray(d["counts"], dtype=int),
            denominator_mode=str(d["denominator_mode"]),
            use_normalized_ranks=bool(d["use_normalized_ranks"]),
        )


def fit_transition_model(
    aols: list[AolSequence],
    rols: list[RolSequence],
    denominator_mode: str = "separate-kde",
    bandwidth="silverman",
    min_cell_samples: int = 10,
    use_normalized_ranks: bool = True,
) -> TransitionModel:
    """Fit prior and rank-difference densities from aligned label/rank sequences.

    Consecutive-frame pairs are partitioned into the nine (previous, current)
    state cells for the conditional densities and into three previous-state
    rows for the marginals. The prior uses add-one smoothing
    (N_ij + 1) / (N_i + 3) where N_i counts frames that have a successor.
    Cells with fewer than ``min_cell_samples`` rank differences fall back to
    their row's marginal density; an empty row falls back to the pooled
    density over all transitions.
    """
    if len(aols) != len(rols):
        raise DataError("need one rank sequence per label sequence")
    counts = np.zeros((3, 3), dtype=int)
    cell_samples: list[list[list[float]]] = [[[], [], []], [[], [], []], [[], [], []]]
    for aol, rol in zip(aols, rols):
        if aol.utterance_id != rol.utterance_id or len(aol) != len(rol):
            raise DataError(
                f"misaligned label/rank sequences for {aol.utterance_id!r}/{rol.utterance_id!r}"
            )
        if len(aol) < 2:
            continue
        values = rol.normalized if use_normalized_ranks else rol.ranks
        deltas = np.diff(values)
        prev = aol.labels[:-1]
        cur = aol.labels[1:]
        np.add.at(counts, (prev, cur), 1)
        for i, j, d in zip(prev, cur, deltas):
            cell_samples[i][j].append(float(d))
    if counts.sum() == 0:
        raise DataError("no consecutive frame pairs in the training sequences")

    n_prev = counts.sum(axis=1)
    prior = (counts + 1.0) / (n_prev + 3.0)[:, None]

    pooled = [d for row in cell_samples for cell in row for d in cell]
    pooled_kde = fit_kde(pooled, bandwidth)
    marginal_kdes = []
    for i in range(3):
        row = [d for cell in cell_samples[i] for d in cell]
        marginal_kdes.append(fit_kde(row, bandwidth) if row else pooled_kde)
    conditional_kdes = []
    for i in range(3):
        row_kdes = []
        for j in range(3):
            cell = cell_samples[i][j]
            row_kdes.append(fit_kde(cell, bandwidth) if len(cell) >= min_cell_samples else marginal_kdes[i])
        conditional_kdes.append(tuple(row_kdes))
    return TransitionModel(
        prior=prior,
        conditional_kdes=tuple(conditional_kdes),
        marginal_kdes=tuple(marginal_kdes),
        counts=counts,
        denominator_mode=denominator_mode,
        use_normalized_ranks=use_normalized_ranks,
    )


def transition_matrices(model: TransitionModel, deltas, renormalize: bool = True) -> np.ndarray:
    """Transition distributions for a batch of rank differences.

    Returns an array of shape (len(deltas), 3, 3) whose [t, i, :] row is the
    Bayes-fused distribution over current states given previous state i and
    rank difference deltas[t]. With ``renormalize=False`` the raw Bayes
    quotients are returned (useful for checking exact marginalization).
    """
    d = np.asarray(deltas, dtype=float)
    q = np.empty((d.size, 3, 3))
    for i in range(3):
        for j in range(3):
            q[:, i, j] = kde_density(model.conditional_kdes[i][j], d) * model.prior[i, j]
        if model.denominator_mode == "separate-kde":
            q[:, i, :] /= kde_density(model.marginal_kdes[i], d)[:, None]
        else:
            q[:, i, :] /= q[:, i, :].sum(axis=1, keepdims=True)
    if renormalize:
        q /= q.sum(axis=2, keepdims=True)
    return q


def transition_distribution(model: TransitionModel, prev: int, delta: float) -> np.ndarray:
    """Distribution over current states given the previous state and rank difference."""
    return transition_matrices(model, np.atleast_1d(float(delta)))[0, int(prev)]

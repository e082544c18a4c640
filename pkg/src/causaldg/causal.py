"""Causal inference core: backdoor-adjusted review logits, counterfactual
effect decomposition (TE / NDE / TIE), and TIE-based inference.

The structural model has five variables — prior context C, review R, aspect
A, fused knowledge K, label L — with C confounding R and L, direct shortcut
edges R->L and A->L, and the causal path of interest R->K<-A, K->L.  The
backdoor head deconfounds the review branch; the TIE contrast strips the
direct shortcut contributions out of the fused prediction.

A consequence worth knowing when reading results: with the additive fusion
``zeta_k + tanh(zeta_a) + tanh(zeta_r)``, the four-term TIE collapses
algebraically to ``zeta_k - c_k`` (knowledge logits shifted by a learned
constant).  The full four-term form is still computed so a different fusion
can be swapped in without touching this module.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import Label, label_from_index

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class BackdoorHead:
    """Per-class, per-stratum normalized-difference head.

    The review representation is chunked into K strata; each stratum's
    normalized deviation from the matching chunk of the confounder running
    mean is scored against a normalized class weight vector, scaled by
    tau / K.  Output is scale-invariant in the representation.
    """

    tau: float
    K: int
    W: np.ndarray          # (C, K, d_rep // K)
    mu_c: np.ndarray       # (d_rep,), running mean of review representations
    epsilon: float = 1e-8
    norm_floor: float = NORM_FLOOR

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        C, K, chunk = self.W.shape
        if K != self.K:
            raise ValueError(f"W stratum axis {K} != K={self.K}")
        if self.mu_c.shape != (K * chunk,):
            raise ValueError(f"mu_c shape {self.mu_c.shape} incompatible with W")

    @property
    def d_rep(self) -> int:
        return self.W.shape[1] * self.W.shape[2]

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]


def _safe_unit(x: np.ndarray, floor: float) -> np.ndarray:
    """Normalize along the last axis; chunks under the floor map to zero."""
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(n < floor, 0.0, x / np.where(n < floor, 1.0, n))


def backdoor_logits_batch(h: BackdoorHead, reps: np.ndarray) -> np.ndarray:
    """Vectorized head over a (B, d_rep) batch; returns (B, C)."""
    reps = np.asarray(reps, dtype=float)
    if reps.ndim == 1:
        reps = reps[None, :]
    B = reps.shape[0]
    if reps.shape[1] != h.d_rep:
        raise ValueError(f"representation dim {reps.shape[1]} != d_rep {h.d_rep}")
    chunk = h.d_rep // h.K
    r_hat = _safe_unit(reps.reshape(B, h.K, chunk), h.norm_floor)
    mu_hat = _safe_unit(h.mu_c.reshape(h.K, chunk), h.norm_floor)
    w_norm = np.linalg.norm(h.W, axis=2, keepdims=True)
    w_hat = h.W / (w_norm + h.epsilon)
    diff = r_hat - mu_hat[None, :, :]
    return (h.tau / h.K) * np.einsum("ckj,bkj->bc", w_hat, diff)


def backdoor_logits(h: BackdoorHead, r: np.ndarray) -> np.ndarray:
    """Debiased review logits for a single d_rep representation."""
    r = np.asarray(r, dtype=float)
    if r.shape != (h.d_rep,):
        raise ValueError(f"dimension mismatch: got {r.shape}, want ({h.d_rep},)")
    return backdoor_logits_batch(h, r[None, :])[0]


def update_confounder_mean(h: BackdoorHead, batch_mean: np.ndarray,
                           m: float) -> BackdoorHead:
    """Momentum update of the confounder running mean (training-time only)."""
    if not 0 <= m < 1:
        raise ValueError(f"momentum must be in [0, 1), got {m}")
    batch_mean = np.asarray(batch_mean, dtype=float)
    if batch_mean.shape != h.mu_c.shape:
        raise ValueError("batch mean dimension mismatch")
    return replace(h, mu_c=m * h.mu_c + (1.0 - m) * batch_mean)


@dataclass(frozen=True)
class CounterfactualBaseline:
    """Learned constant branch outputs standing in for void inputs."""

    c_a: np.ndarray
    c_r: np.ndarray
    c_k: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int) -> "CounterfactualBaseline":
        return cls(np.zeros(num_classes), np.zeros(num_classes), np.zeros(num_classes))


@dataclass(frozen=True)
class EffectEstimates:
    te: np.ndarray
    nde_a: np.ndarray
    nde_r: np.ndarray
    tie: np.ndarray

    def to_dict(self) -> dict:
        return {"te": self.te.tolist(), "nde_a": self.nde_a.tolist(),
                "nde_r": self.nde_r.tolist(), "tie": self.tie.tolist()}


def effects(m, review, aspect, embedder) -> EffectEstimates:
    """Counterfactual decomposition of the fused prediction for one input.

    Factual branch outputs come from the model; counterfactual terms swap
    branch outputs for the learned baselines.  TIE uses the four-term
    contrast; TE and the two NDEs are computed from their own definitions,
    so the identity tie = te - nde_a - nde_r is a checkable consequence,
    not an assignment.
    """
    from .model import forward_branches, fuse_arrays

    if not m.ct:
        raise ValueError("effects requires a CT=True model")
    logits = forward_branches(m, review, aspect, embedder)
    b = m.baselines
    full = fuse_arrays(logits.zeta_a, logits.zeta_r, logits.zeta_k)
    void = fuse_arrays(b.c_a, b.c_r, b.c_k)
    aspect_only = fuse_arrays(logits.zeta_a, b.c_r, b.c_k)    # L_{a, r*, k*}
    review_only = fuse_arrays(b.c_a, logits.zeta_r, b.c_k)    # L_{a*, r, k*}
    return EffectEstimates(
        te=full - void,
        nde_a=aspect_only - void,
        nde_r=review_only - void,
        tie=full - review_only - aspect_only + void,
    )


def infer(m, review, aspect, mode: str, embedder) -> tuple[Label, np.ndarray]:
    """Predict a label. mode='standard' scores the model's direct output;
    mode='tie' scores the total indirect effect (CT=True only).  Argmax
    ties break by class order (positive < negative < neutral)."""
    from .model import standard_scores

    if mode == "standard":
        scores = standard_scores(m, review, aspect, embedder)
    elif mode == "tie":
        if not m.ct:
            raise ValueError("tie inference requires a CT=True model")
        scores = effects(m, review, aspect, embedder).tie
    else:
        raise ValueError(f"unknown inference mode {mode!r}")
    return label_from_index(int(np.argmax(scores))), scores

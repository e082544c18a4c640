"""Trainable classifiers: the tweet-level softmax classifier used by the
augmentation harness, and the three-branch aspect-sentiment model with
causal-training (CT) on/off modes.

Everything trains with plain mini-batch gradient descent over numpy arrays
(decoupled weight decay; optional Adam behind ``TrainConfig.adaptive``).
Gradients are written out by hand and checked against central finite
differences in the test suite, so keep forward and backward in sync when
editing.

CT=False trains a single head over the pooled "aspect + review" token bag.
CT=True trains the joint objective

    w1*CE(fused) + w2*CE(zeta_a) + w3*CE(zeta_r') + w4*CE(zeta_k)
                 + w1*CE(fused all-void baselines)

where fused = zeta_k + tanh(zeta_a) + tanh(zeta_r').  The last term is what
gives the counterfactual baselines their gradient: they are free per-class
parameters calibrated on the same void composition that TIE inference
subtracts, and they converge toward class-prior logits.

Training is single-threaded (the confounder running mean imposes batch
order).  Trained models are immutable in practice; the forward/predict
functions are pure and thread-safe.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .causal import BackdoorHead, CounterfactualBaseline, backdoor_logits_batch
from .corpus import Dataset, Label, NUM_CLASSES, label_from_index
from .errors import (
    ChecksumError,
    DataError,
    DegenerateDataError,
    ModelFileError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .text import EmbedderSpec, preprocess

MAGIC = b"CDGM"
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 16
    epochs: int = 10
    weight_decay: float = 0.01
    seed: int = 0
    tau: float = 0.1
    strata_K: int = 4
    momentum_m: float = 0.9
    branch_loss_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    adaptive: bool = False  # Adam instead of plain SGD

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("bad batch_size/epochs")
        if not 0 <= self.momentum_m < 1:
            raise ValueError("momentum_m must be in [0, 1)")
        if len(self.branch_loss_weights) != 4:
            raise ValueError("branch_loss_weights needs 4 entries")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, step: int, train_loss: float, val_accuracy: float) -> None:
        if self.records and step <= self.records[-1].step:
            raise ValueError("trace steps must be strictly increasing")
        self.records.append(TraceRecord(step, train_loss, val_accuracy))

    def to_rows(self) -> list[dict]:
        return [{"step": r.step, "train_loss": r.train_loss,
                 "val_accuracy": r.val_accuracy} for r in self.records]


def steps_to_threshold(trace: TrainTrace, threshold: float) -> int | None:
    """Smallest step whose validation accuracy reaches the threshold
    (first crossing, regardless of later dips)."""
    for r in trace.records:
        if r.val_accuracy >= threshold:
            return r.step
    return None


# ---------------------------------------------------------------------------
# shared numerics

def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(z))


def _ce(logits: np.ndarray, y_idx: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. logits."""
    B = len(y_idx)
    logp = _log_softmax(logits)
    loss = -float(logp[np.arange(B), y_idx].mean())
    grad = np.exp(logp)
    grad[np.arange(B), y_idx] -= 1.0
    return loss, grad / B


def _xavier(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[-1], shape[0]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


# ---------------------------------------------------------------------------
# tweet-level classifier

@dataclass
class ClassifierParams:
    W: np.ndarray  # (C, d)
    b: np.ndarray  # (C,)
    embedder_spec: EmbedderSpec


def init_classifier(embedder_spec: EmbedderSpec, seed: int,
                    num_classes: int = NUM_CLASSES) -> ClassifierParams:
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 0.01, size=(num_classes, embedder_spec.d))
    return ClassifierParams(W=W, b=np.zeros(num_classes), embedder_spec=embedder_spec)


def classifier_loss_and_grads(params: ClassifierParams, X: np.ndarray,
                              y_idx: np.ndarray):
    logits = X @ params.W.T + params.b
    loss, dz = _ce(logits, y_idx)
    return loss, {"W": dz.T @ X, "b": dz.sum(axis=0)}


def _check_label_coverage(labels: list[Label]) -> None:
    if len(set(labels)) < 2:
        raise DegenerateDataError(
            f"training data covers a single class ({labels[0].value}); refusing")


def _tweet_features(dataset: Dataset, embedder, stopwords) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([embedder.embed_tokens(preprocess(it.text, stopwords).tokens)
                  for it in dataset.items])
    y = np.array([it.label.index for it in dataset.items])
    return X, y


class _Optimizer:
    """SGD or Adam with decoupled weight decay on weight tensors only."""

    def __init__(self, cfg: TrainConfig, decay_keys: set[str]):
        self.cfg = cfg
        self.decay_keys = decay_keys
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        lr, wd = self.cfg.learning_rate, self.cfg.weight_decay
        self._t += 1
        for name, g in grads.items():
            p = params[name]
            if self.cfg.adaptive:
                b1, b2, eps = 0.9, 0.999, 1e-8
                m = self._m.setdefault(name, np.zeros_like(p))
                v = self._v.setdefault(name, np.zeros_like(p))
                m[:] = b1 * m + (1 - b1) * g
                v[:] = b2 * v + (1 - b2) * g * g
                mhat = m / (1 - b1 ** self._t)
                vhat = v / (1 - b2 ** self._t)
                p -= lr * mhat / (np.sqrt(vhat) + eps)
            else:
                p -= lr * g
            if name in self.decay_keys and wd:
                p -= lr * wd * p


def train_classifier(train: Dataset, val: Dataset, cfg: TrainConfig, embedder,
                     stopwords=frozenset()) -> tuple[ClassifierParams, TrainTrace]:
    """Softmax regression over pooled embeddings, mini-batch GD.
    Deterministic given (data, cfg, seed); one trace record per epoch."""
    cfg.validate()
    if len(train) == 0:
        raise DegenerateDataError("empty training set")
    _check_label_coverage(train.labels())
    params = init_classifier(embedder_spec=embedder.spec, seed=cfg.seed)
    X, y = _tweet_features(train, embedder, stopwords)
    Xv, yv = _tweet_features(val, embedder, stopwords) if len(val) else (None, None)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = _Optimizer(cfg, decay_keys={"W"})
    trace = TrainTrace()
    n = len(y)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = classifier_loss_and_grads(params, X[idx], y[idx])
            opt.step({"W": params.W, "b": params.b}, grads)
            losses.append(loss)
        if Xv is not None:
            preds = np.argmax(Xv @ params.W.T + params.b, axis=1)
            val_acc = float((preds == yv).mean())
        else:
            val_acc = float("nan")
        trace.append(epoch, float(np.mean(losses)), val_acc)
    return params, trace


def predict(params: ClassifierParams, text: str, embedder,
            stopwords=frozenset()) -> tuple[Label, np.ndarray]:
    x = embedder.embed_tokens(preprocess(text, stopwords).tokens)
    probs = softmax(x @ params.W.T + params.b)
    return label_from_index(int(np.argmax(probs))), probs


# ---------------------------------------------------------------------------
# three-branch ABSA model

@dataclass(frozen=True)
class ModelDims:
    d: int
    hidden: int = 128
    d_rep: int = 64
    num_classes: int = NUM_CLASSES


@dataclass(frozen=True)
class BranchLogits:
    zeta_a: np.ndarray
    zeta_r: np.ndarray  # debiased zeta_r' under CT=True, plain review head otherwise
    zeta_k: np.ndarray


def fuse_arrays(zeta_a: np.ndarray, zeta_r: np.ndarray, zeta_k: np.ndarray) -> np.ndarray:
    """Ensemble fusion: zeta_k + tanh(zeta_a) + tanh(zeta_r)."""
    return zeta_k + np.tanh(zeta_a) + np.tanh(zeta_r)


def fuse(l: BranchLogits) -> np.ndarray:
    return fuse_arrays(l.zeta_a, l.zeta_r, l.zeta_k)


@dataclass
class AbsaModelParams:
    embedder_spec: EmbedderSpec
    dims: ModelDims
    ct: bool
    # shared encoder
    enc_w1: np.ndarray  # (hidden, d)
    enc_b1: np.ndarray  # (hidden,)
    enc_w2: np.ndarray  # (d_rep, hidden)
    enc_b2: np.ndarray  # (d_rep,)
    # branch heads
    wa: np.ndarray      # (C, d_rep)
    ba: np.ndarray      # (C,)
    wk: np.ndarray      # (C, 2*d_rep)
    bk: np.ndarray      # (C,)
    # review head: plain (CT=False) or backdoor (CT=True)
    wr: np.ndarray | None = None
    br: np.ndarray | None = None
    bd_w: np.ndarray | None = None   # (C, K, d_rep // K)
    mu_c: np.ndarray | None = None   # (d_rep,)
    tau: float = 0.1
    strata_K: int = 4
    epsilon: float = 1e-8
    # counterfactual baselines (CT=True)
    c_a: np.ndarray | None = None
    c_r: np.ndarray | None = None
    c_k: np.ndarray | None = None

    @property
    def backdoor(self) -> BackdoorHead:
        if not self.ct:
            raise ValueError("CT=False model has no backdoor head")
        return BackdoorHead(tau=self.tau, K=self.strata_K, W=self.bd_w,
                            mu_c=self.mu_c, epsilon=self.epsilon)

    @property
    def baselines(self) -> CounterfactualBaseline:
        if not self.ct:
            raise ValueError("CT=False model has no counterfactual baselines")
        return CounterfactualBaseline(c_a=self.c_a, c_r=self.c_r, c_k=self.c_k)


def init_absa_model(embedder_spec: EmbedderSpec, ct: bool, cfg: TrainConfig,
                    dims: ModelDims | None = None) -> AbsaModelParams:
    dims = dims or ModelDims(d=embedder_spec.d)
    if dims.d_rep % cfg.strata_K:
        raise ValueError(f"strata_K={cfg.strata_K} must divide d_rep={dims.d_rep}")
    rng = np.random.default_rng(cfg.seed)
    C = dims.num_classes
    m = AbsaModelParams(
        embedder_spec=embedder_spec, dims=dims, ct=ct,
        enc_w1=_xavier(rng, (dims.hidden, dims.d)),
        enc_b1=np.zeros(dims.hidden),
        enc_w2=_xavier(rng, (dims.d_rep, dims.hidden)),
        enc_b2=np.zeros(dims.d_rep),
        wa=_xavier(rng, (C, dims.d_rep)),
        ba=np.zeros(C),
        wk=_xavier(rng, (C, 2 * dims.d_rep)),
        bk=np.zeros(C),
        tau=cfg.tau, strata_K=cfg.strata_K, epsilon=1e-8,
    )
    if ct:
        chunk = dims.d_rep // cfg.strata_K
        m.bd_w = rng.normal(0.0, 0.1, size=(C, cfg.strata_K, chunk))
        m.mu_c = np.zeros(dims.d_rep)
        m.c_a = np.zeros(C)
        m.c_r = np.zeros(C)
        m.c_k = np.zeros(C)
    else:
        m.wr = _xavier(rng, (C, dims.d_rep))
        m.br = np.zeros(C)
    return m


def _encode(m: AbsaModelParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = np.tanh(X @ m.enc_w1.T + m.enc_b1)
    return H @ m.enc_w2.T + m.enc_b2, H


def _encode_backward(m, X, H, dR, grads):
    grads["enc_w2"] += dR.T @ H
    grads["enc_b2"] += dR.sum(axis=0)
    dH = (dR @ m.enc_w2) * (1.0 - H * H)
    grads["enc_w1"] += dH.T @ X
    grads["enc_b1"] += dH.sum(axis=0)


def _branch_logits_batch(m: AbsaModelParams, Xr: np.ndarray, Xa: np.ndarray):
    """Forward pass over batches of review/aspect embeddings; returns
    (Za, Zr, Zk, cache) where cache holds what backward needs."""
    Rr, Hr = _encode(m, Xr)
    Ra, Ha = _encode(m, Xa)
    Za = Ra @ m.wa.T + m.ba
    cat = np.concatenate([Rr, Ra], axis=1)
    Zk = cat @ m.wk.T + m.bk
    if m.ct:
        Zr = backdoor_logits_batch(m.backdoor, Rr)
    else:
        Zr = Rr @ m.wr.T + m.br
    cache = {"Rr": Rr, "Hr": Hr, "Ra": Ra, "Ha": Ha, "cat": cat}
    return Za, Zr, Zk, cache


def forward_branches(m: AbsaModelParams, review, aspect, embedder) -> BranchLogits:
    """Branch logits for one (review, aspect) TokenSeq pair."""
    if embedder.dim != m.dims.d:
        raise ValueError(f"embedder dim {embedder.dim} != model dim {m.dims.d}")
    xr = embedder.embed_tokens(review.tokens)[None, :]
    xa = embedder.embed_tokens(aspect.tokens)[None, :]
    Za, Zr, Zk, _ = _branch_logits_batch(m, xr, xa)
    return BranchLogits(zeta_a=Za[0], zeta_r=Zr[0], zeta_k=Zk[0])


def standard_scores(m: AbsaModelParams, review, aspect, embedder) -> np.ndarray:
    """Direct (non-counterfactual) scores: fused ensemble for CT=True,
    single head over the pooled aspect+review bag for CT=False."""
    if m.ct:
        return fuse(forward_branches(m, review, aspect, embedder))
    x = embedder.embed_tokens(tuple(aspect.tokens) + tuple(review.tokens))[None, :]
    rep, _ = _encode(m, x)
    return (rep @ m.wr.T + m.br)[0]


def _backdoor_backward(m: AbsaModelParams, Rr: np.ndarray, dZr: np.ndarray,
                       grads: dict) -> np.ndarray:
    """Gradient of the backdoor head w.r.t. review representations and bd_w.
    The running mean mu_c is a statistic, not a parameter: no gradient."""
    h = m.backdoor
    B = Rr.shape[0]
    chunk = h.d_rep // h.K
    R3 = Rr.reshape(B, h.K, chunk)
    n = np.linalg.norm(R3, axis=2, keepdims=True)
    ok = n >= h.norm_floor
    Rhat = np.where(ok, R3 / np.where(ok, n, 1.0), 0.0)
    mu3 = h.mu_c.reshape(h.K, chunk)
    mn = np.linalg.norm(mu3, axis=1, keepdims=True)
    mok = mn >= h.norm_floor
    Muhat = np.where(mok, mu3 / np.where(mok, mn, 1.0), 0.0)
    wn = np.linalg.norm(h.W, axis=2, keepdims=True)
    What = h.W / (wn + h.epsilon)
    diff = Rhat - Muhat[None, :, :]
    scale = h.tau / h.K

    dDiff = scale * np.einsum("bc,ckj->bkj", dZr, What)
    inner = (dDiff * Rhat).sum(axis=2, keepdims=True)
    dR3 = np.where(ok, (dDiff - Rhat * inner) / np.where(ok, n, 1.0), 0.0)

    dWhat = scale * np.einsum("bc,bkj->ckj", dZr, diff)
    wn_safe = np.maximum(wn, h.norm_floor)
    grads["bd_w"] += dWhat / (wn + h.epsilon) - h.W * (
        (h.W * dWhat).sum(axis=2, keepdims=True) / (wn_safe * (wn + h.epsilon) ** 2))
    return dR3.reshape(B, h.d_rep)


def _zero_grads(m: AbsaModelParams) -> dict[str, np.ndarray]:
    names = ["enc_w1", "enc_b1", "enc_w2", "enc_b2", "wa", "ba", "wk", "bk"]
    names += ["bd_w", "c_a", "c_r", "c_k"] if m.ct else ["wr", "br"]
    return {n: np.zeros_like(getattr(m, n)) for n in names}


def _param_dict(m: AbsaModelParams) -> dict[str, np.ndarray]:
    return {n: getattr(m, n) for n in _zero_grads(m)}


def absa_loss_and_grads(m: AbsaModelParams, Xr: np.ndarray, Xa: np.ndarray,
                        Xcat: np.ndarray, y_idx: np.ndarray,
                        cfg: TrainConfig) -> tuple[float, dict[str, np.ndarray]]:
    """Joint training loss and analytic gradients for one mini-batch.

    CT=False: cross-entropy of the single head over the pooled concat bag.
    CT=True: the weighted branch objective described in the module docstring.
    Pure in the model (mu_c is read, never written here), which is what the
    finite-difference check relies on.
    """
    grads = _zero_grads(m)
    if not m.ct:
        rep, H = _encode(m, Xcat)
        logits = rep @ m.wr.T + m.br
        loss, dz = _ce(logits, y_idx)
        grads["wr"] += dz.T @ rep
        grads["br"] += dz.sum(axis=0)
        _encode_backward(m, Xcat, H, dz @ m.wr, grads)
        return loss, grads

    w1, w2, w3, w4 = cfg.branch_loss_weights
    Za, Zr, Zk, cache = _branch_logits_batch(m, Xr, Xa)
    Ta, Tr = np.tanh(Za), np.tanh(Zr)
    F = Zk + Ta + Tr

    loss_f, dF = _ce(F, y_idx)
    loss_a, dGa = _ce(Za, y_idx)
    loss_r, dGr = _ce(Zr, y_idx)
    loss_k, dGk = _ce(Zk, y_idx)

    # all-void composition: trains the counterfactual baselines
    f_void = m.c_k + np.tanh(m.c_a) + np.tanh(m.c_r)
    logp_void = _log_softmax(f_void)
    loss_void = -float(logp_void[y_idx].mean())
    y_mean = np.bincount(y_idx, minlength=m.dims.num_classes) / len(y_idx)
    d_void = (np.exp(logp_void) - y_mean) * w1
    grads["c_k"] += d_void
    grads["c_a"] += d_void * (1.0 - np.tanh(m.c_a) ** 2)
    grads["c_r"] += d_void * (1.0 - np.tanh(m.c_r) ** 2)

    loss = w1 * loss_f + w2 * loss_a + w3 * loss_r + w4 * loss_k + w1 * loss_void

    dZk = w1 * dF + w4 * dGk
    dZa = w1 * dF * (1.0 - Ta * Ta) + w2 * dGa
    dZr = w1 * dF * (1.0 - Tr * Tr) + w3 * dGr

    Rr, Ra, cat = cache["Rr"], cache["Ra"], cache["cat"]
    d_rep = m.dims.d_rep

    grads["wk"] += dZk.T @ cat
    grads["bk"] += dZk.sum(axis=0)
    dcat = dZk @ m.wk
    dRr = dcat[:, :d_rep].copy()
    dRa = dcat[:, d_rep:].copy()

    grads["wa"] += dZa.T @ Ra
    grads["ba"] += dZa.sum(axis=0)
    dRa += dZa @ m.wa

    dRr += _backdoor_backward(m, Rr, dZr, grads)

    _encode_backward(m, Xr, cache["Hr"], dRr, grads)
    _encode_backward(m, Xa, cache["Ha"], dRa, grads)
    return loss, grads


def _absa_features(dataset: Dataset, embedder, stopwords):
    Xr, Xa, Xcat, y = [], [], [], []
    for inst in dataset.items:
        rev = preprocess(inst.text, stopwords).tokens
        asp = preprocess(inst.aspect, stopwords).tokens
        Xr.append(embedder.embed_tokens(rev))
        Xa.append(embedder.embed_tokens(asp))
        Xcat.append(embedder.embed_tokens(tuple(asp) + tuple(rev)))
        y.append(inst.polarity.index)
    return (np.stack(Xr), np.stack(Xa), np.stack(Xcat), np.array(y))


def _absa_scores_batch(m: AbsaModelParams, Xr, Xa, Xcat, mode: str) -> np.ndarray:
    if not m.ct:
        rep, _ = _encode(m, Xcat)
        return rep @ m.wr.T + m.br
    Za, Zr, Zk, _ = _branch_logits_batch(m, Xr, Xa)
    full = fuse_arrays(Za, Zr, Zk)
    if mode == "standard":
        return full
    void = fuse_arrays(m.c_a, m.c_r, m.c_k)
    aspect_only = fuse_arrays(Za, m.c_r, m.c_k)
    review_only = fuse_arrays(m.c_a, Zr, m.c_k)
    return full - review_only - aspect_only + void


def absa_accuracy(m: AbsaModelParams, dataset: Dataset, embedder, mode: str,
                  stopwords=frozenset()) -> float:
    Xr, Xa, Xcat, y = _absa_features(dataset, embedder, stopwords)
    scores = _absa_scores_batch(m, Xr, Xa, Xcat, mode)
    return float((np.argmax(scores, axis=1) == y).mean())


def train_absa(train: Dataset, val: Dataset, cfg: TrainConfig, ct: bool, embedder,
               stopwords=frozenset(), dims: ModelDims | None = None
               ) -> tuple[AbsaModelParams, TrainTrace]:
    """Train the three-branch model (CT=True) or the concatenated single-head
    model (CT=False).  The confounder running mean updates once per batch,
    before that batch's gradient step, with momentum cfg.momentum_m.
    Validation accuracy is traced per epoch using each configuration's own
    deployed inference: TIE for CT=True, standard for CT=False.
    """
    cfg.validate()
    if len(train) == 0:
        raise DegenerateDataError("empty training set")
    _check_label_coverage(train.labels())
    m = init_absa_model(embedder.spec, ct, cfg, dims=dims)
    Xr, Xa, Xcat, y = _absa_features(train, embedder, stopwords)
    val_feats = _absa_features(val, embedder, stopwords) if len(val) else None
    rng = np.random.default_rng(cfg.seed + 1)
    opt = _Optimizer(cfg, decay_keys={"enc_w1", "enc_w2", "wa", "wk", "wr", "bd_w"})
    trace = TrainTrace()
    mode = "tie" if ct else "standard"
    n = len(y)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            if ct:
                reps, _ = _encode(m, Xr[idx])
                m.mu_c = cfg.momentum_m * m.mu_c + (1 - cfg.momentum_m) * reps.mean(axis=0)
            loss, grads = absa_loss_and_grads(m, Xr[idx], Xa[idx], Xcat[idx], y[idx], cfg)
            opt.step(_param_dict(m), grads)
            losses.append(loss)
        if val_feats is not None:
            scores = _absa_scores_batch(m, val_feats[0], val_feats[1], val_feats[2], mode)
            val_acc = float((np.argmax(scores, axis=1) == val_feats[3]).mean())
        else:
            val_acc = float("nan")
        trace.append(epoch, float(np.mean(losses)), val_acc)
    return m, trace


# ---------------------------------------------------------------------------
# persistence: magic + version + length-prefixed JSON metadata + little-endian
# float64 payload (array order given in metadata) + CRC32 of the payload.

def _array_manifest(m) -> list[tuple[str, np.ndarray]]:
    if isinstance(m, ClassifierParams):
        return [("W", m.W), ("b", m.b)]
    names = ["enc_w1", "enc_b1", "enc_w2", "enc_b2", "wa", "ba", "wk", "bk"]
    names += ["bd_w", "mu_c", "c_a", "c_r", "c_k"] if m.ct else ["wr", "br"]
    return [(n, getattr(m, n)) for n in names]


def save_model(m, path: str) -> None:
    if isinstance(m, ClassifierParams):
        meta = {"kind": "classifier", "embedder": m.embedder_spec.to_dict()}
    elif isinstance(m, AbsaModelParams):
        meta = {
            "kind": "absa", "ct": m.ct,
            "dims": {"d": m.dims.d, "hidden": m.dims.hidden,
                     "d_rep": m.dims.d_rep, "num_classes": m.dims.num_classes},
            "tau": m.tau, "strata_K": m.strata_K, "epsilon": m.epsilon,
            "embedder": m.embedder_spec.to_dict(),
        }
    else:
        raise TypeError(f"cannot save {type(m).__name__}")
    arrays = _array_manifest(m)
    meta["arrays"] = [[n, list(a.shape)] for n, a in arrays]
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_model(path: str):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise TruncatedFileError("file shorter than header", path=path)
    if blob[:4] != MAGIC:
        raise ModelFileError("bad magic, not a model file", path=path)
    version = struct.unpack("<I", blob[4:8])[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}", path=path)
    meta_len = struct.unpack("<I", blob[8:12])[0]
    if len(blob) < 12 + meta_len + 4:
        raise TruncatedFileError("truncated metadata", path=path)
    try:
        meta = json.loads(blob[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ModelFileError("unreadable metadata", path=path) from None
    payload = blob[12 + meta_len:-4]
    want_crc = struct.unpack("<I", blob[-4:])[0]
    expected = sum(int(np.prod(shape)) for _, shape in meta["arrays"]) * 8
    if len(payload) != expected:
        raise TruncatedFileError(
            f"payload is {len(payload)} bytes, expected {expected}", path=path)
    if zlib.crc32(payload) != want_crc:
        raise ChecksumError("payload CRC mismatch", path=path)
    arrays = {}
    offset = 0
    for name, shape in meta["arrays"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays[name] = arr.reshape([int(s) for s in shape]).copy()
        offset += count * 8
    spec = EmbedderSpec.from_dict(meta["embedder"])
    if meta["kind"] == "classifier":
        return ClassifierParams(W=arrays["W"], b=arrays["b"], embedder_spec=spec)
    if meta["kind"] != "absa":
        raise ModelFileError(f"unknown model kind {meta['kind']!r}", path=path)
    dims = ModelDims(**meta["dims"])
    m = AbsaModelParams(
        embedder_spec=spec, dims=dims, ct=meta["ct"],
        enc_w1=arrays["enc_w1"], enc_b1=arrays["enc_b1"],
        enc_w2=arrays["enc_w2"], enc_b2=arrays["enc_b2"],
        wa=arrays["wa"], ba=arrays["ba"], wk=arrays["wk"], bk=arrays["bk"],
        tau=meta["tau"], strata_K=meta["strata_K"], epsilon=meta["epsilon"],
    )
    if m.ct:
        m.bd_w, m.mu_c = arrays["bd_w"], arrays["mu_c"]
        m.c_a, m.c_r, m.c_k = arrays["c_a"], arrays["c_r"], arrays["c_k"]
    else:
        m.wr, m.br = arrays["wr"], arrays["br"]
    return m

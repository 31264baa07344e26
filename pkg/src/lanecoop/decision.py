"""Intention-driven LK/LC decision model.

Policy: LSTM over the 20-frame window with c_final appended to every step,
then a linear head giving one logit. Reward net: MLP on the window summary,
c_final and an action bit. Trained jointly with the cooperation heads on
L = L_BC + L_IRL + L_coop.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from lanecoop import checkpoint
from lanecoop.errors import ConfigError, FormatError, NumericError
from lanecoop.intention import IntentionParams, fuse, fuse_backward
from lanecoop.numeric import (
    AdamW, LstmParams, MlpParams, lstm_backward, lstm_forward, make_rng, mlp_backward, mlp_forward,
)

LOGIT_CLIP = 30.0
MODEL_FORMAT = "lanecoop.decision/1"


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-3
    epochs: int = 200
    batch: int = 128
    beta: float = 1.0
    lambda2: float = 1e-3
    lambda_s: float = 1e-2
    seed: int = 42
    hidden: int = 128
    use_irl: bool = True
    use_lcs: bool = True
    use_dcs: bool = True

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.lambda2 < 0 or self.lambda_s < 0:
            raise ConfigError("lambda2 and lambda_s must be non-negative")
        if self.epochs < 1 or self.batch < 1 or self.hidden < 1:
            raise ConfigError("epochs, batch and hidden must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive and weight_decay non-negative")


@dataclass
class DecisionParams:
    policy: LstmParams  # input 11
    head_w: np.ndarray  # (H,)
    head_b: np.ndarray  # (1,)
    reward: MlpParams  # 12 -> 64 -> 64 -> 1

    @classmethod
    def init(cls, rng, hidden: int = 128) -> "DecisionParams":
        k = 1.0 / np.sqrt(hidden)
        return cls(LstmParams.init(11, hidden, rng), rng.uniform(-k, k, hidden), np.zeros(1),
                   MlpParams.init([12, 64, 64, 1], ["relu", "relu", "identity"], rng))

    @classmethod
    def zeros(cls, hidden: int = 128) -> "DecisionParams":
        return cls(LstmParams.zeros(11, hidden), np.zeros(hidden), np.zeros(1),
                   MlpParams.zeros([12, 64, 64, 1], ["relu", "relu", "identity"]))

    def arrays(self) -> dict[str, np.ndarray]:
        out = self.policy.arrays("policy.")
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        out.update(self.reward.arrays("reward."))
        return out


@dataclass
class DecisionModel:
    """Everything needed at inference: weights, input standardization, ablation flags."""

    decision: DecisionParams
    intention: IntentionParams
    feature_mean: np.ndarray  # (10,)
    feature_std: np.ndarray
    use_lcs: bool = True
    use_dcs: bool = True

    def arrays(self) -> dict[str, np.ndarray]:
        out = self.intention.arrays()
        out.update(self.decision.arrays())
        return out

    def standardize(self, features):
        return (np.asarray(features, float) - self.feature_mean) / self.feature_std

    def to_dict(self) -> dict:
        d = self.decision
        return {
            "format": MODEL_FORMAT,
            "feature_mean": checkpoint.array_to_dict(self.feature_mean),
            "feature_std": checkpoint.array_to_dict(self.feature_std),
            "use_lcs": self.use_lcs, "use_dcs": self.use_dcs,
            "policy": checkpoint.lstm_to_dict(d.policy),
            "head_w": checkpoint.array_to_dict(d.head_w), "head_b": checkpoint.array_to_dict(d.head_b),
            "reward": checkpoint.mlp_to_dict(d.reward),
            "intr": checkpoint.mlp_to_dict(self.intention.intr),
            "inter": checkpoint.mlp_to_dict(self.intention.inter),
            "gate": checkpoint.mlp_to_dict(self.intention.gate),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionModel":
        if d.get("format") != MODEL_FORMAT:
            raise FormatError(f"not a decision model (format={d.get('format')!r})")
        a, m = checkpoint.array_from_dict, checkpoint.mlp_from_dict
        dp = DecisionParams(checkpoint.lstm_from_dict(d["policy"]), a(d["head_w"]), a(d["head_b"]),
                            m(d["reward"]))
        ip = IntentionParams(m(d["intr"]), m(d["inter"]), m(d["gate"]))
        return cls(dp, ip, a(d["feature_mean"]), a(d["feature_std"]), bool(d["use_lcs"]),
                   bool(d["use_dcs"]))


def style_onehot(styles) -> np.ndarray:
    styles = np.asarray(styles)
    if np.any(styles > 2):
        raise ConfigError("samples carry unassigned style labels; run them through a style model first")
    return np.eye(3)[styles.astype(int)]


# ------------------------------------------------------------------- pieces


def policy_forward(params: DecisionParams, window, c_final):
    """Logit(s) for a window ``(T, 10)`` or batch ``(B, T, 10)`` of standardized features."""
    window = np.asarray(window, float)
    c = np.asarray(c_final, float)
    c_b = np.broadcast_to(c[..., None, None], window.shape[:-1] + (1,))
    seq = np.concatenate([window, c_b], axis=-1)
    h, caches = lstm_forward(params.policy, seq)
    z = h @ params.head_w + params.head_b[0]
    return z, (h, caches)


def policy_backward(params: DecisionParams, cache, dz):
    """Returns ``(grads, dc_final)``."""
    h, caches = cache
    dz = np.asarray(dz, float)
    grads = {"head.w": dz @ h if dz.ndim else dz * h, "head.b": np.atleast_1d(np.sum(dz))}
    dh = dz[..., None] * params.head_w
    g, dxs = lstm_backward(params.policy, caches, dh, "policy.")
    grads.update(g)
    return grads, dxs[..., 10].sum(axis=-1)


def reward_pair(params: DecisionParams, pooled, c_final):
    """``(r_lc, r_lk)`` plus caches; action bit 1 = LC."""
    pooled = np.asarray(pooled, float)
    c = np.asarray(c_final, float)[..., None]
    ones = np.ones_like(c)
    r1, k1 = mlp_forward(params.reward, np.concatenate([pooled, c, ones], axis=-1))
    r0, k0 = mlp_forward(params.reward, np.concatenate([pooled, c, 0 * ones], axis=-1))
    return r1[..., 0], r0[..., 0], (k1, k0)


def reward_backward(params: DecisionParams, caches, d_r1, d_r0):
    k1, k0 = caches
    g1, gx1 = mlp_backward(params.reward, k1, np.asarray(d_r1, float)[..., None], "reward.")
    g0, gx0 = mlp_backward(params.reward, k0, np.asarray(d_r0, float)[..., None], "reward.")
    return {k: g1[k] + g0[k] for k in g1}, gx1[..., 10] + gx0[..., 10]


def bce(logits, labels):
    """Per-sample BCE on clipped logits and its derivative."""
    z = np.clip(np.asarray(logits, float), -LOGIT_CLIP, LOGIT_CLIP)
    y = np.asarray(labels, float)
    loss = np.logaddexp(0.0, z) - y * z
    dz = (expit(z) - y) * (np.abs(np.asarray(logits, float)) < LOGIT_CLIP)
    return loss, dz


def bc_weights(r1, r0, beta):
    s = expit(beta * (np.asarray(r1, float) - np.asarray(r0, float)))
    return s / s.mean(), s


def bc_loss(logits, labels, r1, r0, beta: float = 1.0, weighted: bool = True):
    """Reward-weighted mean BCE. Returns ``(loss, dlogits, dr1, dr0)``."""
    ell, dz = bce(logits, labels)
    B = len(ell)
    if not weighted:
        return float(ell.mean()), dz / B, np.zeros(B), np.zeros(B)
    w, s = bc_weights(r1, r0, beta)
    loss = float(np.mean(w * ell))
    m = s.mean()
    ds = (ell - loss) / (B * m)
    dgap = ds * beta * s * (1 - s)
    return loss, w * dz / B, dgap, -dgap


def irl_loss(r1, r0, labels, lambda2: float = 1e-3, lambda_s: float = 1e-2):
    """Preference log-loss plus L2 and gap-magnitude terms. Returns ``(loss, dr1, dr0)``."""
    r1 = np.asarray(r1, float)
    r0 = np.asarray(r0, float)
    a = np.asarray(labels).astype(bool)
    B = len(r1)
    ra = np.where(a, r1, r0)
    rb = np.where(a, r0, r1)
    lse = logsumexp(np.stack([ra, rb]), axis=0)
    pref = -(ra - lse)
    gap = ra - rb
    loss = float(pref.mean() + lambda2 * np.mean(ra ** 2 + rb ** 2) + lambda_s * np.mean(np.abs(gap)))
    p_b = np.exp(rb - lse)  # softmax weight of the alternative
    d_ra = (-p_b + 2 * lambda2 * ra + lambda_s * np.sign(gap)) / B
    d_rb = (p_b + 2 * lambda2 * rb - lambda_s * np.sign(gap)) / B
    return loss, np.where(a, d_ra, d_rb), np.where(a, d_rb, d_ra)


def coop_loss(c_final):
    c = np.asarray(c_final, float)
    return float(np.mean((c - 0.5) ** 2)), 2 * (c - 0.5) / len(c)


# --------------------------------------------------------------- joint loss


@dataclass
class BatchOutput:
    loss: float
    parts: dict
    logits: np.ndarray
    scores: object
    grads: dict | None = None


def joint_loss(model: DecisionModel, x_std, onehot, labels, cfg: TrainConfig, need_grads=True):
    """Forward (and optionally backward) of L_BC + L_IRL + L_coop on one batch."""
    pooled = x_std.mean(axis=1)
    scores, fcache = fuse(model.intention, pooled[:, :4], pooled[:, 4:], onehot,
                          model.use_lcs, model.use_dcs)
    c = scores.c_final
    z, pcache = policy_forward(model.decision, x_std, c)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite policy logits")
    r1, r0, rcache = reward_pair(model.decision, pooled, c)
    l_bc, dz, dr1_bc, dr0_bc = bc_loss(z, labels, r1, r0, cfg.beta, weighted=cfg.use_irl)
    if cfg.use_irl:
        l_irl, dr1, dr0 = irl_loss(r1, r0, labels, cfg.lambda2, cfg.lambda_s)
    else:
        l_irl, dr1, dr0 = 0.0, np.zeros_like(r1), np.zeros_like(r0)
    l_coop, dc_coop = coop_loss(c)
    total = l_bc + l_irl + l_coop
    out = BatchOutput(total, {"bc": l_bc, "irl": l_irl, "coop": l_coop}, z, scores)
    if not need_grads:
        return out
    grads, dc_pol = policy_backward(model.decision, pcache, dz)
    g, dc_rew = reward_backward(model.decision, rcache, dr1_bc + dr1, dr0_bc + dr0)
    grads.update(g)
    grads.update(fuse_backward(model.intention, fcache, dc_pol + dc_rew + dc_coop))
    out.grads = grads
    return out


# ------------------------------------------------------------------ metrics


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict
    confusion: dict  # positive class = LC

    def to_dict(self):
        return asdict(self)


def _prf(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def metrics(labels, preds) -> EvalReport:
    y = np.asarray(labels).astype(int)
    p = np.asarray(preds).astype(int)
    tp = int(np.sum((y == 1) & (p == 1)))
    tn = int(np.sum((y == 0) & (p == 0)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = int(np.sum((y == 1) & (p == 0)))
    n = len(y)
    per = {}
    for name, (a, b, c), support in (("LC", (tp, fp, fn), tp + fn), ("LK", (tn, fn, fp), tn + fp)):
        pr, rc, f = _prf(a, b, c)
        per[name] = {"precision": pr, "recall": rc, "f1": f, "support": support}
    w = lambda key: sum(per[c][key] * per[c]["support"] for c in per) / n if n else 0.0  # noqa: E731
    return EvalReport((tp + tn) / n if n else 0.0, w("precision"), w("recall"), w("f1"), per,
                      {"TP": tp, "FP": fp, "FN": fn, "TN": tn})


def predict_proba(model: DecisionModel, features, styles, batch: int = 512):
    """P(LC) and the cooperation scores for raw (unstandardized) windows."""
    x = model.standardize(features)
    onehot = style_onehot(styles)
    probs, lcs, dcs, alpha, c = [], [], [], [], []
    for s in range(0, len(x), batch):
        xb = x[s:s + batch]
        pooled = xb.mean(axis=1)
        sc, _ = fuse(model.intention, pooled[:, :4], pooled[:, 4:], onehot[s:s + batch],
                     model.use_lcs, model.use_dcs)
        z, _ = policy_forward(model.decision, xb, sc.c_final)
        probs.append(expit(np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)))
        lcs.append(sc.lcs)
        dcs.append(sc.dcs)
        alpha.append(sc.alpha)
        c.append(sc.c_final)
    cat = lambda v: np.concatenate(v) if v else np.zeros(0)  # noqa: E731
    return cat(probs), {"lcs": cat(lcs), "dcs": cat(dcs), "alpha": cat(alpha), "c_final": cat(c)}


def evaluate(model: DecisionModel, samples) -> EvalReport:
    p, _ = predict_proba(model, samples.features, samples.style)
    return metrics(samples.action, (p >= 0.5).astype(int))


# ----------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: DecisionModel
    history: list = field(default_factory=list)
    best_f1: float = 0.0
    best_epoch: int = 0


def fit_standardizer(features):
    flat = np.asarray(features, float).reshape(-1, np.shape(features)[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    return mean, np.where(std > 1e-12, std, 1.0)


def train(train_set, val_set, cfg: TrainConfig = TrainConfig(), log=None) -> TrainResult:
    """Joint AdamW training; history holds one record per epoch."""
    if len(train_set) == 0:
        raise ConfigError("empty training set")
    rng = make_rng(cfg.seed)
    mean, std = fit_standardizer(train_set.features)
    model = DecisionModel(DecisionParams.init(rng, cfg.hidden), IntentionParams.init(rng), mean, std,
                          cfg.use_lcs, cfg.use_dcs)
    x = model.standardize(train_set.features)
    onehot = style_onehot(train_set.style)
    y = np.asarray(train_set.action).astype(int)
    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    params = model.arrays()
    result = TrainResult(model)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(y))
        losses, parts = [], {"bc": [], "irl": [], "coop": []}
        for b, s in enumerate(range(0, len(y), cfg.batch)):
            idx = order[s:s + cfg.batch]
            out = joint_loss(model, x[idx], onehot[idx], y[idx], cfg)
            if not np.isfinite(out.loss):
                raise NumericError(f"loss is not finite at epoch {epoch}, batch {b}")
            opt.step(params, out.grads)
            losses.append(out.loss)
            for k in parts:
                parts[k].append(out.parts[k])
        rec = {"epoch": epoch, "train_loss": float(np.mean(losses)),
               **{f"train_{k}": float(np.mean(v)) for k, v in parts.items()}}
        if len(val_set):
            vx = model.standardize(val_set.features)
            vo = joint_loss(model, vx, style_onehot(val_set.style), val_set.action, cfg, need_grads=False)
            rep = metrics(val_set.action, (vo.logits >= 0).astype(int))
            rec.update({"val_loss": vo.loss, "val_accuracy": rep.accuracy, "val_precision": rep.precision,
                        "val_recall": rep.recall, "val_f1": rep.f1, "val_lc_f1": rep.per_class["LC"]["f1"],
                        "lcs_mean": float(vo.scores.lcs.mean()), "dcs_mean": float(vo.scores.dcs.mean()),
                        "alpha_mean": float(vo.scores.alpha.mean())})
            if rep.f1 > result.best_f1:
                result.best_f1, result.best_epoch = rep.f1, epoch
        result.history.append(rec)
        if log is not None:
            log(rec)
    return result


ABLATION_ROWS = (
    ("BC", False, False, False),
    ("BC+IRL", True, False, False),
    ("BC+IRL+LCS", True, True, False),
    ("BC+IRL+DCS", True, False, True),
    ("BC+IRL+LCS+DCS", True, True, True),
)


def ablate(train_set, val_set, cfg: TrainConfig = TrainConfig()):
    """Train and evaluate the five module combinations; one dict per row."""
    from dataclasses import replace

    rows = []
    for name, irl, lcs, dcs in ABLATION_ROWS:
        res = train(train_set, val_set, replace(cfg, use_irl=irl, use_lcs=lcs, use_dcs=dcs))
        rep = evaluate(res.model, val_set)
        rows.append({"config": name, "bc": 1, "irl": int(irl), "lcs": int(lcs), "dcs": int(dcs),
                     "best_f1": res.best_f1, "accuracy": rep.accuracy, "precision": rep.precision,
                     "recall": rep.recall, "f1": rep.f1})
    return rows

"""Loss terms and their exact gradients.

The training objective is
    L_total = L_CE + alpha * R_text + beta * R_vision
where L_CE is cross-entropy over cosine logits, R_text penalizes the spread
of pairwise squared distances between transformed class texts around their
mean mu_t, and R_vision applies the same penalty to renormalized image
prototypes using the text-side mu_t.

Gradients are hand-derived reverse-mode for this fixed graph; by default
mu_t is treated as a function of the parameters (the gradient flows through
it), with a flag to freeze it per step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PromptState


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    reg_text: float
    reg_vision: float
    total: float
    mu_t: float


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """Negative log softmax probability of the true label."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ValueError(f"need >= 2 logits, got shape {z.shape}")
    if not (0 <= label < z.shape[0]):
        raise ValueError(f"label {label} out of range for {z.shape[0]} logits")
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite logits")
    m = float(np.max(z))
    lse = m + float(np.log(np.sum(np.exp(z - m))))
    return lse - float(z[label])


def _pairwise_sq(vectors: np.ndarray) -> np.ndarray:
    diff = vectors[:, None, :] - vectors[None, :, :]
    return np.sum(diff * diff, axis=-1)


def mean_pairwise_sq_distance(vectors: np.ndarray) -> float:
    """(2/(N^2-N)) * sum_{i<j} ||v_i - v_j||^2 (squared distances)."""
    arr = np.asarray(vectors, dtype=np.float64)
    n = arr.shape[0]
    if arr.ndim != 2 or n < 2:
        raise ValueError(f"need >= 2 vectors, got shape {arr.shape}")
    iu = np.triu_indices(n, k=1)
    return float(np.mean(_pairwise_sq(arr)[iu]))


def margin_regularizer(vectors: np.ndarray, mu: float) -> float:
    """(2/(N^2-N)) * sum_{i<j} (||v_i - v_j||^2 - mu)^2."""
    arr = np.asarray(vectors, dtype=np.float64)
    n = arr.shape[0]
    if arr.ndim != 2 or n < 2:
        raise ValueError(f"need >= 2 vectors, got shape {arr.shape}")
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    iu = np.triu_indices(n, k=1)
    dev = _pairwise_sq(arr)[iu] - mu
    return float(np.mean(dev * dev))


def _require_finite(value: np.ndarray | float, term: str) -> None:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value in term: {term}")


def _normalize_rows(raw: np.ndarray, term: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise FloatingPointError(f"zero-norm row in term: {term}")
    return raw / norms, norms


def _normalize_rows_backward(g_out: np.ndarray, out: np.ndarray,
                             norms: np.ndarray) -> np.ndarray:
    # out = raw / n  =>  dL/draw = (g - (g . out) out) / n, row-wise
    inner = np.sum(g_out * out, axis=1, keepdims=True)
    return (g_out - inner * out) / norms


def _pair_weight_backward(weights: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    # L = sum_{i<j} w_ij d_ij with d_ij = ||v_i - v_j||^2 and w symmetric
    # (zero diagonal)  =>  dL/dv_i = 2 (rowsum_i v_i - sum_j w_ij v_j)
    rowsum = np.sum(weights, axis=1, keepdims=True)
    return 2.0 * (rowsum * vectors - weights @ vectors)


def total_loss_and_grads(
    state: PromptState,
    support_vectors: np.ndarray,
    support_labels: np.ndarray,
    text_vecs: np.ndarray,
    alpha: float = 1.0,
    beta: float = 1.0,
    mu_constant: bool = False,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Full composite loss and its exact gradients w.r.t. all parameters.

    support_labels index into text_vecs rows; every class must own at least
    one support item. Gradients come back keyed like PromptState.params().
    """
    texts = np.asarray(text_vecs, dtype=np.float64)
    images = np.asarray(support_vectors, dtype=np.float64)
    labels = np.asarray(support_labels, dtype=np.int64)
    n_cls = texts.shape[0]
    n_sup = images.shape[0]
    if texts.ndim != 2 or n_cls < 2:
        raise ValueError(f"need >= 2 class text vectors, got shape {texts.shape}")
    if images.ndim != 2 or images.shape[1] != texts.shape[1]:
        raise ValueError(f"support shape {images.shape} incompatible with texts {texts.shape}")
    if labels.shape != (n_sup,):
        raise ValueError(f"labels shape {labels.shape} != ({n_sup},)")
    if np.any(labels < 0) or np.any(labels >= n_cls):
        raise ValueError("label out of range")
    counts = np.bincount(labels, minlength=n_cls)
    if np.any(counts == 0):
        empty = int(np.argmin(counts))
        raise ValueError(f"class {empty} has no support items")

    u_t, v_t, w_u, w_v = state.u_t, state.v_t, state.w_u, state.w_v
    tau = state.tau

    # forward: text branch
    a_t = texts @ v_t                      # (N, r)
    rt_raw = texts + a_t @ u_t.T           # (N, D)
    t_tilde, t_norms = _normalize_rows(rt_raw, "text transform")

    # forward: vision branch (factors derived from text factors)
    u_v = u_t @ w_u
    v_v = v_t @ w_v
    a_x = images @ v_v                     # (M, r)
    rx_raw = images + a_x @ u_v.T          # (M, D)
    x_tilde, x_norms = _normalize_rows(rx_raw, "vision transform")

    # cross-entropy over cosine logits, averaged over support items
    logits = (x_tilde @ t_tilde.T) / tau   # (M, N)
    _require_finite(logits, "logits")
    zmax = np.max(logits, axis=1, keepdims=True)
    expz = np.exp(logits - zmax)
    sumz = np.sum(expz, axis=1, keepdims=True)
    log_probs = (logits - zmax) - np.log(sumz)
    ce = float(-np.mean(log_probs[np.arange(n_sup), labels]))
    _require_finite(ce, "cross entropy")

    # class prototypes: renormalized means of transformed support rows
    protos_raw = np.zeros((n_cls, texts.shape[1]))
    np.add.at(protos_raw, labels, x_tilde)
    protos_raw /= counts[:, None]
    protos, proto_norms = _normalize_rows(protos_raw, "prototype")

    # margin regularizers share the text-side mu_t
    iu = np.triu_indices(n_cls, k=1)
    k_pairs = iu[0].size
    d_text = _pairwise_sq(t_tilde)
    d_proto = _pairwise_sq(protos)
    mu_t = float(np.mean(d_text[iu]))
    dev_text = d_text[iu] - mu_t
    dev_proto = d_proto[iu] - mu_t
    reg_text = float(np.mean(dev_text * dev_text))
    reg_vision = float(np.mean(dev_proto * dev_proto))
    _require_finite(mu_t, "mu_t")
    _require_finite(reg_text, "text regularizer")
    _require_finite(reg_vision, "vision regularizer")
    total = ce + alpha * reg_text + beta * reg_vision
    _require_finite(total, "total loss")

    # backward: cross-entropy -> transformed embeddings
    softmax = expz / sumz
    dz = softmax.copy()
    dz[np.arange(n_sup), labels] -= 1.0
    dz /= n_sup
    g_x_tilde = (dz @ t_tilde) / tau
    g_t_tilde = (dz.T @ x_tilde) / tau

    # backward: regularizers -> pairwise weights; mu_t couples the two sums
    # unless frozen (its own-mean term cancels analytically but is kept for
    # float exactness)
    w_text_pairs = (2.0 * alpha / k_pairs) * dev_text
    w_proto_pairs = (2.0 * beta / k_pairs) * dev_proto
    if not mu_constant:
        df_dmu = -(2.0 / k_pairs) * (alpha * float(np.sum(dev_text))
                                     + beta * float(np.sum(dev_proto)))
        w_text_pairs = w_text_pairs + df_dmu / k_pairs
    w_text = np.zeros_like(d_text)
    w_text[iu] = w_text_pairs
    w_text = w_text + w_text.T
    w_proto = np.zeros_like(d_proto)
    w_proto[iu] = w_proto_pairs
    w_proto = w_proto + w_proto.T
    g_t_tilde = g_t_tilde + _pair_weight_backward(w_text, t_tilde)
    g_protos = _pair_weight_backward(w_proto, protos)

    # backward: prototype renormalization and mean back to member rows
    g_protos_raw = _normalize_rows_backward(g_protos, protos, proto_norms)
    g_x_tilde = g_x_tilde + g_protos_raw[labels] / counts[labels, None]

    # backward: row normalization of both branches
    g_rt_raw = _normalize_rows_backward(g_t_tilde, t_tilde, t_norms)
    g_rx_raw = _normalize_rows_backward(g_x_tilde, x_tilde, x_norms)

    # backward: text low-rank map
    grad_u = g_rt_raw.T @ a_t              # (D, r)
    grad_v = texts.T @ (g_rt_raw @ u_t)    # (D, r)

    # backward: vision low-rank map through the couplings
    g_uv = g_rx_raw.T @ a_x                # (D, r)
    g_vv = images.T @ (g_rx_raw @ u_v)     # (D, r)
    grad_u = grad_u + g_uv @ w_u.T
    grad_v = grad_v + g_vv @ w_v.T
    grad_wu = u_t.T @ g_uv
    grad_wv = v_t.T @ g_vv

    grads = {"u_t": grad_u, "v_t": grad_v, "w_u": grad_wu, "w_v": grad_wv}
    for name, g in grads.items():
        _require_finite(g, f"gradient {name}")
    breakdown = LossBreakdown(ce=ce, reg_text=reg_text, reg_vision=reg_vision,
                              total=total, mu_t=mu_t)
    return breakdown, grads

"""Shared test utilities: unit-vector generation and the central
finite-difference gradient oracle."""
import numpy as np

from margintune.objective import total_loss_and_grads


def unit_rows(rng, n, dim):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_instance(seed, dims=(4, 8, 16), ways=(2, 3, 5), ranks=(1, 2)):
    """A random (state, support, labels, texts, alpha, beta) tuple with the
    parameter point pushed away from the near-identity init."""
    from margintune.model import init_prompt_state

    rng = np.random.default_rng(seed)
    dim = int(rng.choice(dims))
    way = int(rng.choice(ways))
    rank = int(min(rng.choice(ranks), dim))
    per_class = int(rng.integers(1, 4))
    texts = unit_rows(rng, way, dim)
    support = unit_rows(rng, way * per_class, dim)
    labels = np.repeat(np.arange(way), per_class)
    state = init_prompt_state(dim, rank, seed=int(rng.integers(0, 2**31)))
    state.u_t = state.u_t + 0.1 * rng.standard_normal((dim, rank))
    state.v_t = state.v_t + 0.1 * rng.standard_normal((dim, rank))
    state.w_u = state.w_u + 0.1 * rng.standard_normal((rank, rank))
    state.w_v = state.w_v + 0.1 * rng.standard_normal((rank, rank))
    alpha = float(rng.uniform(0.0, 2.0))
    beta = float(rng.uniform(0.0, 2.0))
    return state, support, labels, texts, alpha, beta


def finite_difference_grads(state, support, labels, texts, alpha, beta,
                            h=1e-5):
    """Central differences of the total loss w.r.t. every parameter entry."""
    fd = {}
    for key in ("u_t", "v_t", "w_u", "w_v"):
        base = getattr(state, key)
        out = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = base[idx]
            base[idx] = orig + h
            plus, _ = total_loss_and_grads(state, support, labels, texts,
                                           alpha, beta)
            base[idx] = orig - h
            minus, _ = total_loss_and_grads(state, support, labels, texts,
                                            alpha, beta)
            base[idx] = orig
            out[idx] = (plus.total - minus.total) / (2.0 * h)
            it.iternext()
        fd[key] = out
    return fd


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for key, a in analytic.items():
        f = numeric[key]
        scale = np.maximum.reduce([np.abs(a), np.abs(f), np.full_like(f, floor)])
        worst = max(worst, float((np.abs(a - f) / scale).max()))
    return worst

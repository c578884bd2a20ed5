"""Minimal recurrent dueling Q-network on numpy, with hand-written BPTT.

Topology: input (K+1) -> single LSTM layer (H units) -> parallel value
(H -> Vw -> 1) and advantage (H -> Aw -> K+1) branches -> dueling
aggregation into K+1 Q-values.

All parameter arrays carry a leading "bank" axis A so the N independent
per-agent networks of a run can be evaluated and trained with one set of
vectorized calls.  A bank of size 1 is an ordinary single network.

The training loss is the summed squared error between predicted and
target Q-values on the taken action only, backpropagated through time
over whole episodes.
"""

import copy
from dataclasses import dataclass

import numpy as np

PARAM_FIELDS = (
    "w_x", "w_h", "b",
    "w_v1", "b_v1", "w_v2", "b_v2",
    "w_a1", "b_a1", "w_a2", "b_a2",
)


class MultiplyCounter:
    """Accumulates the number of scalar multiplications executed."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


def _mm(x: np.ndarray, w: np.ndarray, counter: MultiplyCounter | None) -> np.ndarray:
    # batched matmul (A,B,I) @ (A,I,J) -> (A,B,J)
    if counter is not None:
        counter.add(x.shape[0] * x.shape[1] * x.shape[2] * w.shape[2])
    return x @ w


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class NetSpec:
    """Shape description of one Q-network."""

    n_channels: int
    hidden: int = 32
    value_width: int = 10
    adv_width: int = 10

    @property
    def input_size(self) -> int:
        return self.n_channels + 1


@dataclass
class QNetworkParams:
    """All weights of a bank of identical-shape networks."""

    spec: NetSpec
    w_x: np.ndarray   # (A, I, 4H)
    w_h: np.ndarray   # (A, H, 4H)
    b: np.ndarray     # (A, 4H)
    w_v1: np.ndarray  # (A, H, Vw)
    b_v1: np.ndarray  # (A, Vw)
    w_v2: np.ndarray  # (A, Vw, 1)
    b_v2: np.ndarray  # (A, 1)
    w_a1: np.ndarray  # (A, H, Aw)
    b_a1: np.ndarray  # (A, Aw)
    w_a2: np.ndarray  # (A, Aw, I)
    b_a2: np.ndarray  # (A, I)

    @property
    def n_nets(self) -> int:
        return self.w_x.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def check_finite(self):
        for name, arr in self.arrays().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter {name}")


def init_params(spec: NetSpec, n_nets: int, rng: np.random.Generator) -> QNetworkParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    i, h = spec.input_size, spec.hidden
    vw, aw = spec.value_width, spec.adv_width

    def w(fan_in, *shape):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, (n_nets, *shape))

    return QNetworkParams(
        spec=spec,
        w_x=w(i, i, 4 * h),
        w_h=w(h, h, 4 * h),
        b=np.zeros((n_nets, 4 * h)),
        w_v1=w(h, h, vw),
        b_v1=np.zeros((n_nets, vw)),
        w_v2=w(vw, vw, 1),
        b_v2=np.zeros((n_nets, 1)),
        w_a1=w(h, h, aw),
        b_a1=np.zeros((n_nets, aw)),
        w_a2=w(aw, aw, i),
        b_a2=np.zeros((n_nets, i)),
    )


def zeros_like_params(params: QNetworkParams) -> QNetworkParams:
    kw = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}
    return QNetworkParams(spec=params.spec, **kw)


def sync_params(source: QNetworkParams) -> QNetworkParams:
    """Deep copy; later updates to the source leave the copy untouched."""
    kw = {name: arr.copy() for name, arr in source.arrays().items()}
    return QNetworkParams(spec=source.spec, **kw)


def zero_state(params: QNetworkParams, batch: int) -> tuple[np.ndarray, np.ndarray]:
    """Fresh per-episode recurrent state: (hidden, cell), both zero."""
    a, h = params.n_nets, params.spec.hidden
    return np.zeros((a, batch, h)), np.zeros((a, batch, h))


def dueling_aggregate(v, adv):
    """Q-values from state value and advantages: q_a = v + adv_a - mean(adv)."""
    v = np.asarray(v, dtype=float)
    adv = np.asarray(adv, dtype=float)
    if v.ndim == adv.ndim - 1:
        v = np.expand_dims(v, -1)
    return v + adv - adv.mean(axis=-1, keepdims=True)


def _forward_step(params, x, state, counter=None, cache=None):
    """One LSTM + dueling-head step.  x: (A,B,I), state: ((A,B,H), (A,B,H))."""
    spec = params.spec
    a, bsz, isz = x.shape
    if isz != spec.input_size:
        raise ValueError(f"input size {isz} != {spec.input_size}")
    h_prev, c_prev = state
    if h_prev.shape != (a, bsz, spec.hidden):
        raise ValueError("lstm state shape mismatch")

    pre = _mm(x, params.w_x, counter) + _mm(h_prev, params.w_h, counter) + params.b[:, None, :]
    hh = spec.hidden
    gi = _sigmoid(pre[..., 0 * hh:1 * hh])
    gf = _sigmoid(pre[..., 1 * hh:2 * hh])
    gg = np.tanh(pre[..., 2 * hh:3 * hh])
    go = _sigmoid(pre[..., 3 * hh:4 * hh])
    c_new = gf * c_prev + gi * gg
    tc = np.tanh(c_new)
    h_new = go * tc
    if counter is not None:
        counter.add(3 * c_new.size)  # gate products f*c, i*g, o*tanh(c)

    hv = np.tanh(_mm(h_new, params.w_v1, counter) + params.b_v1[:, None, :])
    v = _mm(hv, params.w_v2, counter) + params.b_v2[:, None, :]
    ha = np.tanh(_mm(h_new, params.w_a1, counter) + params.b_a1[:, None, :])
    adv = _mm(ha, params.w_a2, counter) + params.b_a2[:, None, :]
    q = v + adv - adv.mean(axis=-1, keepdims=True)

    if cache is not None:
        cache.append(dict(x=x, h_prev=h_prev, c_prev=c_prev, gi=gi, gf=gf, gg=gg,
                          go=go, c_new=c_new, tc=tc, h_new=h_new, hv=hv, ha=ha, q=q))
    return q, (h_new, c_new)


def forward(params, x, state, counter=None):
    """Batched forward pass for one slot.

    x: (A, B, K+1); state: pair of (A, B, H).  Returns (q, new_state)
    with q of shape (A, B, K+1).  Deterministic: same inputs give
    bit-identical outputs.
    """
    return _forward_step(params, np.asarray(x, dtype=float), state, counter=counter)


def forward_single(params, x, state, counter=None):
    """Single-network, single-sample convenience wrapper (bank size 1)."""
    x = np.asarray(x, dtype=float)[None, None, :]
    h, c = state
    q, (h2, c2) = forward(params, x, (h[None, None, :], c[None, None, :]), counter)
    return q[0, 0], (h2[0, 0], c2[0, 0])


@dataclass
class TrainingBatch:
    """Episode sequences for BPTT.

    inputs: (T, A, B, K+1); actions: (T, A, B) indices of the taken
    action; targets: (T, A, B) scalar Q-targets for the taken action.
    B indexes episodes collected under the same parameters.
    """

    inputs: np.ndarray
    actions: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        t, a, bsz, _ = self.inputs.shape
        if self.actions.shape != (t, a, bsz) or self.targets.shape != (t, a, bsz):
            raise ValueError("batch streams misaligned")


def batch_loss(params: QNetworkParams, batch: TrainingBatch) -> np.ndarray:
    """Per-net summed squared error on the taken actions (the quantity
    whose gradient `backward` computes).  Used by tests as an oracle."""
    t_len, a, bsz, _ = batch.inputs.shape
    state = zero_state(params, bsz)
    loss = np.zeros(a)
    ai = np.arange(a)[:, None]
    bi = np.arange(bsz)[None, :]
    for t in range(t_len):
        q, state = _forward_step(params, batch.inputs[t], state)
        err = q[ai, bi, batch.actions[t]] - batch.targets[t]
        loss += (err ** 2).sum(axis=-1)
    return loss


def backward(params: QNetworkParams, batch: TrainingBatch, counter=None) -> QNetworkParams:
    """Gradients of the masked squared-error loss, backpropagated through
    time across the episode.  Returns a parameter-shaped container."""
    t_len, a, bsz, isz = batch.inputs.shape
    spec = params.spec
    hh = spec.hidden

    cache = []
    state = zero_state(params, bsz)
    for t in range(t_len):
        _, state = _forward_step(params, batch.inputs[t], state, counter=counter, cache=cache)

    grads = zeros_like_params(params)
    dh_next = np.zeros((a, bsz, hh))
    dc_next = np.zeros((a, bsz, hh))
    ai = np.arange(a)[:, None]
    bi = np.arange(bsz)[None, :]

    def count(n):
        if counter is not None:
            counter.add(n)

    for t in reversed(range(t_len)):
        cc = cache[t]
        q = cc["q"]
        dq = np.zeros_like(q)
        err = q[ai, bi, batch.actions[t]] - batch.targets[t]
        dq[ai, bi, batch.actions[t]] = 2.0 * err

        dv = dq.sum(axis=-1, keepdims=True)
        dadv = dq - dq.mean(axis=-1, keepdims=True)

        # advantage branch
        grads.w_a2 += np.einsum("abw,abi->awi", cc["ha"], dadv)
        count(cc["ha"].size * isz)
        grads.b_a2 += dadv.sum(axis=1)
        dha = _mm(dadv, params.w_a2.transpose(0, 2, 1), counter)
        dha_pre = dha * (1.0 - cc["ha"] ** 2)
        count(2 * dha.size)
        grads.w_a1 += np.einsum("abh,abw->ahw", cc["h_new"], dha_pre)
        count(cc["h_new"].size * spec.adv_width)
        grads.b_a1 += dha_pre.sum(axis=1)
        dh_adv = _mm(dha_pre, params.w_a1.transpose(0, 2, 1), counter)

        # value branch
        grads.w_v2 += np.einsum("abw,abi->awi", cc["hv"], dv)
        count(cc["hv"].size)
        grads.b_v2 += dv.sum(axis=1)
        dhv = _mm(dv, params.w_v2.transpose(0, 2, 1), counter)
        dhv_pre = dhv * (1.0 - cc["hv"] ** 2)
        count(2 * dhv.size)
        grads.w_v1 += np.einsum("abh,abw->ahw", cc["h_new"], dhv_pre)
        count(cc["h_new"].size * spec.value_width)
        grads.b_v1 += dhv_pre.sum(axis=1)
        dh_val = _mm(dhv_pre, params.w_v1.transpose(0, 2, 1), counter)

        dh = dh_adv + dh_val + dh_next
        dc = dc_next + dh * cc["go"] * (1.0 - cc["tc"] ** 2)
        do = dh * cc["tc"]
        di = dc * cc["gg"]
        dg = dc * cc["gi"]
        df = dc * cc["c_prev"]
        dc_next = dc * cc["gf"]
        count(8 * dh.size)

        dpre = np.concatenate(
            [
                di * cc["gi"] * (1.0 - cc["gi"]),
                df * cc["gf"] * (1.0 - cc["gf"]),
                dg * (1.0 - cc["gg"] ** 2),
                do * cc["go"] * (1.0 - cc["go"]),
            ],
            axis=-1,
        )
        count(9 * dh.size)
        grads.w_x += np.einsum("abi,abj->aij", cc["x"], dpre)
        count(cc["x"].size * 4 * hh)
        grads.w_h += np.einsum("abh,abj->ahj", cc["h_prev"], dpre)
        count(cc["h_prev"].size * 4 * hh)
        grads.b += dpre.sum(axis=1)
        dh_next = _mm(dpre, params.w_h.transpose(0, 2, 1), counter)

    return grads


def grad_norms(grads: QNetworkParams) -> np.ndarray:
    """Per-net global L2 norm across all parameter arrays."""
    a = grads.n_nets
    sq = np.zeros(a)
    for arr in grads.arrays().values():
        sq += (arr.reshape(a, -1) ** 2).sum(axis=1)
    return np.sqrt(sq)


def optimizer_step(
    params: QNetworkParams,
    grads: QNetworkParams,
    learning_rate: float,
    clip_threshold: float | None = None,
) -> QNetworkParams:
    """Plain gradient descent with optional per-net global-norm clipping."""
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    scale = np.ones(params.n_nets)
    if clip_threshold is not None:
        norms = grad_norms(grads)
        with np.errstate(divide="ignore"):
            scale = np.where(norms > clip_threshold, clip_threshold / norms, 1.0)
    kw = {}
    for name, arr in params.arrays().items():
        g = getattr(grads, name)
        sc = scale.reshape((params.n_nets,) + (1,) * (arr.ndim - 1))
        kw[name] = arr - learning_rate * sc * g
    return QNetworkParams(spec=params.spec, **kw)


def save_params(path, params: QNetworkParams, extra: dict | None = None):
    """Parameter snapshot: npz with a shape header; round-trips bit-exactly."""
    meta = np.array(
        [params.spec.n_channels, params.spec.hidden,
         params.spec.value_width, params.spec.adv_width],
        dtype=np.int64,
    )
    arrays = {f"param_{k}": v for k, v in params.arrays().items()}
    if extra:
        arrays.update({f"extra_{k}": v for k, v in extra.items()})
    np.savez(path, spec=meta, **arrays)


def load_params(path) -> tuple[QNetworkParams, dict]:
    with np.load(path) as data:
        meta = data["spec"]
        spec = NetSpec(
            n_channels=int(meta[0]), hidden=int(meta[1]),
            value_width=int(meta[2]), adv_width=int(meta[3]),
        )
        kw = {k[len("param_"):]: data[k] for k in data.files if k.startswith("param_")}
        extra = {k[len("extra_"):]: data[k] for k in data.files if k.startswith("extra_")}
    return QNetworkParams(spec=spec, **kw), extra


def copy_params(params: QNetworkParams) -> QNetworkParams:
    return copy.deepcopy(params)

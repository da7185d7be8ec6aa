"""Autoregressive LSTM with sinusoidal positional encoding for cushioning sequences.

The network maps a pre-catch ball state (position, velocity) to ``L`` container
twist commands. Token 1 is the input plus ``PE(0)``; token ``i`` is the previous
output plus ``PE(i-1)``. Each output is the affine head applied to the LSTM
hidden state after reading tokens ``1..i`` from a zero state.

Because the prefix of tokens never changes once emitted, re-reading it from a
zero state reproduces the hidden state of the previous step exactly, so the
roll-out below advances the cell one token at a time.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDim, InvalidTrack, TrainingDiverged

SEQ_LEN = 16
DIM = 6
HIDDEN = 64
MAGIC = b"PLSTM1"


def positional_encoding(l: int, k: int = DIM) -> np.ndarray:
    if k % 2:
        raise InvalidDim(f"embedding dimension must be even, got {k}")
    if l < 0:
        raise ValueError("position must be non-negative")
    i = np.arange(k // 2)
    angle = l / np.power(10000.0, 2 * i / k)
    pe = np.empty(k)
    pe[0::2] = np.sin(angle)
    pe[1::2] = np.cos(angle)
    return pe


def pe_table(length: int = SEQ_LEN, k: int = DIM) -> np.ndarray:
    return np.array([positional_encoding(l, k) for l in range(length)])


@dataclass
class PlstmParams:
    W: np.ndarray  # 4H x D, gate order (input, forget, cell, output)
    U: np.ndarray  # 4H x H
    b: np.ndarray  # 4H
    W_out: np.ndarray  # D x H
    b_out: np.ndarray  # D
    use_pe: bool = True

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def arrays(self):
        return [self.W, self.U, self.b, self.W_out, self.b_out]

    def copy(self) -> "PlstmParams":
        return PlstmParams(*(a.copy() for a in self.arrays()), use_pe=self.use_pe)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec) -> None:
        offset = 0
        for a in self.arrays():
            a[...] = np.reshape(vec[offset : offset + a.size], a.shape)
            offset += a.size

    @classmethod
    def init(cls, seed: int = 42, hidden: int = HIDDEN, dim: int = DIM, use_pe: bool = True) -> "PlstmParams":
        rng = np.random.default_rng(seed)
        k = 1.0 / math.sqrt(hidden)
        u = lambda *shape: rng.uniform(-k, k, size=shape)  # noqa: E731
        return cls(u(4 * hidden, dim), u(4 * hidden, hidden), u(4 * hidden), u(dim, hidden), u(dim), use_pe)

    @classmethod
    def zeros(cls, hidden: int = HIDDEN, dim: int = DIM, use_pe: bool = True) -> "PlstmParams":
        z = np.zeros
        return cls(z((4 * hidden, dim)), z((4 * hidden, hidden)), z(4 * hidden), z((dim, hidden)), z(dim), use_pe)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _rollout(params: PlstmParams, X: np.ndarray, length: int, keep: bool):
    B = X.shape[0]
    H = params.hidden
    pe = pe_table(length, params.dim) if params.use_pe else np.zeros((length, params.dim))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    token = X + pe[0]
    outs = np.empty((B, length, params.dim))
    cache = []
    for step in range(length):
        a = token @ params.W.T + h @ params.U.T + params.b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        out = h_new @ params.W_out.T + params.b_out
        outs[:, step] = out
        if keep:
            cache.append((token, h, c, i, f, g, o, tc, h_new))
        h, c = h_new, c_new
        if step + 1 < length:
            token = out + pe[step + 1]
    return outs, cache


def forward(params: PlstmParams, x, length: int = SEQ_LEN) -> np.ndarray:
    """Roll out ``length`` twist rows for one input (shape (6,)) or a batch (B, 6)."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    outs, _ = _rollout(params, np.atleast_2d(X), length, keep=False)
    return outs[0] if single else outs


def forward_reencode(params: PlstmParams, x, length: int = SEQ_LEN) -> np.ndarray:
    """Literal roll-out that re-reads the whole token prefix from a zero state each step."""
    H = params.hidden
    pe = pe_table(length, params.dim) if params.use_pe else np.zeros((length, params.dim))
    tokens = [np.asarray(x, dtype=float) + pe[0]]
    outs = []
    for step in range(length):
        h = np.zeros(H)
        c = np.zeros(H)
        for tok in tokens:
            a = params.W @ tok + params.U @ h + params.b
            i, f = _sigmoid(a[:H]), _sigmoid(a[H : 2 * H])
            g, o = np.tanh(a[2 * H : 3 * H]), _sigmoid(a[3 * H :])
            c = f * c + i * g
            h = o * np.tanh(c)
        out = params.W_out @ h + params.b_out
        outs.append(out)
        if step + 1 < length:
            tokens.append(out + pe[step + 1])
    return np.array(outs)


def loss_and_grad(params: PlstmParams, X, Y):
    """Mean squared error of the free-running roll-out and its exact gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1, params.dim)
    L = Y.shape[1]
    outs, cache = _rollout(params, X, L, keep=True)
    diff = outs - Y
    loss = float(np.mean(diff * diff))
    dout_all = 2.0 * diff / diff.size

    H = params.hidden
    gW, gU, gb = np.zeros_like(params.W), np.zeros_like(params.U), np.zeros_like(params.b)
    gWo, gbo = np.zeros_like(params.W_out), np.zeros_like(params.b_out)
    dh_next = np.zeros((len(X), H))
    dc_next = np.zeros((len(X), H))
    dtoken_next = None
    for step in range(L - 1, -1, -1):
        token, h_prev, c_prev, i, f, g, o, tc, h = cache[step]
        dout = dout_all[:, step]
        if dtoken_next is not None:
            dout = dout + dtoken_next
        gWo += dout.T @ h
        gbo += dout.sum(axis=0)
        dh = dout @ params.W_out + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        da = np.hstack([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)])
        gW += da.T @ token
        gU += da.T @ h_prev
        gb += da.sum(axis=0)
        dh_next = da @ params.U
        dtoken_next = da @ params.W
    grads = PlstmParams(gW, gU, gb, gWo, gbo, params.use_pe)
    return loss, grads


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: int = HIDDEN
    use_pe: bool = True
    min_demos: int = 100


class Adam:
    def __init__(self, size: int, lr: float, beta1: float, beta2: float, eps: float):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def stack_demos(demos):
    X = np.array([d.pre_catch for d in demos])
    Y = np.array([d.label for d in demos])
    return X, Y


def train(demos, epochs: int, seed: int = 42, cfg: TrainConfig | None = None, enforce_min: bool = True):
    """Mini-batch Adam on the free-running roll-out loss.

    Returns ``(params, loss_curve)`` where the curve holds the mean batch loss
    of every epoch. ``enforce_min`` guards the minimum dataset size; tiny
    overfit runs switch it off.
    """
    cfg = cfg or TrainConfig()
    if enforce_min and len(demos) < cfg.min_demos:
        raise ValueError(f"need at least {cfg.min_demos} demonstrations, got {len(demos)}")
    X, Y = stack_demos(demos)
    rng = np.random.default_rng(seed)
    params = PlstmParams.init(seed, cfg.hidden, X.shape[1], cfg.use_pe)
    theta = params.flat()
    opt = Adam(theta.size, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(X))
        losses, weights = [], []
        for start in range(0, len(X), cfg.batch_size):
            idx = np.sort(order[start : start + cfg.batch_size]) if cfg.batch_size >= len(X) else order[
                start : start + cfg.batch_size
            ]
            params.set_flat(theta)
            # a non-finite loss is reported below; silence the numpy noise it drags along
            with np.errstate(invalid="ignore", over="ignore"):
                loss, grads = loss_and_grad(params, X[idx], Y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            theta = opt.step(theta, grads.flat())
            losses.append(loss)
            weights.append(len(idx))
        curve.append(float(np.average(losses, weights=weights)))
    params.set_flat(theta)
    return params, curve


def mse(params: PlstmParams, demos) -> float:
    X, Y = stack_demos(demos)
    return float(np.mean((forward(params, X, Y.shape[1]) - Y) ** 2))


def save_params(params: PlstmParams, path) -> None:
    header = MAGIC + struct.pack("<4I", params.dim, params.hidden, params.W_out.shape[0], int(params.use_pe))
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    with open(path, "wb") as fh:
        fh.write(header + body)


def load_params(path) -> PlstmParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a parameter file (bad magic)")
    dim, hidden, out_dim, use_pe = struct.unpack_from("<4I", blob, len(MAGIC))
    params = PlstmParams.zeros(hidden, dim, bool(use_pe))
    if out_dim != dim:
        raise ValueError(f"{path}: output dimension {out_dim} differs from input dimension {dim}")
    data = np.frombuffer(blob, dtype="<f8", offset=len(MAGIC) + 16)
    if data.size != params.flat().size:
        raise ValueError(f"{path}: expected {params.flat().size} values, found {data.size}")
    params.set_flat(data)
    return params


# --- demonstrations -----------------------------------------------------------


@dataclass
class Demonstration:
    pre_catch: np.ndarray  # (p, v) at the catch moment
    label: np.ndarray  # SEQ_LEN x 6 container twists

    def to_json(self) -> str:
        return json.dumps(
            {"p": self.pre_catch[:3].tolist(), "v": self.pre_catch[3:].tolist(), "label": self.label.tolist()}
        )

    @classmethod
    def from_json(cls, line: str) -> "Demonstration":
        obj = json.loads(line)
        return cls(np.array(obj["p"] + obj["v"], dtype=float), np.array(obj["label"], dtype=float))


@dataclass
class DemoConfig:
    radius: float = 1.5
    z_range: tuple = (0.5, 1.5)
    speed_range: tuple = (2.0, 6.0)
    # elevation of the velocity direction, degrees; negative is downward
    elevation_range: tuple = (-60.0, 10.0)
    tau_range: tuple = (0.1, 0.3)
    drift_sigma: float = 0.02
    dt: float = 0.02
    length: int = SEQ_LEN


def decay_label(v, tau: float, dt: float = 0.02, length: int = SEQ_LEN) -> np.ndarray:
    """Exponential cushioning profile: row j is v * exp(-j dt / tau), j = 1..length."""
    j = np.arange(1, length + 1)
    label = np.zeros((length, DIM))
    label[:, :3] = np.outer(np.exp(-j * dt / tau), v)
    return label


def generate_demos(count: int, seed: int, cfg: DemoConfig | None = None):
    """Synthetic cushioning demonstrations from an exponential-decay model."""
    cfg = cfg or DemoConfig()
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    demos = []
    for _ in range(count):
        r = cfg.radius * math.sqrt(rng.uniform())
        ang = rng.uniform(-math.pi, math.pi)
        p = np.array([r * math.cos(ang), r * math.sin(ang), rng.uniform(*cfg.z_range)])
        speed = rng.uniform(*cfg.speed_range)
        az = rng.uniform(-math.pi, math.pi)
        el = math.radians(rng.uniform(*cfg.elevation_range))
        direction = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        v = speed * direction
        tau = rng.uniform(*cfg.tau_range)
        label = decay_label(v, tau, cfg.dt, cfg.length)
        noise = rng.normal(0.0, cfg.drift_sigma, size=(cfg.length, 3))
        noise -= np.outer(noise @ direction, direction)
        label[:, :3] += noise
        demos.append(Demonstration(np.concatenate([p, v]), label))
    return demos


def write_demos(demos, path) -> None:
    with open(path, "w") as fh:
        for d in demos:
            fh.write(d.to_json() + "\n")


def read_demos(path):
    with open(path) as fh:
        return [Demonstration.from_json(line) for line in fh if line.strip()]


def dataset_hash(demos) -> str:
    buf = io.StringIO()
    for d in demos:
        buf.write(d.to_json() + "\n")
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def detect_catch_index(velocities) -> int:
    """Index k maximising the axis-averaged |v[k+1] - v[k]|; earliest on ties."""
    v = np.asarray(velocities, dtype=float)
    if v.ndim != 2 or len(v) < 3:
        raise InvalidTrack("need at least 3 velocity samples")
    variation = np.mean(np.abs(np.diff(v, axis=0)), axis=1)
    return int(np.argmax(variation))


def segment_track(times, positions, velocities, length: int = SEQ_LEN) -> Demonstration:
    """Split a recorded catch into the pre-catch state and the post-catch label.

    Post-catch velocities are truncated, or padded with zeros (at rest), to
    ``length`` rows.
    """
    del times
    p = np.asarray(positions, dtype=float)
    v = np.asarray(velocities, dtype=float)
    k = detect_catch_index(v)
    post = v[k + 1 : k + 1 + length]
    label = np.zeros((length, DIM))
    label[: len(post), :3] = post
    return Demonstration(np.concatenate([p[k], v[k]]), label)

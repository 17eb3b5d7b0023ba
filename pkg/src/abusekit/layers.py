"""Hand-differentiated neural layers, loss, and optimizer on numpy arrays.

Every layer implements an explicit forward/backward pair instead of relying
on an autodiff graph, so each backward rule is checked against central
finite differences in the test suite.  Training runs in float32; the same
code paths run in float64 for gradient verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigurationError, DataIntegrityError, ShapeError

__all__ = [
    "AdamConfig",
    "BiLstm",
    "Conv1D",
    "Dense",
    "Dropout",
    "DropoutMask",
    "EmbeddingLookup",
    "GlobalAveragePool1D",
    "Lstm",
    "LstmCellParams",
    "Module",
    "Parameter",
    "SpatialDropout1D",
    "adam_step",
    "glorot_uniform",
    "lstm_cell_forward",
    "make_dropout_mask",
    "orthogonal",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
]


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never receives a large positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def glorot_uniform(shape: tuple[int, ...], fan_in: int, fan_out: int,
                   rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def orthogonal(rows: int, cols: int, rng: np.random.Generator,
               dtype=np.float32) -> np.ndarray:
    """Orthogonal init via QR of a Gaussian draw, sign-corrected so the
    decomposition is unique."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q[:rows, :cols].astype(dtype)


@dataclass
class Parameter:
    """Trainable array with its gradient and Adam moment buffers."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = field(default=0, init=False)
    name: str = ""

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7


def adam_step(param: Parameter, config: AdamConfig = AdamConfig()) -> None:
    """One bias-corrected Adam update; consumes and zeroes the gradient."""
    g = param.grad
    t = param.step_count + 1
    param.adam_m = config.beta1 * param.adam_m + (1.0 - config.beta1) * g
    param.adam_v = config.beta2 * param.adam_v + (1.0 - config.beta2) * (g * g)
    m_hat = param.adam_m / (1.0 - config.beta1 ** t)
    v_hat = param.adam_v / (1.0 - config.beta2 ** t)
    param.value -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
    param.step_count = t
    param.zero_grad()


@dataclass
class DropoutMask:
    """Inverted-dropout keep mask: entries are 0 or 1/(1-rate)."""

    keep: np.ndarray
    rate: float
    variational: bool = False


def make_dropout_mask(shape: tuple[int, ...], rate: float, rng: np.random.Generator,
                      dtype=np.float32, variational: bool = False) -> DropoutMask:
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate {rate} outside [0, 1)")
    if rate == 0.0:
        keep = np.ones(shape, dtype=dtype)
    else:
        keep = (rng.random(shape) >= rate).astype(dtype) / (1.0 - rate)
    return DropoutMask(keep=keep, rate=rate, variational=variational)


_ACTIVATIONS = ("relu", "linear", "tanh")


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activate_backward(name: str, grad: np.ndarray, z: np.ndarray,
                       out: np.ndarray) -> np.ndarray:
    if name == "relu":
        return grad * (z > 0)
    if name == "tanh":
        return grad * (1.0 - out * out)
    return grad


class Module:
    """Base for layers: forward caches what backward needs."""

    def parameters(self) -> list[Parameter]:
        return []

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class EmbeddingLookup(Module):
    """Frozen row lookup. No gradient ever reaches the table."""

    def __init__(self, matrix: np.ndarray, dtype=np.float32):
        self.matrix = np.asarray(matrix, dtype=dtype)

    def forward(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices)
        if indices.size and (indices.min() < 0 or indices.max() >= self.matrix.shape[0]):
            raise BoundsError(
                f"embedding index outside [0, {self.matrix.shape[0]})")
        return self.matrix[indices]

    def backward(self, grad_out: np.ndarray) -> None:
        # Indices are not differentiable and the table is non-trainable.
        return None


class SpatialDropout1D(Module):
    """Drops whole channels: one Bernoulli draw per (batch, channel) pair,
    applied across every timestep."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate
        self._mask = None

    def forward(self, x: np.ndarray, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        if not train_mode or self.rate == 0.0:
            self._mask = None
            return x
        batch, _, channels = x.shape
        mask = make_dropout_mask((batch, 1, channels), self.rate, rng, dtype=x.dtype)
        self._mask = mask.keep
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class Dropout(Module):
    """Standard elementwise inverted dropout."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate
        self._mask = None

    def forward(self, x: np.ndarray, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        if not train_mode or self.rate == 0.0:
            self._mask = None
            return x
        mask = make_dropout_mask(x.shape, self.rate, rng, dtype=x.dtype)
        self._mask = mask.keep
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class Conv1D(Module):
    """Valid cross-correlation over the time axis.

    Kernels have shape (k, C_in, C_out); the forward pass is a sum of k
    shifted matrix products rather than an explicit sliding window, which
    keeps everything in BLAS calls.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, activation: str = "relu",
                 dtype=np.float32):
        if activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.kernel_size = kernel_size
        self.activation = activation
        fan_in = kernel_size * in_channels
        fan_out = kernel_size * out_channels
        self.kernels = Parameter(
            glorot_uniform((kernel_size, in_channels, out_channels),
                           fan_in, fan_out, rng, dtype),
            name="conv.kernels")
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), name="conv.bias")
        self._cache = None

    def parameters(self) -> list[Parameter]:
        return [self.kernels, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        _, length, _ = x.shape
        k = self.kernel_size
        if length < k:
            raise ShapeError(f"sequence length {length} shorter than kernel {k}")
        out_len = length - k + 1
        z = np.tile(self.bias.value, (x.shape[0], out_len, 1))
        for dt in range(k):
            z += x[:, dt:dt + out_len, :] @ self.kernels.value[dt]
        out = _activate(self.activation, z)
        self._cache = (x, z, out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, z, out = self._cache
        if grad_out.shape != z.shape:
            raise ShapeError(f"gradient shape {grad_out.shape} != output {z.shape}")
        dz = _activate_backward(self.activation, grad_out, z, out)
        batch, out_len, out_ch = dz.shape
        k = self.kernel_size
        self.bias.grad += dz.sum(axis=(0, 1))
        dz_flat = dz.reshape(batch * out_len, out_ch)
        dx = np.zeros_like(x)
        for dt in range(k):
            x_slice = x[:, dt:dt + out_len, :].reshape(batch * out_len, -1)
            self.kernels.grad[dt] += x_slice.T @ dz_flat
            dx[:, dt:dt + out_len, :] += dz @ self.kernels.value[dt].T
        return dx


class Dense(Module):
    """Affine map on the trailing axis; broadcasts over any leading dims."""

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, activation: str = "relu",
                 dtype=np.float32):
        if activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.activation = activation
        self.weight = Parameter(
            glorot_uniform((in_features, out_features), in_features, out_features,
                           rng, dtype),
            name="dense.weight")
        self.bias = Parameter(np.zeros(out_features, dtype=dtype), name="dense.bias")
        self._cache = None

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.weight.value.shape[0]:
            raise ShapeError(
                f"input features {x.shape[-1]} != weight rows {self.weight.value.shape[0]}")
        z = x @ self.weight.value + self.bias.value
        out = _activate(self.activation, z)
        self._cache = (x, z, out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, z, out = self._cache
        dz = _activate_backward(self.activation, grad_out, z, out)
        flat_in = x.reshape(-1, x.shape[-1])
        flat_dz = dz.reshape(-1, dz.shape[-1])
        self.weight.grad += flat_in.T @ flat_dz
        self.bias.grad += flat_dz.sum(axis=0)
        return dz @ self.weight.value.T


class GlobalAveragePool1D(Module):
    """Mean over the time axis: B x L x C -> B x C."""

    def __init__(self):
        self._length = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._length = x.shape[1]
        return x.mean(axis=1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        length = self._length
        return np.repeat(grad_out[:, None, :] / length, length, axis=1)


@dataclass
class LstmCellParams:
    """Raw gate parameters, gate order i, f, g, o along the first axis.

    W: (4H, D_in) input weights, U: (4H, H) recurrent weights, b: (4H,).
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]


def lstm_cell_forward(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                      params: LstmCellParams,
                      rec_mask: np.ndarray | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Single LSTM step with the standard forget-gate formulation.

    rec_mask, when given, multiplies h_prev before the gate projections
    (variational recurrent dropout).
    """
    hidden = params.hidden_size
    hm = h_prev if rec_mask is None else h_prev * rec_mask
    z = x_t @ params.W.T + hm @ params.U.T + params.b
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden:2 * hidden])
    g = np.tanh(z[:, 2 * hidden:3 * hidden])
    o = sigmoid(z[:, 3 * hidden:])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def _init_lstm_params(input_dim: int, hidden: int, rng: np.random.Generator,
                      dtype) -> LstmCellParams:
    # Glorot per gate block for W, orthogonal per gate block for U; forget
    # gate bias starts at 1 so memory persists early in training.
    W = np.concatenate(
        [glorot_uniform((hidden, input_dim), input_dim, hidden, rng, dtype)
         for _ in range(4)], axis=0)
    U = np.concatenate(
        [orthogonal(hidden, hidden, rng, dtype) for _ in range(4)], axis=0)
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0
    return LstmCellParams(W=W, U=U, b=b)


class Lstm(Module):
    """Unidirectional LSTM emitting every timestep (B x L x H).

    Input dropout and recurrent dropout both use one mask per sequence,
    reused at every timestep.
    """

    def __init__(self, input_dim: int, hidden_size: int, rng: np.random.Generator,
                 dropout: float = 0.0, recurrent_dropout: float = 0.0,
                 dtype=np.float32):
        init = _init_lstm_params(input_dim, hidden_size, rng, dtype)
        self.W = Parameter(init.W, name="lstm.W")
        self.U = Parameter(init.U, name="lstm.U")
        self.b = Parameter(init.b, name="lstm.b")
        self.hidden_size = hidden_size
        self.dropout = dropout
        self.recurrent_dropout = recurrent_dropout
        self._cache = None

    def parameters(self) -> list[Parameter]:
        return [self.W, self.U, self.b]

    def forward(self, x: np.ndarray, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        batch, length, dim = x.shape
        hidden = self.hidden_size
        dtype = x.dtype

        in_mask = rec_mask = None
        if train_mode and self.dropout > 0.0:
            in_mask = make_dropout_mask((batch, dim), self.dropout, rng,
                                        dtype=dtype, variational=True).keep
        if train_mode and self.recurrent_dropout > 0.0:
            rec_mask = make_dropout_mask((batch, hidden), self.recurrent_dropout,
                                         rng, dtype=dtype, variational=True).keep

        xm = x if in_mask is None else x * in_mask[:, None, :]
        # Input projections for the whole sequence in one GEMM.
        zx = xm @ self.W.value.T + self.b.value

        gates_i = np.empty((batch, length, hidden), dtype=dtype)
        gates_f = np.empty_like(gates_i)
        gates_g = np.empty_like(gates_i)
        gates_o = np.empty_like(gates_i)
        c_prevs = np.empty_like(gates_i)
        tanh_cs = np.empty_like(gates_i)
        h_masked = np.empty_like(gates_i)
        out = np.empty_like(gates_i)

        h = np.zeros((batch, hidden), dtype=dtype)
        c = np.zeros((batch, hidden), dtype=dtype)
        U_T = self.U.value.T
        for t in range(length):
            hm = h if rec_mask is None else h * rec_mask
            z = zx[:, t] + hm @ U_T
            i = sigmoid(z[:, :hidden])
            f = sigmoid(z[:, hidden:2 * hidden])
            g = np.tanh(z[:, 2 * hidden:3 * hidden])
            o = sigmoid(z[:, 3 * hidden:])
            c_prevs[:, t] = c
            h_masked[:, t] = hm
            c = f * c + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            gates_i[:, t] = i
            gates_f[:, t] = f
            gates_g[:, t] = g
            gates_o[:, t] = o
            tanh_cs[:, t] = tanh_c
            out[:, t] = h

        self._cache = (xm, in_mask, rec_mask, gates_i, gates_f, gates_g,
                       gates_o, c_prevs, tanh_cs, h_masked)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        (xm, in_mask, rec_mask, gates_i, gates_f, gates_g, gates_o,
         c_prevs, tanh_cs, h_masked) = self._cache
        batch, length, hidden = grad_out.shape
        dtype = grad_out.dtype

        d_z = np.empty((batch, length, 4 * hidden), dtype=dtype)
        dh_carry = np.zeros((batch, hidden), dtype=dtype)
        dc_carry = np.zeros((batch, hidden), dtype=dtype)
        U = self.U.value
        for t in range(length - 1, -1, -1):
            i, f = gates_i[:, t], gates_f[:, t]
            g, o = gates_g[:, t], gates_o[:, t]
            tanh_c = tanh_cs[:, t]
            dh = grad_out[:, t] + dh_carry
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_carry
            df = dc * c_prevs[:, t]
            di = dc * g
            dg = dc * i
            d_z[:, t, :hidden] = di * i * (1.0 - i)
            d_z[:, t, hidden:2 * hidden] = df * f * (1.0 - f)
            d_z[:, t, 2 * hidden:3 * hidden] = dg * (1.0 - g * g)
            d_z[:, t, 3 * hidden:] = do * o * (1.0 - o)
            dhm = d_z[:, t] @ U
            dh_carry = dhm if rec_mask is None else dhm * rec_mask
            dc_carry = dc * f

        dz_flat = d_z.reshape(batch * length, 4 * hidden)
        self.W.grad += dz_flat.T @ xm.reshape(batch * length, -1)
        self.U.grad += dz_flat.T @ h_masked.reshape(batch * length, hidden)
        self.b.grad += dz_flat.sum(axis=0)
        dxm = d_z @ self.W.value
        return dxm if in_mask is None else dxm * in_mask[:, None, :]


class BiLstm(Module):
    """Two LSTMs over opposite time directions, outputs concatenated.

    Output is B x L x 2H with the forward direction in channels [:H] and
    the backward direction in channels [H:].
    """

    def __init__(self, input_dim: int, hidden_size: int, rng: np.random.Generator,
                 dropout: float = 0.1, recurrent_dropout: float = 0.1,
                 dtype=np.float32):
        self.forward_cell = Lstm(input_dim, hidden_size, rng, dropout,
                                 recurrent_dropout, dtype)
        self.backward_cell = Lstm(input_dim, hidden_size, rng, dropout,
                                  recurrent_dropout, dtype)
        self.hidden_size = hidden_size

    def parameters(self) -> list[Parameter]:
        return self.forward_cell.parameters() + self.backward_cell.parameters()

    def forward(self, x: np.ndarray, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        out_f = self.forward_cell.forward(x, train_mode, rng)
        rev = np.ascontiguousarray(x[:, ::-1, :])
        out_b = self.backward_cell.forward(rev, train_mode, rng)[:, ::-1, :]
        return np.concatenate([out_f, out_b], axis=2)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        hidden = self.hidden_size
        dx_f = self.forward_cell.backward(grad_out[:, :, :hidden])
        rev_grad = np.ascontiguousarray(grad_out[:, ::-1, hidden:])
        dx_b = self.backward_cell.backward(rev_grad)[:, ::-1, :]
        return dx_f + dx_b


def softmax_cross_entropy(logits: np.ndarray,
                          onehot: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy and its gradient w.r.t. logits.

    Uses the log-sum-exp form throughout; the gradient is (p - y) / B.
    """
    if logits.shape != onehot.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {onehot.shape}")
    if np.any(onehot < 0) or not np.allclose(onehot.sum(axis=1), 1.0, atol=1e-6):
        raise DataIntegrityError("target rows must be distributions summing to 1")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-(onehot * log_p).sum(axis=1).mean())
    grad = (np.exp(log_p) - onehot) / logits.shape[0]
    return loss, grad

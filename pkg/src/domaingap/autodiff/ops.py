"""Differentiable operations.

Shapes must match exactly for tensor-tensor arithmetic; the only implicit
broadcast is tensor-by-python-scalar.  Per-channel bias and everything else
that would need broadcasting has its own op so each gradient rule stays small.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ClassRangeError, NumericError, ShapeError
from .tensor import Tensor, make_result


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _check_finite(x: Tensor, what: str) -> None:
    if not np.isfinite(x.data).all():
        raise NumericError(f"{what}: input contains non-finite values")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return make_result(a.data + b.data, (a, b), "add", lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return make_result(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b), "mul", lambda g: (g * bd, g * ad))


def scale(a: Tensor, k: float) -> Tensor:
    return make_result(a.data * k, (a,), "scale", lambda g: (g * k,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return make_result(a.data + c, (a,), "add_scalar", lambda g: (g,))


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), "neg", lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return make_result(ad * ad, (a,), "square", lambda g: (2.0 * ad * g,))


def absolute(a: Tensor) -> Tensor:
    ad = a.data
    return make_result(np.abs(ad), (a,), "abs", lambda g: (np.sign(ad) * g,))


def total(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    shape = a.shape
    return make_result(
        np.array(a.data.sum()), (a,), "sum", lambda g: (np.full(shape, float(g)),)
    )


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return make_result(
        np.array(a.data.mean()), (a,), "mean", lambda g: (np.full(shape, float(g) / n),)
    )


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    out = a.data.reshape(shape)
    return make_result(out, (a,), "reshape", lambda g: (g.reshape(old),))


def concat_batch(parts: list[Tensor]) -> Tensor:
    """Stack tensors of identical shape ``(n_i, ...)`` along axis 0."""
    tail = parts[0].shape[1:]
    for p in parts:
        if p.shape[1:] != tail:
            raise ShapeError("concat_batch: trailing shapes differ")
    sizes = np.cumsum([p.shape[0] for p in parts])[:-1]
    out = np.concatenate([p.data for p in parts], axis=0)
    return make_result(out, parts, "concat", lambda g: tuple(np.split(g, sizes, axis=0)))


# ---------------------------------------------------------------------------
# convolution family


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    # columns laid out [N, C*kh*kw, Ho*Wo] so a left matmul by the kernel yields NCHW
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3))
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x[N,C,H,W]`` with ``kernel[K,C,kh,kw]`` (zero padding)."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    n, c, h, w = x.shape
    k, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {kc}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError("conv2d: kernel larger than padded input")

    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = kernel.data.reshape(k, -1)
    out = (wmat @ cols).reshape(n, k, ho, wo)
    kdata = kernel.data
    pshape = xp.shape

    def back(g):
        g2 = g.reshape(n, k, ho * wo)
        gk = None
        if kernel.requires_grad:
            gk = (g2 @ cols.transpose(0, 2, 1)).sum(axis=0).reshape(kdata.shape)
        gx = None
        if x.requires_grad:
            if stride == 1 and k < c:
                dxp = _input_grad_transposed(g, kdata, pshape)
            else:
                dxp = _input_grad_scatter(wmat.T @ g2, pshape, (n, c, kh, kw, ho, wo), stride)
            gx = dxp[:, :, p : p + h, p : p + w] if p else dxp
        return gx, gk

    return make_result(out, (x, kernel), "conv2d", back)


def _input_grad_scatter(dcols, pshape, dims, stride):
    # col2im: add every kernel tap's column gradient back onto its input window
    n, c, kh, kw, ho, wo = dims
    dcols = dcols.reshape(dims)
    dxp = np.zeros(pshape)
    he, we = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + he : stride, j : j + we : stride] += dcols[:, :, i, j]
    return dxp


def _input_grad_transposed(g, kdata, pshape):
    # stride 1 only: full correlation of the output gradient with the flipped kernel
    k, c, kh, kw = kdata.shape
    n = g.shape[0]
    gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    wflip = kdata[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, -1)
    cols, fh, fw = _im2col(gp, kh, kw, 1)
    full = (wflip @ cols).reshape(n, c, fh, fw)
    if (fh, fw) == pshape[2:]:
        return full
    dxp = np.zeros(pshape)
    hh, ww = min(fh, pshape[2]), min(fw, pshape[3])
    dxp[:, :, :hh, :ww] = full[:, :, :hh, :ww]
    return dxp


def channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add ``bias[C]`` to every position of channel ``c`` of ``x[N,C,H,W]``."""
    if x.ndim != 4 or bias.shape != (x.shape[1],):
        raise ShapeError(f"channel_bias: bias shape {bias.shape} vs input {x.shape}")
    out = x.data + bias.data[None, :, None, None]
    return make_result(out, (x, bias), "channel_bias", lambda g: (g, g.sum(axis=(0, 2, 3))))


def _reflect_matrix(n: int, pad: int) -> np.ndarray:
    # row i of the result selects the source index of padded position i
    idx = np.pad(np.arange(n), pad, mode="reflect")
    m = np.zeros((n + 2 * pad, n))
    m[np.arange(idx.size), idx] = 1.0
    return m


def reflect_pad(x: Tensor, pad: int) -> Tensor:
    """Mirror-pad both spatial axes of ``x[N,C,H,W]`` by ``pad`` (edge not repeated)."""
    if x.ndim != 4:
        raise ShapeError("reflect_pad expects a 4-d input")
    n, c, h, w = x.shape
    if pad < 0 or pad >= min(h, w):
        raise ShapeError(f"reflect_pad: pad {pad} needs to be smaller than {min(h, w)}")
    if pad == 0:
        return x
    out = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect")
    rows, cols = _reflect_matrix(h, pad), _reflect_matrix(w, pad)
    return make_result(out, (x,), "reflect_pad", lambda g: (rows.T @ g @ cols,))


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour upsampling by 2 in both spatial axes."""
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    n, c, h, w = x.shape

    def back(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_result(out, (x,), "upsample2x", back)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each (sample, channel) plane to zero mean and unit variance."""
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def back(g):
        gm = g.mean(axis=(2, 3), keepdims=True)
        gxm = (g * xhat).mean(axis=(2, 3), keepdims=True)
        return (inv * (g - gm - xhat * gxm),)

    return make_result(xhat, (x,), "instance_norm", back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return make_result(x.data * mask, (x,), "dropout", lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# activations


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError("leaky_relu slope must lie in (0, 1)")
    _check_finite(x, "leaky_relu")
    factor = np.where(x.data > 0, 1.0, slope)
    return make_result(x.data * factor, (x,), "leaky_relu", lambda g: (g * factor,))


def relu(x: Tensor) -> Tensor:
    _check_finite(x, "relu")
    mask = (x.data > 0).astype(np.float64)
    return make_result(x.data * mask, (x,), "relu", lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    _check_finite(x, "tanh")
    y = np.tanh(x.data)
    return make_result(y, (x,), "tanh", lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    _check_finite(x, "sigmoid")
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_result(y, (x,), "sigmoid", lambda g: (g * y * (1.0 - y),))


def softmax_channel(x: Tensor) -> Tensor:
    """Softmax over axis 1 (the class axis of ``[N,L,H,W]`` logits)."""
    _check_finite(x, "softmax")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return make_result(y, (x,), "softmax", back)


_ACTIVATIONS = {
    "leaky_relu": leaky_relu,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax_over_channel": softmax_channel,
    "softmax": softmax_channel,
}


def apply_activation(kind: str, x: Tensor, slope: float = 0.2) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    if kind == "leaky_relu":
        return fn(x, slope)
    return fn(x)


# ---------------------------------------------------------------------------
# losses


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference."""
    _same_shape(pred, target, "l1_loss")
    diff = pred.data - target.data
    n = diff.size
    sign = np.sign(diff)
    return make_result(
        np.array(np.abs(diff).mean()), (pred, target), "l1_loss",
        lambda g: (sign * (float(g) / n), -sign * (float(g) / n)),
    )


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared difference."""
    _same_shape(pred, target, "mse_loss")
    diff = pred.data - target.data
    n = diff.size
    return make_result(
        np.array((diff * diff).mean()), (pred, target), "mse_loss",
        lambda g: (diff * (2.0 * float(g) / n), diff * (-2.0 * float(g) / n)),
    )


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over pixels of ``-ln softmax(logits)[true class]``.

    ``logits`` is ``[N,L,H,W]`` raw scores, ``labels`` integer ``[N,H,W]``.
    """
    labels = np.asarray(labels)
    if logits.ndim != 4 or labels.shape != (logits.shape[0],) + logits.shape[2:]:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ClassRangeError(f"label outside 0..{n_classes - 1}")
    _check_finite(logits, "cross_entropy")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    onehot = np.moveaxis(np.eye(n_classes)[labels], -1, 1)
    count = labels.size
    loss = -(logp * onehot).sum() / count

    def back(g):
        return ((np.exp(logp) - onehot) * (float(g) / count),)

    return make_result(np.array(loss), (logits,), "cross_entropy", back)


def compute_loss(kind: str, pred: Tensor, target) -> Tensor:
    if kind == "l1":
        return l1_loss(pred, _as_tensor(target))
    if kind == "mean_squared":
        return mse_loss(pred, _as_tensor(target))
    if kind == "cross_entropy":
        return cross_entropy(pred, target)
    raise ValueError(f"unknown loss kind {kind!r}")

"""Dense float64 tensor kernels with explicit backward passes, plus Adam.

Everything operates on plain ``numpy.ndarray`` values (C-order, float64).
All functions are pure and return freshly allocated arrays; the single
exception is :func:`adam_step`, which updates its parameter and state
in place.

The convolution and Gram-matrix style accumulations elsewhere in the
package depend on a reproducibility guarantee: :func:`conv2d_forward`
accumulates its inner sum one (input-channel, kernel-row, kernel-col)
term at a time, so every output element sees additions in exactly the
order a naive six-nested-loop reference would produce. That makes the
result bit-identical to such a reference on float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, ValidationError


def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# convolution


def conv2d_forward(input, kernel, padding: int = 0) -> np.ndarray:
    """Cross-correlate ``input`` [C_in,H,W] with ``kernel`` [C_out,C_in,kH,kW].

    Stride is fixed at 1 and padding is zero-fill. Kernel sides must be odd.
    """
    x = _f64(input)
    k = _f64(kernel)
    if x.ndim != 3 or k.ndim != 4:
        raise DimensionError(
            f"conv2d expects input [C,H,W] and kernel [O,C,kH,kW], got {x.shape} and {k.shape}"
        )
    c_out, c_in, kh, kw = k.shape
    if x.shape[0] != c_in:
        raise DimensionError(
            f"input has {x.shape[0]} channels but kernel expects {c_in}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"kernel sides must be odd, got {kh}x{kw}")
    if padding < 0:
        raise DimensionError(f"padding must be >= 0, got {padding}")
    h, w = x.shape[1:]
    h_out = h + 2 * padding - kh + 1
    w_out = w + 2 * padding - kw + 1
    if h_out < 1 or w_out < 1:
        raise DimensionError(
            f"kernel {kh}x{kw} with padding {padding} does not fit input {h}x{w}"
        )

    padded = np.zeros((c_in, h + 2 * padding, w + 2 * padding))
    padded[:, padding:padding + h, padding:padding + w] = x

    # Accumulate one (ci, i, j) kernel tap at a time: per output element the
    # additions happen in the same order as the naive nested-loop reference.
    out = np.zeros((c_out, h_out, w_out))
    for ci in range(c_in):
        plane = padded[ci]
        for i in range(kh):
            for j in range(kw):
                out += plane[i:i + h_out, j:j + w_out] * k[:, ci, i, j][:, None, None]
    return out


def conv2d_backward(grad_out, input, kernel, padding: int = 0):
    """Gradients of sum(grad_out * conv2d_forward(input, kernel)) w.r.t. both.

    Returns ``(grad_input, grad_kernel)``.
    """
    g = _f64(grad_out)
    x = _f64(input)
    k = _f64(kernel)
    c_out, c_in, kh, kw = k.shape
    h, w = x.shape[1:]
    h_out = h + 2 * padding - kh + 1
    w_out = w + 2 * padding - kw + 1
    if g.shape != (c_out, h_out, w_out):
        raise DimensionError(
            f"grad_out shape {g.shape} does not match conv output {(c_out, h_out, w_out)}"
        )
    if x.shape[0] != c_in:
        raise DimensionError(
            f"input has {x.shape[0]} channels but kernel expects {c_in}"
        )

    padded = np.zeros((c_in, h + 2 * padding, w + 2 * padding))
    padded[:, padding:padding + h, padding:padding + w] = x

    grad_padded = np.zeros_like(padded)
    grad_kernel = np.zeros_like(k)
    for i in range(kh):
        for j in range(kw):
            window = padded[:, i:i + h_out, j:j + w_out]
            grad_kernel[:, :, i, j] = np.einsum("ohw,chw->oc", g, window)
            grad_padded[:, i:i + h_out, j:j + w_out] += np.einsum(
                "oc,ohw->chw", k[:, :, i, j], g
            )
    grad_input = grad_padded[:, padding:padding + h, padding:padding + w].copy()
    return grad_input, grad_kernel


# ---------------------------------------------------------------------------
# relu / pooling


def relu_forward(x) -> np.ndarray:
    return np.maximum(_f64(x), 0.0)


def relu_backward(grad_out, x) -> np.ndarray:
    """Pass gradient where x > 0; the subgradient at exactly 0 is 0."""
    g = _f64(grad_out)
    x = _f64(x)
    if g.shape != x.shape:
        raise DimensionError(f"grad shape {g.shape} != input shape {x.shape}")
    return np.where(x > 0.0, g, 0.0)


def maxpool2_forward(x):
    """2x2 non-overlapping max pool of [C,H,W]; H and W must be even.

    Returns ``(pooled, argmax_mask)`` where the mask stores, per window, the
    row-major in-window position (0..3) of the max (first on ties).
    """
    x = _f64(x)
    if x.ndim != 3:
        raise DimensionError(f"maxpool expects [C,H,W], got {x.shape}")
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool needs even H and W, got {h}x{w}")
    windows = (
        x.reshape(c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, h // 2, w // 2, 4)
    )
    mask = windows.argmax(axis=3)
    pooled = np.take_along_axis(windows, mask[..., None], axis=3)[..., 0]
    return pooled, mask


def maxpool2_backward(grad_out, argmax_mask) -> np.ndarray:
    """Route pooled gradients back to the recorded argmax positions."""
    g = _f64(grad_out)
    mask = np.asarray(argmax_mask)
    if g.shape != mask.shape:
        raise DimensionError(f"grad shape {g.shape} != mask shape {mask.shape}")
    c, hh, hw = mask.shape
    scattered = np.zeros((c, hh, hw, 4))
    np.put_along_axis(scattered, mask[..., None], g[..., None], axis=3)
    return (
        scattered.reshape(c, hh, hw, 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, hh * 2, hw * 2)
        .copy()
    )


# ---------------------------------------------------------------------------
# linear algebra / elementwise


def matvec(W, x) -> np.ndarray:
    W = _f64(W)
    x = _f64(x)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec shapes {W.shape} and {x.shape} incompatible")
    return W @ x


def matvec_backward(grad_out, W, x):
    """Returns ``(grad_W, grad_x)`` for y = W @ x."""
    g = _f64(grad_out)
    W = _f64(W)
    x = _f64(x)
    if g.shape != (W.shape[0],):
        raise DimensionError(f"grad shape {g.shape} != output shape {(W.shape[0],)}")
    return np.outer(g, x), W.T @ g


def add(a, b) -> np.ndarray:
    a = _f64(a)
    b = _f64(b)
    if a.shape != b.shape:
        raise DimensionError(f"add shapes differ: {a.shape} vs {b.shape}")
    return a + b


def add_backward(grad_out):
    g = _f64(grad_out)
    return g.copy(), g.copy()


def scale(x, c: float) -> np.ndarray:
    return _f64(x) * float(c)


def scale_backward(grad_out, c: float) -> np.ndarray:
    return _f64(grad_out) * float(c)


def tanh_forward(x) -> np.ndarray:
    return np.tanh(_f64(x))


def tanh_backward(grad_out, tanh_out) -> np.ndarray:
    """Backward through tanh given the forward *output*: (1 - y^2) * grad."""
    g = _f64(grad_out)
    y = _f64(tanh_out)
    if g.shape != y.shape:
        raise DimensionError(f"grad shape {g.shape} != tanh output shape {y.shape}")
    return (1.0 - y * y) * g


def l2_normalize(x) -> np.ndarray:
    """Scale a vector to Euclidean norm 1. Near-zero inputs are rejected."""
    x = _f64(x)
    if x.ndim != 1:
        raise DimensionError(f"l2_normalize expects a vector, got shape {x.shape}")
    n = float(np.linalg.norm(x))
    if n <= 1e-12:
        raise DegenerateInputError(f"cannot normalize vector with norm {n}")
    return x / n


def l2_normalize_backward(grad_out, x) -> np.ndarray:
    """Exact gradient through y = x / ||x||: (g - (g . y) y) / ||x||."""
    g = _f64(grad_out)
    x = _f64(x)
    if g.shape != x.shape:
        raise DimensionError(f"grad shape {g.shape} != input shape {x.shape}")
    n = float(np.linalg.norm(x))
    if n <= 1e-12:
        raise DegenerateInputError(f"cannot normalize vector with norm {n}")
    y = x / n
    return (g - float(np.dot(g, y)) * y) / n


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Moment buffers for one parameter tensor."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_parameter(cls, param, beta1: float = 0.9, beta2: float = 0.999,
                      epsilon: float = 1e-8) -> "AdamState":
        p = np.asarray(param)
        return cls(np.zeros(p.shape), np.zeros(p.shape), 0, beta1, beta2, epsilon)


def adam_step(param: np.ndarray, grad, state: AdamState, lr: float) -> None:
    """One Adam update with bias correction, applied to ``param`` in place."""
    grad = _f64(grad)
    if param.shape != grad.shape:
        raise DimensionError(f"param shape {param.shape} != grad shape {grad.shape}")
    if state.first_moment.shape != param.shape or state.second_moment.shape != param.shape:
        raise DimensionError("Adam state shape does not match parameter")
    if not lr > 0.0:
        raise ValidationError(f"learning rate must be positive, got {lr}")

    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)

"""Tensor primitives for the fixed layer set.

All image tensors are NHWC numpy arrays.  Convolutions are implemented as a
loop over kernel offsets (k*k strided-slice matmuls) rather than a monolithic
im2col buffer; the loop order is fixed, so summation order and therefore
results are bit-reproducible.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def _check_4d(name: str, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    if t.ndim != 4:
        raise ValueError(f"{name} must be rank-4 NHWC, got shape {t.shape}")
    return t


def _same_pad(n: int, k: int, s: int) -> tuple[int, int, int]:
    """Output size and (before, after) zero padding for SAME semantics."""
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


def conv2d(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray | None = None,
    stride: int = 1,
    padding: str = "same",
) -> np.ndarray:
    """Strided cross-correlation.  w is (kh, kw, c_in, c_out)."""
    x = _check_4d("x", x)
    w = np.asarray(w)
    if w.ndim != 4:
        raise ValueError(f"w must be (kh, kw, c_in, c_out), got shape {w.shape}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    kh, kw, cin, cout = w.shape
    if x.shape[3] != cin:
        raise ValueError(f"input channels {x.shape[3]} != kernel input channels {cin}")
    n, h, ww_in, _ = x.shape
    if padding == "same":
        ho, pt, pb = _same_pad(h, kh, stride)
        wo, pl, pr = _same_pad(ww_in, kw, stride)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    elif padding == "valid":
        if h < kh or ww_in < kw:
            raise ValueError(
                f"input {h}x{ww_in} smaller than kernel {kh}x{kw} with valid padding"
            )
        ho = (h - kh) // stride + 1
        wo = (ww_in - kw) // stride + 1
        xp = x
    else:
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")

    y = np.zeros((n, ho, wo, cout), dtype=np.result_type(x, w))
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, i : i + (ho - 1) * stride + 1 : stride,
                    j : j + (wo - 1) * stride + 1 : stride, :]
            y += xs @ w[i, j]
    if b is not None:
        b = np.asarray(b)
        if b.shape != (cout,):
            raise ValueError(f"bias shape {b.shape} != ({cout},)")
        y = y + b
    return y


def conv2d_backward(
    dy: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int, padding: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) of conv2d for upstream gradient dy."""
    kh, kw, cin, cout = w.shape
    n, h, wi, _ = x.shape
    if padding == "same":
        ho, pt, pb = _same_pad(h, kh, stride)
        wo, pl, pr = _same_pad(wi, kw, stride)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        ho = (h - kh) // stride + 1
        wo = (wi - kw) // stride + 1
        pt = pl = 0
        xp = x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl_h = slice(i, i + (ho - 1) * stride + 1, stride)
            sl_w = slice(j, j + (wo - 1) * stride + 1, stride)
            xs = xp[:, sl_h, sl_w, :]
            dw[i, j] = np.tensordot(xs, dy, axes=([0, 1, 2], [0, 1, 2]))
            dxp[:, sl_h, sl_w, :] += dy @ w[i, j].T
    dx = dxp[:, pt : pt + h, pl : pl + wi, :]
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


def _tconv_geometry(n: int, k: int, s: int) -> tuple[int, int]:
    """Scatter-buffer length and crop offset for stride-s transposed conv."""
    total = max(k - s, 0)
    return n * s + total, total // 2


def conv2d_transpose(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray | None = None,
    stride: int = 1,
    semantics: str = "pad_input",
) -> np.ndarray:
    """Stride-s upsampling convolution; output spatial dims = input * stride.

    Two weight conventions coexist because exporting runtimes disagree:

    * ``pad_input``: w is (kh, kw, c_out, c_in) and the op is the gradient of
      a SAME-padded strided cross-correlation (input-padding convention).
    * ``crop_output``: w is (kh, kw, c_in, c_out) and the kernel is applied
      spatially flipped, with the full scatter output cropped to size
      (output-cropping convention).

    convert_transpose_weights maps either convention onto the other.
    """
    x = _check_4d("x", x)
    w = np.asarray(w)
    if w.ndim != 4:
        raise ValueError(f"w must be rank-4, got shape {w.shape}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    kh, kw = w.shape[:2]
    if semantics == "pad_input":
        cout, cin = w.shape[2], w.shape[3]
        kernel = lambda i, j: w[i, j].T  # (cin, cout)
    elif semantics == "crop_output":
        cin, cout = w.shape[2], w.shape[3]
        kernel = lambda i, j: w[kh - 1 - i, kw - 1 - j]
    else:
        raise ValueError(f"semantics must be 'pad_input' or 'crop_output', got {semantics!r}")
    n, h, wi, cx = x.shape
    if cx != cin:
        raise ValueError(f"input channels {cx} != kernel input channels {cin}")

    buf_h, off_h = _tconv_geometry(h, kh, stride)
    buf_w, off_w = _tconv_geometry(wi, kw, stride)
    buf = np.zeros((n, buf_h, buf_w, cout), dtype=np.result_type(x, w))
    for i in range(kh):
        for j in range(kw):
            buf[:, i : i + (h - 1) * stride + 1 : stride,
                j : j + (wi - 1) * stride + 1 : stride, :] += x @ kernel(i, j)
    y = buf[:, off_h : off_h + h * stride, off_w : off_w + wi * stride, :]
    if b is not None:
        b = np.asarray(b)
        if b.shape != (cout,):
            raise ValueError(f"bias shape {b.shape} != ({cout},)")
        y = y + b
    return np.ascontiguousarray(y)


def conv2d_transpose_backward(
    dy: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int, semantics: str = "pad_input"
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) of conv2d_transpose."""
    kh, kw = w.shape[:2]
    n, h, wi, _ = x.shape
    buf_h, off_h = _tconv_geometry(h, kh, stride)
    buf_w, off_w = _tconv_geometry(wi, kw, stride)
    dbuf = np.zeros((n, buf_h, buf_w, dy.shape[3]), dtype=dy.dtype)
    dbuf[:, off_h : off_h + h * stride, off_w : off_w + wi * stride, :] = dy
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl_h = slice(i, i + (h - 1) * stride + 1, stride)
            sl_w = slice(j, j + (wi - 1) * stride + 1, stride)
            ds = dbuf[:, sl_h, sl_w, :]  # (n, h, wi, cout)
            g = np.tensordot(ds, x, axes=([0, 1, 2], [0, 1, 2]))  # (cout, cin)
            if semantics == "pad_input":
                dw[i, j] = g
                dx += ds @ w[i, j]  # w[i,j] is (cout, cin)
            else:
                dw[kh - 1 - i, kw - 1 - j] = g.T
                dx += ds @ w[kh - 1 - i, kw - 1 - j].T
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


def convert_transpose_weights(w: np.ndarray) -> np.ndarray:
    """Map transposed-conv kernels between the two semantics.

    Spatial flip on both kernel axes plus a swap of the channel axes; the
    transformation is its own inverse.
    """
    w = np.asarray(w)
    if w.ndim != 4:
        raise ValueError(f"w must be rank-4, got shape {w.shape}")
    return np.ascontiguousarray(w[::-1, ::-1].swapaxes(2, 3))


def leaky_relu(x: np.ndarray, alpha: float = 0.2) -> np.ndarray:
    x = np.asarray(x)
    return np.where(x >= 0, x, alpha * x)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(np.asarray(x))


def batch_norm_inference(
    x: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Affine normalization with frozen statistics."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    x = _check_4d("x", x)
    c = x.shape[3]
    for name, p in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        if np.asarray(p).shape != (c,):
            raise ValueError(f"{name} shape {np.asarray(p).shape} != ({c},)")
    return (x - mean) / np.sqrt(np.asarray(var) + eps) * gamma + beta


def instance_norm(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Per-sample, per-channel standardization over the spatial axes."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    x = _check_4d("x", x)
    c = x.shape[3]
    for name, p in (("gamma", gamma), ("beta", beta)):
        if np.asarray(p).shape != (c,):
            raise ValueError(f"{name} shape {np.asarray(p).shape} != ({c},)")
    mean = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def instance_norm_backward(
    dy: np.ndarray, x: np.ndarray, gamma: np.ndarray, eps: float = 1e-5
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dgamma, dbeta) of instance_norm."""
    m = x.shape[1] * x.shape[2]
    mean = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv
    dgamma = (dy * xhat).sum(axis=(0, 1, 2))
    dbeta = dy.sum(axis=(0, 1, 2))
    dxhat = dy * gamma
    dx = (
        dxhat
        - dxhat.mean(axis=(1, 2), keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=(1, 2), keepdims=True)
    ) * inv
    return dx, dgamma, dbeta


def weight_matrix(w: np.ndarray) -> np.ndarray:
    """Reshape a kernel to the (out_channels, rest) matrix used for spectral
    normalization.  The output channel axis is assumed last."""
    w = np.asarray(w)
    return w.reshape(-1, w.shape[-1]).T


def power_iteration(
    mat: np.ndarray, u: np.ndarray, iterations: int = 1
) -> tuple[float, np.ndarray, np.ndarray]:
    """Leading singular value estimate via alternating matvecs.

    Returns (sigma, u, v) with sigma = ||mat^T u|| for the final u, so the
    triple satisfies sigma = u^T mat v exactly.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    u = np.asarray(u, dtype=np.float64)
    for _ in range(iterations):
        v = mat.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            raise ValueError("zero weight matrix has no spectral norm direction")
        v = v / nv
        u = mat @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            raise ValueError("zero weight matrix has no spectral norm direction")
        u = u / nu
    v = mat.T @ u
    sigma = float(np.linalg.norm(v))
    if sigma == 0.0:
        raise ValueError("zero weight matrix has no spectral norm direction")
    return sigma, u, v / sigma


def spectral_normalize(
    w: np.ndarray, iterations: int = 1, u: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Scale a weight tensor by its estimated largest singular value."""
    w = np.asarray(w)
    mat = weight_matrix(w)
    if not np.any(mat):
        raise ValueError("zero weight matrix has no spectral norm")
    if u is None:
        u = np.ones(mat.shape[0]) / np.sqrt(mat.shape[0])
    sigma, _, _ = power_iteration(mat, u, iterations)
    return w / sigma, sigma

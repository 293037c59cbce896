"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a vectorized numpy version and a loop version
compiled with numba.  The active backend is chosen once at import time.
Set VIZRETRIEVE_NUMBA=0 to force the numpy path (the default is numba
whenever it imports).  Both backends compute the same quantities; the
agreement tests pin them together and benchmarks/bench_kernels.py compares
their speed.

All kernels are single-threaded on purpose: training and indexing promise
run-to-run determinism.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("VIZRETRIEVE_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _FLAG not in ("0", "false", "off", "no")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = HAS_NUMBA and NUMBA_REQUESTED


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


# ---------------------------------------------------------------------------
# im2col / col2im


def _im2col_np(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    n, c, hp, wp = xp.shape
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    oh, ow = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


@njit(cache=True)
def _im2col_impl(xp, kh, kw, stride, cols):  # pragma: no cover - jitted
    n, c, hp, wp = xp.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(oh):
                        base = oy * ow
                        iy = oy * stride + i
                        for ox in range(ow):
                            cols[b, row, base + ox] = xp[b, ch, iy, ox * stride + j]


def _im2col_nb(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    n, c, hp, wp = xp.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    cols = np.empty((n, c * kh * kw, oh * ow), dtype=xp.dtype)
    _im2col_impl(np.ascontiguousarray(xp), kh, kw, stride, cols)
    return cols


def _col2im_np(
    cols: np.ndarray, n: int, c: int, hp: int, wp: int, kh: int, kw: int, stride: int
) -> np.ndarray:
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    shaped = cols.reshape(n, c, kh, kw, oh, ow)
    # For a fixed kernel offset the destination slices never overlap, so a
    # plain += accumulates correctly.
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += (
                shaped[:, :, i, j]
            )
    return xp


@njit(cache=True)
def _col2im_impl(cols, n, c, hp, wp, kh, kw, stride, xp):  # pragma: no cover
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(oh):
                        base = oy * ow
                        iy = oy * stride + i
                        for ox in range(ow):
                            xp[b, ch, iy, ox * stride + j] += cols[b, row, base + ox]


def _col2im_nb(
    cols: np.ndarray, n: int, c: int, hp: int, wp: int, kh: int, kw: int, stride: int
) -> np.ndarray:
    xp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    _col2im_impl(np.ascontiguousarray(cols), n, c, hp, wp, kh, kw, stride, xp)
    return xp


# ---------------------------------------------------------------------------
# Non-overlapping max pooling (window == stride)


def _pool_max_np(x: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    oh, ow = h // p, w // p
    tiles = x[:, :, : oh * p, : ow * p].reshape(n, c, oh, p, ow, p)
    tiles = tiles.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, p * p)
    arg = tiles.argmax(axis=4).astype(np.int64)
    out = np.take_along_axis(tiles, arg[..., None], axis=4)[..., 0]
    return out, arg


@njit(cache=True)
def _pool_max_impl(x, p, out, arg):  # pragma: no cover - jitted
    n, c, h, w = x.shape
    oh = h // p
    ow = w // p
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = x[b, ch, oy * p, ox * p]
                    bi = 0
                    for i in range(p):
                        for j in range(p):
                            v = x[b, ch, oy * p + i, ox * p + j]
                            if v > best:
                                best = v
                                bi = i * p + j
                    out[b, ch, oy, ox] = best
                    arg[b, ch, oy, ox] = bi


def _pool_max_nb(x: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    oh, ow = h // p, w // p
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.int64)
    _pool_max_impl(np.ascontiguousarray(x), p, out, arg)
    return out, arg


def _pool_max_backward_np(
    gout: np.ndarray, arg: np.ndarray, p: int, h: int, w: int
) -> np.ndarray:
    n, c, oh, ow = gout.shape
    dx_tiles = np.zeros((n, c, oh, ow, p * p), dtype=gout.dtype)
    np.put_along_axis(dx_tiles, arg[..., None], gout[..., None], axis=4)
    dx = dx_tiles.reshape(n, c, oh, ow, p, p).transpose(0, 1, 2, 4, 3, 5)
    dx = dx.reshape(n, c, oh * p, ow * p)
    if oh * p == h and ow * p == w:
        return np.ascontiguousarray(dx)
    full = np.zeros((n, c, h, w), dtype=gout.dtype)
    full[:, :, : oh * p, : ow * p] = dx
    return full


@njit(cache=True)
def _pool_max_backward_impl(gout, arg, p, dx):  # pragma: no cover - jitted
    n, c, oh, ow = gout.shape
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    bi = arg[b, ch, oy, ox]
                    dx[b, ch, oy * p + bi // p, ox * p + bi % p] += gout[b, ch, oy, ox]


def _pool_max_backward_nb(
    gout: np.ndarray, arg: np.ndarray, p: int, h: int, w: int
) -> np.ndarray:
    n, c = gout.shape[:2]
    dx = np.zeros((n, c, h, w), dtype=gout.dtype)
    _pool_max_backward_impl(
        np.ascontiguousarray(gout), np.ascontiguousarray(arg), p, dx
    )
    return dx


# ---------------------------------------------------------------------------
# Row scatter-sum (graph aggregation and pooling)


def _segment_sum_np(x: np.ndarray, seg: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((m, x.shape[1]), dtype=x.dtype)
    np.add.at(out, seg, x)
    return out


@njit(cache=True)
def _segment_sum_impl(x, seg, out):  # pragma: no cover - jitted
    for i in range(x.shape[0]):
        s = seg[i]
        for j in range(x.shape[1]):
            out[s, j] += x[i, j]


def _segment_sum_nb(x: np.ndarray, seg: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((m, x.shape[1]), dtype=x.dtype)
    _segment_sum_impl(
        np.ascontiguousarray(x), np.ascontiguousarray(seg.astype(np.int64)), out
    )
    return out


# ---------------------------------------------------------------------------
# Orientation histogram accumulation for the gradient descriptor


def _hog_accumulate_np(
    mag: np.ndarray,
    bin0: np.ndarray,
    w0: np.ndarray,
    bin1: np.ndarray,
    w1: np.ndarray,
    cell: int,
    nbins: int,
) -> np.ndarray:
    h, w = mag.shape
    ncy, ncx = h // cell, w // cell
    rows = np.arange(h)[:, None] // cell
    cols = np.arange(w)[None, :] // cell
    base = (rows * ncx + cols) * nbins
    flat0 = (base + bin0).ravel()
    flat1 = (base + bin1).ravel()
    size = ncy * ncx * nbins
    hist = np.bincount(flat0, weights=(mag * w0).ravel(), minlength=size)
    hist += np.bincount(flat1, weights=(mag * w1).ravel(), minlength=size)
    return hist.reshape(ncy, ncx, nbins)


@njit(cache=True)
def _hog_accumulate_impl(mag, bin0, w0, bin1, w1, cell, hist):  # pragma: no cover
    h, w = mag.shape
    for y in range(h):
        cy = y // cell
        for x in range(w):
            cx = x // cell
            m = mag[y, x]
            hist[cy, cx, bin0[y, x]] += m * w0[y, x]
            hist[cy, cx, bin1[y, x]] += m * w1[y, x]


def _hog_accumulate_nb(
    mag: np.ndarray,
    bin0: np.ndarray,
    w0: np.ndarray,
    bin1: np.ndarray,
    w1: np.ndarray,
    cell: int,
    nbins: int,
) -> np.ndarray:
    h, w = mag.shape
    hist = np.zeros((h // cell, w // cell, nbins), dtype=np.float64)
    _hog_accumulate_impl(
        np.ascontiguousarray(mag),
        np.ascontiguousarray(bin0),
        np.ascontiguousarray(w0),
        np.ascontiguousarray(bin1),
        np.ascontiguousarray(w1),
        cell,
        hist,
    )
    return hist


# ---------------------------------------------------------------------------
# Backend selection

NUMPY_IMPL = {
    "im2col": _im2col_np,
    "col2im": _col2im_np,
    "pool_max": _pool_max_np,
    "pool_max_backward": _pool_max_backward_np,
    "segment_sum": _segment_sum_np,
    "hog_accumulate": _hog_accumulate_np,
}

NUMBA_IMPL = {
    "im2col": _im2col_nb,
    "col2im": _col2im_nb,
    "pool_max": _pool_max_nb,
    "pool_max_backward": _pool_max_backward_nb,
    "segment_sum": _segment_sum_nb,
    "hog_accumulate": _hog_accumulate_nb,
}

_ACTIVE = NUMBA_IMPL if USE_NUMBA else NUMPY_IMPL

BACKEND = "numba" if USE_NUMBA else "numpy"

im2col = _ACTIVE["im2col"]
col2im = _ACTIVE["col2im"]
pool_max = _ACTIVE["pool_max"]
pool_max_backward = _ACTIVE["pool_max_backward"]
segment_sum = _ACTIVE["segment_sum"]
hog_accumulate = _ACTIVE["hog_accumulate"]

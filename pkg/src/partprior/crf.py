"""Mean-field inference for a fully connected CRF with Gaussian pairwise kernels.

Messages are summed exactly over all pixel pairs (no lattice filtering), so
cost grows with the square of the pixel count. :func:`refine_regions` keeps
that affordable on whole images by running the exact CRF only on the pixels
near those whose labels are actually wanted.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch

EPS = 1e-12
_DENSE_LIMIT = 6000  # above this many pixels the kernel is rebuilt in row blocks each iteration
_BLOCK = 1024


@dataclass(frozen=True)
class CrfParams:
    w_app: float = 10.0
    theta_alpha: float = 80.0
    theta_beta: float = 13.0
    w_smooth: float = 3.0
    theta_gamma: float = 3.0
    iterations: int = 10

    def __post_init__(self):
        if min(self.theta_alpha, self.theta_beta, self.theta_gamma) <= 0:
            raise ValueError("kernel widths must be positive")
        if self.w_app < 0 or self.w_smooth < 0:
            raise ValueError("kernel weights must be non-negative")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)


def _features(height: int, width: int, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    pos = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
    col = image.reshape(-1, 3).astype(float)
    return pos, col


def _augmented(feats: np.ndarray, scale: float, weight: float) -> tuple[np.ndarray, np.ndarray]:
    """Row/column factors whose product is ``log(weight) - |f_i - f_j|^2 / (2 scale^2)``."""
    f = feats / (np.sqrt(2.0) * scale)
    sq = (f * f).sum(1)
    one = np.ones((len(f), 1))
    left = np.hstack([2.0 * f, -sq[:, None] + np.log(weight), one])
    right = np.hstack([f, one, -sq[:, None]])
    return left, right


def _gaussian(left: np.ndarray, right: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    g = np.matmul(left, right.T, out=out)
    return np.exp(g, out=g)


def kernel_block(pos: np.ndarray, col: np.ndarray, start: int, stop: int, params: CrfParams,
                 smooth: bool = True) -> np.ndarray:
    """Rows ``start:stop`` of the weighted pairwise kernel, self-pairs zeroed.

    ``smooth=False`` leaves out the position-only term.
    """
    n = len(pos)
    k = np.zeros((stop - start, n))
    if params.w_app > 0:
        left, right = _augmented(np.hstack([pos / params.theta_alpha, col / params.theta_beta]), 1.0, params.w_app)
        _gaussian(left[start:stop], right, out=k)
    if smooth and params.w_smooth > 0:
        left, right = _augmented(pos, params.theta_gamma, params.w_smooth)
        if params.w_app > 0:
            k += _gaussian(left[start:stop], right)
        else:
            _gaussian(left[start:stop], right, out=k)
    idx = np.arange(start, stop)
    k[idx - start, idx] = 0.0
    return k


class _GridSmoothing:
    """Messages of the position-only kernel for pixels on an integer grid.

    The kernel factors into 1-D Gaussians along x and y, so summing over
    every pair is two small matrix products over the bounding box.
    """

    def __init__(self, pos: np.ndarray, params: CrfParams):
        lo = pos.min(axis=0)
        grid = pos - lo
        self.xs = grid[:, 0].astype(np.intp)
        self.ys = grid[:, 1].astype(np.intp)
        self.shape = (int(self.ys.max()) + 1, int(self.xs.max()) + 1)
        self.weight = params.w_smooth

        def factor(size):
            d = np.arange(size, dtype=float)
            return np.exp(-((d[:, None] - d[None, :]) ** 2) / (2.0 * params.theta_gamma ** 2))

        self.ky = params.w_smooth * factor(self.shape[0])
        self.kx = factor(self.shape[1])

    @staticmethod
    def usable(pos: np.ndarray) -> bool:
        return len(pos) > 0 and bool(np.all(pos == np.round(pos)))

    def __call__(self, q: np.ndarray) -> np.ndarray:
        h, w = self.shape
        grid = np.zeros((h, w, q.shape[1]))
        grid[self.ys, self.xs] = q
        t = (self.ky @ grid.reshape(h, -1)).reshape(h, w, -1)
        t = np.matmul(self.kx, t)
        # drop the self-pair, whose kernel value is exactly the weight
        return t[self.ys, self.xs] - self.weight * q


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def meanfield(unary: np.ndarray, pos: np.ndarray, col: np.ndarray, params: CrfParams = CrfParams(),
              callback=None) -> np.ndarray:
    """Mean-field over an arbitrary pixel set.

    ``unary`` is ``(N, L)``, ``pos`` the ``(N, 2)`` pixel coordinates and
    ``col`` the ``(N, 3)`` colours of the same pixels. Every pixel is
    connected to every other one in the set.
    """
    n, nl = unary.shape
    q = unary / unary.sum(axis=1, keepdims=True)
    if params.iterations == 0 or (params.w_app == 0 and params.w_smooth == 0):
        return q
    log_u = np.log(np.clip(unary, EPS, 1.0))
    grid = _GridSmoothing(pos, params) if params.w_smooth > 0 and _GridSmoothing.usable(pos) else None
    smooth = grid is None
    need_kernel = params.w_app > 0 or smooth
    dense = kernel_block(pos, col, 0, n, params, smooth) if need_kernel and n <= _DENSE_LIMIT else None
    for t in range(params.iterations):
        if dense is not None:
            msg = dense @ q
        elif need_kernel:
            msg = np.empty((n, nl))
            for s in range(0, n, _BLOCK):
                e = min(n, s + _BLOCK)
                msg[s:e] = kernel_block(pos, col, s, e, params, smooth) @ q
        else:
            msg = np.zeros((n, nl))
        if grid is not None:
            msg += grid(q)
        # Potts: label l pays for the mass sent by every other label
        pairwise = msg.sum(axis=1, keepdims=True) - msg
        q_next = _softmax(log_u - pairwise)
        # an exact fixed point repeats forever; later updates would change nothing
        settled = np.array_equal(q_next, q)
        q = q_next
        if callback is not None:
            callback(t, q)
        if settled:
            if callback is not None:
                for rest in range(t + 1, params.iterations):
                    callback(rest, q)
            break
    return q


def meanfield_refine(unary: np.ndarray, image: np.ndarray, params: CrfParams = CrfParams(),
                     callback=None) -> np.ndarray:
    """Run ``params.iterations`` mean-field updates over the whole image, starting from the unary.

    ``callback(t, q)`` receives the ``(H, W, L)`` marginals after every
    update.
    """
    unary = np.asarray(unary, dtype=float)
    image = np.asarray(image)
    if unary.ndim != 3 or image.shape != unary.shape[:2] + (3,):
        raise DimensionMismatch(f"unary {unary.shape} and image {image.shape} disagree")
    h, w, nl = unary.shape
    pos, col = _features(h, w, image)
    cb = None if callback is None else (lambda t, q: callback(t, q.reshape(h, w, nl)))
    return meanfield(unary.reshape(-1, nl), pos, col, params, cb).reshape(h, w, nl)


def argmax_labels(q: np.ndarray) -> np.ndarray:
    """Per-pixel most likely class; ties go to the lowest index."""
    return np.argmax(np.asarray(q), axis=-1).astype(np.uint8)


def region_components(roi: np.ndarray, margin: int) -> list[np.ndarray]:
    """Connected components of ``roi`` grown by a square of half-side ``margin``."""
    roi = np.asarray(roi, dtype=bool)
    if not roi.any():
        return []
    grown = ndimage.binary_dilation(roi, structure=np.ones((2 * margin + 1,) * 2, bool)) if margin > 0 else roi
    labelled, count = ndimage.label(grown)
    return [labelled == k for k in range(1, count + 1)]


def refine_regions(unary: np.ndarray, image: np.ndarray, roi: np.ndarray, params: CrfParams = CrfParams(),
                   margin: int = 2) -> np.ndarray:
    """Exact mean-field on each grown component of ``roi``; the unary passes through elsewhere.

    Each component is its own fully connected CRF, so pixels outside it
    send it no messages. With ``roi`` covering the image this is
    :func:`meanfield_refine`.
    """
    unary = np.asarray(unary, dtype=float)
    image = np.asarray(image)
    if unary.ndim != 3 or image.shape != unary.shape[:2] + (3,):
        raise DimensionMismatch(f"unary {unary.shape} and image {image.shape} disagree")
    q = unary / unary.sum(axis=-1, keepdims=True)
    h, w, _ = unary.shape
    pos, col = _features(h, w, image)
    for comp in region_components(roi, margin):
        idx = np.flatnonzero(comp)
        q.reshape(h * w, -1)[idx] = meanfield(unary.reshape(h * w, -1)[idx], pos[idx], col[idx], params)
    return q

"""Dense float64 tensors with tape-scoped reverse-mode differentiation.

A ``Tape`` records every primitive executed while it is installed. Gradient
flow is deliberately narrow:

* a tensor produced under one tape enters any *other* tape as a constant,
* a parameter leaf carries an optional ``owner`` tag and only receives a
  gradient from a tape whose owner matches (a tape with ``owner=None``
  accepts every leaf),
* ``backward`` consumes its tape; a second call is an error.

Together these make gradient paths across training modules structurally
impossible rather than merely discouraged. Everything is float64 and
single-threaded; identical seeds and inputs give bit-identical values and
gradients.
"""

from __future__ import annotations

import itertools
import numbers
from typing import Callable, Optional, Sequence

import numpy as np

EXP_CLAMP = 700.0
EIG_CLAMP = 1e-12
EIG_GAP_GUARD = 1e-10


class TensorError(Exception):
    """Base class for tensor-engine failures."""


class DimensionError(TensorError):
    """Input shapes do not conform to the primitive's shape rule."""


class NumericError(TensorError):
    """A forward primitive produced NaN/Inf from finite inputs."""


class ContractError(TensorError):
    """An operation was called outside its contract."""


class TapeReuseError(TensorError):
    """backward() was called twice on the same tape."""


_uid_counter = itertools.count(1)

_diagnostics = {"exp_clamps": 0}


def diagnostics() -> dict:
    """Snapshot of numeric-guard counters (currently: exp input clamps)."""
    return dict(_diagnostics)


def reset_diagnostics() -> None:
    for key in _diagnostics:
        _diagnostics[key] = 0


class Tensor:
    """A dense float64 array plus differentiation metadata.

    ``requires_grad`` marks parameter leaves. ``tape`` is set on tensors
    produced by a recorded primitive and identifies the recording context;
    a tensor with no tape never receives a gradient unless it is a
    requires_grad leaf used under a compatible tape.
    """

    __slots__ = ("data", "requires_grad", "tape", "owner", "uid")

    def __init__(self, data, requires_grad: bool = False, owner=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.tape: Optional[Tape] = None
        self.owner = owner
        self.uid = next(_uid_counter)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tape_id(self) -> Optional[int]:
        return self.tape.id if self.tape is not None else None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A constant view of the same values, cut off from any tape."""
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Small operator sugar; everything routes through apply_primitive.
    def __add__(self, other):
        return apply_primitive("add", [self, other])

    def __radd__(self, other):
        return apply_primitive("add", [other, self])

    def __sub__(self, other):
        return apply_primitive("sub", [self, other])

    def __rsub__(self, other):
        return apply_primitive("sub", [other, self])

    def __mul__(self, other):
        return apply_primitive("mul", [self, other])

    def __rmul__(self, other):
        return apply_primitive("mul", [other, self])

    def __matmul__(self, other):
        return apply_primitive("matmul", [self, other])

    def __neg__(self):
        return apply_primitive("mul", [self, -1.0])


class Node:
    """One recorded primitive application."""

    __slots__ = ("op", "inputs", "grad_mask", "output_uid", "backward_fn")

    def __init__(self, op, inputs, grad_mask, output_uid, backward_fn):
        self.op = op
        self.inputs = inputs
        self.grad_mask = grad_mask
        self.output_uid = output_uid
        self.backward_fn = backward_fn


_TAPE_STACK: list[Optional["Tape"]] = []


class Tape:
    """Recording context for one module's (or critic's) computation.

    ``owner`` scopes which parameter leaves may receive gradients; ``None``
    accepts all leaves (used by the end-to-end baseline). Tapes nest but are
    single-threaded.
    """

    def __init__(self, owner=None):
        self.owner = owner
        self.nodes: list[Node] = []
        self.consumed = False
        self.id = next(_uid_counter)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self, "tape stack corrupted"
        return False


def current_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class stop_recording:
    """Context that suppresses recording even if a tape is installed.

    Used for frozen upstream forward passes and finite-difference probes."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False


class GradientMap:
    """Gradients keyed by parameter tensor, produced by one backward pass."""

    def __init__(self):
        self._grads: dict[int, np.ndarray] = {}
        self._params: dict[int, Tensor] = {}

    def _accumulate(self, param: Tensor, grad: np.ndarray):
        if param.uid in self._grads:
            self._grads[param.uid] = self._grads[param.uid] + grad
        else:
            self._grads[param.uid] = grad
            self._params[param.uid] = param

    def get(self, param: Tensor) -> Optional[Tensor]:
        g = self._grads.get(param.uid)
        return Tensor(g) if g is not None else None

    def __contains__(self, param: Tensor) -> bool:
        return param.uid in self._grads

    def __len__(self) -> int:
        return len(self._grads)

    def items(self):
        for uid, g in self._grads.items():
            yield self._params[uid], Tensor(g)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (np.ndarray, numbers.Number, list, tuple)):
        return Tensor(x)
    raise ContractError(f"cannot interpret {type(x).__name__} as a tensor")


def _differentiable_under(t: Tensor, tape: Tape) -> bool:
    if t.tape is tape:
        return True
    if t.tape is not None:
        # Produced under a different tape: enters as a constant.
        return False
    if not t.requires_grad:
        return False
    if t.owner is None or tape.owner is None:
        return True
    return t.owner == tape.owner


# ---------------------------------------------------------------------------
# Primitive registry. Each primitive supplies forward(arrays, attrs) ->
# (out_array, backward_closure) where backward_closure(gout) returns one
# gradient array (or None) per input.
# ---------------------------------------------------------------------------

_PRIMITIVES: dict[str, Callable] = {}

# Primitives whose output may legitimately be checked for finiteness are all
# of them; ops that can produce non-finite values from valid finite inputs
# (log of 0) must surface that as NumericError, never propagate silently.


def primitive(name: str):
    def register(fn):
        _PRIMITIVES[name] = fn
        return fn

    return register


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


@primitive("add")
def _add(arrays, attrs):
    a, b = arrays
    _check_broadcast("add", a, b)
    out = a + b

    def backward(g):
        return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]

    return out, backward


@primitive("sub")
def _sub(arrays, attrs):
    a, b = arrays
    _check_broadcast("sub", a, b)
    out = a - b

    def backward(g):
        return [_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)]

    return out, backward


@primitive("mul")
def _mul(arrays, attrs):
    a, b = arrays
    _check_broadcast("mul", a, b)
    out = a * b

    def backward(g):
        return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]

    return out, backward


@primitive("matmul")
def _matmul(arrays, attrs):
    a, b = arrays
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a @ b

    def backward(g):
        return [g @ b.T, a.T @ g]

    return out, backward


@primitive("transpose")
def _transpose(arrays, attrs):
    (a,) = arrays
    if a.ndim != 2:
        raise DimensionError(f"transpose: expected 2-D input, got shape {a.shape}")
    out = a.T.copy()

    def backward(g):
        return [g.T]

    return out, backward


@primitive("permute")
def _permute(arrays, attrs):
    (a,) = arrays
    axes = tuple(attrs["axes"])
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"permute: axes {axes} invalid for rank {a.ndim}")
    out = np.transpose(a, axes).copy()
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return [np.transpose(g, inverse).copy()]

    return out, backward


@primitive("reshape")
def _reshape(arrays, attrs):
    (a,) = arrays
    shape = tuple(attrs["shape"])
    if np.prod(shape, dtype=int) != a.size and -1 not in shape:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    out = a.reshape(shape)

    def backward(g):
        return [g.reshape(a.shape)]

    return out, backward


@primitive("sum")
def _sum(arrays, attrs):
    (a,) = arrays
    axis = attrs.get("axis")
    keepdims = attrs.get("keepdims", False)
    out = a.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return [np.broadcast_to(g, a.shape).copy()]
        ge = g if keepdims else np.expand_dims(g, axis)
        return [np.broadcast_to(ge, a.shape).copy()]

    return out, backward


@primitive("mean")
def _mean(arrays, attrs):
    (a,) = arrays
    axis = attrs.get("axis")
    keepdims = attrs.get("keepdims", False)
    out = a.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]

    def backward(g):
        if axis is None:
            return [np.broadcast_to(g / count, a.shape).copy()]
        ge = g if keepdims else np.expand_dims(g, axis)
        return [np.broadcast_to(ge / count, a.shape).copy()]

    return out, backward


@primitive("relu")
def _relu(arrays, attrs):
    (a,) = arrays
    out = np.maximum(a, 0.0)

    def backward(g):
        return [g * (a > 0.0)]

    return out, backward


@primitive("sigmoid")
def _sigmoid(arrays, attrs):
    (a,) = arrays
    z = np.exp(-np.abs(a))
    out = np.where(a >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g):
        return [g * out * (1.0 - out)]

    return out, backward


@primitive("tanh")
def _tanh(arrays, attrs):
    (a,) = arrays
    out = np.tanh(a)

    def backward(g):
        return [g * (1.0 - out * out)]

    return out, backward


@primitive("exp")
def _exp(arrays, attrs):
    (a,) = arrays
    clamped = a > EXP_CLAMP
    n_clamped = int(clamped.sum())
    if n_clamped:
        _diagnostics["exp_clamps"] += n_clamped
        a = np.minimum(a, EXP_CLAMP)
    out = np.exp(a)

    def backward(g):
        grad = g * out
        if n_clamped:
            grad = np.where(clamped, 0.0, grad)
        return [grad]

    return out, backward


@primitive("log")
def _log(arrays, attrs):
    (a,) = arrays
    floor = attrs.get("floor")
    x = a if floor is None else np.maximum(a, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x)

    def backward(g):
        grad = g / x
        if floor is not None:
            grad = np.where(a > floor, grad, 0.0)
        return [grad]

    return out, backward


@primitive("softmax")
def _softmax(arrays, attrs):
    (a,) = arrays
    axis = attrs.get("axis", -1)
    shifted = a - a.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return [out * (g - dot)]

    return out, backward


@primitive("concat")
def _concat(arrays, attrs):
    axis = attrs.get("axis", 0)
    ndim = arrays[0].ndim
    for a in arrays[1:]:
        if a.ndim != ndim:
            raise DimensionError("concat: rank mismatch")
    out = np.concatenate(arrays, axis=axis)
    sizes = [a.shape[axis] for a in arrays]

    def backward(g):
        return [piece.copy() for piece in np.split(g, np.cumsum(sizes)[:-1], axis=axis)]

    return out, backward


@primitive("slice")
def _slice(arrays, attrs):
    (a,) = arrays
    key = attrs["key"]
    if not isinstance(key, tuple):
        key = (key,)
    for k in key:
        if not isinstance(k, slice):
            raise ContractError("slice: key must be a tuple of slice objects")
    out = a[key].copy()

    def backward(g):
        grad = np.zeros_like(a)
        grad[key] = g
        return [grad]

    return out, backward


@primitive("gather_rows")
def _gather_rows(arrays, attrs):
    (a,) = arrays
    idx = np.asarray(attrs["indices"], dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise DimensionError("gather_rows: index out of range")
    out = a[idx].copy()

    def backward(g):
        grad = np.zeros_like(a)
        np.add.at(grad, idx, g)
        return [grad]

    return out, backward


@primitive("embedding-lookup")
def _embedding_lookup(arrays, attrs):
    (table,) = arrays
    idx = np.asarray(attrs["indices"], dtype=np.intp)
    if table.ndim != 2:
        raise DimensionError("embedding-lookup: table must be 2-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise DimensionError("embedding-lookup: index out of range")
    out = table[idx].copy()

    def backward(g):
        grad = np.zeros_like(table)
        np.add.at(grad, idx, g)
        return [grad]

    return out, backward


def _conv_cols(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """im2col with a sliding-window view; returns [n, oh*ow, ci*kh*kw]."""
    n, ci, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [n, ci, oh, ow, kh, kw]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, ci * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def _cols_to_image(gcols, xshape, kh, kw, stride, padding):
    """Scatter column gradients back to image layout (inverse of im2col)."""
    n, ci, h, w = xshape
    hp, wp = h + 2 * padding, w + 2 * padding
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    g = gcols.reshape(n, oh, ow, ci, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    gx = np.zeros((n, ci, hp, wp))
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += g[:, :, i, j]
    if padding:
        gx = gx[:, :, padding : padding + h, padding : padding + w]
    return gx


@primitive("conv2d")
def _conv2d(arrays, attrs):
    x, k = arrays[0], arrays[1]
    bias = arrays[2] if len(arrays) > 2 else None
    stride = int(attrs.get("stride", 1))
    padding = int(attrs.get("padding", 0))
    if x.ndim != 4 or k.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input/kernel, got {x.shape}, {k.shape}")
    if x.shape[1] != k.shape[1]:
        raise DimensionError(f"conv2d: channel mismatch {x.shape} vs {k.shape}")
    co, ci, kh, kw = k.shape
    cols, oh, ow = _conv_cols(x, kh, kw, stride, padding)
    kmat = k.reshape(co, ci * kh * kw)
    out = (cols @ kmat.T).transpose(0, 2, 1).reshape(x.shape[0], co, oh, ow)
    if bias is not None:
        out = out + bias.reshape(1, co, 1, 1)

    def backward(g):
        gflat = g.reshape(g.shape[0], co, oh * ow).transpose(0, 2, 1)  # [n, L, co]
        gk = np.einsum("nlo,nlk->ok", gflat, cols).reshape(k.shape)
        gcols = gflat @ kmat
        gx = _cols_to_image(gcols, x.shape, kh, kw, stride, padding)
        grads = [gx, gk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return out, backward


@primitive("maxpool2d")
def _maxpool2d(arrays, attrs):
    (x,) = arrays
    k = int(attrs.get("kernel", 2))
    stride = int(attrs.get("stride", k))
    if x.ndim != 4:
        raise DimensionError(f"maxpool2d: expected 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride].reshape(n, c, oh, ow, k * k)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        grad = np.zeros_like(x)
        hi = (np.arange(oh) * stride)[None, None, :, None] + arg // k
        wi = (np.arange(ow) * stride)[None, None, None, :] + arg % k
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(grad, (ni, ci, hi, wi), g)
        return [grad]

    return out, backward


@primitive("pairwise_sq_dists")
def _pairwise_sq_dists(arrays, attrs):
    (x,) = arrays
    if x.ndim != 2:
        raise DimensionError(f"pairwise_sq_dists: expected [n, d], got {x.shape}")
    sq = (x * x).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d = 0.5 * (d + d.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)

    def backward(g):
        s = g + g.T
        return [2.0 * (s.sum(axis=1)[:, None] * x - s @ x)]

    return d, backward


@primitive("const_matmul")
def _const_matmul(arrays, attrs):
    (x,) = arrays
    m = attrs["matrix"]
    if x.ndim != 2 or m.shape[1] != x.shape[0]:
        raise DimensionError(f"const_matmul: {m.shape} @ {x.shape} mismatch")
    out = np.asarray(m @ x)

    def backward(g):
        return [np.asarray(m.T @ g)]

    return out, backward


def _eig_factors(a: np.ndarray):
    """Eigendecomposition with a deterministic jitter when the spectrum is
    nearly degenerate (keeps eigenvector-dependent math well-posed)."""
    lam, u = np.linalg.eigh(a)
    trace = float(np.trace(a))
    gaps = np.diff(lam)
    if lam.size > 1 and gaps.size and gaps.min() < EIG_GAP_GUARD * max(abs(trace), 1.0):
        jitter = EIG_GAP_GUARD * max(abs(trace), 1.0) * np.linspace(0.0, 1.0, a.shape[0])
        lam, u = np.linalg.eigh(a + np.diag(jitter))
    return lam, u


@primitive("spectral_entropy")
def _spectral_entropy(arrays, attrs):
    (a,) = arrays
    alpha = float(attrs["alpha"])
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"spectral_entropy: expected square matrix, got {a.shape}")
    if alpha <= 0 or alpha == 1.0:
        raise ContractError("spectral_entropy: alpha must be positive and != 1")
    sym = 0.5 * (a + a.T)
    lam = np.linalg.eigvalsh(sym)
    kept = lam[lam > EIG_CLAMP]
    # Σλ^α is evaluated in the max-normalized expectation form
    #   log2 Σλ^α = (α-1)·log2 λmax + log2 Σ λ·(λ/λmax)^(α-1)
    # so the 1/(1-α) division never amplifies pow/log rounding: for a flat
    # spectrum the second log is exactly 0 and the entropy is exactly
    # -log2(λmax), and a rank-one spectrum gives exactly 0.
    if kept.size:
        lmax = float(kept.max())
        mean_pow = float((kept * (kept / lmax) ** (alpha - 1.0)).sum())
        gip = lmax ** (alpha - 1.0) * mean_pow
        out = -np.log2(lmax) - np.log2(mean_pow) / (alpha - 1.0)
    else:
        gip = EIG_CLAMP
        out = np.log2(gip) / (1.0 - alpha)
    out = np.asarray(out)

    def backward(g):
        lam_b, u = _eig_factors(sym)
        f = np.where(lam_b > EIG_CLAMP, np.maximum(lam_b, EIG_CLAMP) ** (alpha - 1.0), 0.0)
        d_gip = (u * f[None, :]) @ u.T  # d tr(A^alpha)/dA / alpha
        scale = float(g) * alpha / ((1.0 - alpha) * np.log(2.0) * gip)
        grad = scale * d_gip
        return [0.5 * (grad + grad.T)]

    return out, backward


def apply_primitive(op: str, inputs: Sequence, attrs: Optional[dict] = None) -> Tensor:
    """Run one primitive, recording it on the installed tape when any input
    is differentiable there. Raises DimensionError / NumericError /
    ContractError per the primitive's contract."""
    if op not in _PRIMITIVES:
        raise ContractError(f"unknown primitive '{op}'")
    tensors = [_as_tensor(x) for x in inputs]
    arrays = [t.data for t in tensors]
    out_arr, backward_fn = _PRIMITIVES[op](arrays, attrs or {})
    if not np.all(np.isfinite(out_arr)):
        raise NumericError(f"{op}: non-finite output from finite inputs")
    out = Tensor(out_arr)
    tape = current_tape()
    if tape is not None and not tape.consumed:
        mask = tuple(_differentiable_under(t, tape) for t in tensors)
        if any(mask):
            out.requires_grad = True
            out.tape = tape
            tape.nodes.append(Node(op, tuple(tensors), mask, out.uid, backward_fn))
    return out


def backward(loss: Tensor) -> GradientMap:
    """Reverse sweep from a scalar loss over its recording tape.

    Returns gradients for every requires_grad leaf reachable from the loss;
    the tape is consumed."""
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss.tape
    if tape is None:
        raise ContractError("backward: loss does not belong to any tape")
    if tape.consumed:
        raise TapeReuseError("backward: tape already consumed")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {loss.uid: np.ones_like(loss.data)}
    gmap = GradientMap()
    for node in reversed(tape.nodes):
        g = grads.pop(node.output_uid, None)
        if g is None:
            continue
        gins = node.backward_fn(g)
        for t, gi, wants in zip(node.inputs, gins, node.grad_mask):
            if not wants or gi is None:
                continue
            if t.tape is tape:
                if t.uid in grads:
                    grads[t.uid] = grads[t.uid] + gi
                else:
                    grads[t.uid] = gi
            else:
                gmap._accumulate(t, gi)
    tape.nodes.clear()
    return gmap


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Worst-coordinate relative error between reverse-mode and central
    finite differences of a scalar-valued function at x."""
    if eps <= 0:
        raise ContractError("grad_check: eps must be positive")
    base = np.array(x.data, dtype=np.float64)
    probe = Tensor(base.copy(), requires_grad=True)
    with Tape():
        y = f(probe)
        if y.size != 1:
            raise ContractError("grad_check: f must be scalar-valued")
        gmap = backward(y)
    g = gmap.get(probe)
    analytic = g.data if g is not None else np.zeros_like(base)

    flat = base.reshape(-1)
    numeric = np.zeros_like(flat)
    with stop_recording():
        for i in range(flat.size):
            bump = np.zeros_like(flat)
            bump[i] = eps
            hi = f(Tensor((flat + bump).reshape(base.shape))).item()
            lo = f(Tensor((flat - bump).reshape(base.shape))).item()
            numeric[i] = (hi - lo) / (2.0 * eps)
    numeric = numeric.reshape(base.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())


# Functional wrappers, thin and explicit.

def add(a, b):
    return apply_primitive("add", [a, b])


def sub(a, b):
    return apply_primitive("sub", [a, b])


def mul(a, b):
    return apply_primitive("mul", [a, b])


def matmul(a, b):
    return apply_primitive("matmul", [a, b])


def transpose(a):
    return apply_primitive("transpose", [a])


def reshape(a, shape):
    return apply_primitive("reshape", [a], {"shape": tuple(shape)})


def permute(a, axes):
    return apply_primitive("permute", [a], {"axes": tuple(axes)})


def tsum(a, axis=None, keepdims=False):
    return apply_primitive("sum", [a], {"axis": axis, "keepdims": keepdims})


def tmean(a, axis=None, keepdims=False):
    return apply_primitive("mean", [a], {"axis": axis, "keepdims": keepdims})


def relu(a):
    return apply_primitive("relu", [a])


def sigmoid(a):
    return apply_primitive("sigmoid", [a])


def tanh(a):
    return apply_primitive("tanh", [a])


def exp(a):
    return apply_primitive("exp", [a])


def log(a, floor=None):
    return apply_primitive("log", [a], {"floor": floor})


def softmax(a, axis=-1):
    return apply_primitive("softmax", [a], {"axis": axis})


def concat(tensors, axis=0):
    return apply_primitive("concat", list(tensors), {"axis": axis})


def slice_(a, key):
    return apply_primitive("slice", [a], {"key": key})


def gather_rows(a, indices):
    return apply_primitive("gather_rows", [a], {"indices": indices})


def embedding_lookup(table, indices):
    return apply_primitive("embedding-lookup", [table], {"indices": indices})


def conv2d(x, kernel, bias=None, stride=1, padding=0):
    inputs = [x, kernel] if bias is None else [x, kernel, bias]
    return apply_primitive("conv2d", inputs, {"stride": stride, "padding": padding})


def maxpool2d(x, kernel=2, stride=None):
    return apply_primitive("maxpool2d", [x], {"kernel": kernel, "stride": stride or kernel})


def pairwise_sq_dists(x):
    return apply_primitive("pairwise_sq_dists", [x])


def const_matmul(matrix, x):
    return apply_primitive("const_matmul", [x], {"matrix": matrix})


def spectral_entropy(a, alpha):
    return apply_primitive("spectral_entropy", [a], {"alpha": alpha})

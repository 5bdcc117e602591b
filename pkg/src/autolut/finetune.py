"""Table-aware fine-tuning: analytic gradients through the inference path.

Table entries, sampler logits, and residual blend weights are trained
jointly. Entries live in real-valued shadow form and re-quantize only when
the pipeline is saved; the inter-stage 8-bit rounding is bridged with a
straight-through estimator. Every stage of the forward pass is piecewise
linear, so the backward pass is exact between kinks:

  lookup     d out / d entry_j = w_j        (the interpolation weights)
             d out / d coord   = (E_next - E_prev) / 16 along the sorted walk
  blend      d out / d w       = p_prev - p_curr
  sampling   d out / d logits  = softmax Jacobian applied to the weight grads
"""

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError
from .lut import CELL_WIDTH, TABLE_POINTS, LutTable, simplex_parts
from .pipeline import BranchConfig, GroupConfig, PipelineConfig
from .sampler import SamplerWeights, normalize


@dataclass
class FinetuneConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    patch_size: int = 48  # HR pixels; must divide by the pipeline scale
    steps: int = 0
    seed: int = 0
    quantize: bool = True

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.patch_size) <= 0 or self.steps < 0:
            raise InvalidInputError("finetune config fields must be positive")


# -- shadow parameters --------------------------------------------------------

@dataclass
class BranchParams:
    logits_curr: np.ndarray  # (k, k, 4) f64
    logits_prev: np.ndarray
    residual: np.ndarray     # (2, 2) f64, kept clamped
    entries: np.ndarray      # (83521, C) f64 shadow

    def zeros_like(self):
        return BranchParams(np.zeros_like(self.logits_curr),
                            np.zeros_like(self.logits_prev),
                            np.zeros_like(self.residual),
                            np.zeros_like(self.entries))


def params_from_config(cfg: PipelineConfig):
    groups = []
    for g in cfg.groups:
        groups.append([
            BranchParams(
                logits_curr=b.sampler_curr.logits.copy(),
                logits_prev=b.sampler_prev.logits.copy(),
                residual=b.residual.copy(),
                entries=b.table.flat.astype(np.float64),
            )
            for b in g.branches
        ])
    return groups


def params_to_config(params, cfg: PipelineConfig) -> PipelineConfig:
    """Re-quantize shadow entries and rebuild an inference pipeline."""
    groups = []
    for g_params, g in zip(params, cfg.groups):
        branches = []
        for p in g_params:
            entries = np.clip(np.floor(p.entries + 0.5), 0, 255).astype(np.uint8)
            branches.append(BranchConfig(
                sampler_curr=SamplerWeights(p.logits_curr.copy()),
                sampler_prev=SamplerWeights(p.logits_prev.copy()),
                residual=np.clip(p.residual, 0.0, 1.0),
                table=LutTable.from_flat(entries, g.out_channels),
            ))
        groups.append(GroupConfig(tuple(branches)))
    return PipelineConfig(scale=cfg.scale, groups=tuple(groups), ensemble=cfg.ensemble)


# -- forward with tape --------------------------------------------------------

@dataclass
class _BranchTrace:
    windows_curr: np.ndarray  # (B, H, W, k, k) views of the padded planes
    windows_prev: np.ndarray
    w_curr: np.ndarray        # (k, k, 4) softmax weights
    w_prev: np.ndarray
    quad_curr: np.ndarray     # (B, H, W, 4)
    quad_prev: np.ndarray
    coords: np.ndarray
    vertex_idx: np.ndarray    # (B, H, W, 5)
    weights: np.ndarray       # (B, H, W, 5)
    order: np.ndarray         # (B, H, W, 4)
    vertex_vals: np.ndarray   # (B, H, W, 5, C)


@dataclass
class _GroupTrace:
    in_prev: int   # plane index consumed as X_{n-1}
    in_prev2: int  # plane index consumed as X_{n-2}
    plane_shape: tuple
    branches_per_rot: list  # [rotation][branch] -> _BranchTrace


@dataclass
class Tape:
    cfg_scale: int
    ensemble: bool
    groups: list = field(default_factory=list)  # _GroupTrace
    output: np.ndarray = None


def _pad_batch(planes: np.ndarray, k: int) -> np.ndarray:
    return np.pad(planes, ((0, 0), (0, k - 1), (0, k - 1)), mode="edge")


def _fold_pad_adjoint(grad_padded: np.ndarray, h: int, w: int) -> np.ndarray:
    g = grad_padded[:, :h, :w].copy()
    if grad_padded.shape[1] > h:
        g[:, h - 1, :] += grad_padded[:, h:, :w].sum(axis=1)
    if grad_padded.shape[2] > w:
        g[:, :, w - 1] += grad_padded[:, :h, w:].sum(axis=2)
    if grad_padded.shape[1] > h and grad_padded.shape[2] > w:
        g[:, h - 1, w - 1] += grad_padded[:, h:, w:].sum(axis=(1, 2))
    return g


def lookup_with_trace(entries: np.ndarray, coords: np.ndarray):
    """Float-entry table lookup that records the simplex decomposition.

    The trace carries, per lookup, the 5 vertex indices, their convex
    weights, the sorted dimension order, and the gathered vertex values —
    exactly what the backward pass needs.
    """
    vertex_idx, weights, order = simplex_parts(coords)
    vertex_vals = entries[vertex_idx]  # (..., 5, C)
    out = (weights[..., :, None] * vertex_vals).sum(axis=-2)
    trace = SimpleNamespace(vertex_idx=vertex_idx, weights=weights, order=order,
                            vertex_vals=vertex_vals)
    return out, trace


def _branch_forward(x_prev_pad, x_prev2_pad, p: BranchParams, k: int):
    windows_curr = sliding_window_view(x_prev_pad, (k, k), axis=(1, 2))
    windows_prev = sliding_window_view(x_prev2_pad, (k, k), axis=(1, 2))
    w_curr = normalize(SamplerWeights(p.logits_curr))
    w_prev = normalize(SamplerWeights(p.logits_prev))
    quad_curr = np.einsum("bhwij,ijc->bhwc", windows_curr, w_curr)
    quad_prev = np.einsum("bhwij,ijc->bhwc", windows_prev, w_prev)
    wr = np.clip(p.residual, 0.0, 1.0).reshape(4)
    coords = (1.0 - wr) * quad_curr + wr * quad_prev
    out, lk = lookup_with_trace(p.entries, coords)
    trace = _BranchTrace(windows_curr, windows_prev, w_curr, w_prev,
                         quad_curr, quad_prev, coords, lk.vertex_idx, lk.weights,
                         lk.order, lk.vertex_vals)
    return out, trace


def _d2s_batch(stack: np.ndarray, s: int) -> np.ndarray:
    b, h, w, c = stack.shape
    return stack.reshape(b, h, w, s, s).transpose(0, 1, 3, 2, 4).reshape(b, h * s, w * s)


def _s2d_batch(plane: np.ndarray, s: int) -> np.ndarray:
    b, h, w = plane.shape
    return plane.reshape(b, h // s, s, w // s, s).transpose(0, 1, 3, 2, 4).reshape(
        b, h // s, w // s, s * s)


def _ste_quantize(real: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(real + 0.5), 0.0, 255.0)


def forward(params, cfg: PipelineConfig, batch: np.ndarray, quantize: bool = True) -> Tape:
    """Differentiable pipeline forward on a (B, H, W) batch of planes."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 3:
        raise InvalidInputError("batch must be (B, H, W)")
    tape = Tape(cfg_scale=cfg.scale, ensemble=cfg.ensemble)
    planes = [x]
    n = len(cfg.groups)
    for gi, (g_params, g) in enumerate(zip(params, cfg.groups)):
        final = gi == n - 1
        block = cfg.scale if final else 1
        idx_prev = len(planes) - 1
        idx_prev2 = max(len(planes) - 2, 0)
        rotations = range(4) if cfg.ensemble else (0,)
        gtrace = _GroupTrace(idx_prev, idx_prev2, planes[idx_prev].shape, [])
        terms = []
        for j in rotations:
            a = np.ascontiguousarray(np.rot90(planes[idx_prev], j, axes=(1, 2)))
            b = np.ascontiguousarray(np.rot90(planes[idx_prev2], j, axes=(1, 2)))
            k = g.k
            a_pad = _pad_batch(a, k)
            b_pad = _pad_batch(b, k)
            btraces = []
            stack = None
            for p in g_params:
                out, tr = _branch_forward(a_pad, b_pad, p, k)
                btraces.append(tr)
                stack = out if stack is None else stack + out
            stack = stack / len(g_params)
            gtrace.branches_per_rot.append(btraces)
            if block == 1:
                terms.append(np.rot90(stack[..., 0], -j, axes=(1, 2)))
            else:
                terms.append(np.rot90(_d2s_batch(stack, block), -j, axes=(1, 2)))
        if cfg.ensemble:
            real = ((terms[0] + terms[2]) + (terms[1] + terms[3])) * 0.25
        else:
            real = terms[0]
        tape.groups.append(gtrace)
        if final:
            tape.output = _ste_quantize(real) if quantize else real
            return tape
        planes.append(_ste_quantize(real) if quantize else real)
    raise AssertionError("unreachable")


# -- backward -----------------------------------------------------------------

def grad_lut_entries(upstream: np.ndarray, trace: _BranchTrace, n_channels: int) -> np.ndarray:
    """Scatter upstream output grads onto the <=5 touched entries per lookup."""
    grads = np.zeros((TABLE_POINTS, n_channels))
    for v in range(5):
        np.add.at(grads, trace.vertex_idx[..., v].ravel(),
                  (trace.weights[..., v, None] * upstream).reshape(-1, n_channels))
    return grads


def _grad_coords(upstream: np.ndarray, trace: _BranchTrace) -> np.ndarray:
    # d out / d sorted-fraction i = E_{i+1} - E_i; d fraction / d coord = 1/16
    diffs = (trace.vertex_vals[..., 1:, :] - trace.vertex_vals[..., :-1, :])
    sorted_grads = np.einsum("bhwvc,bhwc->bhwv", diffs, upstream) / CELL_WIDTH
    grads = np.empty_like(sorted_grads)
    np.put_along_axis(grads, trace.order, sorted_grads, axis=-1)
    return grads


def _softmax_logit_grads(weight_grads: np.ndarray, w: np.ndarray) -> np.ndarray:
    inner = (w * weight_grads).sum(axis=(0, 1), keepdims=True)
    return w * (weight_grads - inner)


def _branch_backward(up_stack: np.ndarray, trace: _BranchTrace, p: BranchParams,
                     grads: BranchParams, k: int, h: int, w: int):
    """Accumulate parameter grads; return grads w.r.t. the two padded planes."""
    c = up_stack.shape[-1]
    grads.entries += grad_lut_entries(up_stack, trace, c)
    gcoords = _grad_coords(up_stack, trace)

    wr = np.clip(p.residual, 0.0, 1.0).reshape(4)
    grads.residual += ((trace.quad_prev - trace.quad_curr) * gcoords).sum(
        axis=(0, 1, 2)).reshape(2, 2)
    g_quad_curr = gcoords * (1.0 - wr)
    g_quad_prev = gcoords * wr

    gw_curr = np.einsum("bhwij,bhwc->ijc", trace.windows_curr, g_quad_curr)
    gw_prev = np.einsum("bhwij,bhwc->ijc", trace.windows_prev, g_quad_prev)
    grads.logits_curr += _softmax_logit_grads(gw_curr, trace.w_curr)
    grads.logits_prev += _softmax_logit_grads(gw_prev, trace.w_prev)

    batch = up_stack.shape[0]
    gpad_curr = np.zeros((batch, h + k - 1, w + k - 1))
    gpad_prev = np.zeros((batch, h + k - 1, w + k - 1))
    gwin_curr = np.einsum("ijc,bhwc->bhwij", trace.w_curr, g_quad_curr)
    gwin_prev = np.einsum("ijc,bhwc->bhwij", trace.w_prev, g_quad_prev)
    for i in range(k):
        for j in range(k):
            gpad_curr[:, i:i + h, j:j + w] += gwin_curr[:, :, :, i, j]
            gpad_prev[:, i:i + h, j:j + w] += gwin_prev[:, :, :, i, j]
    return gpad_curr, gpad_prev


def backward(tape: Tape, params, cfg: PipelineConfig, upstream: np.ndarray):
    """Gradients of a scalar loss w.r.t. all shadow parameters.

    ``upstream`` is dL/d(output); straight-through across quantization.
    Returns a params-shaped structure of gradients.
    """
    grads = [[p.zeros_like() for p in g] for g in params]
    n = len(cfg.groups)
    plane_grads = {}
    out_grad = upstream
    for gi in range(n - 1, -1, -1):
        g = cfg.groups[gi]
        gtrace = tape.groups[gi]
        final = gi == n - 1
        block = cfg.scale if final else 1
        up = out_grad if final else plane_grads.pop(gi + 1)
        h, w = gtrace.plane_shape[1], gtrace.plane_shape[2]
        rotations = range(4) if cfg.ensemble else (0,)
        scale_term = 0.25 if cfg.ensemble else 1.0
        n_br = len(g.branches)
        for j in rotations:
            t = np.rot90(up * scale_term, j, axes=(1, 2))
            if block == 1:
                up_stack = t[..., None]
            else:
                up_stack = _s2d_batch(np.ascontiguousarray(t), block)
            up_stack = up_stack / n_br
            hj, wj = (h, w) if j % 2 == 0 else (w, h)
            acc_curr = None
            acc_prev = None
            for bi, (p, tr) in enumerate(zip(params[gi], gtrace.branches_per_rot[j if cfg.ensemble else 0])):
                gp_curr, gp_prev = _branch_backward(up_stack, tr, p, grads[gi][bi],
                                                    g.k, hj, wj)
                acc_curr = gp_curr if acc_curr is None else acc_curr + gp_curr
                acc_prev = gp_prev if acc_prev is None else acc_prev + gp_prev
            g_curr = np.rot90(_fold_pad_adjoint(acc_curr, hj, wj), -j, axes=(1, 2))
            g_prev = np.rot90(_fold_pad_adjoint(acc_prev, hj, wj), -j, axes=(1, 2))
            for idx, gplane in ((gtrace.in_prev, g_curr), (gtrace.in_prev2, g_prev)):
                if idx == 0:
                    continue  # input plane: no parameters upstream
                if idx in plane_grads:
                    plane_grads[idx] = plane_grads[idx] + gplane
                else:
                    plane_grads[idx] = gplane.copy()
    return grads


def grad_sampler_and_residual(tape: Tape, params, cfg: PipelineConfig,
                              upstream: np.ndarray):
    """Logit and residual-weight gradients (chain rule through the tape)."""
    grads = backward(tape, params, cfg, upstream)
    return [
        [{"logits_curr": b.logits_curr, "logits_prev": b.logits_prev,
          "residual": b.residual} for b in g]
        for g in grads
    ]


# -- training loop ------------------------------------------------------------

class Adam:
    """Plain Adam (bias-corrected, no weight decay) over a list of arrays.

    ``lr_scales`` rescales the step per array: table entries live in [0, 255]
    while the loss is computed in [0, 1] intensity, so their steps scale by
    255 — equivalent to training normalized entries at the base rate.
    """

    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, flat_params, flat_grads, lr_scales=None):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in flat_params]
            self.v = [np.zeros_like(p) for p in flat_params]
        if lr_scales is None:
            lr_scales = [1.0] * len(flat_params)
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, g, m, v, s in zip(flat_params, flat_grads, self.m, self.v, lr_scales):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr * s) * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


ENTRY_LR_SCALE = 255.0


def _flatten(params):
    out = []
    for g in params:
        for b in g:
            out.extend([b.logits_curr, b.logits_prev, b.residual, b.entries])
    return out


def _lr_scales(params):
    out = []
    for g in params:
        for _ in g:
            out.extend([1.0, 1.0, 1.0, ENTRY_LR_SCALE])
    return out


def batch_loss_and_grads(params, cfg: PipelineConfig, lr_batch, hr_batch,
                         quantize=True):
    """MSE in [0,1] intensity scale; returns (loss, grads)."""
    tape = forward(params, cfg, lr_batch, quantize=quantize)
    hr = np.asarray(hr_batch, dtype=np.float64)
    diff = (tape.output - hr) / 255.0
    loss = float(np.mean(diff * diff))
    upstream = 2.0 * diff / (255.0 * diff.size)
    return loss, backward(tape, params, cfg, upstream)


def finetune(cfg: PipelineConfig, dataset, ft: FinetuneConfig):
    """Fine-tune a pipeline on (lr_plane, hr_plane) pairs.

    Returns (updated PipelineConfig, loss curve). The loss recorded at each
    step is the batch MSE before that step's update.
    """
    pairs = list(dataset)
    if not pairs:
        raise InvalidInputError("empty dataset")
    s = cfg.scale
    if ft.patch_size % s:
        raise InvalidInputError(f"patch size {ft.patch_size} must divide by scale {s}")
    lr_patch = ft.patch_size // s
    for lr_img, hr_img in pairs:
        if hr_img.shape != (lr_img.shape[0] * s, lr_img.shape[1] * s):
            raise InvalidInputError("LR/HR pair dims inconsistent with scale")
        if min(lr_img.shape) < lr_patch:
            raise InvalidInputError(f"image smaller than {lr_patch}x{lr_patch} LR patch")

    params = params_from_config(cfg)
    rng = np.random.default_rng(ft.seed)
    opt = Adam(ft.learning_rate)
    curve = []
    for _ in range(ft.steps):
        lr_batch = np.empty((ft.batch_size, lr_patch, lr_patch))
        hr_batch = np.empty((ft.batch_size, ft.patch_size, ft.patch_size))
        for i in range(ft.batch_size):
            lr_img, hr_img = pairs[rng.integers(len(pairs))]
            r = rng.integers(lr_img.shape[0] - lr_patch + 1)
            c = rng.integers(lr_img.shape[1] - lr_patch + 1)
            lr_batch[i] = lr_img[r:r + lr_patch, c:c + lr_patch]
            hr_batch[i] = hr_img[r * s:(r + lr_patch) * s, c * s:(c + lr_patch) * s]
        loss, grads = batch_loss_and_grads(params, cfg, lr_batch, hr_batch,
                                           quantize=ft.quantize)
        curve.append(loss)
        opt.step(_flatten(params), _flatten(grads), _lr_scales(params))
        for g in params:
            for b in g:
                np.clip(b.residual, 0.0, 1.0, out=b.residual)
                if not np.all(np.isfinite(b.entries)):
                    raise ArithmeticError("shadow entries diverged")
    return params_to_config(params, cfg), curve

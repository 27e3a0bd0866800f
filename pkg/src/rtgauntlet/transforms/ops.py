"""Batched implementations of the transform catalog.

Every op has the signature ``op(x, alpha, seed) -> Tensor`` where `x` is a
[B, C, H, W] tensor in [0, 1], `alpha` the sampled strength in the kind's
native units and `seed` drives all auxiliary randomness (noise fields, box
positions, angles).  Auxiliary draws depend only on the input's shape, never
its values, so each op is a pure function of (x, alpha, seed) and is exactly
reproducible.

Differentiable ops avoid hard branches on pixel values: selections go
through soft weights, thresholds through C1 ramps, rounding and modulo
through their cubic-smoothed versions.  That keeps analytic input gradients
consistent with central finite differences instead of only almost
everywhere.
"""

import math

import torch
import torch.nn.functional as F
from torch import Tensor

from .smooth import (
    smooth_abs,
    smooth_mod,
    smooth_round,
    smoothstep,
    softmax_reduce,
    softmax_weights,
    softmin_reduce,
)

# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _gen(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed) & (2**63 - 1))
    return g


def _rand(gen, shape, x: Tensor, lo=0.0, hi=1.0) -> Tensor:
    # draws are made in float32 regardless of x.dtype so that a transform
    # evaluated at higher precision sees the exact same realization
    u = torch.rand(shape, generator=gen, dtype=torch.float32)
    return (lo + (hi - lo) * u).to(dtype=x.dtype, device=x.device)


def _randn(gen, shape, x: Tensor) -> Tensor:
    return torch.randn(shape, generator=gen, dtype=torch.float32).to(dtype=x.dtype, device=x.device)


def _clamp(x: Tensor) -> Tensor:
    return torch.clamp(x, 0.0, 1.0)


def _odd_size(alpha: float, max_k: int) -> int:
    k = 2 * int(round((alpha - 1.0) / 2.0)) + 1
    return max(1, min(k, max_k))


def _depthwise_conv(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel conv with reflect padding; kernel [k, k] or [B, k, k]."""
    b, c, h, w = x.shape
    k = kernel.shape[-1]
    pad = k // 2
    xp = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    if kernel.dim() == 2:
        weight = kernel.expand(c, 1, k, k).reshape(c, 1, k, k)
        return F.conv2d(xp, weight, groups=c)
    # per-image kernels: fold batch into channel groups
    weight = kernel[:, None, None].expand(b, c, 1, k, k).reshape(b * c, 1, k, k)
    out = F.conv2d(xp.reshape(1, b * c, h + 2 * pad, w + 2 * pad), weight, groups=b * c)
    return out.reshape(b, c, h, w)


def _mesh(h: int, w: int, x: Tensor):
    ys = torch.linspace(-1.0, 1.0, h, dtype=x.dtype, device=x.device)
    xs = torch.linspace(-1.0, 1.0, w, dtype=x.dtype, device=x.device)
    return torch.meshgrid(ys, xs, indexing="ij")


def _color_matmul(x: Tensor, m) -> Tensor:
    mat = torch.as_tensor(m, dtype=x.dtype, device=x.device)
    return torch.einsum("rc,bchw->brhw", mat, x)


# --------------------------------------------------------------------------
# noise injection
# --------------------------------------------------------------------------


def erase(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Zero out a box of side fraction alpha at a random location."""
    b, _, h, w = x.shape
    gen = _gen(seed)
    # box geometry resolved in float32 so the mask is dtype-independent
    cy = torch.rand((b, 1, 1, 1), generator=gen, dtype=torch.float32)
    cx = torch.rand((b, 1, 1, 1), generator=gen, dtype=torch.float32)
    hh = 0.5 * alpha
    ys = torch.linspace(0.0, 1.0, h, dtype=torch.float32)
    xs = torch.linspace(0.0, 1.0, w, dtype=torch.float32)
    ii, jj = torch.meshgrid(ys, xs, indexing="ij")
    inside = ((ii[None, None] - cy).abs() <= hh) & ((jj[None, None] - cx).abs() <= hh)
    return x * (~inside).to(dtype=x.dtype, device=x.device)


def gaussian_noise(x: Tensor, alpha: float, seed: int) -> Tensor:
    return _clamp(x + alpha * _randn(_gen(seed), x.shape, x))


def pepper(x: Tensor, alpha: float, seed: int) -> Tensor:
    b, _, h, w = x.shape
    drop = (_rand(_gen(seed), (b, 1, h, w), x) < alpha).to(x.dtype)
    return x * (1.0 - drop)


def poisson_noise(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Gaussian approximation with intensity-dependent variance, so the
    noise keeps a gradient path through x."""
    std = torch.sqrt(torch.clamp(x, min=1e-3))
    return _clamp(x + alpha * std * _randn(_gen(seed), x.shape, x))


def salt(x: Tensor, alpha: float, seed: int) -> Tensor:
    b, _, h, w = x.shape
    up = (_rand(_gen(seed), (b, 1, h, w), x) < alpha).to(x.dtype)
    return x * (1.0 - up) + up


def speckle_noise(x: Tensor, alpha: float, seed: int) -> Tensor:
    return _clamp(x * (1.0 + alpha * _randn(_gen(seed), x.shape, x)))


def uniform_noise(x: Tensor, alpha: float, seed: int) -> Tensor:
    return _clamp(x + alpha * _rand(_gen(seed), x.shape, x, -1.0, 1.0))


# --------------------------------------------------------------------------
# blur filtering
# --------------------------------------------------------------------------


def box_blur(x: Tensor, alpha: float, seed: int) -> Tensor:
    k = _odd_size(alpha, 7)
    if k == 1:
        return x
    kernel = torch.full((k, k), 1.0 / (k * k), dtype=x.dtype, device=x.device)
    return _clamp(_depthwise_conv(x, kernel))


def gaussian_blur(x: Tensor, alpha: float, seed: int) -> Tensor:
    sigma = max(float(alpha), 1e-3)
    k = min(7, x.shape[-1] - (1 - x.shape[-1] % 2))
    r = torch.arange(k, dtype=x.dtype, device=x.device) - (k - 1) / 2.0
    g1 = torch.exp(-0.5 * (r / sigma) ** 2)
    g1 = g1 / g1.sum()
    kernel = g1[:, None] * g1[None, :]
    return _clamp(_depthwise_conv(x, kernel))


def median_blur(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Soft median: windows are reduced with weights peaked at the value of
    least total distance to the others.  Smooth, unlike a sorting median."""
    k = _odd_size(alpha, 5)
    if k == 1:
        return x
    b, c, h, w = x.shape
    pad = k // 2
    xp = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    win = xp.unfold(2, k, 1).unfold(3, k, 1).reshape(b, c, h, w, k * k)
    dist = smooth_abs(win[..., :, None] - win[..., None, :], 3e-3).sum(-1)
    wgt = torch.softmax(-12.0 * dist, dim=-1)
    return _clamp((wgt * win).sum(-1))


def motion_blur(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Blur along a random per-image direction with line length alpha."""
    b = x.shape[0]
    k = _odd_size(alpha, 7)
    if k == 1:
        return x
    gen = _gen(seed)
    theta = _rand(gen, (b,), x, 0.0, 2.0 * math.pi)
    r = torch.arange(k, dtype=x.dtype, device=x.device) - (k - 1) / 2.0
    ii = r[:, None].expand(k, k)
    jj = r[None, :].expand(k, k)
    dx, dy = torch.cos(theta), torch.sin(theta)
    # soft anti-aliased line of width ~1px through the kernel center
    along = jj[None] * dx[:, None, None] + ii[None] * dy[:, None, None]
    across = -jj[None] * dy[:, None, None] + ii[None] * dx[:, None, None]
    line = torch.exp(-2.0 * across**2) * (along.abs() <= (k - 1) / 2.0).to(x.dtype)
    line = line / line.sum(dim=(-2, -1), keepdim=True)
    return _clamp(_depthwise_conv(x, line))


# --------------------------------------------------------------------------
# color-space alteration
# --------------------------------------------------------------------------

_YUV = [[0.299, 0.587, 0.114], [-0.14713, -0.28886, 0.436], [0.615, -0.51499, -0.10001]]
_YUV_INV = [[1.0, 0.0, 1.13983], [1.0, -0.39465, -0.5806], [1.0, 2.03211, 0.0]]
_XYZ = [[0.412453, 0.35758, 0.180423], [0.212671, 0.71516, 0.072169], [0.019334, 0.119193, 0.950227]]
_XYZ_INV = [[3.240481, -1.537152, -0.498536], [-0.969255, 1.87599, 0.041556], [0.055647, -0.204041, 1.057311]]
_LAB_WHITE = (0.950456, 1.0, 1.088754)

_HSV_SHARP = 25.0
_HSV_FLOOR = 0.05


def rgb_to_hsv_smooth(x: Tensor):
    """Smooth hue/saturation/value: soft extrema instead of max/min, soft
    sector selection, smooth modulo for the hue wrap.  Hue is on a [0, 6)
    scale; consumers must treat it 6-periodically."""
    v = softmax_reduce(x, 1, _HSV_SHARP).unsqueeze(1)
    m = softmin_reduce(x, 1, _HSV_SHARP).unsqueeze(1)
    delta = v - m + _HSV_FLOOR
    w = softmax_weights(x, 1, _HSV_SHARP)
    r, g, b = x[:, 0:1], x[:, 1:2], x[:, 2:3]
    hr = (g - b) / delta
    hg = 2.0 + (b - r) / delta
    hb = 4.0 + (r - g) / delta
    h6 = smooth_mod(w[:, 0:1] * hr + w[:, 1:2] * hg + w[:, 2:3] * hb, 6.0)
    s = (v - m) / (v + _HSV_FLOOR)
    return h6, s, v


# Low-order Fourier fit of the hue response trapezoid; periodic in the hue
# angle, so wrapped hue values need no second modulo on the way back.
_HUE_C1 = 6.0 / math.pi**2
_HUE_C3 = -4.0 / (3.0 * math.pi**2)
_HUE_C5 = 6.0 / (25.0 * math.pi**2)


def hsv_to_rgb_smooth(h6: Tensor, s: Tensor, v: Tensor) -> Tensor:
    chans = []
    for n in (5.0, 3.0, 1.0):  # r, g, b channel offsets
        u = (n + h6 - 2.0) * (math.pi / 3.0)
        ramp = 0.5 + _HUE_C1 * torch.cos(u) + _HUE_C3 * torch.cos(3.0 * u) + _HUE_C5 * torch.cos(5.0 * u)
        chans.append(v * (1.0 - s * ramp))
    return torch.cat(chans, dim=1)


def hsv_alter(x: Tensor, alpha: float, seed: int) -> Tensor:
    b, _, h, w = x.shape
    gen = _gen(seed)
    nh = _rand(gen, (b, 1, h, w), x, -1.0, 1.0)
    ns = _rand(gen, (b, 1, h, w), x, -1.0, 1.0)
    nv = _rand(gen, (b, 1, h, w), x, -1.0, 1.0)
    h6, s, v = rgb_to_hsv_smooth(x)
    h6 = smooth_mod(h6 + 3.0 * alpha * nh, 6.0)
    return _clamp(hsv_to_rgb_smooth(h6, s + alpha * ns, v + alpha * nv))


def _lab_f(t: Tensor) -> Tensor:
    # smooth cube root; the small shift keeps the derivative finite at 0
    return (t + 1e-3) ** (1.0 / 3.0)


def lab_alter(x: Tensor, alpha: float, seed: int) -> Tensor:
    b, _, h, w = x.shape
    xyz = _color_matmul(x, _XYZ)
    white = torch.as_tensor(_LAB_WHITE, dtype=x.dtype, device=x.device)[None, :, None, None]
    f = _lab_f(xyz / white)
    fx, fy, fz = f[:, 0:1], f[:, 1:2], f[:, 2:3]
    lab = torch.cat([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], dim=1)
    lab = lab + 25.0 * alpha * _rand(_gen(seed), (b, 3, h, w), x, -1.0, 1.0)
    fy2 = (lab[:, 0:1] + 16.0) / 116.0
    fx2 = fy2 + lab[:, 1:2] / 500.0
    fz2 = fy2 - lab[:, 2:3] / 200.0
    xyz2 = torch.cat([fx2**3 - 1e-3, fy2**3 - 1e-3, fz2**3 - 1e-3], dim=1) * white
    return _clamp(_color_matmul(xyz2, _XYZ_INV))


def xyz_alter(x: Tensor, alpha: float, seed: int) -> Tensor:
    b, _, h, w = x.shape
    xyz = _color_matmul(x, _XYZ) + alpha * _rand(_gen(seed), (b, 3, h, w), x, -1.0, 1.0)
    return _clamp(_color_matmul(xyz, _XYZ_INV))


def yuv_alter(x: Tensor, alpha: float, seed: int) -> Tensor:
    b, _, h, w = x.shape
    yuv = _color_matmul(x, _YUV) + alpha * _rand(_gen(seed), (b, 3, h, w), x, -1.0, 1.0)
    return _clamp(_color_matmul(yuv, _YUV_INV))


def gray_mix(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Collapse to gray with random channel proportions."""
    b = x.shape[0]
    w = _rand(_gen(seed), (b, 3, 1, 1), x, 0.05, 1.0)
    w = w / w.sum(dim=1, keepdim=True)
    gray = (w * x).sum(dim=1, keepdim=True)
    return gray.expand_as(x).contiguous()


def gray_partial_mix(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Blend each channel with a random-proportion gray image."""
    b = x.shape[0]
    gen = _gen(seed)
    w = _rand(gen, (b, 3, 1, 1), x, 0.05, 1.0)
    w = w / w.sum(dim=1, keepdim=True)
    gray = (w * x).sum(dim=1, keepdim=True)
    blend = _rand(gen, (b, 3, 1, 1), x)
    return blend * gray + (1.0 - blend) * x


def _channel_picks(gen, b: int):
    """Two distinct channel indices per image plus the leftover one."""
    i = torch.randint(0, 3, (b,), generator=gen)
    j = (i + 1 + torch.randint(0, 2, (b,), generator=gen)) % 3
    k = 3 - i - j
    return i, j, k


def _onehot(idx: Tensor, x: Tensor) -> Tensor:
    return F.one_hot(idx.to(torch.long), 3).to(x.dtype).to(x.device)[:, :, None, None]


def two_channel_gray(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Replace two random channels by their random-proportion mix."""
    b = x.shape[0]
    gen = _gen(seed)
    i, j, _ = _channel_picks(gen, b)
    w = _rand(gen, (b, 1, 1, 1), x)
    ei, ej = _onehot(i, x), _onehot(j, x)
    ci = (ei * x).sum(1, keepdim=True)
    cj = (ej * x).sum(1, keepdim=True)
    mix = w * ci + (1.0 - w) * cj
    keep = 1.0 - ei - ej
    return keep * x + (ei + ej) * mix


def one_channel_partial_gray(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Mix two random channels, then blend the leftover channel with it."""
    b = x.shape[0]
    gen = _gen(seed)
    i, j, k = _channel_picks(gen, b)
    w = _rand(gen, (b, 1, 1, 1), x)
    m = _rand(gen, (b, 1, 1, 1), x)
    ei, ej, ek = _onehot(i, x), _onehot(j, x), _onehot(k, x)
    mix = w * (ei * x).sum(1, keepdim=True) + (1.0 - w) * (ej * x).sum(1, keepdim=True)
    ck = (ek * x).sum(1, keepdim=True)
    return (1.0 - ek) * x + ek * (m * mix + (1.0 - m) * ck)


# --------------------------------------------------------------------------
# edge detection
# --------------------------------------------------------------------------

_LAPLACIAN_K = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]
_SOBEL_X = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
_SOBEL_Y = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]


def laplacian(x: Tensor, alpha: float, seed: int) -> Tensor:
    # gain 0.25 keeps the response of [0,1] inputs inside [-0.5, 0.5]
    k = torch.as_tensor(_LAPLACIAN_K, dtype=x.dtype, device=x.device)
    return _clamp(0.5 + 0.25 * _depthwise_conv(x, k))


def sobel(x: Tensor, alpha: float, seed: int) -> Tensor:
    kx = torch.as_tensor(_SOBEL_X, dtype=x.dtype, device=x.device)
    ky = torch.as_tensor(_SOBEL_Y, dtype=x.dtype, device=x.device)
    gx = _depthwise_conv(x, kx)
    gy = _depthwise_conv(x, ky)
    return _clamp(torch.sqrt(gx * gx + gy * gy + 1e-4) * 0.25)


# --------------------------------------------------------------------------
# lossy compression
# --------------------------------------------------------------------------

_JPEG_QY = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
]
_JPEG_QC = [
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
]


def _dct_matrix(x: Tensor) -> Tensor:
    i = torch.arange(8, dtype=x.dtype, device=x.device)
    d = torch.cos((2.0 * i[None, :] + 1.0) * i[:, None] * math.pi / 16.0)
    d[0] *= math.sqrt(0.5)
    return d * 0.5


def _block_dct(v: Tensor, d: Tensor) -> Tensor:
    b, c, hb, wb = v.shape[0], v.shape[1], v.shape[2] // 8, v.shape[3] // 8
    blocks = v.reshape(b, c, hb, 8, wb, 8).permute(0, 1, 2, 4, 3, 5)
    return torch.einsum("ij,bchwjk,lk->bchwil", d, blocks, d)


def _block_idct(coef: Tensor, d: Tensor, h: int, w: int) -> Tensor:
    blocks = torch.einsum("ji,bchwjk,kl->bchwil", d, coef, d)
    b, c = blocks.shape[0], blocks.shape[1]
    return blocks.permute(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


_YCC = [[0.299, 0.587, 0.114], [-0.168736, -0.331264, 0.5], [0.5, -0.418688, -0.081312]]
_YCC_INV = [[1.0, 0.0, 1.402], [1.0, -0.344136, -0.714136], [1.0, 1.772, 0.0]]


def jpeg(x: Tensor, alpha: float, seed: int) -> Tensor:
    """JPEG at quality alpha with the rounding step replaced by its smooth
    cubic version; no chroma subsampling."""
    q = min(max(float(alpha), 1.0), 100.0)
    scale = 5000.0 / q if q < 50.0 else 200.0 - 2.0 * q
    b, c, h, w = x.shape
    ph, pw = (-h) % 8, (-w) % 8
    # work in [0, 1] units (quant tables rescaled by 255) to limit fp32
    # round-off; the smooth_round argument is unchanged
    shift = torch.as_tensor([0.5, 0.0, 0.0], dtype=x.dtype, device=x.device)[None, :, None, None]
    ycc = _color_matmul(x, _YCC) - shift
    v = F.pad(ycc, (0, pw, 0, ph), mode="reflect") if (ph or pw) else ycc
    d = _dct_matrix(x)
    coef = _block_dct(v, d)
    qtab = jpeg_quant_tables(x, scale)
    coef = smooth_round(coef / qtab) * qtab
    out = _block_idct(coef, d, h + ph, w + pw)[:, :, :h, :w] + shift
    return _clamp(_color_matmul(out, _YCC_INV))


def jpeg_quant_tables(x: Tensor, scale: float) -> Tensor:
    qy = torch.as_tensor(_JPEG_QY, dtype=x.dtype, device=x.device)
    qc = torch.as_tensor(_JPEG_QC, dtype=x.dtype, device=x.device)
    qtab = torch.stack([qy, qc, qc])  # [3, 8, 8]
    return torch.clamp(qtab * scale / 100.0, 1.0, 255.0)[None, :, None, None] / 255.0


def color_precision_reduction(x: Tensor, alpha: float, seed: int) -> Tensor:
    bins = max(2, int(round(alpha)))
    return _clamp(smooth_round(x * (bins - 1)) / (bins - 1))


def fft_perturbation(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Drop each frequency component with probability alpha (DC kept)."""
    keep = (_rand(_gen(seed), x.shape, x) >= alpha).to(x.dtype)
    keep[..., 0, 0] = 1.0
    spec = torch.fft.fft2(x, norm="ortho") * keep
    return _clamp(torch.fft.ifft2(spec, norm="ortho").real)


# --------------------------------------------------------------------------
# geometric
# --------------------------------------------------------------------------


def _grid_sample(x: Tensor, grid: Tensor) -> Tensor:
    return F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros", align_corners=False)


def affine(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Random rotation up to alpha degrees with proportional translate/scale."""
    b = x.shape[0]
    gen = _gen(seed)
    ang = _rand(gen, (b,), x, -1.0, 1.0) * alpha * math.pi / 180.0
    tx = _rand(gen, (b,), x, -1.0, 1.0) * 0.004 * alpha
    ty = _rand(gen, (b,), x, -1.0, 1.0) * 0.004 * alpha
    sc = 1.0 + _rand(gen, (b,), x, -1.0, 1.0) * 0.006 * alpha
    cos, sin = torch.cos(ang) * sc, torch.sin(ang) * sc
    theta = torch.stack(
        [torch.stack([cos, -sin, tx], dim=1), torch.stack([sin, cos, ty], dim=1)], dim=1
    )
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    return _grid_sample(x, grid)


def crop(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Random crop retaining side fraction alpha, resized back."""
    b = x.shape[0]
    frac = min(max(float(alpha), 0.05), 1.0)
    gen = _gen(seed)
    ox = _rand(gen, (b,), x) * (1.0 - frac)
    oy = _rand(gen, (b,), x) * (1.0 - frac)
    cx = 2.0 * (ox + frac / 2.0) - 1.0
    cy = 2.0 * (oy + frac / 2.0) - 1.0
    z = torch.zeros_like(cx)
    f = torch.full_like(cx, frac)
    theta = torch.stack([torch.stack([f, z, cx], dim=1), torch.stack([z, f, cy], dim=1)], dim=1)
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    return _grid_sample(x, grid)


def hflip(x: Tensor, alpha: float, seed: int) -> Tensor:
    return x.flip(-1)


def vflip(x: Tensor, alpha: float, seed: int) -> Tensor:
    return x.flip(-2)


def swirl(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Rotate pixels around a random center by an angle decaying with radius."""
    b, _, h, w = x.shape
    gen = _gen(seed)
    cy = _rand(gen, (b, 1, 1), x, -0.3, 0.3)
    cx = _rand(gen, (b, 1, 1), x, -0.3, 0.3)
    rad = _rand(gen, (b, 1, 1), x, 0.4, 0.9)
    ii, jj = _mesh(h, w, x)
    ry = ii[None] - cy
    rx = jj[None] - cx
    r2 = rx * rx + ry * ry
    ang = alpha * torch.exp(-r2 / (rad * rad))
    cos, sin = torch.cos(ang), torch.sin(ang)
    sx = cx + cos * rx - sin * ry
    sy = cy + sin * rx + cos * ry
    grid = torch.stack([sx, sy], dim=-1)
    return _grid_sample(x, grid)


# --------------------------------------------------------------------------
# stylization
# --------------------------------------------------------------------------


def color_jitter(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Brightness/contrast/saturation scaling plus a hue shift through the
    smooth-modulo hue representation."""
    b = x.shape[0]
    gen = _gen(seed)
    fb = 1.0 + alpha * _rand(gen, (b, 1, 1, 1), x, -1.0, 1.0)
    fc = 1.0 + alpha * _rand(gen, (b, 1, 1, 1), x, -1.0, 1.0)
    fs = 1.0 + alpha * _rand(gen, (b, 1, 1, 1), x, -1.0, 1.0)
    fh = 0.6 * alpha * _rand(gen, (b, 1, 1, 1), x, -1.0, 1.0)
    out = x * fb
    luma = (out * torch.as_tensor([0.299, 0.587, 0.114], dtype=x.dtype, device=x.device)[None, :, None, None]).sum(1, keepdim=True)
    out = fc * out + (1.0 - fc) * luma.mean(dim=(-2, -1), keepdim=True)
    out = fs * out + (1.0 - fs) * luma
    h6, s, v = rgb_to_hsv_smooth(out)
    out = hsv_to_rgb_smooth(smooth_mod(h6 + fh, 6.0), s, v)
    return _clamp(out)


def gamma(x: Tensor, alpha: float, seed: int) -> Tensor:
    b = x.shape[0]
    g = torch.exp(alpha * _rand(_gen(seed), (b, 1, 1, 1), x, -1.0, 1.0))
    return _clamp(torch.clamp(x, min=1e-4) ** g)


def sharpen(x: Tensor, alpha: float, seed: int) -> Tensor:
    soft = gaussian_blur(x, 1.0, seed)
    return _clamp(x + alpha * (x - soft))


def solarize(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Invert pixels above threshold alpha through a C1 ramp of width 0.08;
    at threshold 1.0 the ramp never engages and the op is the identity."""
    w = smoothstep(x, float(alpha), 0.08)
    return _clamp(x + w * (1.0 - 2.0 * x))


# --------------------------------------------------------------------------
# non-differentiable kinds (forward only; attacks must go through surrogates)
# --------------------------------------------------------------------------


def histogram_equalization(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Classic histogram equalization with a random bin count."""
    with torch.no_grad():
        b, c, h, w = x.shape
        nb = int(2 ** torch.randint(5, 9, (1,), generator=_gen(seed)).item())
        idx = torch.clamp((x * nb).long(), max=nb - 1)
        flat_idx = idx.reshape(b * c, h * w)
        counts = torch.zeros(b * c, nb, dtype=x.dtype)
        counts.scatter_add_(1, flat_idx, torch.ones_like(flat_idx, dtype=x.dtype))
        cdf = torch.cumsum(counts, dim=1)
        cdf = cdf / cdf[:, -1:].clamp(min=1.0)
        out = torch.gather(cdf, 1, flat_idx).reshape(b, c, h, w)
    return _clamp(out.to(x.dtype))


def adaptive_histogram(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Rank-equalize intensities inside patches of a random grid size."""
    with torch.no_grad():
        b, c, h, w = x.shape
        g = int(2 ** torch.randint(1, 3, (1,), generator=_gen(seed)).item())
        g = min(g, h, w)
        hp, wp = h // g, w // g
        hc, wc = hp * g, wp * g
        v = x[:, :, :hc, :wc].reshape(b, c, g, hp, g, wp).permute(0, 1, 2, 4, 3, 5)
        flat = v.reshape(b, c, g, g, hp * wp)
        ranks = flat.argsort(dim=-1).argsort(dim=-1).to(x.dtype)
        eq = ranks / max(hp * wp - 1, 1)
        eq = eq.reshape(b, c, g, g, hp, wp).permute(0, 1, 2, 4, 3, 5).reshape(b, c, hc, wc)
        out = x.clone()
        out[:, :, :hc, :wc] = eq
    return _clamp(out)


def contrast_stretching(x: Tensor, alpha: float, seed: int) -> Tensor:
    """Rescale intensities between two random percentile anchors."""
    with torch.no_grad():
        b = x.shape[0]
        gen = _gen(seed)
        qlo = _rand(gen, (b,), x, 0.0, 0.15)
        qhi = _rand(gen, (b,), x, 0.85, 1.0)
        flat = x.reshape(b, -1).sort(dim=1).values
        n = flat.shape[1]
        lo_idx = (qlo * (n - 1)).round().long()
        hi_idx = (qhi * (n - 1)).round().long()
        rows = torch.arange(b, device=x.device)
        lo = flat[rows, lo_idx][:, None, None, None]
        hi = flat[rows, hi_idx][:, None, None, None]
        out = (x - lo) / (hi - lo).clamp(min=1e-3)
    return _clamp(out)

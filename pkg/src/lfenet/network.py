"""The stereo enhancement network.

Both views travel through one set of weights. A low-light image and its
side-window-filtered low-frequency part are fused into a 6-channel "new
image space" by a channel-attention block (IEM), encoded at four scales
(channels double as resolution halves), cross-linked between views by
parallax attention along epipolar rows at the three largest scales
(CVMI), fused across scales (CSFI), and decoded back to an RGB residual
image. The workhorse block everywhere is the two-stage CSM: a spatial
stage (1x1 conv, large-kernel conv, channel attention, residual add) and
a channel stage (1x1 expansion, simple gate, 1x1 compression, residual
add).

Every structural choice is a config toggle so ablation rows are exact
parameter-set differences, not dead weights.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, NumericError
from .filters import SideWindowSpec, side_window_box_filter

__all__ = [
    "NetworkConfig", "ParameterStore", "AttentionPair",
    "ABLATION_IDS", "ablation_config",
    "init_parameters", "channel_attention", "iem_forward", "simple_gate",
    "csm_forward", "encoder_forward", "cvmi_forward", "csfi_forward",
    "decoder_forward", "network_forward",
]

ABLATION_IDS = ("full", "no_iem", "no_cvmi", "no_csfi", "no_cvmi_csfi",
                "no_spa", "no_fre", "no_csm1", "no_csm2")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters plus module/loss toggles."""

    base_channels: int = 16
    scales: int = 4
    csm_per_level: int = 1
    ca_reduction: int = 4
    large_kernel: int = 5
    interaction_scales: frozenset = frozenset({1, 2, 3})
    use_iem: bool = True
    use_cvmi: bool = True
    use_csfi: bool = True
    use_csm_stage1: bool = True
    use_csm_stage2: bool = True
    use_fre: bool = True
    use_spa: bool = True

    def __post_init__(self):
        object.__setattr__(self, "interaction_scales", frozenset(self.interaction_scales))
        if self.scales != 4:
            raise ConfigError(f"only the 4-scale layout is supported, got scales={self.scales}")
        if self.base_channels < 1 or self.base_channels % self.ca_reduction != 0:
            raise ConfigError(
                f"base_channels={self.base_channels} must be a positive multiple of "
                f"ca_reduction={self.ca_reduction}")
        if self.csm_per_level < 1:
            raise ConfigError(f"csm_per_level must be >= 1, got {self.csm_per_level}")
        if self.large_kernel < 3 or self.large_kernel % 2 == 0:
            raise ConfigError(f"large_kernel must be odd and >= 3, got {self.large_kernel}")
        allowed = set(range(1, self.scales))
        if not set(self.interaction_scales) <= allowed:
            raise ConfigError(
                f"interaction_scales {sorted(self.interaction_scales)} must be a subset of {sorted(allowed)}")
        if not (self.use_fre or self.use_spa):
            raise ConfigError("at least one of use_fre/use_spa must stay enabled")

    def channels(self, scale):
        """Feature channels at 1-indexed scale: base doubling per scale."""
        if not 1 <= scale <= self.scales:
            raise ContractError(f"scale {scale} outside 1..{self.scales}")
        return self.base_channels * 2 ** (scale - 1)

    @property
    def in_channels(self):
        return 6 if self.use_iem else 3


def ablation_config(base, ablation_id):
    """The NetworkConfig for one ablation row of the study grid."""
    toggles = {
        "full": {},
        "no_iem": {"use_iem": False},
        "no_cvmi": {"use_cvmi": False},
        "no_csfi": {"use_csfi": False},
        "no_cvmi_csfi": {"use_cvmi": False, "use_csfi": False},
        "no_spa": {"use_spa": False},
        "no_fre": {"use_fre": False},
        "no_csm1": {"use_csm_stage1": False},
        "no_csm2": {"use_csm_stage2": False},
    }
    if ablation_id not in toggles:
        raise ConfigError(f"unknown ablation id {ablation_id!r}; valid: {', '.join(ABLATION_IDS)}")
    return replace(base, **toggles[ablation_id])


class ParameterStore:
    """Ordered map from dotted parameter path to a trainable Tensor.

    There is exactly one store per model; the left and right view streams
    resolve every path to the same entry, which is what makes the two
    branches weight-shared.
    """

    def __init__(self):
        self._params = {}

    def add(self, path, tensor_):
        if path in self._params:
            raise ContractError(f"duplicate parameter path {path!r}")
        self._params[path] = tensor_

    def __getitem__(self, path):
        try:
            return self._params[path]
        except KeyError:
            raise ContractError(f"unknown parameter path {path!r}")

    def __contains__(self, path):
        return path in self._params

    def __len__(self):
        return len(self._params)

    def paths(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def total_parameters(self):
        return sum(t.size for t in self._params.values())

    def zero_grads(self):
        for t in self._params.values():
            t.zero_grad()


@dataclass
class AttentionPair:
    """Row-wise attention maps between the views at one scale.

    t_r2l carries right-to-left transfer weights (queries from the left
    view), t_l2r the reverse; both are (N, H, W, W) with each last-axis
    slice a probability distribution over source columns.
    """

    t_r2l: T.Tensor
    t_l2r: T.Tensor

    def validate(self, tol=1e-5):
        for name, t in (("t_r2l", self.t_r2l), ("t_l2r", self.t_l2r)):
            if not np.isfinite(t.data).all():
                raise NumericError(f"attention map {name} contains non-finite values")
            sums = t.data.sum(axis=-1)
            err = float(np.abs(sums - 1.0).max())
            if err > tol:
                raise NumericError(f"attention map {name} is not row-stochastic: max |sum-1| = {err:.3g}")


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------

# He scale halved: the gate stage squares feature magnitudes, so the
# network is only stable when features stay below 1; plain He init tips
# deep CSM chains over that fixed point and activations diverge.
_INIT_DAMP = 0.5


def _add_conv(store, rng, prefix, cout, cin, kh, kw, dtype):
    std = _INIT_DAMP * np.sqrt(2.0 / (cin * kh * kw))
    w = (rng.standard_normal((cout, cin, kh, kw)) * std).astype(dtype)
    store.add(prefix + ".weight", T.tensor(w, requires_grad=True))
    store.add(prefix + ".bias", T.zeros((cout,), requires_grad=True, dtype=dtype))


def _add_conv_transpose(store, rng, prefix, cin, cout, dtype):
    std = _INIT_DAMP * np.sqrt(2.0 / (cin * 16))
    w = (rng.standard_normal((cin, cout, 4, 4)) * std).astype(dtype)
    store.add(prefix + ".weight", T.tensor(w, requires_grad=True))
    store.add(prefix + ".bias", T.zeros((cout,), requires_grad=True, dtype=dtype))


def _add_ca(store, rng, prefix, channels, reduction, dtype):
    hidden = max(1, channels // reduction)
    _add_conv(store, rng, prefix + ".fc1", hidden, channels, 1, 1, dtype)
    _add_conv(store, rng, prefix + ".fc2", channels, hidden, 1, 1, dtype)


def _add_csm(store, rng, prefix, channels, cfg, dtype):
    k = cfg.large_kernel
    if cfg.use_csm_stage1:
        _add_conv(store, rng, prefix + ".stage1.conv1x1", channels, channels, 1, 1, dtype)
        _add_conv(store, rng, prefix + ".stage1.conv5x5", channels, channels, k, k, dtype)
        _add_ca(store, rng, prefix + ".stage1.ca", channels, cfg.ca_reduction, dtype)
    if cfg.use_csm_stage2:
        _add_conv(store, rng, prefix + ".stage2.expand", 2 * channels, channels, 1, 1, dtype)
        _add_conv(store, rng, prefix + ".stage2.compress", channels, channels, 1, 1, dtype)


def init_parameters(cfg, seed, dtype=np.float32):
    """Create every enabled module's parameters in one fixed order.

    Weights are He-scaled Gaussians from a PCG64 stream seeded by `seed`;
    biases start at zero. Disabled toggles create no entries at all, so
    parameter counts account exactly for the enabled architecture.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    store = ParameterStore()
    if cfg.use_iem:
        _add_ca(store, rng, "iem.ca", 6, cfg.ca_reduction, dtype)
    _add_conv(store, rng, "encoder.entry", cfg.base_channels, cfg.in_channels, 1, 1, dtype)
    for level in range(1, cfg.scales + 1):
        c = cfg.channels(level)
        if level > 1:
            _add_conv(store, rng, f"encoder.level{level}.down", c, cfg.channels(level - 1), 3, 3, dtype)
        for j in range(cfg.csm_per_level):
            _add_csm(store, rng, f"encoder.level{level}.csm{j}", c, cfg, dtype)
    if cfg.use_cvmi:
        for s in sorted(cfg.interaction_scales):
            c = cfg.channels(s)
            _add_csm(store, rng, f"cvmi.scale{s}.csm0", c, cfg, dtype)
            _add_conv(store, rng, f"cvmi.scale{s}.proj", c, c, 3, 3, dtype)
    if cfg.use_csfi:
        cat_channels = sum(cfg.channels(s) for s in (1, 2, 3))
        for t in (1, 2, 3):
            _add_conv(store, rng, f"csfi.scale{t}.fuse", cfg.channels(t), cat_channels, 1, 1, dtype)
            _add_csm(store, rng, f"csfi.scale{t}.csm0", cfg.channels(t), cfg, dtype)
    for level in (3, 2, 1):
        _add_conv_transpose(store, rng, f"decoder.level{level}.up",
                            cfg.channels(level + 1), cfg.channels(level), dtype)
        for j in range(cfg.csm_per_level):
            _add_csm(store, rng, f"decoder.level{level}.csm{j}", cfg.channels(level), cfg, dtype)
    _add_conv(store, rng, "decoder.exit", 3, cfg.base_channels, 1, 1, dtype)
    return store


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

def _conv(x, store, prefix, stride=1, padding=0):
    return T.conv2d(x, store[prefix + ".weight"], store[prefix + ".bias"],
                    stride=stride, padding=padding)


def channel_attention(x, store, prefix):
    """Squeeze-excite gating: x * sigmoid(fc2(relu(fc1(gap(x))))).

    The gate lies in (0,1) per channel, so output magnitudes never exceed
    the input's. The hidden width is max(1, C // reduction), fixed by the
    shapes stored under `prefix`.
    """
    s = T.global_avg_pool(x)
    s = T.relu(_conv(s, store, prefix + ".fc1"))
    s = T.sigmoid(_conv(s, store, prefix + ".fc2"))
    return T.mul(x, s)


def iem_forward(x_low, x_lowfre, store):
    """Information enhancement: attention over (low RGB, low-frequency RGB).

    The caller supplies x_lowfre (normally the side-window filtering of
    x_low); the 6-channel result is the new image space the encoder sees.
    """
    if x_low.shape != x_lowfre.shape:
        raise ContractError(
            f"iem_forward: image and low-frequency shapes differ: {x_low.shape} vs {x_lowfre.shape}")
    return channel_attention(T.concat_channels([x_low, x_lowfre]), store, "iem.ca")


def simple_gate(x):
    """Halve channels by elementwise product of the two channel halves."""
    if x.shape[1] % 2 != 0:
        raise ContractError(f"simple_gate needs an even channel count, got {x.shape[1]}")
    x1, x2 = T.split_channels(x, 2)
    return T.mul(x1, x2)


def csm_forward(x, store, prefix, cfg):
    """Channel-spatial mining block: two residual stages.

    Stage 1 (spatial): y = x + CA(conv_kxk(conv_1x1(x))), k = large_kernel
    with same-size padding. Stage 2 (channel): z = y + compress(gate
    (expand(y))) where expand doubles channels and the gate halves them.
    Either stage can be toggled off, leaving an exact identity branch.
    """
    y = x
    if cfg.use_csm_stage1:
        t = _conv(x, store, prefix + ".stage1.conv1x1")
        t = _conv(t, store, prefix + ".stage1.conv5x5", padding=cfg.large_kernel // 2)
        t = channel_attention(t, store, prefix + ".stage1.ca")
        y = T.add(x, t)
    z = y
    if cfg.use_csm_stage2:
        t = _conv(y, store, prefix + ".stage2.expand")
        t = simple_gate(t)
        t = _conv(t, store, prefix + ".stage2.compress")
        z = T.add(y, t)
    return z


def _csm_chain(x, store, prefix, cfg):
    for j in range(cfg.csm_per_level):
        x = csm_forward(x, store, f"{prefix}.csm{j}", cfg)
    return x


def _pad_to_multiple(x, multiple):
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        x = T.reflect_pad2d(x, (0, ph, 0, pw))
    return x, (ph, pw)


def encoder_forward(i_view, store, cfg):
    """Four-scale feature pyramid of one view.

    Input channels must match the configured image space (6 with IEM, 3
    without). Spatial extents not divisible by 8 are reflect-padded on
    the bottom/right; the pad is a pure function of the input shape, so
    callers crop the final output back deterministically.
    Returns [F1 .. F4] with channels (base, 2*base, 4*base, 8*base) at
    resolutions (1, 1/2, 1/4, 1/8).
    """
    if i_view.ndim != 4 or i_view.shape[1] != cfg.in_channels:
        raise ContractError(
            f"encoder expects (N,{cfg.in_channels},H,W) input, got {i_view.shape}")
    x, _ = _pad_to_multiple(i_view, 2 ** (cfg.scales - 1))
    f = _conv(x, store, "encoder.entry")
    f = _csm_chain(f, store, "encoder.level1", cfg)
    features = [f]
    for level in range(2, cfg.scales + 1):
        f = _conv(f, store, f"encoder.level{level}.down", stride=2, padding=1)
        f = _csm_chain(f, store, f"encoder.level{level}", cfg)
        features.append(f)
    return features


def cvmi_forward(f_l, f_r, store, cfg, scale):
    """Cross-view interaction at one scale via row-wise parallax attention.

    Queries and keys are 3x3 projections of a dedicated CSM's output,
    sharing weights across views. Scores are per-row dot products over
    columns; softmax over source columns yields row-stochastic transfer
    maps, and each view receives the other's features through its map:
    r_l = f_l + T_r2l @ f_r_rows (and symmetrically). With use_cvmi off
    the features pass through untouched and no AttentionPair is produced.
    """
    if f_l.shape != f_r.shape:
        raise ContractError(f"cvmi_forward: view shapes differ: {f_l.shape} vs {f_r.shape}")
    if not cfg.use_cvmi:
        return f_l, f_r, None
    prefix = f"cvmi.scale{scale}"
    q = _conv(csm_forward(f_l, store, prefix + ".csm0", cfg), store, prefix + ".proj", padding=1)
    k = _conv(csm_forward(f_r, store, prefix + ".csm0", cfg), store, prefix + ".proj", padding=1)
    q_rows = T.permute(q, (0, 2, 3, 1))           # (N,H,W,C)
    k_cols = T.permute(k, (0, 2, 1, 3))           # (N,H,C,W)
    scores = T.batched_row_matmul(q_rows, k_cols)  # (N,H,W,W)
    scores = T.mul(scores, 1.0 / np.sqrt(f_l.shape[1]))
    t_r2l = T.softmax_lastdim(scores)
    t_l2r = T.softmax_lastdim(T.permute(scores, (0, 1, 3, 2)))
    f_l_rows = T.permute(f_l, (0, 2, 3, 1))
    f_r_rows = T.permute(f_r, (0, 2, 3, 1))
    r_l = T.add(f_l, T.permute(T.batched_row_matmul(t_r2l, f_r_rows), (0, 3, 1, 2)))
    r_r = T.add(f_r, T.permute(T.batched_row_matmul(t_l2r, f_l_rows), (0, 3, 1, 2)))
    attn = AttentionPair(t_r2l=t_r2l, t_l2r=t_l2r)
    attn.validate()
    return r_l, r_r, attn


def csfi_forward(r1, r2, r3, store, cfg):
    """Cross-scale fusion: every target scale sees all three scales.

    For target t, the three features are bilinearly resampled to t's
    resolution, concatenated (channel order scale 1,2,3), compressed by a
    1x1 conv back to t's channel count, and refined by one CSM. Identity
    pass-through when use_csfi is off.
    """
    feats = {1: r1, 2: r2, 3: r3}
    for s, f in feats.items():
        if f.shape[1] != cfg.channels(s):
            raise ContractError(
                f"csfi_forward: scale {s} has {f.shape[1]} channels, expected {cfg.channels(s)}")
    if not cfg.use_csfi:
        return r1, r2, r3
    outs = []
    for t in (1, 2, 3):
        parts = []
        for s in (1, 2, 3):
            f = feats[s]
            factor = 2.0 ** (s - t)
            parts.append(f if factor == 1.0 else T.resize_bilinear(f, factor))
        fused = _conv(T.concat_channels(parts), store, f"csfi.scale{t}.fuse")
        outs.append(csm_forward(fused, store, f"csfi.scale{t}.csm0", cfg))
    return tuple(outs)


def decoder_forward(e1, e2, e3, f4, store, cfg, out_hw=None):
    """Decode the pyramid to an RGB image, fusing skip features by addition.

    d3 = CSM(up(f4)) + e3, then likewise through scales 2 and 1; a final
    1x1 conv maps base channels to RGB. The result is unclamped (losses
    see raw values); pass out_hw to crop away encoder padding.
    """
    d = f4
    for level, skip in ((3, e3), (2, e2), (1, e1)):
        d = T.conv_transpose2d(d, store[f"decoder.level{level}.up.weight"],
                               store[f"decoder.level{level}.up.bias"])
        d = _csm_chain(d, store, f"decoder.level{level}", cfg)
        if d.shape != skip.shape:
            raise ContractError(
                f"decoder level {level}: upsampled shape {d.shape} does not match skip {skip.shape}")
        d = T.add(d, skip)
    out = _conv(d, store, "decoder.exit")
    if out_hw is not None and out.shape[-2:] != tuple(out_hw):
        out = T.crop2d(out, 0, 0, out_hw[0], out_hw[1])
    return out


def network_forward(low_left, low_right, store, cfg,
                    lowfre_left=None, lowfre_right=None, sw_spec=None):
    """Full stereo forward pass: filters, IEM, encoder, CVMI, CSFI, decoder.

    `low_left`/`low_right` are (N,3,H,W) tensors in [0,1]. Low-frequency
    inputs are computed by side-window filtering unless supplied. Both
    views run through one ParameterStore; the computation is exactly
    symmetric, so swapping the inputs swaps the outputs bitwise.
    Returns (h_left, h_right, diagnostics); diagnostics["attention"] maps
    each interacting scale to its AttentionPair.
    """
    left = low_left if isinstance(low_left, T.Tensor) else T.tensor(low_left)
    right = low_right if isinstance(low_right, T.Tensor) else T.tensor(low_right)
    if left.ndim != 4 or left.shape[1] != 3:
        raise ContractError(f"network_forward expects (N,3,H,W) inputs, got {left.shape}")
    if left.shape != right.shape:
        raise ContractError(
            f"network_forward: view shapes differ: {left.shape} vs {right.shape}")
    h, w = left.shape[-2:]

    views = []
    for low, lowfre in ((left, lowfre_left), (right, lowfre_right)):
        if cfg.use_iem:
            if lowfre is None:
                spec = sw_spec if sw_spec is not None else SideWindowSpec()
                lowfre = T.tensor(side_window_box_filter(
                    np.clip(low.data, 0.0, 1.0), spec).astype(low.data.dtype))
            elif not isinstance(lowfre, T.Tensor):
                lowfre = T.tensor(lowfre)
            views.append(iem_forward(low, lowfre, store))
        else:
            views.append(low)

    feats_l = encoder_forward(views[0], store, cfg)
    feats_r = encoder_forward(views[1], store, cfg)

    attention = {}
    inter_l, inter_r = list(feats_l), list(feats_r)
    for s in (1, 2, 3):
        if s in cfg.interaction_scales and cfg.use_cvmi:
            r_l, r_r, attn = cvmi_forward(feats_l[s - 1], feats_r[s - 1], store, cfg, s)
            inter_l[s - 1], inter_r[s - 1] = r_l, r_r
            attention[s] = attn

    e_l = csfi_forward(inter_l[0], inter_l[1], inter_l[2], store, cfg)
    e_r = csfi_forward(inter_r[0], inter_r[1], inter_r[2], store, cfg)

    h_l = decoder_forward(e_l[0], e_l[1], e_l[2], feats_l[3], store, cfg, out_hw=(h, w))
    h_r = decoder_forward(e_r[0], e_r[1], e_r[2], feats_r[3], store, cfg, out_hw=(h, w))
    return h_l, h_r, {"attention": attention}

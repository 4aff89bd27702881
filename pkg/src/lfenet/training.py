"""Training, checkpointing, ablation, and directory evaluation.

The experiment configuration is a flat key=value text format (booleans
as true/false, interaction scales as a comma list); unknown or duplicate
keys are hard errors so configs cannot drift silently. Two named
profiles ship under configs/: desk.cfg finishes on a laptop CPU in
minutes, paper.cfg is the full-scale schedule.

Checkpoints are a single binary file, layout (all integers little
endian):

    bytes 0..3   magic "LFCK"
    byte  4      format version (1)
    u32 + bytes  config text (the flat key=value serialization)
    u32 + bytes  state JSON: {"adam_t", "epoch", "rng", "step"}
    u32          record count
    per record:  u16 path length, path UTF-8,
                 u8 dtype tag (0 = float32, 1 = float64),
                 u8 ndim, ndim x u32 dims,
                 raw little-endian payload

Records hold every network parameter in store order, then Adam first
and second moments under "adam.m."/"adam.v." prefixes. Loading verifies
structure record by record and names the first malformed one.

Determinism contract: (config, seed, data) fully determine the loss
log, the checkpoints, and all outputs. Training draws randomness from a
single PCG64 stream whose state rides along in every checkpoint, so a
resumed run continues the exact stream and reproduces an uninterrupted
run bitwise.
"""

import json
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .degrade import StereoSample, load_png, load_sample, read_manifest, save_png
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .network import (ABLATION_IDS, NetworkConfig, ParameterStore,
                      ablation_config, init_parameters, network_forward)
from .objectives import evaluate_pair, mse_map, psnr, ssim

__all__ = [
    "TrainConfig", "TrainResult", "Adam",
    "config_to_text", "parse_config_text", "train_config_from_mapping",
    "load_train_config", "random_paired_crop",
    "save_checkpoint", "load_checkpoint", "Checkpoint",
    "train", "enhance", "ablate", "evaluate_directories",
]

LOG_NAME = "train_log.tsv"
CHECKPOINT_NAME = "checkpoint.lfck"
ABLATION_TABLE_NAME = "ablation_table.tsv"

_MAGIC = b"LFCK"
_VERSION = 1
_DTYPE_TAGS = {0: np.float32, 1: np.float64}
_TAGS_BY_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer schedule plus the network architecture to train."""

    lr0: float = 2e-4
    lr_halve_every: int = 250
    epochs: int = 1000
    batch: int = 20
    patch: int = 128
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 100
    val_crop: int = 400
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if self.patch <= 0 or self.patch % 8 != 0:
            raise ConfigError(f"patch must be a positive multiple of 8, got {self.patch}")
        if self.epochs < 1 or self.batch < 1 or self.lr_halve_every < 1:
            raise ConfigError("epochs, batch and lr_halve_every must all be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.val_crop < 1:
            raise ConfigError(f"val_crop must be >= 1, got {self.val_crop}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


@dataclass
class TrainResult:
    store: ParameterStore
    steps: int
    epochs: int
    stopped_early: bool
    checkpoint_path: str
    log_path: str


# ---------------------------------------------------------------------------
# configuration text format
# ---------------------------------------------------------------------------

_INT_KEYS = ("lr_halve_every", "epochs", "batch", "patch", "seed", "checkpoint_every",
             "val_crop")
_FLOAT_KEYS = ("lr0", "beta1", "beta2", "eps")
_NET_INT_KEYS = ("base_channels", "scales", "csm_per_level", "ca_reduction", "large_kernel")
_NET_BOOL_KEYS = ("use_iem", "use_cvmi", "use_csfi", "use_csm_stage1", "use_csm_stage2",
                  "use_fre", "use_spa")


def config_to_text(cfg):
    """Serialize a TrainConfig to the flat key=value format."""
    lines = []
    for key in _FLOAT_KEYS:
        lines.append(f"{key}={getattr(cfg, key)!r}")
    for key in _INT_KEYS:
        lines.append(f"{key}={getattr(cfg, key)}")
    net = cfg.network
    for key in _NET_INT_KEYS:
        lines.append(f"network.{key}={getattr(net, key)}")
    scales = ",".join(str(s) for s in sorted(net.interaction_scales))
    lines.append(f"network.interaction_scales={scales}")
    for key in _NET_BOOL_KEYS:
        lines.append(f"network.{key}={'true' if getattr(net, key) else 'false'}")
    return "\n".join(lines) + "\n"


def parse_config_text(text):
    """key=value lines -> dict; blank lines and # comments are skipped."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in mapping:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def _parse_bool(key, value):
    if value not in ("true", "false"):
        raise ConfigError(f"{key}: expected true or false, got {value!r}")
    return value == "true"


def train_config_from_mapping(mapping, base=None):
    """Apply key=value settings on top of `base` (default TrainConfig()).

    Every key must be known; unrecognized keys are hard errors so stale
    or misspelled settings never pass silently.
    """
    cfg = base if base is not None else TrainConfig()
    train_kwargs = {}
    net_kwargs = {}
    for key, value in mapping.items():
        try:
            if key in _FLOAT_KEYS:
                train_kwargs[key] = float(value)
            elif key in _INT_KEYS:
                train_kwargs[key] = int(value)
            elif key.startswith("network."):
                sub = key[len("network."):]
                if sub in _NET_INT_KEYS:
                    net_kwargs[sub] = int(value)
                elif sub == "interaction_scales":
                    parts = [p for p in value.split(",") if p.strip()]
                    net_kwargs[sub] = frozenset(int(p) for p in parts)
                elif sub in _NET_BOOL_KEYS:
                    net_kwargs[sub] = _parse_bool(key, value)
                else:
                    raise ConfigError(f"unknown config key {key!r}")
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError:
            raise ConfigError(f"{key}: cannot parse value {value!r}")
    if net_kwargs:
        train_kwargs["network"] = replace(cfg.network, **net_kwargs)
    return replace(cfg, **train_kwargs) if train_kwargs else cfg


def load_train_config(path, base=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return train_config_from_mapping(parse_config_text(text), base=base)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction, moments kept per parameter path."""

    def __init__(self, store, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p: np.zeros_like(t.data) for p, t in store.items()}
        self.v = {p: np.zeros_like(t.data) for p, t in store.items()}

    def step(self, lr):
        """One update from the gradients currently held by the store."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for path, p in self.store.items():
            g = p.grad
            m = self.m[path]
            v = self.v[path]
            if g is None:
                m *= self.beta1
                v *= self.beta2
            else:
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------

def _reflect_to_min(img, patch):
    while img.shape[1] < patch or img.shape[2] < patch:
        ph = min(img.shape[1] - 1, patch - img.shape[1]) if img.shape[1] < patch else 0
        pw = min(img.shape[2] - 1, patch - img.shape[2]) if img.shape[2] < patch else 0
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return img


def random_paired_crop(sample, patch, rng):
    """One random patch-square crop applied identically to all four images.

    A single (top, left) offset is drawn per sample, so the views keep
    their row correspondence and each low image stays aligned with its
    ground truth. Images smaller than the patch are reflect-padded on
    the bottom/right first.
    """
    if patch < 1:
        raise ConfigError(f"patch must be positive, got {patch}")
    imgs = [_reflect_to_min(a, patch) for a in
            (sample.low_left, sample.low_right, sample.gt_left, sample.gt_right)]
    h, w = imgs[0].shape[1:]
    top = int(rng.integers(0, h - patch + 1))
    left = int(rng.integers(0, w - patch + 1))
    ll, lr, gl, gr = (np.ascontiguousarray(a[:, top:top + patch, left:left + patch])
                      for a in imgs)
    return StereoSample(id=sample.id, low_left=ll, low_right=lr,
                        gt_left=gl, gt_right=gr, params=sample.params)


def _load_split(data_dir, split):
    records = [r for r in read_manifest(data_dir) if r["split"] == split]
    return [load_sample(data_dir, r) for r in records]


def _stack_batch(crops):
    def stack(attr):
        return np.stack([getattr(c, attr) for c in crops]).astype(np.float32)
    return (stack("low_left"), stack("low_right"),
            stack("gt_left"), stack("gt_right"))


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

def _write_record(parts, path, arr):
    encoded = path.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise CheckpointError(f"parameter path too long: {path!r}")
    if arr.dtype not in _TAGS_BY_DTYPE:
        raise CheckpointError(f"record {path!r}: unsupported dtype {arr.dtype}")
    parts.append(struct.pack("<H", len(encoded)))
    parts.append(encoded)
    parts.append(struct.pack("<BB", _TAGS_BY_DTYPE[arr.dtype], arr.ndim))
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def save_checkpoint(path, store, cfg, step=0, epoch=0, rng_state=None, adam=None):
    """Write parameters (and optional Adam moments) in the documented layout."""
    state = {"adam_t": adam.t if adam is not None else 0,
             "epoch": int(epoch), "rng": rng_state, "step": int(step)}
    config_bytes = config_to_text(cfg).encode("utf-8")
    state_bytes = json.dumps(state, sort_keys=True).encode("utf-8")
    records = list(store.items())
    if adam is not None:
        records += [("adam.m." + p, T.tensor(m)) for p, m in adam.m.items()]
        records += [("adam.v." + p, T.tensor(v)) for p, v in adam.v.items()]
    parts = [_MAGIC, struct.pack("<B", _VERSION),
             struct.pack("<I", len(config_bytes)), config_bytes,
             struct.pack("<I", len(state_bytes)), state_bytes,
             struct.pack("<I", len(records))]
    for name, tensor_ in records:
        arr = tensor_.data if isinstance(tensor_, T.Tensor) else np.asarray(tensor_)
        _write_record(parts, name, arr)
    blob = b"".join(parts)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    return path


@dataclass
class Checkpoint:
    cfg: TrainConfig
    store: ParameterStore
    adam_m: dict
    adam_v: dict
    adam_t: int
    step: int
    epoch: int
    rng_state: object


class _Cursor:
    def __init__(self, blob, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n, what):
        if self.off + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        piece = self.blob[self.off:self.off + n]
        self.off += n
        return piece

    def u8(self, what):
        return self.take(1, what)[0]

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path):
    """Parse a checkpoint file; malformed input names the first bad record."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")
    cur = _Cursor(blob, path)
    if cur.take(4, "magic") != _MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = cur.u8("version")
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    config_text = cur.take(cur.u32("config length"), "config text").decode("utf-8")
    cfg = train_config_from_mapping(parse_config_text(config_text))
    try:
        state = json.loads(cur.take(cur.u32("state length"), "state JSON").decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt state JSON: {exc}")
    count = cur.u32("record count")

    store = ParameterStore()
    adam_m, adam_v = {}, {}
    for i in range(count):
        label = f"record {i}"
        name_len = cur.u16(f"{label}: path length")
        name = cur.take(name_len, f"{label}: path").decode("utf-8", errors="replace")
        label = f"record {i} ({name!r})"
        tag = cur.u8(f"{label}: dtype tag")
        if tag not in _DTYPE_TAGS:
            raise CheckpointError(f"{path}: {label}: unknown dtype tag {tag}")
        dtype = _DTYPE_TAGS[tag]
        ndim = cur.u8(f"{label}: ndim")
        dims = struct.unpack(f"<{ndim}I", cur.take(4 * ndim, f"{label}: dims"))
        n_elem = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        payload = cur.take(n_elem * np.dtype(dtype).itemsize, f"{label}: payload")
        arr = np.frombuffer(payload, dtype=np.dtype(dtype).newbyteorder("<"))
        arr = arr.astype(dtype).reshape(dims)
        if name.startswith("adam.m."):
            adam_m[name[len("adam.m."):]] = arr
        elif name.startswith("adam.v."):
            adam_v[name[len("adam.v."):]] = arr
        else:
            store.add(name, T.tensor(arr, requires_grad=True))
    if cur.off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - cur.off} trailing bytes after last record")
    return Checkpoint(cfg=cfg, store=store, adam_m=adam_m, adam_v=adam_v,
                      adam_t=int(state.get("adam_t", 0)), step=int(state.get("step", 0)),
                      epoch=int(state.get("epoch", 0)), rng_state=state.get("rng"))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _fresh_training_rng(seed):
    # distinct stream from init_parameters(seed), which consumes PCG64(seed)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 1))))


def _check_store_compatible(expected, loaded, path):
    if expected.paths() != loaded.paths():
        raise CheckpointError(
            f"{path}: checkpoint parameters do not match the configured network")
    for key in expected.paths():
        if expected[key].shape != loaded[key].shape:
            raise CheckpointError(
                f"{path}: record {key!r} has shape {loaded[key].shape}, expected {expected[key].shape}")


def train(cfg, data_dir, out_dir, on_step=None, resume=False):
    """Run the Adam training loop over the manifest's train split.

    Per optimizer step this appends one log line (step, lr, l_fre,
    l_spa, total; tab-separated) to train_log.tsv, and every
    checkpoint_every epochs (plus at the end) rewrites checkpoint.lfck
    with parameters, Adam moments, and the training RNG state. A
    non-finite loss aborts with the offending step recorded in the log.
    With resume=True an existing checkpoint continues its RNG stream,
    reproducing an uninterrupted run bitwise; checkpoints are written at
    epoch boundaries, so a resumed run restarts from the next epoch.

    `on_step(info)` is called after each update with a dict holding
    step, epoch, lr, the LossBreakdown, forward diagnostics, and the
    store; a truthy return stops training early (the checkpoint is
    still written).
    """
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, LOG_NAME)
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)

    samples = _load_split(data_dir, "train")
    if not samples:
        raise DataError(f"no train-split samples in {data_dir}")

    if resume and os.path.exists(checkpoint_path):
        ck = load_checkpoint(checkpoint_path)
        own = _strip_epochs(config_to_text(cfg))
        theirs = _strip_epochs(config_to_text(ck.cfg))
        if own != theirs:
            raise CheckpointError(
                f"{checkpoint_path}: checkpoint config does not match (only epochs may differ)")
        expected = init_parameters(cfg.network, cfg.seed)
        _check_store_compatible(expected, ck.store, checkpoint_path)
        store = ck.store
        adam = Adam(store, cfg.beta1, cfg.beta2, cfg.eps)
        for key in adam.m:
            if key not in ck.adam_m or key not in ck.adam_v:
                raise CheckpointError(f"{checkpoint_path}: missing Adam moments for {key!r}")
            adam.m[key] = ck.adam_m[key].copy()
            adam.v[key] = ck.adam_v[key].copy()
        adam.t = ck.adam_t
        rng = np.random.Generator(np.random.PCG64())
        if ck.rng_state is None:
            raise CheckpointError(f"{checkpoint_path}: no RNG state recorded, cannot resume")
        rng.bit_generator.state = ck.rng_state
        start_epoch = ck.epoch
        step = ck.step
        log_fh = open(log_path, "a", encoding="utf-8")
    else:
        store = init_parameters(cfg.network, cfg.seed)
        adam = Adam(store, cfg.beta1, cfg.beta2, cfg.eps)
        rng = _fresh_training_rng(cfg.seed)
        start_epoch = 0
        step = 0
        log_fh = open(log_path, "w", encoding="utf-8")
        log_fh.write("# fields: step lr l_fre l_spa total\n")

    stopped_early = False
    epoch = start_epoch
    try:
        for epoch in range(start_epoch, cfg.epochs):
            lr = cfg.lr0 * 0.5 ** (epoch // cfg.lr_halve_every)
            order = rng.permutation(len(samples))
            for chunk_start in range(0, len(order), cfg.batch):
                chunk = order[chunk_start:chunk_start + cfg.batch]
                crops = [random_paired_crop(samples[int(i)], cfg.patch, rng) for i in chunk]
                low_l, low_r, gt_l, gt_r = _stack_batch(crops)
                store.zero_grads()
                step += 1
                try:
                    with T.Tape():
                        h_l, h_r, diag = network_forward(low_l, low_r, store, cfg.network)
                        total, breakdown = evaluate_pair(
                            h_l, h_r, gt_l, gt_r,
                            use_fre=cfg.network.use_fre, use_spa=cfg.network.use_spa)
                        T.backward(total)
                except NumericError as exc:
                    log_fh.write(f"# aborted at step {step}: {exc}\n")
                    log_fh.flush()
                    raise NumericError(f"training aborted at step {step}: {exc}")
                adam.step(lr)
                log_fh.write(f"{step}\t{lr!r}\t{breakdown.l_fre!r}\t"
                             f"{breakdown.l_spa!r}\t{breakdown.total!r}\n")
                if on_step is not None:
                    info = {"step": step, "epoch": epoch, "lr": lr,
                            "breakdown": breakdown, "diagnostics": diag, "store": store}
                    if on_step(info):
                        stopped_early = True
                        break
            if stopped_early:
                epoch += 1
                break
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(checkpoint_path, store, cfg, step=step, epoch=epoch + 1,
                                rng_state=rng.bit_generator.state, adam=adam)
        else:
            epoch = cfg.epochs
    finally:
        log_fh.close()
    save_checkpoint(checkpoint_path, store, cfg, step=step, epoch=epoch,
                    rng_state=rng.bit_generator.state, adam=adam)
    return TrainResult(store=store, steps=step, epochs=epoch,
                       stopped_early=stopped_early,
                       checkpoint_path=checkpoint_path, log_path=log_path)


def _strip_epochs(config_text):
    return "\n".join(l for l in config_text.splitlines() if not l.startswith("epochs="))


# ---------------------------------------------------------------------------
# inference and evaluation
# ---------------------------------------------------------------------------

def enhance(checkpoint_path, low_left_path, low_right_path,
            out_left_path, out_right_path):
    """Enhance one stereo pair with a trained checkpoint.

    Outputs are clamped to [0,1] and written as 8-bit PNGs of the input
    size (the network pads and crops internally for any extent).
    Returns the clamped float arrays (left, right).
    """
    ck = load_checkpoint(checkpoint_path)
    left = load_png(low_left_path)
    right = load_png(low_right_path)
    if left.shape != right.shape:
        raise DataError(f"view shapes differ: {left.shape} vs {right.shape}")
    h_l, h_r, _ = network_forward(left[None], right[None], ck.store, ck.cfg.network)
    out_l = np.clip(h_l.data[0], 0.0, 1.0)
    out_r = np.clip(h_r.data[0], 0.0, 1.0)
    save_png(out_left_path, out_l)
    save_png(out_right_path, out_r)
    return out_l, out_r


def _center_crop_pair(sample, crop):
    h, w = sample.gt_left.shape[1:]
    ch, cw = min(crop, h), min(crop, w)
    top = (h - ch) // 2
    left = (w - cw) // 2
    def cut(a):
        return np.ascontiguousarray(a[:, top:top + ch, left:left + cw])
    return StereoSample(id=sample.id, low_left=cut(sample.low_left),
                        low_right=cut(sample.low_right), gt_left=cut(sample.gt_left),
                        gt_right=cut(sample.gt_right), params=sample.params)


def evaluate_model(store, net_cfg, samples, crop=None):
    """Mean PSNR/SSIM per view of clamped model outputs over samples."""
    if not samples:
        raise DataError("no samples to evaluate")
    sums = np.zeros(4)
    for sample in samples:
        if crop is not None:
            sample = _center_crop_pair(sample, crop)
        h_l, h_r, _ = network_forward(sample.low_left[None], sample.low_right[None],
                                      store, net_cfg)
        pred_l = np.clip(h_l.data[0], 0.0, 1.0)
        pred_r = np.clip(h_r.data[0], 0.0, 1.0)
        sums += (psnr(pred_l, sample.gt_left), psnr(pred_r, sample.gt_right),
                 float(ssim(pred_l, sample.gt_left).data),
                 float(ssim(pred_r, sample.gt_right).data))
    means = sums / len(samples)
    return {"psnr_left": means[0], "psnr_right": means[1],
            "ssim_left": means[2], "ssim_right": means[3]}


def _held_out_samples(data_dir):
    for split in ("val", "test", "train"):
        samples = _load_split(data_dir, split)
        if samples:
            return split, samples
    raise DataError(f"manifest in {data_dir} lists no samples at all")


def ablate(cfg, data_dir, out_dir, ablation_ids=ABLATION_IDS):
    """Train every ablation row under one seed and tabulate held-out metrics.

    Each row trains in out_dir/<ablation_id>/ with the identical
    schedule, seed, and data; the summary table (ablation, psnr_left,
    psnr_right, ssim_left, ssim_right) lands in ablation_table.tsv.
    Returns the rows as dicts in grid order.
    """
    os.makedirs(out_dir, exist_ok=True)
    split, samples = _held_out_samples(data_dir)
    rows = []
    for aid in ablation_ids:
        sub_cfg = replace(cfg, network=ablation_config(cfg.network, aid))
        result = train(sub_cfg, data_dir, os.path.join(out_dir, aid))
        metrics = evaluate_model(result.store, sub_cfg.network, samples, crop=cfg.val_crop)
        rows.append({"ablation": aid, **metrics})
    table_path = os.path.join(out_dir, ABLATION_TABLE_NAME)
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("# fields: ablation psnr_left psnr_right ssim_left ssim_right\n")
        fh.write(f"# held_out_split: {split}\n")
        for row in rows:
            fh.write(f"{row['ablation']}\t{row['psnr_left']!r}\t{row['psnr_right']!r}"
                     f"\t{row['ssim_left']!r}\t{row['ssim_right']!r}\n")
    return rows


def evaluate_directories(pred_dir, gt_dir, emit_mse_maps=None):
    """Score prediction PNGs against ground truth by file name.

    Both directories must hold left/ and right/ subdirectories; images
    pair up by identical file name across all four. Returns (rows,
    aggregate) where each row is (id, psnr_left, psnr_right, ssim_left,
    ssim_right) and aggregate averages the four metrics. With
    emit_mse_maps set, binary error maps are written there as
    <id>_left.png / <id>_right.png.
    """
    def names_under(root):
        found = {}
        for side in ("left", "right"):
            d = os.path.join(root, side)
            if not os.path.isdir(d):
                raise DataError(f"missing directory: {d}")
            found[side] = {n for n in os.listdir(d) if n.lower().endswith(".png")}
        return found

    pred = names_under(pred_dir)
    gt = names_under(gt_dir)
    names = sorted(pred["left"] & pred["right"] & gt["left"] & gt["right"])
    if not names:
        raise DataError(f"no common left/right PNG names between {pred_dir} and {gt_dir}")
    if emit_mse_maps:
        os.makedirs(emit_mse_maps, exist_ok=True)

    rows = []
    sums = np.zeros(4)
    for name in names:
        sample_id = os.path.splitext(name)[0]
        metrics = []
        for side in ("left", "right"):
            p = load_png(os.path.join(pred_dir, side, name))
            g = load_png(os.path.join(gt_dir, side, name))
            if p.shape != g.shape:
                raise DataError(f"{name} ({side}): shape {p.shape} vs {g.shape}")
            metrics.append((psnr(p, g), float(ssim(p, g).data)))
            if emit_mse_maps:
                binary = mse_map(p, g)
                save_png(os.path.join(emit_mse_maps, f"{sample_id}_{side}.png"),
                         np.repeat(binary[None], 3, axis=0))
        (psnr_l, ssim_l), (psnr_r, ssim_r) = metrics
        rows.append((sample_id, psnr_l, psnr_r, ssim_l, ssim_r))
        sums += (psnr_l, psnr_r, ssim_l, ssim_r)
    means = sums / len(names)
    aggregate = {"psnr_left": means[0], "psnr_right": means[1],
                 "ssim_left": means[2], "ssim_right": means[3]}
    return rows, aggregate

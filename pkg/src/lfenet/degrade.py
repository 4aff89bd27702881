"""Synthetic low-light stereo dataset factory.

Ground-truth stereo pairs are darkened with a randomized gamma curve,
out = beta * (alpha * in) ** gamma, using one of two parameter sets drawn
at a 4:1 ratio, then corrupted with heteroscedastic Gaussian noise whose
per-pixel variance is sigma_s * intensity + sigma_c ** 2. Both views of a
pair always receive identical parameters so cross-view correspondence
stays photometrically consistent.

The builder writes datasets under ``<root>/{low,gt}/{left,right}/<id>.png``
with a flat UTF-8 manifest (one tab-separated record per line: id, split,
alpha, beta, gamma, sigma_s, sigma_c). Everything is a pure function of
(inputs, seed); per-sample seeds are derived as ``seed XOR index`` so
samples may be generated in any order or in parallel.
"""

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError

__all__ = [
    "DegradeParams", "StereoSample",
    "gamma_degrade", "sample_params", "add_noise", "degrade_pair",
    "synthesize_stereo_pair",
    "save_png", "load_png", "build_dataset", "read_manifest", "load_sample",
]

# parameter set 1 (drawn 4 times out of 5) and set 2: (alpha/beta low,
# alpha/beta high, gamma low, gamma high)
_SET1 = (0.65, 0.70, 1.5, 1.6)
_SET2 = (0.80, 0.85, 3.0, 3.2)
_SET1_PROB = 0.8
_SIGMA_S_RANGE = (0.09, 0.10)
_SIGMA_C_RANGE = (0.02, 0.03)

MANIFEST_NAME = "manifest.txt"
_MANIFEST_FIELDS = ("id", "split", "alpha", "beta", "gamma", "sigma_s", "sigma_c")


@dataclass(frozen=True)
class DegradeParams:
    """One sample's degradation draw plus the seed of its noise stream."""

    alpha: float
    beta: float
    gamma: float
    sigma_s: float
    sigma_c: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0 and 0.0 < self.beta <= 1.0):
            raise ConfigError(f"alpha/beta must lie in (0,1], got {self.alpha}/{self.beta}")
        if self.gamma < 1.0:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if not (_SIGMA_S_RANGE[0] <= self.sigma_s <= _SIGMA_S_RANGE[1] or self.sigma_s == 0.0):
            raise ConfigError(f"sigma_s must be 0 or in {_SIGMA_S_RANGE}, got {self.sigma_s}")
        if not (_SIGMA_C_RANGE[0] <= self.sigma_c <= _SIGMA_C_RANGE[1] or self.sigma_c == 0.0):
            raise ConfigError(f"sigma_c must be 0 or in {_SIGMA_C_RANGE}, got {self.sigma_c}")


@dataclass
class StereoSample:
    """A rectified stereo pair: low-light and ground-truth views.

    Images are float arrays of shape (3, H, W) in [0,1]; correspondences
    between the views lie on the same row. `params` is None for real
    captures that were not produced by this factory.
    """

    id: str
    low_left: np.ndarray
    low_right: np.ndarray
    gt_left: np.ndarray
    gt_right: np.ndarray
    params: DegradeParams = None

    def __post_init__(self):
        shapes = {a.shape for a in (self.low_left, self.low_right,
                                    self.gt_left, self.gt_right)}
        if len(shapes) != 1 or self.low_left.ndim != 3 or self.low_left.shape[0] != 3:
            raise DataError(f"sample {self.id!r}: views must share one (3,H,W) shape, got {shapes}")


def gamma_degrade(image, params):
    """Darken: clip(beta * (alpha * image) ** gamma, 0, 1), elementwise.

    Monotone non-decreasing in the input; maps [0,1] into
    [0, beta * alpha ** gamma]. Output keeps the input dtype.
    """
    arr = np.asarray(image)
    out = np.clip(params.beta * (params.alpha * arr.astype(np.float64)) ** params.gamma, 0.0, 1.0)
    return out.astype(arr.dtype, copy=False)


def sample_params(rng):
    """Draw one sample's DegradeParams from a seeded Generator.

    Set 1 (alpha,beta ~ U(0.65,0.7), gamma ~ U(1.5,1.6)) is chosen with
    probability 4/5, otherwise set 2 (U(0.8,0.85), U(3,3.2)); noise levels
    sigma_s ~ U(0.09,0.1) and sigma_c ~ U(0.02,0.03) are always drawn. A
    fresh 63-bit noise-stream seed is recorded in the result.
    """
    lo, hi, glo, ghi = _SET1 if rng.uniform() < _SET1_PROB else _SET2
    return DegradeParams(
        alpha=float(rng.uniform(lo, hi)),
        beta=float(rng.uniform(lo, hi)),
        gamma=float(rng.uniform(glo, ghi)),
        sigma_s=float(rng.uniform(*_SIGMA_S_RANGE)),
        sigma_c=float(rng.uniform(*_SIGMA_C_RANGE)),
        seed=int(rng.integers(0, 2 ** 63)),
    )


def add_noise(image, params, rng, clip=True):
    """Heteroscedastic Gaussian noise: variance sigma_s * x + sigma_c^2.

    Noise is independent across pixels and channels and is added to the
    (already darkened) image; the result is clipped back to [0,1] unless
    `clip` is False, which exposes the raw noisy signal for statistical
    verification of the variance law.
    """
    arr = np.asarray(image)
    x = arr.astype(np.float64)
    std = np.sqrt(params.sigma_s * np.clip(x, 0.0, 1.0) + params.sigma_c ** 2)
    out = x + rng.standard_normal(x.shape) * std
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out.astype(arr.dtype, copy=False)


def degrade_pair(gt_left, gt_right, params):
    """Darken and noise both views with one parameter draw.

    The gamma curve is identical for both views; the noise stream is
    seeded from params.seed (left view drawn first), so the mapping is a
    pure function of (images, params).
    """
    rng = np.random.Generator(np.random.PCG64(params.seed))
    low_left = add_noise(gamma_degrade(gt_left, params), params, rng)
    low_right = add_noise(gamma_degrade(gt_right, params), params, rng)
    return low_left, low_right


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------

def _smooth_field(rng, height, width, cells=8):
    """Random smooth texture in [0,1] from a bilinearly stretched coarse grid."""
    gh, gw = max(2, height // cells), max(2, width // cells)
    grid = rng.uniform(0.0, 1.0, size=(gh, gw))
    ys = np.linspace(0, gh - 1, height)
    xs = np.linspace(0, gw - 1, width)
    y0 = np.clip(ys.astype(int), 0, gh - 2)
    x0 = np.clip(xs.astype(int), 0, gw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    g00 = grid[y0][:, x0]
    g01 = grid[y0][:, x0 + 1]
    g10 = grid[y0 + 1][:, x0]
    g11 = grid[y0 + 1][:, x0 + 1]
    return (g00 * (1 - fy) * (1 - fx) + g01 * (1 - fy) * fx
            + g10 * fy * (1 - fx) + g11 * fy * fx)


def synthesize_stereo_pair(rng, height, width, disparity=4):
    """Procedural rectified ground-truth pair with a known global disparity.

    A panorama texture of width `width + disparity` is built (smooth color
    fields plus a few rectangles for structure), and the two views are
    horizontal windows into it offset by `disparity`, so every left-view
    pixel at column x corresponds to the right-view pixel at column
    x - disparity. Returns (left, right) float32 arrays (3, H, W) in
    roughly [0.15, 0.95].
    """
    if disparity < 0 or height < 2 or width < 2:
        raise DataError(f"invalid synthetic scene size {height}x{width}, disparity {disparity}")
    pano_w = width + disparity
    pano = np.stack([_smooth_field(rng, height, pano_w) for _ in range(3)])
    for _ in range(4):
        h = int(rng.integers(height // 6 + 1, max(height // 2, height // 6 + 2)))
        w = int(rng.integers(pano_w // 8 + 1, max(pano_w // 3, pano_w // 8 + 2)))
        top = int(rng.integers(0, height - h + 1))
        left = int(rng.integers(0, pano_w - w + 1))
        color = rng.uniform(0.0, 1.0, size=3)
        pano[:, top:top + h, left:left + w] = color[:, None, None]
    pano = 0.15 + 0.8 * pano
    left_view = pano[:, :, :width]
    right_view = pano[:, :, disparity:disparity + width]
    return (np.ascontiguousarray(left_view, dtype=np.float32),
            np.ascontiguousarray(right_view, dtype=np.float32))


# ---------------------------------------------------------------------------
# dataset I/O
# ---------------------------------------------------------------------------

def save_png(path, image):
    """Write a (3,H,W) float [0,1] array as 8-bit RGB PNG."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"save_png expects (3,H,W), got {arr.shape}")
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_png(path):
    """Read an 8-bit RGB PNG as a (3,H,W) float32 array in [0,1]."""
    try:
        with Image.open(path) as im:
            u8 = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise DataError(f"image not found: {path}")
    except OSError as exc:
        raise DataError(f"unreadable image {path}: {exc}")
    return np.ascontiguousarray(u8.transpose(2, 0, 1)).astype(np.float32) / 255.0


def _format_record(sample_id, split, p):
    vals = (sample_id, split, repr(p.alpha), repr(p.beta), repr(p.gamma),
            repr(p.sigma_s), repr(p.sigma_c))
    return "\t".join(vals)


def _split_of(index, n, fractions):
    train_end = int(round(fractions[0] * n))
    val_end = train_end + int(round(fractions[1] * n))
    if index < train_end:
        return "train"
    return "val" if index < val_end else "test"


def build_dataset(gt_dir, out_dir, seed, split_spec=(0.8, 0.05, 0.15)):
    """Degrade every paired image under gt_dir/{left,right} into out_dir.

    Pairs are matched by file name; unpaired names are skipped and listed
    in manifest comment lines with a total warning count. Sample order,
    split assignment and all randomness derive from `seed` alone, with
    per-sample streams seeded by ``seed XOR index``, so repeated runs
    produce byte-identical manifests.
    Returns the list of manifest record lines.
    """
    fractions = tuple(float(f) for f in split_spec)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be 3 non-negative numbers summing to 1, got {split_spec}")
    left_dir = os.path.join(gt_dir, "left")
    right_dir = os.path.join(gt_dir, "right")
    if not os.path.isdir(left_dir) or not os.path.isdir(right_dir):
        raise DataError(f"gt_dir must contain left/ and right/ subdirectories: {gt_dir}")
    left_names = {n for n in os.listdir(left_dir) if n.lower().endswith(".png")}
    right_names = {n for n in os.listdir(right_dir) if n.lower().endswith(".png")}
    paired = sorted(left_names & right_names)
    skipped = sorted(left_names ^ right_names)
    if not paired:
        raise DataError(f"no paired left/right PNGs found under {gt_dir}")

    for sub in ("low", "gt"):
        for side in ("left", "right"):
            os.makedirs(os.path.join(out_dir, sub, side), exist_ok=True)

    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(paired))
    split_by_name = {paired[int(j)]: _split_of(i, len(paired), fractions)
                     for i, j in enumerate(order)}

    lines = [f"# fields: {' '.join(_MANIFEST_FIELDS)}", f"# seed: {seed}"]
    for name in skipped:
        side = "right" if name in left_names else "left"
        lines.append(f"# skipped {name}: missing {side} view")
    lines.append(f"# skipped_count: {len(skipped)}")

    records = []
    for index, name in enumerate(paired):
        gt_left = load_png(os.path.join(left_dir, name))
        gt_right = load_png(os.path.join(right_dir, name))
        if gt_left.shape != gt_right.shape:
            raise DataError(f"pair {name}: view shapes differ {gt_left.shape} vs {gt_right.shape}")
        rng = np.random.Generator(np.random.PCG64(seed ^ index))
        params = sample_params(rng)
        low_left, low_right = degrade_pair(gt_left, gt_right, params)
        sample_id = os.path.splitext(name)[0]
        save_png(os.path.join(out_dir, "low", "left", name), low_left)
        save_png(os.path.join(out_dir, "low", "right", name), low_right)
        save_png(os.path.join(out_dir, "gt", "left", name), gt_left)
        save_png(os.path.join(out_dir, "gt", "right", name), gt_right)
        records.append(_format_record(sample_id, split_by_name[name], params))
    lines.extend(records)

    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return records


def read_manifest(root):
    """Parse `<root>/manifest.txt` into a list of record dicts."""
    path = os.path.join(root, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise DataError(f"manifest not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != len(_MANIFEST_FIELDS):
                raise DataError(f"{path}:{lineno}: expected {len(_MANIFEST_FIELDS)} fields, got {len(parts)}")
            rec = dict(zip(_MANIFEST_FIELDS, parts))
            if rec["split"] not in ("train", "val", "test"):
                raise DataError(f"{path}:{lineno}: unknown split {rec['split']!r}")
            for key in ("alpha", "beta", "gamma", "sigma_s", "sigma_c"):
                rec[key] = float(rec[key])
            records.append(rec)
    return records


def load_sample(root, record):
    """Load one manifest record's four images into a StereoSample."""
    name = record["id"] + ".png"
    params = DegradeParams(alpha=record["alpha"], beta=record["beta"],
                           gamma=record["gamma"], sigma_s=record["sigma_s"],
                           sigma_c=record["sigma_c"])
    return StereoSample(
        id=record["id"],
        low_left=load_png(os.path.join(root, "low", "left", name)),
        low_right=load_png(os.path.join(root, "low", "right", name)),
        gt_left=load_png(os.path.join(root, "gt", "left", name)),
        gt_right=load_png(os.path.join(root, "gt", "right", name)),
        params=params,
    )

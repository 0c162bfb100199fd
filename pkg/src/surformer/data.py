"""
Synthetic paired tactile/vision surface dataset.

Tactile frames are procedural 8-bit contact images: band-limited texture at
a class-specific spatial frequency, a handful of Gaussian pressure blobs and
sensor noise.  The vision side is either a 2048-D embedding drawn from a
planted low-dimensional subspace (the default) or a procedural RGB image
turned into an embedding by a fixed random-feature map.

Every random draw derives from ``numpy.random.SeedSequence`` keyed by the
master seed and the sample index, so generation is reproducible sample by
sample.
"""

import json
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InsufficientDataError, LoadError, ParameterError


class SurfaceClass(IntEnum):
    CONCRETE = 0
    WOOD = 1
    BRICK = 2
    SYNTHETIC_FABRIC = 3
    GRASS = 4


CLASS_NAMES = ("Concrete", "Wood", "Brick", "SyntheticFabric", "Grass")
ORIGINAL_COUNTS = (288, 364, 661, 364, 600)
BALANCED_TARGET = 1000
ARCHIVE_FORMAT = "SFV1-DATA1"


@dataclass(frozen=True)
class ClassTextureProfile:
    base_intensity: float
    noise_std: float
    spatial_frequency: float  # cycles per pixel of the texture band
    blob_count: int
    blob_pressure: float
    texture_amplitude: float


DEFAULT_PROFILES = (
    ClassTextureProfile(0.39, 0.025, 0.20, 5, 0.24, 0.100),  # Concrete
    ClassTextureProfile(0.34, 0.015, 0.08, 3, 0.30, 0.065),  # Wood
    ClassTextureProfile(0.46, 0.020, 0.13, 4, 0.18, 0.085),  # Brick
    ClassTextureProfile(0.30, 0.012, 0.14, 2, 0.36, 0.055),  # SyntheticFabric
    ClassTextureProfile(0.29, 0.022, 0.10, 7, 0.26, 0.100),  # Grass
)

# Mean RGB per class for image-mode vision.
CLASS_COLORS = (
    (0.55, 0.55, 0.55),
    (0.55, 0.38, 0.22),
    (0.62, 0.28, 0.22),
    (0.30, 0.35, 0.60),
    (0.25, 0.55, 0.22),
)


@dataclass(frozen=True)
class AugmentPolicy:
    rotation_deg: float
    shift_frac: float
    zoom_range: float
    h_flip: bool
    v_flip: bool
    brightness_range: tuple
    channel_shift: float
    fill: str = "nearest"


VISION_POLICY = AugmentPolicy(25.0, 0.10, 0.05, True, False, (0.8, 1.2), 0.1)
TACTILE_POLICY = AugmentPolicy(20.0, 0.10, 0.05, True, False, (0.9, 1.1), 0.0)
IDENTITY_POLICY = AugmentPolicy(0.0, 0.0, 0.0, False, False, (1.0, 1.0), 0.0)


@dataclass
class PairedSample:
    tactile: np.ndarray   # uint8 (H, W)
    vision: np.ndarray    # float64 embedding (D,) or uint8 RGB (H, W, 3)
    label: int
    provenance: str = "original"
    source: int = -1      # index of the original an augmented sample was derived from

    @property
    def tactile_image(self):
        return self.tactile.astype(np.float64) / 255.0


@dataclass
class DataConfig:
    seed: int = 0
    counts: tuple = ORIGINAL_COUNTS
    image_size: int = 224
    vision_mode: str = "embeddings"
    embedding_dim: int = 2048
    signal_dim: int = 64
    snr: float = 10.0
    vision_separation: float = 4.0
    profiles: tuple = DEFAULT_PROFILES

    def __post_init__(self):
        if self.vision_mode not in ("embeddings", "images"):
            raise ParameterError(f"vision mode must be 'embeddings' or 'images', got {self.vision_mode!r}")
        self.counts = tuple(int(c) for c in self.counts)
        self.profiles = tuple(p if isinstance(p, ClassTextureProfile) else ClassTextureProfile(**p)
                              for p in self.profiles)

    def to_dict(self):
        d = asdict(self)
        d["counts"] = list(self.counts)
        d["profiles"] = [asdict(p) for p in self.profiles]
        return d


@dataclass
class Dataset:
    samples: list
    config: DataConfig
    balance_seed: int = None
    target_per_class: int = None

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def class_counts(self):
        return np.bincount(self.labels, minlength=len(CLASS_NAMES))

    def tactile_images(self):
        return [s.tactile_image for s in self.samples]

    def embeddings(self):
        """(N, D) visual embeddings; image-mode samples go through the random-feature map."""
        if self.config.vision_mode == "embeddings":
            return np.stack([s.vision for s in self.samples])
        embedder = RandomFeatureEmbedder(self.config.seed, self.config.embedding_dim)
        return np.stack([embedder(s.vision.astype(np.float64) / 255.0) for s in self.samples])


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def quantize(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def band_limited_noise(shape, frequency, rng, bandwidth=0.35):
    """Unit-std noise whose spectrum is a Gaussian ring around ``frequency`` cycles/pixel."""
    white = rng.standard_normal(shape)
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.rfftfreq(shape[1])[None, :]
    radius = np.hypot(fy, fx)
    width = max(bandwidth * frequency, 0.01)
    spectrum = np.fft.rfft2(white) * np.exp(-0.5 * ((radius - frequency) / width) ** 2)
    noise = np.fft.irfft2(spectrum, s=shape)
    std = noise.std()
    return noise / std if std > 0 else noise


def _blobs(size, count, pressure, rng, sigma_frac=1 / 12):
    field_ = np.zeros((size, size))
    if count <= 0:
        return field_
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(count):
        cy, cx = rng.uniform(0.15 * size, 0.85 * size, size=2)
        sigma = size * sigma_frac * rng.uniform(0.8, 1.25)
        amp = pressure * rng.uniform(0.8, 1.2)
        field_ += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    return field_


def generate_tactile_image(profile, rng, size=224):
    """Procedural contact frame, quantized to uint8."""
    base = profile.base_intensity + rng.normal(0.0, 0.04)
    amp = profile.texture_amplitude * rng.lognormal(0.0, 0.18)
    freq = profile.spatial_frequency * rng.uniform(0.8, 1.2)
    count = max(0, profile.blob_count + int(rng.integers(-1, 2)))
    img = (base
           + amp * band_limited_noise((size, size), freq, rng)
           + _blobs(size, count, profile.blob_pressure, rng)
           + profile.noise_std * rng.standard_normal((size, size)))
    return quantize(img)


def generate_vision_image(label, profile, rng, size=224):
    color = np.asarray(CLASS_COLORS[label]) + rng.normal(0.0, 0.04, size=3)
    texture = band_limited_noise((size, size), profile.spatial_frequency * 0.8, rng)
    shade = 1.0 + 0.15 * texture[..., None] * rng.uniform(0.7, 1.3)
    img = color[None, None, :] * shade + 0.02 * rng.standard_normal((size, size, 3))
    return quantize(img)


class PlantedSubspaceGenerator:
    """2048-D embeddings whose class signal lives in a random 64-D subspace.

    Signal (between- plus within-class latent variance) to isotropic noise
    variance is ``snr`` : 1 in total, so the top ``signal_dim`` principal
    components retain about (snr + signal_dim/dim) / (snr + 1) of the variance.
    """

    def __init__(self, seed, dim=2048, signal_dim=64, snr=10.0, n_classes=5, separation=4.0):
        rng = _rng(seed, 2)
        q, _ = np.linalg.qr(rng.standard_normal((dim, signal_dim)))
        self.basis = q.T
        # Expected distance between two class centers is ``separation`` within-class stds.
        self.centers = separation * rng.standard_normal((n_classes, signal_dim)) / np.sqrt(2.0 * signal_dim)
        self.within_std = 1.0
        between = float(np.sum(self.centers.var(axis=0)))
        signal = between + signal_dim * self.within_std ** 2
        self.noise_std = float(np.sqrt(signal / (snr * dim)))
        self.offset = np.abs(rng.standard_normal(dim)) * 0.5
        self.dim, self.signal_dim = dim, signal_dim

    def sample(self, label, rng):
        z = self.centers[label] + self.within_std * rng.standard_normal(self.signal_dim)
        return self.offset + z @ self.basis + self.noise_std * rng.standard_normal(self.dim)

    def jitter(self, embedding, rng, scale=0.3):
        """Feature-space augmentation: a small perturbation inside and outside the subspace."""
        dz = scale * self.within_std * rng.standard_normal(self.signal_dim)
        return embedding + dz @ self.basis + scale * self.noise_std * rng.standard_normal(self.dim)


class RandomFeatureEmbedder:
    """Fixed random ReLU features of coarse color/texture statistics of an RGB image."""

    def __init__(self, seed, dim=2048, grid=8):
        self.grid = grid
        n_in = grid * grid * 3 + 6
        rng = _rng(seed, 3)
        self.W = rng.standard_normal((n_in, dim)) / np.sqrt(n_in)
        self.b = rng.normal(0.0, 0.1, size=dim)

    def __call__(self, img):
        H, W, _ = img.shape
        g = self.grid
        cropped = img[:H - H % g, :W - W % g]
        blocks = cropped.reshape(g, H // g, g, W // g, 3).mean(axis=(1, 3)).ravel()
        stats = np.concatenate([img.mean(axis=(0, 1)), img.std(axis=(0, 1))])
        return np.maximum(np.concatenate([blocks, stats]) @ self.W + self.b, 0.0)


def generate_dataset(config=None, seed=None):
    """Original (unbalanced) samples with the configured per-class counts."""
    config = config or DataConfig()
    if seed is not None:
        config = DataConfig(**{**config.__dict__, "seed": seed})
    profiles = config.profiles
    if len(profiles) != len(CLASS_NAMES) or len(set(profiles)) != len(profiles):
        raise ParameterError("need one distinct profile per class")
    vision_gen = None
    if config.vision_mode == "embeddings":
        vision_gen = PlantedSubspaceGenerator(config.seed, config.embedding_dim, config.signal_dim,
                                              config.snr, len(CLASS_NAMES), config.vision_separation)
    samples = []
    index = 0
    for label, count in enumerate(config.counts):
        for _ in range(count):
            rng = _rng(config.seed, 0, index)
            tactile = generate_tactile_image(profiles[label], rng, config.image_size)
            if vision_gen is not None:
                vision = vision_gen.sample(label, rng)
            else:
                vision = generate_vision_image(label, profiles[label], rng, config.image_size)
            samples.append(PairedSample(tactile, vision, label))
            index += 1
    return Dataset(samples, config)


def affine_warp(img, angle_deg=0.0, shift=(0.0, 0.0), zoom=1.0, flip_h=False, flip_v=False):
    """Rotate/zoom about the image center, translate by ``shift`` (rows, cols)
    pixels, then flip.  Bilinear resampling; out-of-bounds reads repeat the
    nearest edge pixel.
    """
    out = img
    if angle_deg != 0.0 or zoom != 1.0 or shift[0] != 0.0 or shift[1] != 0.0:
        theta = np.deg2rad(angle_deg)
        c, s = np.cos(theta), np.sin(theta)
        # Maps output (row, col) to input (row, col).
        M = np.array([[c, s], [-s, c]]) / zoom
        center = (np.array(img.shape[:2], dtype=np.float64) - 1.0) / 2.0
        offset = center - M @ center - np.asarray(shift, dtype=np.float64)
        if img.ndim == 2:
            out = ndimage.affine_transform(img, M, offset=offset, order=1, mode="nearest")
        else:
            out = np.stack([ndimage.affine_transform(img[..., k], M, offset=offset, order=1, mode="nearest")
                            for k in range(img.shape[2])], axis=-1)
    if flip_h:
        out = out[:, ::-1]
    if flip_v:
        out = out[::-1]
    return np.ascontiguousarray(out)


def augment_image(img, policy, rng):
    """Random augmentation of a float image in [0, 1] (grayscale or RGB)."""
    H, W = img.shape[:2]
    angle = rng.uniform(-policy.rotation_deg, policy.rotation_deg)
    dy = rng.uniform(-policy.shift_frac, policy.shift_frac) * H
    dx = rng.uniform(-policy.shift_frac, policy.shift_frac) * W
    zoom = rng.uniform(1.0 - policy.zoom_range, 1.0 + policy.zoom_range)
    flip_h = policy.h_flip and rng.random() < 0.5
    flip_v = policy.v_flip and rng.random() < 0.5
    brightness = rng.uniform(*policy.brightness_range)
    out = affine_warp(img, angle, (dy, dx), zoom, flip_h, flip_v)
    out = out * brightness
    if img.ndim == 3 and policy.channel_shift > 0:
        out = out + rng.uniform(-policy.channel_shift, policy.channel_shift, size=img.shape[2])
    return np.clip(out, 0.0, 1.0)


def balance_by_augmentation(dataset, target_per_class=BALANCED_TARGET, seed=0,
                            tactile_policy=TACTILE_POLICY, vision_policy=VISION_POLICY):
    """Append augmented copies until every class has ``target_per_class`` samples.

    Originals are kept as-is.  Tactile and vision are augmented with
    independent draws under their own policies.
    """
    counts = dataset.class_counts()
    if np.any(counts == 0):
        raise ParameterError(f"every class needs at least one sample, got counts {counts.tolist()}")
    if np.any(counts > target_per_class):
        raise ParameterError(f"target {target_per_class} below existing class counts {counts.tolist()}")
    cfg = dataset.config
    vision_gen = None
    if cfg.vision_mode == "embeddings":
        vision_gen = PlantedSubspaceGenerator(cfg.seed, cfg.embedding_dim, cfg.signal_dim, cfg.snr,
                                              len(CLASS_NAMES), cfg.vision_separation)
    labels = dataset.labels
    samples = list(dataset.samples)
    for label in range(len(CLASS_NAMES)):
        members = np.flatnonzero(labels == label)
        need = target_per_class - len(members)
        if need <= 0:
            continue
        order_rng = _rng(seed, 1, label)
        reps = -(-need // len(members))
        sources = np.concatenate([order_rng.permutation(members) for _ in range(reps)])[:need]
        for j, src in enumerate(sources):
            rng_t = _rng(seed, 1, label, j, 0)
            rng_v = _rng(seed, 1, label, j, 1)
            orig = dataset.samples[src]
            tactile = quantize(augment_image(orig.tactile_image, tactile_policy, rng_t))
            if vision_gen is not None:
                vision = vision_gen.jitter(orig.vision, rng_v)
            else:
                vision = quantize(augment_image(orig.vision.astype(np.float64) / 255.0, vision_policy, rng_v))
            samples.append(PairedSample(tactile, vision, label, "augmented", int(src)))
    return Dataset(samples, cfg, balance_seed=seed, target_per_class=target_per_class)


@dataclass
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def stratified_split(labels, fractions=(0.8, 0.1, 0.1), seed=0):
    """Per-class seeded shuffle, then proportional slicing.

    Two fractions give (train, test); three give (train, val, test).
    """
    labels = np.asarray(labels)
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) not in (2, 3) or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ParameterError(f"fractions must be 2 or 3 non-negative values summing to 1, got {fractions}")
    cum = np.cumsum(fractions)
    parts = [[] for _ in fractions]
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if len(members) < len(fractions):
            raise InsufficientDataError(
                f"class {int(label)} has {len(members)} samples, fewer than {len(fractions)} splits"
            )
        members = _rng(seed, 4, int(label)).permutation(members)
        cuts = np.floor(cum * len(members) + 0.5).astype(int)
        cuts[-1] = len(members)
        start = 0
        for k, stop in enumerate(cuts):
            parts[k].append(members[start:stop])
            start = stop
    parts = [np.sort(np.concatenate(p)).astype(np.int64) for p in parts]
    if len(parts) == 2:
        return DatasetSplit(train=parts[0], test=parts[1])
    return DatasetSplit(train=parts[0], val=parts[1], test=parts[2])


def _policy_dict(p):
    d = asdict(p)
    d["brightness_range"] = list(p.brightness_range)
    return d


def write_archive(dataset, directory):
    """Directory archive: ``manifest.json`` plus per-sample blobs under ``<class>/``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(dataset.samples):
        cls = CLASS_NAMES[s.label]
        (root / cls).mkdir(exist_ok=True)
        tac = f"{cls}/{i:05d}.tac.png"
        Image.fromarray(s.tactile, mode="L").save(root / tac, format="PNG")
        if s.vision.dtype == np.uint8:
            vis = f"{cls}/{i:05d}.vis.png"
            Image.fromarray(s.vision, mode="RGB").save(root / vis, format="PNG")
        else:
            vis = f"{cls}/{i:05d}.emb.npy"
            np.save(root / vis, s.vision.astype("<f8"), allow_pickle=False)
        entries.append({"id": i, "label": int(s.label), "class": cls, "provenance": s.provenance,
                        "source": int(s.source), "tactile": tac, "vision": vis})
    manifest = {
        "format": ARCHIVE_FORMAT,
        "config": dataset.config.to_dict(),
        "balance_seed": dataset.balance_seed,
        "target_per_class": dataset.target_per_class,
        "counts": dataset.class_counts().tolist(),
        "class_names": list(CLASS_NAMES),
        "policies": {"tactile": _policy_dict(TACTILE_POLICY), "vision": _policy_dict(VISION_POLICY)},
        "samples": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


def load_archive(directory):
    root = Path(directory)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise LoadError(f"{root}: cannot read manifest: {exc}") from exc
    if manifest.get("format") != ARCHIVE_FORMAT:
        raise LoadError(f"{root}: unsupported archive format {manifest.get('format')!r}")
    config = DataConfig(**manifest["config"])
    samples = []
    for e in manifest["samples"]:
        tactile = np.asarray(Image.open(root / e["tactile"]), dtype=np.uint8)
        if e["vision"].endswith(".npy"):
            vision = np.load(root / e["vision"], allow_pickle=False).astype(np.float64)
        else:
            vision = np.asarray(Image.open(root / e["vision"]).convert("RGB"), dtype=np.uint8)
        samples.append(PairedSample(tactile, vision, int(e["label"]), e["provenance"], int(e["source"])))
    return Dataset(samples, config, manifest.get("balance_seed"), manifest.get("target_per_class"))

"""Datasets: synthetic lesion-like images with tabular metadata, HAM-style
directory ingestion, and seeded batching.

Class ids follow a fixed order of the standard HAM10000 diagnosis codes::

    0 akiec  actinic keratoses
    1 bkl    benign keratoses
    2 bcc    basal cell carcinoma
    3 df     dermatofibroma
    4 nv     melanocytic nevi
    5 mel    melanoma
    6 vasc   vascular lesions

Tabular ids (0 always means unknown / missing):

* sex: 1 male, 2 female
* age bucket: ``1 + min(age // 5, 20)`` (five-year bins, 100+ folded into 21)
* localization: 1-based index into :data:`LOCALIZATIONS`
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import zoom

CLASSES = ("akiec", "bkl", "bcc", "df", "nv", "mel", "vasc")
SEXES = ("male", "female")
LOCALIZATIONS = (
    "abdomen", "acral", "back", "chest", "ear", "face", "foot", "genital",
    "hand", "lower extremity", "neck", "scalp", "trunk", "upper extremity",
)
AGE_BUCKETS = 21
METADATA_COLUMNS = ("image_id", "dx", "age", "sex", "localization")


class IngestionError(ValueError):
    pass


def rng_for(*keys: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of non-negative ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


@dataclass
class Dataset:
    images: np.ndarray          # (N, C, H, W) float32 in [0, 1]
    tabular: np.ndarray         # (N, 3) int64: sex, age bucket, localization
    labels: np.ndarray          # (N,) int64
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.tabular = np.asarray(self.tabular, dtype=np.int64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.ids:
            self.ids = [f"s{i:06d}" for i in range(len(self.labels))]
        if not (len(self.images) == len(self.tabular) == len(self.labels) == len(self.ids)):
            raise ValueError("images, tabular, labels and ids must have equal length")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.tabular[idx], self.labels[idx], [self.ids[i] for i in idx])


# ---------------------------------------------------------------- synthesis

# (RGB mean, radius as fraction of image side, aspect ratio)
CLASS_STYLES = (
    ((0.78, 0.36, 0.30), 0.17, 1.7),
    ((0.56, 0.42, 0.24), 0.26, 1.2),
    ((0.88, 0.58, 0.66), 0.14, 1.0),
    ((0.45, 0.28, 0.22), 0.09, 1.0),
    ((0.32, 0.18, 0.10), 0.20, 1.0),
    ((0.12, 0.08, 0.10), 0.29, 1.6),
    ((0.72, 0.08, 0.22), 0.12, 1.3),
)
# preferred (sex id, age bucket, localization id) per class
CLASS_TABULAR = ((1, 15, 6), (1, 13, 3), (1, 14, 6), (2, 9, 10), (2, 6, 13), (1, 12, 3), (2, 8, 14))


@dataclass
class SynthConfig:
    n: int = 1400
    image_size: int = 32
    correlation: float = 0.5
    color_jitter: float = 0.05
    radius_jitter: float = 0.15
    noise: float = 0.03
    missing_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n < len(CLASSES):
            raise ValueError(f"n must be >= {len(CLASSES)}")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [0, 1]")


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = np.array([0.86, 0.66, 0.56]) + rng.normal(0, 0.04, 3)
    coarse = rng.normal(0, 0.04, (3, 4, 4))
    low = zoom(coarse, (1, size / 4, size / 4), order=1)
    return base[:, None, None] + low


def _image(rng: np.random.Generator, cfg: SynthConfig, label: int) -> np.ndarray:
    s = cfg.image_size
    color, radius, aspect = CLASS_STYLES[label]
    img = _background(rng, s)
    r = radius * s * (1.0 + rng.normal(0, cfg.radius_jitter))
    r = max(r, 1.5)
    cy, cx = rng.uniform(0.3 * s, 0.7 * s, 2)
    theta = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:s, 0:s] + 0.5
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    rho = np.sqrt((u / (r * np.sqrt(aspect))) ** 2 + (v * np.sqrt(aspect) / r) ** 2)
    alpha = 1.0 / (1.0 + np.exp((rho - 1.0) * 8.0))
    col = np.asarray(color) + rng.normal(0, cfg.color_jitter, 3)
    blob = col[:, None, None] * (1.0 + rng.normal(0, 0.05, (1, s, s)))
    img = img * (1 - alpha) + blob * alpha + rng.normal(0, cfg.noise, (3, s, s))
    # 8-bit quantized so PNG round trips are exact
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def _tabular(rng: np.random.Generator, cfg: SynthConfig, label: int) -> list[int]:
    sex_p, age_p, loc_p = CLASS_TABULAR[label]
    out = []
    for pref, lo, hi, spread in ((sex_p, 1, 2, 0), (age_p, 1, AGE_BUCKETS, 1), (loc_p, 1, len(LOCALIZATIONS), 0)):
        if rng.random() < cfg.correlation:
            val = int(np.clip(pref + rng.integers(-spread, spread + 1), lo, hi))
        else:
            val = int(rng.integers(lo, hi + 1))
        if rng.random() < cfg.missing_rate:
            val = 0
        out.append(val)
    return out


def generate(cfg: SynthConfig) -> Dataset:
    """Class-balanced synthetic dataset; identical for identical configs."""
    k = len(CLASSES)
    order = rng_for(cfg.seed, 0).permutation(cfg.n)
    labels = (np.arange(cfg.n) % k)[order]
    images = np.empty((cfg.n, 3, cfg.image_size, cfg.image_size), np.float32)
    tab = np.empty((cfg.n, 3), np.int64)
    for i, y in enumerate(labels):
        rng = rng_for(cfg.seed, 1, i)
        images[i] = _image(rng, cfg, int(y))
        tab[i] = _tabular(rng, cfg, int(y))
    return Dataset(images, tab, labels, [f"SYN_{cfg.seed}_{i:06d}" for i in range(cfg.n)])


# ---------------------------------------------------------------- directories

def age_bucket(age: str | float | None) -> int:
    if age is None or (isinstance(age, str) and not age.strip()):
        return 0
    a = float(age)
    if not np.isfinite(a) or a < 0:
        return 0
    return 1 + min(int(a) // 5, AGE_BUCKETS - 1)


def sex_id(sex: str | None) -> int:
    sex = (sex or "").strip().lower()
    return SEXES.index(sex) + 1 if sex in SEXES else 0


def localization_id(loc: str | None) -> int:
    loc = (loc or "").strip().lower()
    return LOCALIZATIONS.index(loc) + 1 if loc in LOCALIZATIONS else 0


def _find_image(image_dir: Path, image_id: str) -> Path:
    for ext in (".png", ".jpg", ".jpeg"):
        p = image_dir / f"{image_id}{ext}"
        if p.exists():
            return p
    raise IngestionError(f"no image file for {image_id!r} in {image_dir}")


def read_image(path: Path, size: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (size, size):
                im = im.resize((size, size), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read image {path}: {exc}") from None
    return arr.transpose(2, 0, 1)


def load_directory(metadata_path, image_dir, image_size: int = 32) -> Dataset:
    """Read a HAM-style metadata table (``image_id, dx, age, sex, localization``) and images."""
    metadata_path, image_dir = Path(metadata_path), Path(image_dir)
    with open(metadata_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"image_id", "dx"} - set(reader.fieldnames or ())
        if missing:
            raise IngestionError(f"{metadata_path}: missing columns {sorted(missing)}")
        rows = list(reader)
    images, tab, labels, ids = [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        dx = (row.get("dx") or "").strip().lower()
        if dx not in CLASSES:
            raise IngestionError(f"{metadata_path}:{lineno}: unknown diagnosis {row.get('dx')!r} in row {row}")
        try:
            age = age_bucket(row.get("age"))
        except ValueError:
            raise IngestionError(f"{metadata_path}:{lineno}: bad age {row.get('age')!r}") from None
        image_id = row["image_id"].strip()
        images.append(read_image(_find_image(image_dir, image_id), image_size))
        tab.append((sex_id(row.get("sex")), age, localization_id(row.get("localization"))))
        labels.append(CLASSES.index(dx))
        ids.append(image_id)
    if not images:
        return Dataset(np.zeros((0, 3, image_size, image_size), np.float32), np.zeros((0, 3)), np.zeros(0), [])
    return Dataset(np.stack(images), np.array(tab), np.array(labels), ids)


def load_dataset_dir(path, image_size: int = 32) -> Dataset:
    """Load a directory holding ``metadata.csv`` and ``images/``."""
    path = Path(path)
    return load_directory(path / "metadata.csv", path / "images", image_size)


def write_directory(ds: Dataset, out_dir) -> Path:
    """Write ``metadata.csv`` plus one PNG per sample under ``images/``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    with open(out / "metadata.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METADATA_COLUMNS)
        for i, image_id in enumerate(ds.ids):
            sx, ag, lc = (int(v) for v in ds.tabular[i])
            w.writerow([
                image_id,
                CLASSES[int(ds.labels[i])],
                "" if ag == 0 else str(5 * (ag - 1)),
                SEXES[sx - 1] if sx else "unknown",
                LOCALIZATIONS[lc - 1] if lc else "unknown",
            ])
            px = np.round(ds.images[i].transpose(1, 2, 0) * 255.0).astype(np.uint8)
            Image.fromarray(px, "RGB").save(out / "images" / f"{image_id}.png")
    return out


# ---------------------------------------------------------------- batching

def batches(n: int, batch_size: int, seed: int | Sequence[int], epoch: int) -> list[np.ndarray]:
    """Index batches for one epoch from a permutation keyed by (seed, epoch)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    keys = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    perm = rng_for(*keys, epoch).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]

"""Synthetic text-line generation with blur-derived quality labels.

A text line is rendered onto a 400x40 near-solid background, slightly
rotated, then degraded with a Gaussian blur whose standard deviation sigma
is drawn from [0.5, 4.5]. The ground-truth quality label is a piecewise,
continuous, strictly decreasing function of sigma (see ``quality_label``),
so sigma is the sole determinant of the label: rotation happens before the
blur, and nothing after it touches sharpness.

Fonts are user-supplied TTF paths; ``default_font_paths`` discovers a small
set of system faces (DejaVu on most Linux installs). Glyph coverage is
checked against each font's cmap so a script is only sampled when at least
one font can actually draw it.
"""

from __future__ import annotations

import functools
import json
import math
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from fontTools.ttLib import TTFont

from . import imgproc
from .errors import DataError, DomainError, ParameterError, RenderError

SIGMA_KNOTS = (0.5, 1.5, 2.5, 3.5, 4.5)

# Named scaling-factor presets (s1, s2, s3, s4); G2 is the default.
SCALING_GROUPS: dict[str, tuple[float, float, float, float]] = {
    "G1": (0.25, 0.5, 3.25, 15.0),
    "G2": (0.115, 0.225, 1.515, 17.145),
    "G3": (0.175, 0.365, 1.8, 16.65),
    "G4": (0.325, 0.215, 2.46, 16.0),
    "G5": (0.325, 0.675, 1.335, 16.665),
    "G6": (0.25, 1.25, 7.5, 90.0),
}


@dataclass(frozen=True)
class LabelFnConfig:
    """Scaling factors shaping how fast quality decays with sigma.

    Positivity of every factor is required (it guarantees continuity and
    strict monotonicity). The design guideline s1 < s2 < 1 < s3 < s4 makes
    quality decay accelerate with sigma, but two of the named presets bend
    it, so it is reported by ``follows_guideline`` rather than enforced.
    """

    s: tuple[float, float, float, float] = SCALING_GROUPS["G2"]

    def __post_init__(self):
        if len(self.s) != 4 or any(not (v > 0) for v in self.s):
            raise ParameterError(f"scaling factors must be four positive reals, got {self.s}")
        object.__setattr__(self, "s", tuple(float(v) for v in self.s))

    @classmethod
    def from_group(cls, name: str) -> "LabelFnConfig":
        try:
            return cls(SCALING_GROUPS[name.upper()])
        except KeyError:
            raise ParameterError(f"unknown scaling group {name!r}; choose from {sorted(SCALING_GROUPS)}") from None

    @property
    def partial_sums(self) -> tuple[float, float, float]:
        s1, s2, s3, _ = self.s
        return (s1, s1 + s2, s1 + s2 + s3)

    @property
    def min_label(self) -> float:
        return 1.0 / (1.0 + self.partial_sums[2] + self.s[3])

    @property
    def follows_guideline(self) -> bool:
        s1, s2, s3, s4 = self.s
        return s1 < s2 < 1 < s3 < s4


def quality_label(sigma: float, cfg: LabelFnConfig = LabelFnConfig()) -> float:
    """Quality in (0, 1] for a blur level sigma in [0.5, 4.5].

    Piecewise-reciprocal in sigma with knots every 1.0 starting at 0.5:
    on piece i the value is 1 / (1 + p_{i-1} + (sigma - knot_i) * s_i) where
    p_i is the running sum of the scaling factors. Continuous at the knots,
    strictly decreasing, with range [1/(1 + p3 + s4), 1].
    """
    sigma = float(sigma)
    if math.isnan(sigma) or sigma < SIGMA_KNOTS[0] or sigma > SIGMA_KNOTS[-1]:
        raise DomainError(f"sigma must lie in [{SIGMA_KNOTS[0]}, {SIGMA_KNOTS[-1]}], got {sigma}")
    prev = (0.0,) + cfg.partial_sums
    piece = min(int(sigma - 0.5), 3)
    knot = SIGMA_KNOTS[piece]
    return 1.0 / (1.0 + prev[piece] + (sigma - knot) * cfg.s[piece])


def invert_label(q: float, cfg: LabelFnConfig = LabelFnConfig()) -> float:
    """The unique sigma with quality_label(sigma) == q (piecewise closed form)."""
    q = float(q)
    if math.isnan(q) or q < cfg.min_label or q > 1.0:
        raise DomainError(f"label must lie in [{cfg.min_label}, 1], got {q}")
    prev = (0.0,) + cfg.partial_sums
    # Label values at the knots, decreasing: 1, 1/(1+p1), 1/(1+p2), 1/(1+p3), min.
    piece = 3
    for i in range(3):
        if q >= 1.0 / (1.0 + prev[i + 1]):
            piece = i
            break
    return SIGMA_KNOTS[piece] + (1.0 / q - 1.0 - prev[piece]) / cfg.s[piece]


# ---------------------------------------------------------------------------
# Fonts and text sources


_FONT_DIRS = (
    "/usr/share/fonts",
    "/usr/local/share/fonts",
    os.path.expanduser("~/.fonts"),
)
_PREFERRED_STEMS = (
    "DejaVuSans", "DejaVuSans-Bold", "DejaVuSerif",
    "DejaVuSerif-Bold", "DejaVuSansMono", "DejaVuSansMono-Bold",
)


def default_font_paths(limit: int = 6) -> list[str]:
    """Discover up to ``limit`` usable TTF faces on this system.

    Prefers the DejaVu family (ubiquitous on Linux; also bundled with
    matplotlib). Raises DataError when nothing is found; pass explicit paths
    in SynthConfig in that case.
    """
    roots = [Path(d) for d in _FONT_DIRS if os.path.isdir(d)]
    try:
        import matplotlib  # optional; used only as a font source

        roots.append(Path(matplotlib.get_data_path()) / "fonts" / "ttf")
    except ImportError:
        pass

    found: dict[str, str] = {}
    for root in roots:
        for p in sorted(root.rglob("*.ttf")):
            found.setdefault(p.stem, str(p))
    ordered = [found[stem] for stem in _PREFERRED_STEMS if stem in found]
    for stem in sorted(found):
        if found[stem] not in ordered:
            ordered.append(found[stem])
    if not ordered:
        raise DataError("no .ttf fonts found on this system; supply font paths in SynthConfig")
    return ordered[:limit]


@functools.lru_cache(maxsize=64)
def _font_charset(font_path: str) -> frozenset[int]:
    try:
        with TTFont(font_path, lazy=True, fontNumber=0) as tf:
            return frozenset(tf.getBestCmap())
    except Exception as exc:
        raise DataError(f"cannot read font {font_path}: {exc}") from exc


def font_covers(font_path: str, text: str) -> bool:
    """True when the font's cmap has a glyph for every character of ``text``."""
    charset = _font_charset(font_path)
    return all(ord(ch) in charset for ch in text if not ch.isspace())


@functools.lru_cache(maxsize=256)
def _load_font(font_path: str, size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(font_path, size)


def _data_file(name: str) -> Path:
    return Path(__file__).parent / "data" / name


@functools.lru_cache(maxsize=8)
def _load_corpus(path: str) -> tuple[str, ...]:
    entries = tuple(
        line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()
    )
    if not entries:
        raise DataError(f"corpus file {path} is empty")
    return entries


# ---------------------------------------------------------------------------
# Synthesis configuration and samples


@dataclass(frozen=True)
class SynthConfig:
    """Attribute ranges for text-line synthesis.

    Ranges are inclusive. ``fonts`` must name at least one TTF; scripts that
    no configured font can draw are excluded from sampling.
    """

    fonts: tuple[str, ...] = field(default_factory=lambda: tuple(default_font_paths()))
    backgrounds: tuple[int, ...] = (205, 213, 221, 229, 237, 246, 255)
    image_size: tuple[int, int] = (400, 40)
    sigma_range: tuple[float, float] = (0.5, 4.5)
    font_size_cn: tuple[int, int] = (28, 35)
    font_size_en: tuple[int, int] = (35, 45)
    angle_cn: tuple[float, float] = (-2.0, 2.0)
    angle_en: tuple[float, float] = (-1.0, 1.0)
    chars_per_line_cn: int = 10
    words_per_line_en: int = 5
    underfill_probability: float = 0.15
    ink_range: tuple[int, int] = (0, 60)
    kernel_size: int = 11
    corpus_cn: str = field(default_factory=lambda: str(_data_file("chinese_chars.txt")))
    corpus_en: str = field(default_factory=lambda: str(_data_file("english_words.txt")))

    def __post_init__(self):
        if not self.fonts:
            raise ParameterError("at least one font is required")
        if self.image_size[0] < 1 or self.image_size[1] < 1:
            raise ParameterError(f"image_size must be positive, got {self.image_size}")
        for name in ("sigma_range", "font_size_cn", "font_size_en", "angle_cn", "angle_en", "ink_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ParameterError(f"{name} must be ordered low..high, got ({lo}, {hi})")
        if not (0.0 <= self.underfill_probability <= 1.0):
            raise ParameterError(f"underfill_probability must lie in [0, 1], got {self.underfill_probability}")
        if not (self.sigma_range[0] > 0):
            raise ParameterError("sigma_range must be positive")
        if not self.backgrounds or any(not (0 <= b <= 255) for b in self.backgrounds):
            raise ParameterError(f"backgrounds must be intensities in [0, 255], got {self.backgrounds}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for key in ("fonts", "backgrounds", "image_size", "sigma_range", "font_size_cn",
                    "font_size_en", "angle_cn", "angle_en", "ink_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class TextLineSample:
    """One synthesized line: the image plus every attribute that produced it."""

    image: np.ndarray
    sigma: float
    label: float
    text: str
    font: str
    font_size: int
    background: int
    angle: float
    script: str


def _available_scripts(cfg: SynthConfig) -> list[str]:
    scripts = []
    for script, corpus in (("chinese", cfg.corpus_cn), ("english", cfg.corpus_en)):
        entries = _load_corpus(corpus)
        probe = "".join(entries[:30])
        if any(font_covers(f, probe) for f in cfg.fonts):
            scripts.append(script)
    return scripts


def _sample_text(rng: np.random.Generator, cfg: SynthConfig, script: str) -> str:
    underfilled = rng.random() < cfg.underfill_probability
    if script == "chinese":
        chars = _load_corpus(cfg.corpus_cn)
        center = cfg.chars_per_line_cn
        n = int(rng.integers(1, max(2, center // 2))) if underfilled else int(rng.integers(center - 2, center + 3))
        return "".join(chars[i] for i in rng.integers(0, len(chars), size=n))
    words = _load_corpus(cfg.corpus_en)
    center = cfg.words_per_line_en
    n = int(rng.integers(1, max(2, center // 2))) if underfilled else int(rng.integers(center - 1, center + 2))
    return " ".join(words[i] for i in rng.integers(0, len(words), size=n))


def _rasterize(text: str, font_path: str, font_size: int, ink: int, background: int,
               size: tuple[int, int]) -> np.ndarray:
    w, h = size
    canvas = Image.new("L", (w, h), color=background)
    draw = ImageDraw.Draw(canvas)
    draw.text((6, h // 2), text, fill=ink, font=_load_font(font_path, font_size), anchor="lm")
    return np.asarray(canvas, dtype=np.uint8).copy()


def render_text_line(
    cfg: SynthConfig,
    rng_seed,
    lcfg: LabelFnConfig = LabelFnConfig(),
    sigma: float | None = None,
    max_text_retries: int = 20,
) -> TextLineSample:
    """Render one labeled text line, deterministically for a given seed.

    Sampling order: script, text (with the underfill coin), font, font size,
    background, ink, angle; then rasterize, rotate (fill = background), draw
    sigma, blur, and label. Passing ``sigma`` skips the sigma draw (it is the
    final draw, so every other attribute matches the unforced render for the
    same seed) and is how matched sharp/blurred pairs are produced.
    """
    rng = np.random.default_rng(rng_seed)
    scripts = _available_scripts(cfg)
    if not scripts:
        raise RenderError("no configured font covers any configured corpus")

    script = scripts[int(rng.integers(0, len(scripts)))]
    text = font_path = None
    for _ in range(max_text_retries):
        candidate = _sample_text(rng, cfg, script)
        usable = [f for f in cfg.fonts if font_covers(f, candidate)]
        if usable:
            text = candidate
            font_path = usable[int(rng.integers(0, len(usable)))]
            break
    if text is None:
        raise RenderError(f"no font covers sampled {script} text after {max_text_retries} retries")

    size_lo, size_hi = cfg.font_size_cn if script == "chinese" else cfg.font_size_en
    angle_lo, angle_hi = cfg.angle_cn if script == "chinese" else cfg.angle_en
    font_size = int(rng.integers(size_lo, size_hi + 1))
    background = int(cfg.backgrounds[int(rng.integers(0, len(cfg.backgrounds)))])
    ink = int(rng.integers(cfg.ink_range[0], cfg.ink_range[1] + 1))
    angle = float(rng.uniform(angle_lo, angle_hi))

    img = _rasterize(text, font_path, font_size, ink, background, cfg.image_size)
    img = imgproc.rotate(img, angle, fill=background)
    if sigma is None:
        sigma = float(rng.uniform(*cfg.sigma_range))
    img = imgproc.gaussian_blur(img, imgproc.BlurSpec(sigma, cfg.kernel_size))

    return TextLineSample(
        image=img,
        sigma=sigma,
        label=quality_label(sigma, lcfg),
        text=text,
        font=Path(font_path).stem,
        font_size=font_size,
        background=background,
        angle=angle,
        script=script,
    )


# ---------------------------------------------------------------------------
# Dataset generation and the manifest


MANIFEST_NAME = "manifest.jsonl"
_RECORD_FIELDS = ("path", "sigma", "label", "text", "font", "font_size", "background", "angle", "script")


@dataclass(frozen=True)
class SampleRecord:
    path: str
    sigma: float
    label: float
    text: str
    font: str
    font_size: int
    background: int
    angle: float
    script: str


@dataclass
class DatasetManifest:
    """All sample metadata plus the exact configuration that generated it."""

    records: list[SampleRecord]
    synth_config: SynthConfig
    label_config: LabelFnConfig
    seed: int
    count: int
    root: Path

    def __post_init__(self):
        if self.count != len(self.records):
            raise DataError(f"manifest count {self.count} != number of records {len(self.records)}")


def sample_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent per-sample RNG stream, derived only from (seed, index)."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    header = {
        "seed": manifest.seed,
        "count": manifest.count,
        "synth_config": manifest.synth_config.to_dict(),
        "label_config": {"s": list(manifest.label_config.s)},
    }
    lines = [json.dumps(header, sort_keys=True)]
    for rec in manifest.records:
        lines.append(json.dumps({k: getattr(rec, k) for k in _RECORD_FIELDS}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise DataError(f"manifest {path} is empty")
    try:
        header = json.loads(lines[0])
        records = [SampleRecord(**json.loads(line)) for line in lines[1:] if line.strip()]
        return DatasetManifest(
            records=records,
            synth_config=SynthConfig.from_dict(header["synth_config"]),
            label_config=LabelFnConfig(tuple(header["label_config"]["s"])),
            seed=int(header["seed"]),
            count=int(header["count"]),
            root=path.parent,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc


def generate_dataset(
    n: int,
    cfg: SynthConfig,
    lcfg: LabelFnConfig,
    seed: int,
    out_dir: str | Path,
    jobs: int = 1,
) -> DatasetManifest:
    """Write ``n`` labeled PGM line images plus a JSONL manifest to ``out_dir``.

    Per-sample RNG streams are derived from (seed, index), so regeneration is
    bit-reproducible and samples may be rendered in parallel. On any failure
    every file written so far is removed.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []

    def _make(index: int) -> SampleRecord:
        sample = render_text_line(cfg, sample_seed(seed, index), lcfg)
        rel = f"line_{index:06d}.pgm"
        target = out_dir / rel
        tmp = out_dir / (rel + ".tmp")
        imgproc.write_pgm(tmp, sample.image)
        os.replace(tmp, target)
        written.append(target)
        return SampleRecord(
            path=rel,
            sigma=sample.sigma,
            label=sample.label,
            text=sample.text,
            font=sample.font,
            font_size=sample.font_size,
            background=sample.background,
            angle=sample.angle,
            script=sample.script,
        )

    try:
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                records = list(pool.map(_make, range(n)))
        else:
            records = [_make(i) for i in range(n)]
        manifest = DatasetManifest(
            records=records, synth_config=cfg, label_config=lcfg,
            seed=seed, count=n, root=out_dir,
        )
        write_manifest(manifest, out_dir / MANIFEST_NAME)
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        (out_dir / MANIFEST_NAME).unlink(missing_ok=True)
        raise
    return manifest


# ---------------------------------------------------------------------------
# Page composition (benchmarking and demos)


@dataclass(frozen=True)
class PageLine:
    """Ground truth for one line pasted on a composed page."""

    box: tuple[int, int, int, int]  # x, y, w, h of the visible ink
    sigma: float
    label: float


def _ink_box(line_img: np.ndarray, background: int, min_contrast: int = 20) -> tuple[int, int, int, int] | None:
    mask = np.abs(line_img.astype(np.int16) - background) > min_contrast
    if not mask.any():
        return None
    ys, xs = np.nonzero(mask)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def compose_page(
    cfg: SynthConfig,
    lcfg: LabelFnConfig,
    rng_seed,
    n_lines: int,
    page_size: tuple[int, int] = (1700, 2400),
    sigma: float | None = None,
    line_scale: float = 1.0,
    gap: int = 24,
) -> tuple[np.ndarray, list[PageLine]]:
    """Paste rendered lines onto a white page and return known line truths.

    With ``sigma`` set, every line on the page shares that blur level. A
    ``line_scale`` below 1 shrinks each rendered line before pasting, which
    is how pages with very small text are produced. Lines are stacked top to
    bottom with at least ``gap`` pixels between them at random x positions.
    """
    rng = np.random.default_rng(rng_seed)
    page_w, page_h = page_size
    page = np.full((page_h, page_w), 255, dtype=np.uint8)
    truths: list[PageLine] = []

    y = gap + int(rng.integers(0, 2 * gap))
    placed = 0
    attempt = 0
    while placed < n_lines and attempt < n_lines * 8:
        attempt += 1
        line_sigma = sigma if sigma is not None else float(rng.uniform(*cfg.sigma_range))
        sample = render_text_line(cfg, rng.integers(0, 2**63 - 1), lcfg, sigma=line_sigma)
        img = sample.image
        if line_scale != 1.0:
            img = imgproc.resize_bilinear(
                img,
                max(1, round(img.shape[1] * line_scale)),
                max(1, round(img.shape[0] * line_scale)),
            )
        h, w = img.shape
        if y + h + gap >= page_h or w + 2 * gap >= page_w:
            break
        box = _ink_box(img, sample.background)
        if box is None:
            continue
        x = int(rng.integers(gap, page_w - w - gap))
        page[y:y + h, x:x + w] = img
        bx, by, bw, bh = box
        truths.append(PageLine(box=(x + bx, y + by, bw, bh), sigma=line_sigma,
                               label=quality_label(line_sigma, lcfg)))
        y += h + gap + int(rng.integers(0, 3 * gap))
        placed += 1
    return page, truths

"""RGB images as three-channel densities on a pixel lattice, and frame output."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InputError, IOFailure, UnsupportedFormat, ZeroImage
from .io import write_density, write_json

__all__ = [
    "ImageDensity",
    "load_image",
    "image_density",
    "save_rgb",
    "render_frames",
    "frame_name",
    "two_gaussian_fixture",
    "mass_centroid",
    "FLOOR",
]

FLOOR = 1e-6


@dataclass(frozen=True)
class ImageDensity:
    """Jointly normalised RGB density.

    ``values`` has shape ``(3, height * width)`` with pixels in row-major
    order, matching ``grid_graph((height, width))``.  ``total`` is the summed
    intensity (in [0, 1] units, after flooring) that was divided out, so
    ``values * total`` recovers the floored image.
    """

    width: int
    height: int
    values: np.ndarray
    total: float
    floor: float

    @property
    def shape(self):
        return (self.height, self.width)

    def channel_mass(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def as_rgb(self) -> np.ndarray:
        """Floored intensities back in ``(height, width, 3)`` layout."""
        return (self.values * self.total).T.reshape(self.height, self.width, 3)


def image_density(rgb, floor_rel: float = FLOOR) -> ImageDensity:
    """Normalise an ``(H, W, 3)`` array of intensities in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise UnsupportedFormat("expected an (height, width, 3) RGB array")
    peak = float(rgb.max()) if rgb.size else 0.0
    if not peak > 0:
        raise ZeroImage("image has no positive intensity")
    floor = floor_rel * peak
    x = np.maximum(rgb, floor)
    total = float(x.sum())
    h, w, _ = x.shape
    values = (x / total).reshape(h * w, 3).T.copy()
    return ImageDensity(w, h, values, total, floor)


def load_image(path, floor_rel: float = FLOOR) -> ImageDensity:
    """Read an 8-bit RGB PNG as a jointly normalised three-channel density."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            fmt, mode = im.format, im.mode
            if fmt != "PNG" or mode != "RGB":
                raise UnsupportedFormat(f"{path}: need 8-bit RGB PNG, got {fmt} {mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not an image") from exc
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    return image_density(arr / 255.0, floor_rel)


def save_rgb(rgb8, path) -> Path:
    from PIL import Image

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(rgb8, dtype=np.uint8), mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    return path


def frame_name(t: float, ext: str = "png") -> str:
    return f"frame_t{t:.3f}.{ext}"


def _quantize(frame, scale, shape):
    h, w = shape
    img = frame.reshape(3, h * w).T.reshape(h, w, 3) * (255.0 / scale)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_frames(traj, shape, out_dir, times, channels=3, scale=None, extra=None, png=None):
    """Write one CSV and, for three channels, one PNG per requested time.

    Every frame uses the same intensity scale: density ``scale`` maps to 255.
    By default ``scale`` is the largest density value over all rendered
    frames; pass ``1 / total`` from :class:`ImageDensity` to render at the
    brightness of the source image.  The scale, the
    times and the file names go into ``manifest.json``.

    Returns
    -------
    list of Path
        Written files, manifest last.
    """
    png = channels == 3 if png is None else png
    if png and channels != 3:
        raise InputError("PNG output needs exactly 3 channels")
    times = [float(t) for t in times]
    if any(not 0.0 <= t <= 1.0 for t in times):
        raise InputError("frame times must lie in [0, 1]")
    frames = [traj.at(t) for t in times]
    if scale is None:
        scale = max(float(f.max()) for f in frames) if frames else 1.0
    scale = scale if scale > 0 else 1.0
    out_dir = Path(out_dir)
    written, records = [], []
    for t, f in zip(times, frames):
        rec = {"t": t, "mass": float(f.sum())}
        csv = write_density(f.reshape(channels, -1), out_dir / frame_name(t, "csv"))
        written.append(csv)
        rec["csv"] = csv.name
        if png:
            png_path = save_rgb(_quantize(f, scale, shape), out_dir / frame_name(t))
            written.append(png_path)
            rec["png"] = png_path.name
        records.append(rec)
    manifest = {"scale": scale, "shape": list(shape), "channels": channels, "frames": records}
    if extra:
        manifest.update(extra)
    written.append(write_json(manifest, out_dir / "manifest.json"))
    return written


def two_gaussian_fixture(size=16, sigma=0.12, centers=((0.3, 0.3), (0.7, 0.7)),
                         colors=((1.0, 0.55, 0.15), (0.15, 0.55, 1.0)), background=4):
    """Two 8-bit RGB images, each one coloured Gaussian blob on a dim background.

    The constant ``background`` level keeps every pixel positive, so the
    flooring in :func:`load_image` is inactive and the per-channel masses are
    exactly the normalised channel sums returned in ``expected``.  With the
    default mirrored centres and colours both images have the same total
    intensity.

    Returns
    -------
    (img0, img1, expected)
        ``uint8`` arrays of shape ``(size, size, 3)`` and a ``(2, 3)`` array of
        expected per-channel masses.
    """
    ax = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    images, expected = [], []
    for (cy, cx), col in zip(centers, colors):
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        img = background + (255 - background) * blob[..., None] * np.asarray(col)
        img8 = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        chan = img8.astype(np.float64).sum(axis=(0, 1))
        images.append(img8)
        expected.append(chan / chan.sum())
    return images[0], images[1], np.asarray(expected)


def mass_centroid(frame, shape) -> np.ndarray:
    """Spatial centroid ``(row, col)`` of the total mass over all channels."""
    h, w = shape
    total = np.asarray(frame).reshape(-1, h, w).sum(axis=0)
    rows, cols = np.mgrid[0:h, 0:w]
    m = total.sum()
    return np.array([(rows * total).sum() / m, (cols * total).sum() / m])

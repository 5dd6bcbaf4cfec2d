"""Voronoi partitioning and watershed segmentation for scale targets.

Point annotations carve the image into nearest-seed cells; inside each
cell a two-marker watershed (seed pixel vs. cell boundary) floods the
gradient-magnitude surface to recover a foreground mask, whose rotated
extents become the width/height regression targets.

The flood uses a priority queue keyed by (gradient at the entered pixel,
row-major pixel index, insertion order), so results are bit-reproducible:
ascending gradient first, ties swept in row-major order, and a pixel
reached by both floods at the same priority goes to the earlier push.
Pixel (x, y) sits at lattice coordinates (x, y); distances are measured
from these lattice points.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import PointAnnotation

_NEIGHBORS = ((0, -1), (-1, 0), (1, 0), (0, 1))  # N, W, E, S


@dataclass(frozen=True)
class RasterImage:
    """Grayscale image with intensities in [0, 1], stored (height, width)."""

    width: int
    height: int
    intensity: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.intensity, dtype=float)
        if arr.shape != (self.height, self.width):
            raise InvalidInputError(
                f"intensity shape {arr.shape} does not match "
                f"{self.height} x {self.width}"
            )
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise InvalidInputError("intensity values must lie in [0, 1]")
        object.__setattr__(self, "intensity", arr)

    @classmethod
    def from_array(cls, arr) -> "RasterImage":
        arr = np.asarray(arr, dtype=float)
        return cls(width=arr.shape[1], height=arr.shape[0], intensity=arr)


@dataclass(frozen=True)
class VoronoiLabelMap:
    """Per-pixel nearest-seed labels plus the seeds that produced them."""

    width: int
    height: int
    cell_id: np.ndarray
    seeds: tuple[PointAnnotation, ...]

    def __post_init__(self):
        grid = np.asarray(self.cell_id)
        if grid.shape != (self.height, self.width):
            raise InvalidInputError("cell_id shape does not match dimensions")
        if grid.size and (grid.min() < 0 or grid.max() >= len(self.seeds)):
            raise InvalidInputError("cell_id references a missing seed")
        object.__setattr__(self, "cell_id", grid)
        object.__setattr__(self, "seeds", tuple(self.seeds))


@dataclass(frozen=True)
class ScaleTarget:
    """Extent targets measured from a mask; invalid when the mask is empty."""

    w_t: float
    h_t: float
    valid: bool


def voronoi_partition(
    seeds: list[PointAnnotation], width: int, height: int
) -> VoronoiLabelMap:
    """Assign every pixel to its nearest seed (squared Euclidean distance
    on lattice coordinates); ties go to the lowest seed index."""
    if not seeds:
        raise InvalidInputError("need at least one seed")
    for k, s in enumerate(seeds):
        if not (0 <= s.x < width and 0 <= s.y < height):
            raise InvalidInputError(
                f"seed {k} at ({s.x}, {s.y}) outside {width} x {height} image"
            )
    xs = np.arange(width, dtype=float)
    ys = np.arange(height, dtype=float)
    # (n_seeds, H, W) squared distances; argmin keeps the first (lowest)
    # index on ties.
    d2 = np.stack(
        [
            (xs[None, :] - s.x) ** 2 + (ys[:, None] - s.y) ** 2
            for s in seeds
        ]
    )
    labels = np.argmin(d2, axis=0).astype(np.int32)
    return VoronoiLabelMap(width, height, labels, tuple(seeds))


def gradient_magnitude(intensity: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude with replicated edges."""
    padded = np.pad(intensity, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return np.hypot(gx, gy)


def _cell_boundary(cell_mask: np.ndarray) -> np.ndarray:
    """Cell pixels with a 4-neighbor outside the cell or outside the image."""
    interior = cell_mask.copy()
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    interior[1:-1, 1:-1] &= (
        cell_mask[:-2, 1:-1]
        & cell_mask[2:, 1:-1]
        & cell_mask[1:-1, :-2]
        & cell_mask[1:-1, 2:]
    )
    return cell_mask & ~interior


def watershed_segment(
    image: RasterImage, cells: VoronoiLabelMap
) -> list[np.ndarray]:
    """Flood each Voronoi cell from its seed against its boundary.

    Parameters
    ----------
    image : RasterImage
        Intensity surface; the flood runs on its gradient magnitude.
    cells : VoronoiLabelMap
        Partition whose dimensions must match the image.

    Returns
    -------
    list of (H, W) bool arrays
        One foreground mask per seed. Each mask is confined to its cell
        and contains its seed pixel; masks are pairwise disjoint.
    """
    if (image.width, image.height) != (cells.width, cells.height):
        raise InvalidInputError(
            f"image {image.width} x {image.height} does not match "
            f"partition {cells.width} x {cells.height}"
        )
    grad = gradient_magnitude(image.intensity)
    masks = []
    for k, seed in enumerate(cells.seeds):
        cell_mask = cells.cell_id == k
        masks.append(_flood_cell(grad, cell_mask, seed, cells.width))
    return masks


_FG, _BG = 1, 2


def _flood_cell(
    grad: np.ndarray, cell_mask: np.ndarray, seed: PointAnnotation, width: int
) -> np.ndarray:
    height = grad.shape[0]
    sx = min(int(round(seed.x)), width - 1)
    sy = min(int(round(seed.y)), height - 1)
    labels = np.zeros(grad.shape, dtype=np.uint8)
    labels[sy, sx] = _FG
    boundary = _cell_boundary(cell_mask)
    boundary[sy, sx] = False  # the seed marker wins if the cell is thin
    labels[boundary] = _BG

    heap: list[tuple[float, int, int, int, int, int]] = []
    counter = 0

    def push_neighbors(x: int, y: int, label: int) -> None:
        nonlocal counter
        for dx, dy in _NEIGHBORS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height and cell_mask[ny, nx]:
                if labels[ny, nx] == 0:
                    heapq.heappush(
                        heap,
                        (float(grad[ny, nx]), ny * width + nx, counter, nx, ny, label),
                    )
                    counter += 1

    push_neighbors(sx, sy, _FG)
    bys, bxs = np.nonzero(boundary)
    for y, x in zip(bys.tolist(), bxs.tolist()):  # row-major marker order
        push_neighbors(x, y, _BG)

    while heap:
        _, _, _, x, y, label = heapq.heappop(heap)
        if labels[y, x]:
            continue
        labels[y, x] = label
        push_neighbors(x, y, label)
    return labels == _FG


def scale_target_from_mask(mask: np.ndarray, theta: float) -> ScaleTarget:
    """Extent of a mask along the axes of a frame rotated by theta.

    The mask's pixel coordinates are rotated by -theta about their
    centroid; the target extents are (max - min + 1) along each rotated
    axis. An empty mask yields an invalid target.
    """
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    if xs.size == 0:
        return ScaleTarget(0.0, 0.0, False)
    cx, cy = xs.mean(), ys.mean()
    c, s = math.cos(-theta), math.sin(-theta)
    u = (xs - cx) * c - (ys - cy) * s
    v = (xs - cx) * s + (ys - cy) * c
    return ScaleTarget(
        float(u.max() - u.min() + 1.0), float(v.max() - v.min() + 1.0), True
    )


def read_pgm(path) -> RasterImage:
    """Read a binary (P5) 8-bit PGM, scaling values to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval; '#' comments allowed
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise InvalidInputError(f"truncated PGM header in {path}")
        pos = m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    if tokens[0] != b"P5":
        raise InvalidInputError(f"not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval <= 255:
        raise InvalidInputError(f"unsupported PGM maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos + 1)
    if pixels.size != width * height:
        raise InvalidInputError(f"PGM payload too short in {path}")
    intensity = pixels.reshape(height, width).astype(float) / maxval
    return RasterImage(width, height, intensity)


def write_pgm(path, array: np.ndarray) -> None:
    """Write an array as binary PGM; floats in [0, 1] scale to 0..255,
    boolean masks map to 0/255."""
    arr = np.asarray(array)
    if arr.dtype == bool:
        data = np.where(arr, 255, 0).astype(np.uint8)
    else:
        data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())

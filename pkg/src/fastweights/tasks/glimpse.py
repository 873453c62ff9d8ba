"""Fixed two-scale glimpse programs over square images.

An image is split into four quadrants; each quadrant contributes a coarse
glimpse (the quadrant average-pooled down to PxP) and four fine PxP
sub-patches that tile it exactly. The default 24-glimpse program visits
each quadrant as [coarse, 4 fines, coarse again], the repeated coarse
acting as a "pop" back to the outer level; a plain 20-glimpse variant
drops the repeat. Store bits mark the coarse glimpses as the ones the fast
memory should write.

Each emitted vector is P*P pixels ++ (center_row/size, center_col/size,
scale flag: 0 coarse, 1 fine) ++ store bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ContractError


def downsample(region: np.ndarray, out_size: int) -> np.ndarray:
    """Non-overlapping average pooling of a square region down to out_size."""
    region = np.asarray(region, dtype=np.float64)
    r = region.shape[0]
    if region.shape != (r, r) or r % out_size != 0:
        raise ContractError(
            f"cannot pool region of shape {region.shape} to {out_size}x{out_size}"
        )
    k = r // out_size
    return region.reshape(out_size, k, out_size, k).mean(axis=(1, 3))


@dataclass(frozen=True)
class Glimpse:
    level: str  # "coarse" | "fine"
    row0: int
    col0: int
    size: int  # side of the source region
    store: int  # 1 = write the fast memory this step


@dataclass(frozen=True)
class GlimpseProgram:
    image_size: int
    patch: int
    glimpses: tuple[Glimpse, ...]

    @property
    def input_dim(self) -> int:
        return self.patch * self.patch + 4

    @property
    def store_bits(self) -> np.ndarray:
        return np.array([g.store for g in self.glimpses], dtype=np.int64)


def two_level_program(image_size: int = 28, patch: int = 7, repeat_coarse: bool = True) -> GlimpseProgram:
    """The quadrant-recursive program; 24 glimpses by default, 20 without
    the coarse repeats. Also valid for the 48x48 / patch 12 configuration."""
    if image_size % (2 * patch) != 0:
        raise ContractError(
            f"image size {image_size} is not tileable by 2x2 patches of {patch}"
        )
    quad = image_size // 2
    glimpses: list[Glimpse] = []
    for qr in (0, quad):
        for qc in (0, quad):
            coarse = Glimpse("coarse", qr, qc, quad, store=1)
            glimpses.append(coarse)
            for fr in (0, patch):
                for fc in (0, patch):
                    glimpses.append(Glimpse("fine", qr + fr, qc + fc, patch, store=0))
            if repeat_coarse:
                glimpses.append(coarse)
    return GlimpseProgram(image_size, patch, tuple(glimpses))


def glimpse_vector(image: np.ndarray, g: Glimpse, program: GlimpseProgram) -> np.ndarray:
    region = image[g.row0 : g.row0 + g.size, g.col0 : g.col0 + g.size]
    if region.shape != (g.size, g.size):
        raise ContractError(f"glimpse {g} overruns the image")
    patch = downsample(region, program.patch) if g.level == "coarse" else np.asarray(region, dtype=np.float64)
    center_row = (g.row0 + g.size / 2.0) / program.image_size
    center_col = (g.col0 + g.size / 2.0) / program.image_size
    scale = 0.0 if g.level == "coarse" else 1.0
    return np.concatenate(
        [patch.reshape(-1), [center_row, center_col, scale, float(g.store)]]
    )


def glimpse_sequence(image: np.ndarray, program: GlimpseProgram) -> list[np.ndarray]:
    """All glimpse input vectors for one image, in program order."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (program.image_size, program.image_size):
        raise ContractError(
            f"image shape {image.shape} does not match program size {program.image_size}"
        )
    return [glimpse_vector(image, g, program) for g in program.glimpses]


def glimpse_batch(images: np.ndarray, program: GlimpseProgram) -> np.ndarray:
    """Stack glimpse sequences for a batch of images: (batch, T, input_dim)."""
    return np.stack([np.stack(glimpse_sequence(img, program)) for img in images])

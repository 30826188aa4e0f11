"""Volumes, the RVF1 file format, normalization, patch sampling and the
synthetic cross-modality phantom.

RVF1 layout (all little-endian)::

    0   4s  magic b"RVF1"
    4   u32 version (1)
    8   3u32 dims d, h, w
    20  3f32 spacing
    32  u8  flags (bit0: NormRecord present)
    33  [2f32 vmin, vmax]           if bit0
    ..  d*h*w f32, z-major then y then x
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DataError, DegenerateRangeError, FormatError, GeometryError
from .tensor import DTYPE, Rng

MAGIC = b"RVF1"
VERSION = 1
_HEADER = struct.Struct("<4sI3I3fB")
_NORM = struct.Struct("<2f")

PATCH = 64
STRIDE = 8
SLICES = 3
BATCH = 16

LABEL_SOFT, LABEL_BONE, LABEL_AIR = 0, 1, 2


@dataclass(frozen=True)
class NormRecord:
    vmin: float
    vmax: float

    def __post_init__(self):
        if not self.vmax > self.vmin:
            raise DegenerateRangeError(f"vmax must exceed vmin, got [{self.vmin}, {self.vmax}]")


@dataclass
class Volume:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    norm: NormRecord | None = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=DTYPE)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise GeometryError(f"volume data must be rank 3 with positive extents, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise GeometryError(f"spacing must be three positive values, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)


# -- RVF1 I/O -----------------------------------------------------------------

def volume_write(path, vol: Volume) -> None:
    d, h, w = vol.dims
    flags = 1 if vol.norm is not None else 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, d, h, w, *vol.spacing, flags))
        if vol.norm is not None:
            f.write(_NORM.pack(vol.norm.vmin, vol.norm.vmax))
        f.write(vol.data.astype("<f4", copy=False).tobytes())


def volume_read(path) -> Volume:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} of {_HEADER.size} bytes", offset=len(buf))
    magic, version, d, h, w, sx, sy, sz, flags = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if min(d, h, w) < 1:
        raise FormatError(f"non-positive dims {(d, h, w)}", offset=8)
    if flags & ~1:
        raise FormatError(f"unknown flag bits {flags:#x}", offset=32)
    pos = _HEADER.size
    norm = None
    if flags & 1:
        if len(buf) < pos + _NORM.size:
            raise FormatError("truncated normalization record", offset=len(buf))
        vmin, vmax = _NORM.unpack_from(buf, pos)
        norm = NormRecord(vmin, vmax)
        pos += _NORM.size
    expected = d * h * w * 4
    have = len(buf) - pos
    if have != expected:
        kind = "truncated" if have < expected else "trailing bytes in"
        raise FormatError(
            f"{kind} voxel payload: header dims {d}x{h}x{w} need {expected} bytes, found {have}",
            offset=pos + min(have, expected),
        )
    data = np.frombuffer(buf, dtype="<f4", count=d * h * w, offset=pos).reshape(d, h, w)
    return Volume(data.astype(DTYPE), (sx, sy, sz), norm)


# -- normalization --------------------------------------------------------------

def normalize(vol: Volume) -> Volume:
    """Map [min, max] linearly onto [0, 1] and remember the range."""
    vmin = float(vol.data.min())
    vmax = float(vol.data.max())
    if not vmax > vmin:
        raise DegenerateRangeError(f"cannot normalize a constant volume (value {vmin})")
    scaled = (vol.data.astype(np.float64) - vmin) / (vmax - vmin)
    return Volume(scaled.astype(DTYPE), vol.spacing, NormRecord(vmin, vmax))


def denormalize(vol: Volume) -> Volume:
    if vol.norm is None:
        raise DataError("volume carries no normalization record")
    lo, hi = vol.norm.vmin, vol.norm.vmax
    restored = vol.data.astype(np.float64) * (hi - lo) + lo
    return Volume(restored.astype(DTYPE), vol.spacing, None)


# -- patches ----------------------------------------------------------------------

def grid_positions(size: int, patch: int, stride: int) -> list[int]:
    """Window starts along one axis: multiples of stride, plus a flush final
    window when the last multiple does not reach the edge."""
    if size < patch:
        raise GeometryError(f"extent {size} smaller than patch {patch}")
    starts = list(range(0, size - patch + 1, stride))
    if starts[-1] != size - patch:
        starts.append(size - patch)
    return starts


def patch_grid(src: Volume, tgt: Volume, patch: int = PATCH, stride: int = STRIDE,
               slices: int = SLICES, axial_stride: int = 1) -> list[tuple[int, int, int]]:
    """All (z, y, x) patch origins, ordered by z, then y, then x."""
    if src.dims != tgt.dims:
        raise GeometryError(f"source dims {src.dims} != target dims {tgt.dims}")
    d, h, w = src.dims
    if d < slices:
        raise GeometryError(f"depth {d} smaller than slice window {slices}")
    ys = grid_positions(h, patch, stride)
    xs = grid_positions(w, patch, stride)
    zs = range(0, d - slices + 1, axial_stride)
    return [(z, y, x) for z in zs for y in ys for x in xs]


@dataclass
class PatchPair:
    source: np.ndarray
    target: np.ndarray
    origin: tuple = field(default=(0, 0, 0, 0, False))

    @property
    def flipped(self) -> bool:
        return bool(self.origin[4])


def extract_pair(src: Volume, tgt: Volume, z: int, y: int, x: int, patch: int = PATCH,
                 slices: int = SLICES, volume_id: int = 0) -> PatchPair:
    sl = (slice(z, z + slices), slice(y, y + patch), slice(x, x + patch))
    return PatchPair(src.data[sl][None].copy(), tgt.data[sl][None].copy(), (volume_id, z, y, x, False))


def augment_flip(pair: PatchPair) -> PatchPair:
    vid, z, y, x, flipped = pair.origin
    return PatchPair(
        np.ascontiguousarray(pair.source[..., ::-1]),
        np.ascontiguousarray(pair.target[..., ::-1]),
        (vid, z, y, x, not flipped),
    )


class PatchSet(Sequence):
    """Lazily extracted training pairs over a list of aligned volumes.

    Index order: volume, then patch origin, then (if ``flip``) the mirrored
    copy of the same origin.
    """

    def __init__(self, volumes: list[tuple[Volume, Volume]], patch: int = PATCH, stride: int = STRIDE,
                 slices: int = SLICES, flip: bool = True, axial_stride: int = 1):
        self.volumes = volumes
        self.patch, self.slices = patch, slices
        self.flip = flip
        self.index = []
        for vid, (src, tgt) in enumerate(volumes):
            for z, y, x in patch_grid(src, tgt, patch, stride, slices, axial_stride):
                self.index.append((vid, z, y, x, False))
                if flip:
                    self.index.append((vid, z, y, x, True))

    def __len__(self):
        return len(self.index)

    def __getitem__(self, i) -> PatchPair:
        vid, z, y, x, flipped = self.index[i]
        src, tgt = self.volumes[vid]
        pair = extract_pair(src, tgt, z, y, x, self.patch, self.slices, vid)
        return augment_flip(pair) if flipped else pair


def batch_iter(pairs: Sequence[PatchPair], batch: int, rng: Rng) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One epoch of shuffled ``(source, target)`` batches; the last may be short."""
    if len(pairs) == 0:
        raise DataError("no training pairs")
    if batch < 1:
        raise DataError(f"batch size must be >= 1, got {batch}")
    order = rng.permutation(len(pairs))
    for start in range(0, len(order), batch):
        items = [pairs[int(i)] for i in order[start:start + batch]]
        yield (np.concatenate([p.source for p in items]),
               np.concatenate([p.target for p in items]))


# -- phantom ----------------------------------------------------------------------

MIN_DEPTH = 3
MIN_INPLANE = 32


@dataclass(frozen=True)
class PhantomSpec:
    """Generator settings. Radii and thicknesses are in voxels.

    Bone is drawn as thin spherical shells and air as solid ellipsoids; in the
    source modality both are equally dark, so only their shape tells them
    apart.
    """

    dims: tuple[int, int, int] = (40, 96, 96)
    bones: int = 4
    bone_radius: tuple[float, float] = (9.0, 16.0)
    bone_thickness: tuple[float, float] = (2.0, 3.5)
    cavities: int = 6
    cavity_radius: tuple[float, float] = (6.0, 12.0)
    blobs: int = 6
    blob_radius: tuple[float, float] = (6.0, 18.0)
    texture: float = 0.08
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        d, h, w = self.dims
        if d < MIN_DEPTH or h < MIN_INPLANE or w < MIN_INPLANE:
            raise GeometryError(
                f"phantom dims {self.dims} below minimum {MIN_DEPTH}x{MIN_INPLANE}x{MIN_INPLANE}")
        if min(self.bones, self.cavities, self.blobs) < 0:
            raise GeometryError("structure counts must be >= 0")


# (source, target) intensities per region
SOFT = (0.50, 0.35)
BONE = (0.08, 0.95)
AIR = (0.07, 0.05)


def _smooth_field(rng: Rng, shape, cutoff: float) -> np.ndarray:
    """Unit-variance low-pass random field via an FFT Gaussian filter."""
    white = rng.gen.standard_normal(shape)
    freqs = np.meshgrid(*[np.fft.fftfreq(n) for n in shape[:-1]], np.fft.rfftfreq(shape[-1]), indexing="ij")
    r2 = sum(f * f for f in freqs)
    spec = np.fft.rfftn(white) * np.exp(-r2 / (2 * cutoff * cutoff))
    field_ = np.fft.irfftn(spec, s=shape, axes=tuple(range(len(shape))))
    return field_ / (field_.std() + 1e-12)


def _ellipsoid_distance(grid, center, radii):
    return np.sqrt(sum(((g - c) / r) ** 2 for g, c, r in zip(grid, center, radii)))


def phantom_generate(spec: PhantomSpec, rng: Rng | None = None) -> tuple[Volume, Volume, np.ndarray]:
    """Return ``(source, target, labels)``; labels use LABEL_SOFT/BONE/AIR."""
    rng = rng if rng is not None else Rng(spec.seed)
    d, h, w = spec.dims
    grid = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
    labels = np.full(spec.dims, LABEL_SOFT, dtype=np.uint8)
    src = np.full(spec.dims, SOFT[0])
    tgt = np.full(spec.dims, SOFT[1])

    tex = _smooth_field(rng, spec.dims, 0.08)
    src += spec.texture * tex
    tgt += 0.6 * spec.texture * tex

    def center(margin):
        return tuple(rng.uniform(min(margin, n / 2), max(n - margin, n / 2)) for n in (d, h, w))

    for _ in range(spec.blobs):
        c = center(0)
        radii = rng.uniform(*spec.blob_radius, size=3)
        delta = rng.uniform(-0.12, 0.12)
        inside = _ellipsoid_distance(grid, c, radii) <= 1
        src[inside] += delta
        tgt[inside] += 0.5 * delta

    for _ in range(spec.cavities):
        c = center(spec.cavity_radius[1] / 2)
        radii = rng.uniform(*spec.cavity_radius, size=3)
        inside = _ellipsoid_distance(grid, c, radii) <= 1
        labels[inside] = LABEL_AIR

    for _ in range(spec.bones):
        c = center(spec.bone_radius[1] / 2)
        radius = rng.uniform(*spec.bone_radius)
        thick = rng.uniform(*spec.bone_thickness)
        dist = np.sqrt(sum((g - ci) ** 2 for g, ci in zip(grid, c)))
        shell = (dist <= radius) & (dist > radius - thick)
        labels[shell] = LABEL_BONE

    for lab, (s_val, t_val) in ((LABEL_AIR, AIR), (LABEL_BONE, BONE)):
        m = labels == lab
        src[m] = s_val
        tgt[m] = t_val

    src += spec.noise * rng.gen.standard_normal(spec.dims)
    tgt += 0.5 * spec.noise * rng.gen.standard_normal(spec.dims)
    return Volume(src.astype(DTYPE)), Volume(tgt.astype(DTYPE)), labels


def with_norm(vol: Volume, norm: NormRecord | None) -> Volume:
    return replace(vol, norm=norm)

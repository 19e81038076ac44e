"""
Procedural angiography-like videos.

A case fixes the eye geometry, the phase timings and the lesions; rendering
turns it into frames at any frame count and size. All geometry is drawn in
frame fractions from generators seeded by the case, so one case always
renders the same picture.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import torch

from dit.vocabulary import LATERALITIES, LESIONS
from exceptions import ConfigError, ShapeError
from numerics.clips import VideoClip

BACKGROUND_LEVEL = 0.04
BACKGROUND_RAMP = 0.03
ARTERY_FLOOR = 0.35
ARTERY_GAIN = 0.45
VEIN_PEAK = 0.7
LESION_RATE = 0.35
# Reference frame width the pixel-sized constants below are tuned for.
REFERENCE_SIZE = 64


@dataclass(frozen=True)
class Placement:
    center: tuple[float, float]  # (y, x) as frame fractions
    radius: float

    def inside_frame(self) -> bool:
        return self.radius > 0 and all(
            self.radius <= c <= 1 - self.radius for c in self.center
        )


@dataclass(frozen=True)
class SyntheticCase:
    seed: int
    laterality: str = "left"
    branch_count: int = 6
    tortuosity: float = 0.15
    onsets: tuple[float, float, float] = (0.05, 0.3, 0.55)  # arterial, venous, late
    lesions: frozenset = frozenset()
    placements: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.laterality not in LATERALITIES:
            raise ConfigError(f"unknown laterality {self.laterality!r}", "synth.laterality")
        arterial, venous, late = self.onsets
        if not 0 <= arterial < venous < late <= 1:
            raise ConfigError(f"phase onsets must increase within [0, 1], got {self.onsets}", "synth.onsets")
        if self.branch_count < 1:
            raise ConfigError("need at least one vessel branch", "synth.branch_count")
        unknown = set(self.lesions) - set(LESIONS)
        if unknown:
            raise ConfigError(f"unknown lesions {sorted(unknown)}", "synth.lesions")
        for lesion in self.lesions:
            placement = self.placements.get(lesion)
            if placement is None or not placement.inside_frame():
                raise ConfigError(f"{lesion} needs a placement inside the frame", "synth.placements")

    @property
    def disc_center(self) -> tuple[float, float]:
        return (0.5, 0.3 if self.laterality == "left" else 0.7)

    @property
    def macula_center(self) -> tuple[float, float]:
        return (0.5, 0.62 if self.laterality == "left" else 0.38)


def _default_placement(lesion: str, case_disc, case_macula, rng: np.random.Generator) -> Placement:
    if lesion == "disc staining":
        return Placement(case_disc, 0.07)
    if lesion == "macular edema":
        return Placement(case_macula, 0.09)
    radius = 0.16 if lesion == "microaneurysms" else float(rng.uniform(0.06, 0.1))
    low, high = radius + 0.05, 1 - radius - 0.05
    return Placement((float(rng.uniform(low, high)), float(rng.uniform(low, high))), radius)


def random_case(
    seed: int, lesions: Optional[Iterable[str]] = None, lesion_rate: float = LESION_RATE
) -> SyntheticCase:
    """
    Draws a case from ``seed``; each lesion is present with probability
    ``lesion_rate`` unless ``lesions`` is given.
    """
    rng = np.random.default_rng(seed)
    laterality = LATERALITIES[int(rng.integers(2))]
    branch_count = int(rng.integers(4, 8))
    tortuosity = float(rng.uniform(0.05, 0.3))
    onsets = (
        float(rng.uniform(0.0, 0.1)),
        float(rng.uniform(0.25, 0.4)),
        float(rng.uniform(0.45, 0.6)),
    )
    drawn = frozenset(lesion for lesion in LESIONS if rng.random() < lesion_rate)
    chosen = drawn if lesions is None else frozenset(lesions)
    disc = (0.5, 0.3 if laterality == "left" else 0.7)
    macula = (0.5, 0.62 if laterality == "left" else 0.38)
    placements = {lesion: _default_placement(lesion, disc, macula, rng) for lesion in LESIONS}
    return SyntheticCase(
        seed=seed,
        laterality=laterality,
        branch_count=branch_count,
        tortuosity=tortuosity,
        onsets=onsets,
        lesions=chosen,
        placements={lesion: placements[lesion] for lesion in chosen},
    )


def ramp(tau: np.ndarray, start: float, end: float) -> np.ndarray:
    return np.clip((tau - start) / max(end - start, 1e-6), 0.0, 1.0)


class _Canvas:
    """
    Pixel-centre grid of one frame size; lengths are given in frame fractions
    of the shorter side.
    """

    def __init__(self, size: tuple[int, int]):
        self.height, self.width = size
        self.scale = min(size)
        self.ys, self.xs = np.meshgrid(
            np.arange(self.height) + 0.5, np.arange(self.width) + 0.5, indexing="ij"
        )

    def to_pixels(self, point: tuple[float, float]) -> tuple[float, float]:
        return point[0] * self.height, point[1] * self.width

    def distance(self, point: tuple[float, float]) -> np.ndarray:
        y, x = self.to_pixels(point)
        return np.hypot(self.ys - y, self.xs - x)

    def pixels(self, fraction: float) -> float:
        return fraction * self.scale

    def line_mask(self, polylines: list[np.ndarray], sigma: float) -> np.ndarray:
        """
        Gaussian cross-section of the given polylines (N·2 fraction arrays).
        """
        points = [self._densify(line) for line in polylines if len(line) > 1]
        if not points:
            return np.zeros((self.height, self.width))
        samples = np.concatenate(points)
        nearest = np.full((self.height, self.width), np.inf)
        step = max(1, 2**21 // (self.height * self.width))
        for start in range(0, len(samples), step):
            chunk = samples[start : start + step]
            d2 = (self.ys[..., None] - chunk[:, 0]) ** 2 + (self.xs[..., None] - chunk[:, 1]) ** 2
            nearest = np.minimum(nearest, d2.min(axis=-1))
        return np.exp(-nearest / (2 * sigma**2))

    def _densify(self, line: np.ndarray) -> np.ndarray:
        pixels = line * [self.height, self.width]
        pieces = []
        for a, b in zip(pixels[:-1], pixels[1:]):
            count = max(int(np.ceil(np.hypot(*(b - a)) / 0.5)), 1)
            steps = np.linspace(0.0, 1.0, count, endpoint=False)[:, None]
            pieces.append(a + steps * (b - a))
        pieces.append(pixels[-1:])
        return np.concatenate(pieces)

    def convex_polygon(self, vertices: np.ndarray) -> np.ndarray:
        pixels = vertices * [self.height, self.width]
        edges = np.roll(pixels, -1, axis=0) - pixels
        cross = edges[:, 0] * (self.xs[..., None] - pixels[:, 1]) - edges[:, 1] * (
            self.ys[..., None] - pixels[:, 0]
        )
        return (np.all(cross >= 0, axis=-1) | np.all(cross <= 0, axis=-1)).astype(np.float64)


def _walk(
    rng: np.random.Generator, start, heading: float, steps: int, step: float, tortuosity: float
) -> np.ndarray:
    points = [np.asarray(start, dtype=np.float64)]
    for _ in range(steps):
        heading += rng.normal(0.0, tortuosity)
        nxt = points[-1] + step * np.array([math.sin(heading), math.cos(heading)])
        if not np.all((nxt > 0) & (nxt < 1)):
            break
        points.append(nxt)
    return np.stack(points)


def vessel_tree(case: SyntheticCase) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """
    Artery and vein polylines radiating from the disc; every branch spawns
    one side branch from its midpoint.
    """
    rng = np.random.default_rng([case.seed, 1])
    arteries, veins = [], []
    for branch in range(case.branch_count):
        heading = 2 * math.pi * branch / case.branch_count + rng.uniform(-0.3, 0.3)
        trunk = _walk(rng, case.disc_center, heading, 40, 0.02, case.tortuosity)
        side_heading = heading + rng.choice([-0.7, 0.7])
        side = _walk(rng, trunk[len(trunk) // 2], side_heading, 18, 0.02, case.tortuosity)
        (arteries if branch % 2 == 0 else veins).extend([trunk, side])
    return arteries, veins


@dataclass
class RenderLayers:
    """
    Additive components of a rendered video, each frames·H·W in float64.
    """

    background: np.ndarray
    vessels: np.ndarray
    lesions: dict[str, np.ndarray]

    def composite(self) -> np.ndarray:
        total = self.background + self.vessels
        for layer in self.lesions.values():
            total = total + layer
        return np.clip(total, 0.0, 1.0)


def _lesion_rng(case: SyntheticCase, lesion: str) -> np.random.Generator:
    return np.random.default_rng([case.seed, 2, LESIONS.index(lesion)])


def _microaneurysms(case, canvas, tau, placement):
    rng = _lesion_rng(case, "microaneurysms")
    _, venous, late = case.onsets
    layer = np.zeros((canvas.height, canvas.width))
    sigma = max(0.6 * canvas.scale / REFERENCE_SIZE, 0.6)
    for _ in range(int(rng.integers(6, 14))):
        angle, reach = rng.uniform(0, 2 * math.pi), placement.radius * math.sqrt(rng.uniform())
        dot = (placement.center[0] + reach * math.sin(angle), placement.center[1] + reach * math.cos(angle))
        layer = np.maximum(layer, np.exp(-canvas.distance(dot) ** 2 / (2 * sigma**2)))
    onset = ramp(tau, venous, min(venous + 0.08, late))
    return 0.55 * onset[:, None, None] * layer


def _growing_blob(canvas, tau, placement, late, amplitude, petals=0):
    growth = ramp(tau, late, 1.0)[:, None, None]
    radius = canvas.pixels(placement.radius) * (0.35 + 0.65 * growth)
    distance = canvas.distance(placement.center)
    blob = np.exp(-(distance**2) / (2 * radius**2))
    if petals:
        y, x = canvas.to_pixels(placement.center)
        theta = np.arctan2(canvas.ys - y, canvas.xs - x)
        blob = blob * (0.7 + 0.3 * np.cos(petals * theta))
    return amplitude * growth * blob


def _neovascularization(case, canvas, tau, placement):
    rng = _lesion_rng(case, "neovascularization")
    arterial, venous, late = case.onsets
    loops = [
        _walk(rng, placement.center, rng.uniform(0, 2 * math.pi), 8, placement.radius / 4, 0.9)
        for _ in range(3)
    ]
    tangle = canvas.line_mask(loops, max(0.7 * canvas.scale / REFERENCE_SIZE, 0.6))
    filling = ramp(tau, arterial, venous)[:, None, None] * 0.45 * tangle
    return filling + _growing_blob(canvas, tau, placement, late, 0.35)


def _disc_staining(case, canvas, tau, placement):
    _, _, late = case.onsets
    rim = canvas.pixels(placement.radius)
    ring = np.exp(-((canvas.distance(placement.center) - rim) ** 2) / (2 * (0.25 * rim) ** 2))
    return 0.5 * ramp(tau, late, 1.0)[:, None, None] * ring


def _non_perfusion_mask(case, canvas, placement) -> np.ndarray:
    rng = _lesion_rng(case, "non-perfusion")
    angles = np.sort(rng.uniform(0, 2 * math.pi, int(rng.integers(6, 10))))
    radius = placement.radius * rng.uniform(0.85, 1.0)
    vertices = np.stack(
        [placement.center[0] + radius * np.sin(angles), placement.center[1] + radius * np.cos(angles)],
        axis=1,
    )
    return canvas.convex_polygon(vertices)


def render_layers(case: SyntheticCase, frames: int, size: tuple[int, int]) -> RenderLayers:
    if frames < 2:
        raise ShapeError(f"rendering needs at least 2 frames, got {frames}")
    if min(size) < 1:
        raise ShapeError(f"frame size must be positive, got {size}")
    canvas = _Canvas(size)
    tau = np.linspace(0.0, 1.0, frames)
    arterial, venous, late = case.onsets

    background = BACKGROUND_LEVEL + BACKGROUND_RAMP * np.broadcast_to(
        tau[:, None, None], (frames, *size)
    )
    arteries, veins = vessel_tree(case)
    sigma = 0.9 * canvas.scale / REFERENCE_SIZE
    artery_mask = canvas.line_mask(arteries, sigma)
    vein_mask = canvas.line_mask(veins, sigma)
    artery_level = ARTERY_FLOOR + ARTERY_GAIN * ramp(tau, arterial, venous)
    vein_level = VEIN_PEAK * ramp(tau, venous, late)
    vessels = artery_level[:, None, None] * artery_mask + vein_level[:, None, None] * vein_mask

    lesions = {}
    if "non-perfusion" in case.lesions:
        erased = _non_perfusion_mask(case, canvas, case.placements["non-perfusion"])
        vessels = vessels * (1 - erased)
        lesions["non-perfusion"] = np.broadcast_to(
            -0.5 * BACKGROUND_LEVEL * erased, (frames, *size)
        ).copy()
    for lesion in sorted(case.lesions, key=LESIONS.index):
        placement = case.placements[lesion]
        if lesion == "microaneurysms":
            lesions[lesion] = _microaneurysms(case, canvas, tau, placement)
        elif lesion == "leakage":
            lesions[lesion] = _growing_blob(canvas, tau, placement, late, 0.5)
        elif lesion == "neovascularization":
            lesions[lesion] = _neovascularization(case, canvas, tau, placement)
        elif lesion == "disc staining":
            lesions[lesion] = _disc_staining(case, canvas, tau, placement)
        elif lesion == "macular edema":
            lesions[lesion] = _growing_blob(canvas, tau, placement, late, 0.35, petals=6)
    return RenderLayers(np.array(background), vessels, lesions)


def synth_render(case: SyntheticCase, frames: int, size: tuple[int, int]) -> VideoClip:
    """
    Renders ``case`` as a single-channel clip with pixels in [0, 1].
    """
    video = render_layers(case, frames, size).composite()
    return VideoClip(torch.from_numpy(video.astype(np.float32))[None])

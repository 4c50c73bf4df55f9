"""Minimal PGM (P5) and PPM (P6) readers/writers for scenes, labels, and renders.

Writers emit no comments and a fixed header layout so identical arrays give
identical bytes (dataset checksums depend on this).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import IoFailure
from .grid import FREE, OBSTACLE, GridScene

# Gray levels used for scene files.
SCENE_FREE = 255
SCENE_OBSTACLE = 0
SCENE_START = 128
SCENE_GOAL = 192

LABEL_ON = 255


def write_pgm(path: str | Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim != 2:
        raise ValueError("PGM writer expects a 2-D array")
    h, w = array.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + array.tobytes())


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PPM writer expects an (H, W, 3) array")
    h, w = image.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def _parse_netpbm(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    if not data.startswith(magic):
        raise IoFailure(f"not a {magic.decode()} file")
    # Header tokens: width, height, maxval; '#' starts a comment until newline.
    tokens: list[int] = []
    i = len(magic)
    while len(tokens) < 3:
        if i >= len(data):
            raise IoFailure("truncated netpbm header")
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(int(data[i:j]))
            i = j
    i += 1  # single whitespace byte after maxval
    w, h, maxval = tokens
    if maxval != 255:
        raise IoFailure(f"unsupported maxval {maxval}")
    expected = w * h * channels
    raster = data[i : i + expected]
    if len(raster) != expected:
        raise IoFailure(f"expected {expected} raster bytes, found {len(raster)}")
    array = np.frombuffer(raster, dtype=np.uint8)
    shape = (h, w) if channels == 1 else (h, w, channels)
    return array.reshape(shape).copy()


def read_pgm(path: str | Path) -> np.ndarray:
    return _parse_netpbm(Path(path).read_bytes(), b"P5", 1)


def read_ppm(path: str | Path) -> np.ndarray:
    return _parse_netpbm(Path(path).read_bytes(), b"P6", 3)


def scene_to_gray(scene: GridScene) -> np.ndarray:
    gray = np.where(scene.cells == OBSTACLE, SCENE_OBSTACLE, SCENE_FREE).astype(np.uint8)
    gray[scene.start] = SCENE_START
    gray[scene.goal] = SCENE_GOAL
    return gray


def gray_to_scene(gray: np.ndarray, family: str, seed: int) -> GridScene:
    starts = np.argwhere(gray == SCENE_START)
    goals = np.argwhere(gray == SCENE_GOAL)
    if len(starts) != 1 or len(goals) != 1:
        raise IoFailure("scene file must contain exactly one start and one goal pixel")
    cells = np.where(gray == SCENE_OBSTACLE, OBSTACLE, FREE).astype(np.uint8)
    start = (int(starts[0][0]), int(starts[0][1]))
    goal = (int(goals[0][0]), int(goals[0][1]))
    return GridScene(cells, start, goal, family, seed)


def label_to_gray(mask: np.ndarray) -> np.ndarray:
    return (np.asarray(mask) > 0).astype(np.uint8) * LABEL_ON


def gray_to_label_mask(gray: np.ndarray) -> np.ndarray:
    return (gray >= 128).astype(np.uint8)

"""Dataset generation and checksum-verified persistence.

Layout under a dataset root: one directory per family holding scene/label PGM
pairs, plus manifest.json recording families, per-scene seeds, and sha256
checksums. Regenerating with the same arguments reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pgm
from .errors import IoFailure, ManifestError
from .grid import GridScene, PathLabel, ScenarioFamily, compute_label, generate_scene

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1

# Seed spacing between families within one dataset.
FAMILY_SEED_STRIDE = 1_000_000


@dataclass
class SceneRecord:
    scene_id: str
    family: str
    seed: int
    scene_file: str
    label_file: str
    scene_sha256: str
    label_sha256: str


@dataclass
class DatasetManifest:
    root: Path
    format_version: int
    width: int
    height: int
    families: list[dict]
    scenes: list[SceneRecord]

    def by_family(self, family_id: str) -> list[SceneRecord]:
        return [rec for rec in self.scenes if rec.family == family_id]


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def generate_batch(
    family: ScenarioFamily,
    count: int,
    seed_start: int,
    *,
    width: int = 60,
    height: int = 60,
) -> list[tuple[GridScene, PathLabel]]:
    """Scenes with seeds seed_start .. seed_start + count - 1, with labels."""
    out = []
    for i in range(count):
        scene = generate_scene(family, seed_start + i, width=width, height=height)
        out.append((scene, compute_label(scene)))
    return out


def gen_dataset(
    families: Sequence[ScenarioFamily],
    count_per_family: int,
    seed: int,
    out_dir: str | Path,
    *,
    width: int = 60,
    height: int = 60,
) -> DatasetManifest:
    """Write scenes, labels, and a checksummed manifest under out_dir."""
    if count_per_family < 1:
        raise ValueError("count_per_family must be >= 1")
    ids = [fam.kind for fam in families]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate family kinds in one dataset")
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create dataset directory {root}: {exc}") from exc

    family_entries: list[dict] = []
    records: list[SceneRecord] = []
    for index, fam in enumerate(families):
        seed_start = seed + index * FAMILY_SEED_STRIDE
        fam_dir = root / fam.kind
        fam_dir.mkdir(parents=True, exist_ok=True)
        for i, (scene, label) in enumerate(
            generate_batch(fam, count_per_family, seed_start, width=width, height=height)
        ):
            scene_rel = f"{fam.kind}/scene_{i:05d}.pgm"
            label_rel = f"{fam.kind}/label_{i:05d}.pgm"
            pgm.write_pgm(root / scene_rel, pgm.scene_to_gray(scene))
            pgm.write_pgm(root / label_rel, pgm.label_to_gray(label.mask))
            records.append(
                SceneRecord(
                    scene_id=f"{fam.kind}-{i:05d}",
                    family=fam.kind,
                    seed=scene.seed,
                    scene_file=scene_rel,
                    label_file=label_rel,
                    scene_sha256=_sha256((root / scene_rel).read_bytes()),
                    label_sha256=_sha256((root / label_rel).read_bytes()),
                )
            )
        family_entries.append(
            {
                "id": fam.kind,
                "params": dict(fam.params),
                "count": count_per_family,
                "seed_start": seed_start,
                "seed_end": seed_start + count_per_family - 1,
            }
        )

    manifest = DatasetManifest(root, FORMAT_VERSION, width, height, family_entries, records)
    payload = {
        "format_version": manifest.format_version,
        "width": width,
        "height": height,
        "families": family_entries,
        "scenes": [vars(rec) for rec in records],
    }
    (root / MANIFEST_NAME).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(root: str | Path, verify: bool = True) -> DatasetManifest:
    """Read manifest.json; with verify, every file must exist and match its
    checksum, and per-family counts must match the entries."""
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise ManifestError(f"{path} does not exist")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if payload.get("format_version") != FORMAT_VERSION:
        raise ManifestError(f"unsupported manifest format_version {payload.get('format_version')}")
    records = [SceneRecord(**entry) for entry in payload["scenes"]]
    manifest = DatasetManifest(
        root,
        payload["format_version"],
        payload["width"],
        payload["height"],
        payload["families"],
        records,
    )
    if verify:
        for fam in manifest.families:
            have = len(manifest.by_family(fam["id"]))
            if have != fam["count"]:
                raise ManifestError(
                    f"family {fam['id']}: manifest lists {fam['count']} scenes, found {have}"
                )
        for rec in records:
            for rel, want in ((rec.scene_file, rec.scene_sha256), (rec.label_file, rec.label_sha256)):
                file = root / rel
                if not file.is_file():
                    raise ManifestError(f"missing dataset file {rel}")
                got = _sha256(file.read_bytes())
                if got != want:
                    raise ManifestError(f"checksum mismatch for {rel}: {got} != {want}")
    return manifest


def load_scene(manifest: DatasetManifest, rec: SceneRecord) -> tuple[GridScene, np.ndarray]:
    """Scene plus its label mask; verifies both checksums on read."""
    scene_bytes = (manifest.root / rec.scene_file).read_bytes()
    label_bytes = (manifest.root / rec.label_file).read_bytes()
    if _sha256(scene_bytes) != rec.scene_sha256 or _sha256(label_bytes) != rec.label_sha256:
        raise ManifestError(f"checksum mismatch reading {rec.scene_id}")
    scene = pgm.gray_to_scene(pgm.read_pgm(manifest.root / rec.scene_file), rec.family, rec.seed)
    mask = pgm.gray_to_label_mask(pgm.read_pgm(manifest.root / rec.label_file))
    return scene, mask


def load_family(
    manifest: DatasetManifest, family_id: str, limit: int | None = None
) -> list[tuple[GridScene, np.ndarray]]:
    records = manifest.by_family(family_id)
    if not records:
        raise ManifestError(f"dataset has no family {family_id!r}")
    if limit is not None:
        records = records[:limit]
    return [load_scene(manifest, rec) for rec in records]

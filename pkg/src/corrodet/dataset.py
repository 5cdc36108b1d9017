"""Labeled tile manifest with image-grouped train/val/test splits.

The manifest is an immutable value: split operations return a new manifest.
Persisted as line-delimited CSV, one row per tile, with a sibling image table.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from . import errors

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class TileRecord:
    image_id: str
    row: int
    col: int
    label: int  # 1 = corroded, 0 = intact
    split: str
    path: str


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    n_tiles: int
    image_label: int
    split: str


class DatasetManifest:
    def __init__(self, entries: list[TileRecord]):
        seen = set()
        for rec in entries:
            key = (rec.image_id, rec.row, rec.col)
            if key in seen:
                raise ValueError(f"duplicate tile {key}")
            seen.add(key)
            if rec.label not in (0, 1):
                raise ValueError(f"bad label {rec.label}")
            if rec.split not in SPLITS:
                raise ValueError(f"bad split {rec.split!r}")
        self.entries = list(entries)
        by_image: dict[str, list[TileRecord]] = {}
        for rec in self.entries:
            by_image.setdefault(rec.image_id, []).append(rec)
        self.images = []
        for image_id, recs in by_image.items():
            splits = {r.split for r in recs}
            if len(splits) > 1:
                raise ValueError(f"image {image_id} spans splits {splits}")
            self.images.append(
                ImageEntry(
                    image_id=image_id,
                    n_tiles=len(recs),
                    image_label=1 if any(r.label == 1 for r in recs) else 0,
                    split=recs[0].split,
                )
            )

    @classmethod
    def from_records(cls, records):
        return cls(list(records))

    def __len__(self):
        return len(self.entries)

    def for_split(self, split: str) -> list[TileRecord]:
        return [r for r in self.entries if r.split == split]

    def image_ids(self) -> list[str]:
        return [e.image_id for e in self.images]

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "row", "col", "label", "split", "path"])
            for r in self.entries:
                writer.writerow([r.image_id, r.row, r.col, r.label, r.split, r.path])
        image_table = os.path.splitext(path)[0] + ".images.csv"
        with open(image_table, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "n_tiles", "image_label", "split"])
            for e in self.images:
                writer.writerow([e.image_id, e.n_tiles, e.image_label, e.split])

    @classmethod
    def load(cls, path: str) -> "DatasetManifest":
        records = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                records.append(
                    TileRecord(
                        image_id=row["image_id"],
                        row=int(row["row"]),
                        col=int(row["col"]),
                        label=int(row["label"]),
                        split=row["split"],
                        path=row["path"],
                    )
                )
        return cls(records)


def _allocate(n: int, fractions) -> list[int]:
    """Apportion n items to the three splits.

    Largest-remainder allocation over floor quotas; leftover seats go to the
    largest fractional remainder, ties broken in (train, val, test) order.
    """
    quotas = [n * f for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in range(leftover):
        counts[order[i % 3]] += 1
    return counts


def split_grouped(
    manifest: DatasetManifest,
    fractions=(0.6, 0.2, 0.2),
    seed: int = 0,
    stratified: bool = False,
) -> DatasetManifest:
    """Assign whole images to train/val/test; tiles inherit the image's split.

    With stratified=True the corroded and intact image pools are apportioned
    separately (this reproduces a 99/34/33 partition of 166 images when the
    classes are near-balanced at 84/82).
    """
    if len(manifest) == 0:
        raise errors.EmptyManifest("cannot split an empty manifest")
    f = tuple(float(x) for x in fractions)
    if len(f) != 3 or any(x <= 0 for x in f) or abs(sum(f) - 1.0) > 1e-9:
        raise errors.BadFractions(f"fractions {f} must be positive and sum to 1")

    rng = np.random.default_rng(seed)
    images = sorted(manifest.images, key=lambda e: e.image_id)
    perm = rng.permutation(len(images))
    shuffled = [images[i] for i in perm]

    assignment: dict[str, str] = {}
    pools = (
        [[e for e in shuffled if e.image_label == 1], [e for e in shuffled if e.image_label == 0]]
        if stratified
        else [shuffled]
    )
    for pool in pools:
        counts = _allocate(len(pool), f)
        pos = 0
        for split, k in zip(SPLITS, counts):
            for e in pool[pos : pos + k]:
                assignment[e.image_id] = split
            pos += k

    new_entries = [replace(r, split=assignment[r.image_id]) for r in manifest.entries]
    return DatasetManifest(new_entries)


def class_counts(manifest: DatasetManifest, split: str):
    """(corroded tiles, intact tiles, corroded images, intact images) per split."""
    tiles = manifest.for_split(split)
    imgs = [e for e in manifest.images if e.split == split]
    return (
        sum(1 for r in tiles if r.label == 1),
        sum(1 for r in tiles if r.label == 0),
        sum(1 for e in imgs if e.image_label == 1),
        sum(1 for e in imgs if e.image_label == 0),
    )

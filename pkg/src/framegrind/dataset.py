"""Dataset manifests, score files, synthetic corpus generation and frame sources."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import LandmarkSet, read_landmarks, write_landmarks
from .image import read_pnm, write_pnm
from .pipeline import ResultPayload
from .stages.synthetic import render_synthetic_face, sample_face_params
from .stages.types import SourceMeta

log = logging.getLogger(__name__)

MANIFEST_HEADER = ("path", "label")
MANIFEST_HEADER_LM = ("path", "label", "landmarks")
PARAMS_HEADER = ("path", "kappa", "center_x", "center_y", "scale", "rotation", "seed")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    image_path: str
    label: bool
    landmark_path: str | None = None
    line: int = 0

    def resolve(self, base: str) -> tuple[str, str | None]:
        img = os.path.join(base, self.image_path)
        lm = os.path.join(base, self.landmark_path) if self.landmark_path else None
        return img, lm


@dataclass
class DatasetManifest:
    rows: list[ManifestRow]
    base_dir: str = "."
    problems: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    @property
    def labels(self) -> list[bool]:
        return [r.label for r in self.rows]


def _parse_label(text: str, where: str) -> bool:
    t = text.strip()
    if t in ("1", "true", "True"):
        return True
    if t in ("0", "false", "False"):
        return False
    raise ManifestError(f"{where}: label must be 0 or 1, got {text!r}")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read a ``path,label[,landmarks]`` CSV; relative paths resolve against its directory.

    Rows whose files are missing are kept and listed in ``problems``.
    """
    base = os.path.dirname(os.path.abspath(path))
    rows, problems = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header not in (MANIFEST_HEADER, MANIFEST_HEADER_LM):
            raise ManifestError(f"{path}: header must be 'path,label[,landmarks]', got {','.join(header)!r}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ManifestError(f"{path}:{lineno}: expected {len(header)} columns, got {len(rec)}")
            lm = rec[2].strip() if len(rec) == 3 and rec[2].strip() else None
            row = ManifestRow(rec[0].strip(), _parse_label(rec[1], f"{path}:{lineno}"), lm, lineno)
            rows.append(row)
            if check_files:
                img, lmp = row.resolve(base)
                if not os.path.isfile(img):
                    problems.append(f"line {lineno}: image not found: {row.image_path}")
                if lmp is not None and not os.path.isfile(lmp):
                    problems.append(f"line {lineno}: landmarks not found: {row.landmark_path}")
    for p in problems:
        log.warning("%s: %s", path, p)
    return DatasetManifest(rows, base, problems)


def write_manifest(path, rows) -> None:
    with_lm = any(r.landmark_path for r in rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER_LM if with_lm else MANIFEST_HEADER)
        for r in rows:
            rec = [r.image_path, "1" if r.label else "0"]
            if with_lm:
                rec.append(r.landmark_path or "")
            w.writerow(rec)


# ---------------------------------------------------------------------------
# scores


@dataclass(frozen=True)
class ScoreRow:
    path: str | None
    label: bool | None
    score: float


def read_scores(path) -> list[ScoreRow]:
    """``path,label,score``, ``path,score`` or ``label,score`` CSV (header required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header not in (("path", "label", "score"), ("label", "score"), ("path", "score")):
            raise ManifestError(f"{path}: unsupported scores header {','.join(header)!r}")
        out = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            d = dict(zip(header, (c.strip() for c in rec)))
            try:
                score = float(d["score"])
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: bad score {d['score']!r}") from None
            label = None
            if d.get("label"):
                label = _parse_label(d["label"], f"{path}:{lineno}")
            out.append(ScoreRow(d.get("path"), label, score))
    return out


def write_scores(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("path", "label", "score"))
        for r in rows:
            label = "" if r.label is None else ("1" if r.label else "0")
            w.writerow((r.path or "", label, repr(float(r.score))))


# ---------------------------------------------------------------------------
# synthetic corpus


CORPUS_SIZE = 160


def generate_corpus(n: int, seed: int, out_dir, size: int = CORPUS_SIZE) -> DatasetManifest:
    """Write ``n`` synthetic faces as PPM plus landmarks, manifest.csv and params.csv.

    Curvature is uniform on [-1, 1]; the label is ``kappa > 0``. Output is a
    pure function of ``(n, seed, size)``.
    """
    if n <= 0:
        raise ValueError(f"corpus size must be positive, got {n}")
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "landmarks"), exist_ok=True)
    rng = np.random.default_rng(seed)
    rows, params_rows = [], []
    width = max(4, len(str(n - 1)))
    for i in range(n):
        p = sample_face_params(rng, size, size)
        img, lm, _ = render_synthetic_face(p, size, size)
        stem = f"face_{i:0{width}d}"
        img_rel = f"images/{stem}.ppm"
        lm_rel = f"landmarks/{stem}.txt"
        write_pnm(os.path.join(out_dir, img_rel), img)
        write_landmarks(os.path.join(out_dir, lm_rel), lm)
        rows.append(ManifestRow(img_rel, p.label, lm_rel))
        params_rows.append((img_rel, *(repr(float(v)) for v in (p.kappa, *p.center, p.scale, p.rotation)),
                            str(p.seed)))
    write_manifest(os.path.join(out_dir, "manifest.csv"), rows)
    with open(os.path.join(out_dir, "params.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARAMS_HEADER)
        w.writerows(params_rows)
    return DatasetManifest(rows, os.path.abspath(out_dir))


def read_corpus_params(path) -> dict[str, dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return {r["path"]: {k: (float(v) if k not in ("path", "seed") else v) for k, v in r.items()}
                for r in reader}


# ---------------------------------------------------------------------------
# frame sources


def manifest_frames(manifest: DatasetManifest):
    """Yield ``(image, ResultPayload('frame', SourceMeta))`` for readable manifest rows."""
    for row in manifest.rows:
        img_path, lm_path = row.resolve(manifest.base_dir)
        if not os.path.isfile(img_path):
            continue
        landmarks = ()
        if lm_path is not None and os.path.isfile(lm_path):
            landmarks = (read_landmarks(lm_path),)
        meta = SourceMeta(row.image_path, row.label, landmarks)
        yield read_pnm(img_path), ResultPayload("frame", meta)


def directory_frames(path):
    """Frames from ``path/manifest.csv`` if present, else every PGM/PPM in name order."""
    manifest = os.path.join(path, "manifest.csv")
    if os.path.isfile(manifest):
        yield from manifest_frames(load_manifest(manifest))
        return
    for name in sorted(os.listdir(path)):
        if name.lower().endswith((".ppm", ".pgm", ".pnm")):
            yield read_pnm(os.path.join(path, name)), ResultPayload("frame", SourceMeta(name))


def synthetic_frames(n: int, seed: int, size: int = CORPUS_SIZE):
    """Render ``n`` synthetic faces on the fly, with ground-truth landmarks attached."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        p = sample_face_params(rng, size, size)
        img, lm, _ = render_synthetic_face(p, size, size)
        yield img, ResultPayload("frame", SourceMeta(f"synthetic/{i}", p.label, (lm,)))


def landmark_set_or_none(path) -> LandmarkSet | None:
    return read_landmarks(path) if path and os.path.isfile(path) else None

"""Concrete stages and the ``kind`` -> implementation registry used by configs.

Stage kinds and the payload tag each one produces:

=============  ===========  ================================================
kind           tag          notes
=============  ===========  ================================================
source         frame        driven by the coordinator, value is SourceMeta
detect         faces        built-in heuristic detector, list of FaceBox
align          aligned      ImageBuffer at the network input size, or None
classify       smile        SmileScore, or None when nothing was aligned
overlay        overlay      annotated copy of the frame
plugin         per role     external process (faces / smile / landmarks)
passthrough    none         does nothing; used for scheduling studies
=============  ===========  ================================================
"""

from __future__ import annotations

import time

from ..geometry import BILINEAR, DegenerateInput, default_template, read_landmarks
from ..pipeline import ConfigError, PipelineConfig, ResultPayload, StageContext, StageError
from .align import DEFAULT_SIZE, align_stage, input_size_for, select_landmarks
from .classifier import stub_smile_classifier
from .detector import heuristic_face_detector
from .overlay import overlay_renderer
from .plugin import PluginSpec, PluginStage, external_plugin_stage
from .synthetic import (OutOfBounds, SyntheticFaceParams, render_scene, render_synthetic_face,
                        sample_face_params)
from .types import FaceBox, SmileScore, SourceMeta

__all__ = [
    "FaceBox", "SmileScore", "SourceMeta", "SyntheticFaceParams", "OutOfBounds", "PluginSpec",
    "render_synthetic_face", "render_scene", "sample_face_params", "heuristic_face_detector",
    "align_stage", "stub_smile_classifier", "overlay_renderer", "external_plugin_stage",
    "build_stage_impls", "STAGE_KINDS",
]


class AlignmentFailed(StageError):
    pass


def _source_landmarks(ctx: StageContext):
    meta = ctx.find("frame")
    if meta is not None and isinstance(meta.value, SourceMeta):
        return list(meta.value.landmarks)
    return []


def _largest(boxes):
    return max(boxes, key=lambda b: b.area) if boxes else None


def make_detect(params):
    kw = {k: params[k] for k in ("threshold", "min_area", "min_fill") if k in params}
    if "aspect_range" in params:
        kw["aspect_range"] = tuple(params["aspect_range"])

    def detect(ctx: StageContext):
        return ResultPayload("faces", heuristic_face_detector(ctx.image, **kw))
    return detect


def make_align(params):
    if "out_size" in params:
        size = int(params["out_size"])
    elif "rho" in params:
        size = input_size_for(float(params["rho"]))
    else:
        size = DEFAULT_SIZE
    template = read_landmarks(params["template"]) if "template" in params else default_template(size)
    interp = params.get("interp", BILINEAR)

    def align(ctx: StageContext):
        faces = ctx.find("faces")
        box = _largest(faces.value) if faces is not None else None
        if faces is not None and box is None:
            return ResultPayload("aligned", None)
        lms = ctx.find("landmarks")
        candidates = list(lms.value) if lms is not None else _source_landmarks(ctx)
        lm = select_landmarks(box, candidates)
        if lm is None:
            return ResultPayload("aligned", None)
        try:
            return ResultPayload("aligned", align_stage(ctx.image, box, lm, template, size, interp))
        except DegenerateInput as exc:
            raise AlignmentFailed(str(exc)) from exc
    return align


def make_classify(params):
    def classify(ctx: StageContext):
        aligned = ctx.find("aligned")
        if aligned is None or aligned.value is None:
            return ResultPayload("smile", None)
        return ResultPayload("smile", stub_smile_classifier(aligned.value))
    return classify


def make_overlay(params):
    faces_from = params.get("faces_from")
    smile_from = params.get("smile_from")

    def overlay(ctx: StageContext):
        boxes, smile = None, None
        if faces_from is not None:
            latest = ctx.board.latest(faces_from)
            boxes = latest[1].value if latest is not None else None
        if smile_from is not None:
            latest = ctx.board.latest(smile_from)
            smile = latest[1].value if latest is not None else None
        return ResultPayload("overlay", overlay_renderer(ctx.image, boxes, smile))
    return overlay


def make_passthrough(params):
    cost = float(params.get("cost_ms", 0.0)) / 1000.0

    def passthrough(ctx: StageContext):
        if cost:
            time.sleep(cost)
        return ResultPayload("none")
    return passthrough


def make_plugin(params):
    spec = PluginSpec(command=params["command"], role=params.get("role", "faces"),
                      timeout_ms=float(params.get("timeout_ms", 2000.0)))
    return PluginStage(spec)


STAGE_KINDS = {
    "detect": make_detect,
    "align": make_align,
    "classify": make_classify,
    "overlay": make_overlay,
    "passthrough": make_passthrough,
    "plugin": make_plugin,
}


def _producer_of(config: PipelineConfig, kind: str, role: str):
    for s in config.stages:
        if s.kind == kind or (s.kind == "plugin" and s.params.get("role", "faces") == role):
            return s.name
    return None


def build_stage_impls(config: PipelineConfig) -> dict:
    """Factories for every non-source stage of ``config``, keyed by stage name."""
    impls = {}
    for s in config.stages:
        if s.is_source:
            continue
        if s.kind not in STAGE_KINDS:
            raise ConfigError(f"stage {s.name!r} has unknown kind {s.kind!r}")
        params = dict(s.params)
        if s.kind == "overlay":
            params.setdefault("faces_from", _producer_of(config, "detect", "faces"))
            params.setdefault("smile_from", _producer_of(config, "classify", "smile"))
        if s.kind == "plugin" and "command" not in params:
            raise ConfigError(f"plugin stage {s.name!r} needs params.command")
        maker = STAGE_KINDS[s.kind]
        impls[s.name] = (lambda maker=maker, params=params: maker(params))
    return impls

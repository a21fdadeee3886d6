import numpy as np
import pytest

from conftest import echo_plugin
from framegrind.geometry import LandmarkSet
from framegrind.image import ImageBuffer
from framegrind.pipeline import Pipeline, PipelineConfig, StageError, StageStatus
from framegrind.stages import FaceBox, PluginSpec, SmileScore, external_plugin_stage
from framegrind.stages.plugin import (PluginExit, PluginProcess, PluginProtocolError,
                                      PluginReportedError, PluginStage, PluginTimeout)

IMG = ImageBuffer.blank(64, 48, 3, 200)


def call(*replies, role="faces", timeout_ms=5000, **kw):
    spec = PluginSpec(echo_plugin(*replies, **kw), role=role, timeout_ms=timeout_ms)
    return external_plugin_stage(spec, IMG)


def test_spec_validation():
    with pytest.raises(ValueError):
        PluginSpec((), role="faces")
    with pytest.raises(ValueError):
        PluginSpec(("x",), role="teeth")
    with pytest.raises(ValueError):
        PluginSpec(("x",), timeout_ms=0)
    assert PluginSpec("a 'b c'").command == ("a", "b c")


def test_loopback_face_box():
    out = call("FACES 1", "10 10 50 50")
    assert out.tag == "faces" and out.value == [FaceBox(10, 10, 50, 50)]


def test_loopback_no_faces_smile_and_landmarks():
    assert call("FACES 0").value == []
    assert call("SMILE 0.92", role="smile").value == SmileScore(0.92)
    out = call("LANDMARKS 3", "1 2", "3 4", "5 6", role="landmarks")
    lm = out.value[0]
    assert isinstance(lm, LandmarkSet) and lm.convention == "generic"
    assert np.array_equal(lm.points, [[1, 2], [3, 4], [5, 6]])


def test_timeout():
    with pytest.raises(PluginTimeout):
        call("FACES 0", delay=2.0, timeout_ms=150)


@pytest.mark.parametrize("reply", ["FACES one", "SMILE 1.5", "HUG 3", "SMILE", "FACES -1"])
def test_malformed_header_line_is_captured(reply):
    with pytest.raises(PluginProtocolError) as exc:
        call(reply)
    assert exc.value.line == reply


def test_malformed_box_line_is_captured():
    with pytest.raises(PluginProtocolError) as exc:
        call("FACES 1", "10 10 fifty 50")
    assert exc.value.line == "10 10 fifty 50"
    with pytest.raises(PluginProtocolError) as exc:
        call("FACES 1", "10 10 0 50")
    assert exc.value.line == "10 10 0 50"


def test_bad_handshake():
    with pytest.raises(PluginProtocolError) as exc:
        call("FACES 0", bad_hello=True)
    assert exc.value.line == "HELLO nonsense/0"


def test_plugin_reported_error():
    with pytest.raises(PluginReportedError, match="out of film"):
        call("ERR out of film")


def test_plugin_exit_then_restart():
    proc = PluginProcess(PluginSpec(echo_plugin("FACES 0", exit_after=1), timeout_ms=5000))
    try:
        assert proc.request(1, IMG).value == []
        with pytest.raises(PluginExit):
            proc.request(2, IMG)
        # the next request starts a fresh process
        assert proc.request(3, IMG).value == []
    finally:
        proc.close()


def test_missing_executable_is_not_a_stage_error():
    with pytest.raises(OSError):
        external_plugin_stage(PluginSpec(("/nonexistent/plugin-binary",)), IMG)


def test_plugin_errors_are_stage_errors():
    for cls in (PluginTimeout, PluginProtocolError, PluginExit, PluginReportedError):
        assert issubclass(cls, StageError)


def test_persistent_process_serves_many_frames():
    stage = PluginStage(PluginSpec(echo_plugin("SMILE 0.25"), role="smile", timeout_ms=5000))
    try:
        for i in range(5):
            assert stage.process.request(i, IMG).value == SmileScore(0.25)
        assert stage.process.running
    finally:
        stage.close()
    assert not stage.process.running


def plugin_pipeline(command, timeout_ms):
    return PipelineConfig.from_dict({
        "stages": [{"name": "grab", "kind": "source"},
                   {"name": "faces", "kind": "plugin", "prerequisites": ["grab"],
                    "params": {"command": list(command), "timeout_ms": timeout_ms}}],
        "clock": {"mode": "sim", "source_fps": 10}})


def test_timeout_inside_pipeline_marks_frame_skipped():
    from framegrind.stages import build_stage_impls
    cfg = plugin_pipeline(echo_plugin("FACES 0", delay=2.0), 150)
    abandoned = []

    def listen(ev):
        if ev.kind == "abandon":
            abandoned.append((ev.frame_id, ev.statuses[ev.stage]))

    report = Pipeline(cfg, build_stage_impls(cfg), listener=listen).run(
        [(IMG, None)] * 2)
    assert report.error is None
    assert abandoned == [(1, StageStatus.SKIPPED), (2, StageStatus.SKIPPED)]
    assert [e.outcome for e in report.events_for("faces")] == ["Error", "Error"]


def test_plugin_inside_pipeline_delivers_results():
    from framegrind.stages import build_stage_impls
    cfg = plugin_pipeline(echo_plugin("FACES 1", "10 10 50 50"), 5000)
    got = []
    Pipeline(cfg, build_stage_impls(cfg),
             on_result=lambda s, f, pl: got.append((f.id, pl.value))).run([(IMG, None)] * 3)
    assert got == [(i, [FaceBox(10, 10, 50, 50)]) for i in (1, 2, 3)]

import csv
import filecmp
import json
import os
import shlex

import pytest

from conftest import echo_plugin
from framegrind import cli
from framegrind.dataset import load_manifest, read_scores, write_scores
from framegrind.image import read_pnm
from framegrind.pipeline import RunReport

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_json(err):
    lines = [ln for ln in err.splitlines() if ln.strip()]
    assert len(lines) == 1
    return json.loads(lines[0])


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(same_tree(os.path.join(a, d), os.path.join(b, d)) for d in cmp.common_dirs)


def write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


# -- gen-corpus --------------------------------------------------------------------------------


def test_gen_corpus_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert run_cli(capsys, "gen-corpus", "--n", 10, "--seed", 7, "--out", tmp_path / d)[0] == 0
    assert same_tree(tmp_path / "a", tmp_path / "b")
    m = load_manifest(tmp_path / "a" / "manifest.csv")
    assert len(m.rows) == 10 and not m.problems
    assert all(r.landmark_path for r in m.rows)


def test_gen_corpus_label_balance(tmp_path, capsys):
    assert run_cli(capsys, "gen-corpus", "--n", 500, "--seed", 1, "--out", tmp_path)[0] == 0
    labels = load_manifest(tmp_path / "manifest.csv").labels
    assert 0.45 <= sum(labels) / len(labels) <= 0.55


@pytest.mark.parametrize("n", [0, -3])
def test_gen_corpus_rejects_empty(tmp_path, capsys, n):
    code, _, err = run_cli(capsys, "gen-corpus", "--n", n, "--out", tmp_path / "c")
    assert code == 2 and error_json(err)["error"] == "UsageError"
    assert not (tmp_path / "c").exists()


# -- run -----------------------------------------------------------------------------------------


def test_run_synthetic_writes_frames_and_report(tmp_path, capsys):
    out = tmp_path / "out"
    code, _, _ = run_cli(capsys, "run", "--config", "smile", "--synthetic", 100, "--out", out)
    assert code == 0
    frames = sorted(os.listdir(out / "frames"))
    assert len(frames) == 100 and frames[0] == "frame_000001.ppm"
    assert read_pnm(out / "frames" / frames[0]).channels == 3
    report = RunReport.from_dict(json.loads((out / "trace.json").read_text()))
    assert report.summary()["overlay"]["done"] == 100
    with open(out / "report.csv") as fh:
        rows = {r["stage"]: r for r in csv.DictReader(fh)}
    assert set(rows) == {"grab", "detect", "align", "classify", "overlay"}
    assert len(read_scores(out / "scores.csv")) == 100


def test_run_missing_config(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--config", tmp_path / "nope.json", "--synthetic", 3,
                           "--out", tmp_path / "o")
    assert code == 2
    body = error_json(err)
    assert body["error"] == "ConfigError" and "nope.json" in body["message"]


def test_run_sim_is_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert run_cli(capsys, "run", "--config", "smile", "--synthetic", 20, "--seed", 4,
                       "--out", tmp_path / d)[0] == 0
    assert (tmp_path / "a" / "trace.json").read_bytes() == (tmp_path / "b" / "trace.json").read_bytes()
    assert same_tree(tmp_path / "a", tmp_path / "b")


def test_run_over_corpus_directory(tmp_path, capsys):
    run_cli(capsys, "gen-corpus", "--n", 8, "--seed", 2, "--out", tmp_path / "c")
    assert run_cli(capsys, "run", "--config", "smile", "--input", tmp_path / "c",
                   "--out", tmp_path / "o")[0] == 0
    scores = read_scores(tmp_path / "o" / "scores.csv")
    assert [s.path for s in scores] == [f"images/face_{i:04d}.ppm" for i in range(8)]


def test_run_needs_exactly_one_input(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--config", "smile", "--out", tmp_path)
    assert code == 2 and error_json(err)["error"] == "UsageError"
    code, _, _ = run_cli(capsys, "run", "--config", "smile", "--input", tmp_path / "none",
                         "--out", tmp_path)
    assert code == 2


def test_run_missing_template_is_config_error(tmp_path, capsys):
    cfg = {"stages": [{"name": "grab", "kind": "source"},
                      {"name": "align", "kind": "align", "prerequisites": ["grab"],
                       "params": {"template": str(tmp_path / "missing_template.txt")}}],
           "clock": {"mode": "sim", "source_fps": 30}}
    path = write(tmp_path / "cfg.json", json.dumps(cfg))
    code, _, err = run_cli(capsys, "run", "--config", path, "--synthetic", 2, "--out", tmp_path / "o")
    assert code == 2
    assert "missing_template.txt" in error_json(err)["message"]


def test_run_plugin_failure_exits_3(tmp_path, capsys):
    cfg = {"stages": [{"name": "grab", "kind": "source"},
                      {"name": "faces", "kind": "plugin", "prerequisites": ["grab"],
                       "params": {"command": ["/nonexistent/plugin-binary"]}}],
           "clock": {"mode": "sim", "source_fps": 30}}
    path = write(tmp_path / "cfg.json", json.dumps(cfg))
    code, _, err = run_cli(capsys, "run", "--config", path, "--synthetic", 2, "--out", tmp_path / "o")
    assert code == 3
    assert error_json(err)["error"] == "StagePanic"


# -- bench ---------------------------------------------------------------------------------------


def test_bench_rows_descending_with_unavailable(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "bench", "--config", "bench", "--out", tmp_path)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "name,fps,display_fps,skip_fraction,latency_p50_ms"
    rows = [ln.split(",") for ln in lines[1:]]
    assert [r[0] for r in rows] == ["classifier-12ms", "classifier-80ms", "classifier-on-accelerator"]
    assert float(rows[0][1]) > float(rows[1][1])
    assert float(rows[1][1]) == pytest.approx(12.5, abs=0.1)
    assert rows[2][1:] == ["*"] * 4
    assert (tmp_path / "bench.csv").read_text() == out
    js = (tmp_path / "bench.json").read_text()
    assert json.dumps(json.loads(js), indent=1) + "\n" == js


def test_bench_json_format(capsys):
    code, out, _ = run_cli(capsys, "bench", "--config", "bench", "--format", "json")
    data = json.loads(out)
    assert code == 0 and data[-1]["fps"] == "*" and data[0]["fps"] > data[1]["fps"]


def test_bench_empty_stage_list(tmp_path, capsys):
    path = write(tmp_path / "empty.json", json.dumps({"stages": []}))
    code, _, err = run_cli(capsys, "bench", "--config", path)
    assert code == 2 and error_json(err)["error"] == "ConfigError"


# -- eval ----------------------------------------------------------------------------------------


def four_sample(tmp_path, scores):
    write(tmp_path / "manifest.csv",
          "path,label\n" + "".join(f"img{i}.ppm,{y}\n" for i, y in enumerate([1, 1, 0, 0])))
    return write(tmp_path / "scores.csv",
                 "path,label,score\n" + "".join(f"img{i}.ppm,{y},{s}\n" for i, (y, s) in
                                                enumerate(zip([1, 1, 0, 0], scores))))


def test_eval_perfect_scores(tmp_path, capsys):
    scores = four_sample(tmp_path, [0.9, 0.8, 0.2, 0.1])
    code, out, _ = run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores",
                           scores, "--out", tmp_path / "m")
    m = json.loads(out)
    assert code == 0 and m["accuracy"] == 1.0 and m["auc"] == 1.0
    assert json.loads((tmp_path / "m" / "metrics.json").read_text()) == m
    assert list(m) == ["n", "n_pos", "n_neg", "threshold", "accuracy", "auc", "confusion",
                       "missing", "manifest_problems"]


def test_eval_four_sample_case(tmp_path, capsys):
    scores = four_sample(tmp_path, [0.8, 0.4, 0.6, 0.2])
    code, out, _ = run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores", scores)
    m = json.loads(out)
    assert code == 0 and m["auc"] == 0.75 and m["accuracy"] == 0.5
    assert m["confusion"] == {"tp": 1, "tn": 1, "fp": 1, "fn": 1}
    assert len(m["manifest_problems"]) == 4  # image files are absent, but rows are kept


def test_eval_label_score_file(tmp_path, capsys):
    four_sample(tmp_path, [0, 0, 0, 0])
    scores = write(tmp_path / "ls.csv", "label,score\n1,0.8\n1,0.4\n0,0.6\n0,0.2\n")
    code, out, _ = run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores", scores)
    assert code == 0 and json.loads(out)["auc"] == 0.75


def test_eval_threshold_flag(tmp_path, capsys):
    scores = four_sample(tmp_path, [0.8, 0.4, 0.6, 0.2])
    _, out, _ = run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores", scores,
                        "--threshold", "0.7")
    assert json.loads(out)["accuracy"] == 0.75


def test_eval_single_class(tmp_path, capsys):
    write(tmp_path / "manifest.csv", "path,label\na.ppm,1\nb.ppm,1\n")
    scores = write(tmp_path / "s.csv", "path,label,score\na.ppm,1,0.9\nb.ppm,1,0.2\n")
    code, _, err = run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores", scores)
    assert code == 2 and error_json(err)["error"] == "SingleClassInput"


def test_eval_reports_missing_scores(tmp_path, capsys):
    four_sample(tmp_path, [0, 0, 0, 0])
    scores = write(tmp_path / "s.csv", "path,label,score\nimg0.ppm,1,0.9\nimg2.ppm,0,0.1\n")
    _, out, _ = run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores", scores)
    m = json.loads(out)
    assert m["n"] == 2 and m["missing"] == ["img1.ppm", "img3.ppm"]


def test_eval_bad_manifest_header(tmp_path, capsys):
    write(tmp_path / "manifest.csv", "file,label\na.ppm,1\n")
    scores = write(tmp_path / "s.csv", "label,score\n1,0.9\n0,0.1\n")
    code, _, err = run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores", scores)
    assert code == 2 and error_json(err)["error"] == "ManifestError"


def test_eval_with_smile_plugin(tmp_path, capsys):
    run_cli(capsys, "gen-corpus", "--n", 6, "--seed", 3, "--out", tmp_path / "c")
    cmd = shlex.join(echo_plugin("SMILE 0.7"))
    code, out, _ = run_cli(capsys, "eval", "--manifest", tmp_path / "c" / "manifest.csv",
                           "--plugin", cmd)
    m = json.loads(out)
    assert code == 0 and m["n"] == 6 and m["auc"] == 0.5
    assert m["accuracy"] == m["n_pos"] / 6


def test_eval_plugin_failure_exits_3(tmp_path, capsys):
    run_cli(capsys, "gen-corpus", "--n", 4, "--seed", 3, "--out", tmp_path / "c")
    cmd = shlex.join(echo_plugin("ERR no model loaded"))
    code, _, err = run_cli(capsys, "eval", "--manifest", tmp_path / "c" / "manifest.csv",
                           "--plugin", cmd)
    assert code == 3 and error_json(err)["error"] == "PluginReportedError"


# -- costmodel -----------------------------------------------------------------------------------


def test_costmodel_mobilenet_rows(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "costmodel", "--out", tmp_path)
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    mob = [r for r in rows if r["name"].startswith("MobileNet")]
    assert len(mob) == 8
    flo = [int(r["flo"]) for r in mob]
    assert flo == sorted(flo)
    assert [r["name"] for r in rows[-2:]] == ["ResNet-50", "VGG-16"]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_costmodel_golden(tmp_path, capsys, fmt):
    arch = tmp_path / "arch"
    arch.mkdir()
    src = os.path.join(os.path.dirname(cli.cm.__file__), "data", "architectures", "mobilenet_v1.json")
    (arch / "mobilenet_v1.json").write_bytes(open(src, "rb").read())
    code, out, _ = run_cli(capsys, "costmodel", "--arch-dir", arch, "--format", fmt)
    assert code == 0
    with open(os.path.join(GOLDEN, f"costmodel_mobilenet.{fmt}")) as fh:
        assert out == fh.read()


def test_costmodel_csv_and_json_agree(capsys):
    _, csv_out, _ = run_cli(capsys, "costmodel")
    _, json_out, _ = run_cli(capsys, "costmodel", "--format", "json")
    assert cli.cm.report_from_csv(csv_out) == cli.cm.report_from_json(json_out)


def test_costmodel_unknown_kind_reports_line(tmp_path, capsys):
    arch = tmp_path / "arch"
    arch.mkdir()
    write(arch / "bad.json", '{\n "name": "bad",\n "layers": [\n  {"kind": "Conv", "k": 3, '
          '"in": 3, "out": 8},\n  {"kind": "Hyperconv"}\n ],\n "head": {"in": 8}\n}\n')
    code, _, err = run_cli(capsys, "costmodel", "--arch-dir", arch)
    body = error_json(err)
    assert code == 2 and body["error"] == "ArchitectureError" and body["line"] == 5


def test_costmodel_variants_and_unavailable(capsys):
    code, out, _ = run_cli(capsys, "costmodel", "--variants", "0.5:1,1:0.714", "--unavailable",
                           "VGG-16")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 5 and lines[-1] == "VGG-16,1.0,1.0,*,*"
    code, _, err = run_cli(capsys, "costmodel", "--variants", "0.5")
    assert code == 2
    code, _, err = run_cli(capsys, "costmodel", "--variants", "2:1")
    assert code == 2 and error_json(err)["error"] == "InvalidAlpha"


# -- general -------------------------------------------------------------------------------------


def test_usage_errors_are_json(capsys):
    code, _, err = run_cli(capsys, "frobnicate")
    assert code == 2 and "error" in error_json(err)
    code, _, err = run_cli(capsys, "run")
    assert code == 2 and "error" in error_json(err)


def test_artifacts_round_trip(tmp_path, capsys):
    out = tmp_path / "o"
    run_cli(capsys, "run", "--config", "smile", "--synthetic", 12, "--out", out)
    trace = (out / "trace.json").read_text()
    assert RunReport.from_dict(json.loads(trace)).to_json() == trace
    scores_text = (out / "scores.csv").read_text()
    write_scores(tmp_path / "again.csv", read_scores(out / "scores.csv"))
    assert (tmp_path / "again.csv").read_text() == scores_text

    write(tmp_path / "manifest.csv", "path,label\n" + "".join(
        f"{r.path},{int(r.label)}\n" for r in read_scores(out / "scores.csv")))
    run_cli(capsys, "eval", "--manifest", tmp_path / "manifest.csv", "--scores",
            out / "scores.csv", "--out", tmp_path / "m")
    metrics = (tmp_path / "m" / "metrics.json").read_text()
    assert json.dumps(json.loads(metrics), indent=1) + "\n" == metrics

    run_cli(capsys, "costmodel", "--out", tmp_path / "c")
    text = (tmp_path / "c" / "costmodel.csv").read_text()
    assert cli.cm.report_to_csv(cli.cm.report_from_csv(text)) == text
    js = (tmp_path / "c" / "costmodel.json").read_text()
    assert cli.cm.report_to_json(cli.cm.report_from_json(js)) == js

import csv
import json

import numpy as np
import pytest

from superres import cli
from superres.config import ExperimentConfig


def run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    meta, rows = {}, []
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, value = line[2:].split("=", 1)
            meta[key] = json.loads(value)
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    rows = [r for r in reader]
    return meta, header, rows, "\n".join(body)


@pytest.fixture
def files(tmp_path):
    (tmp_path / "ex1.json").write_text("[[0, 0], [0, 1]]")
    (tmp_path / "tri.json").write_text(json.dumps([[0.37, 0.28], [0.435, 0.29], [0.41, 0.34]]))
    (tmp_path / "far.json").write_text("[[1.5, 0.0], [0.0, 0.0]]")
    (tmp_path / "bad.json").write_text("[[0, 0], ")
    return tmp_path


def test_basis_example1(capsys, files):
    code, out, _ = run(capsys, "basis", "--spikes", str(files / "ex1.json"), "--out", str(files / "o"))
    assert code == 0
    assert out.strip() == "{1, y, x, y^2, x*y, y^3}"


def test_etaw_neuro_triangle_flags_sup(capsys, files):
    code, out, _ = run(capsys, "etaw", "--kernel", "neuro_disc", "--spikes", str(files / "tri.json"),
                       "--grid", "48", "--out", str(files / "o"))
    assert code == 0
    rep = json.loads(out)
    assert rep["nd"]["sup_gt_1"] is True
    assert rep["nd"]["verdict"] == "degenerate_sup"


def test_figure_etaw_gaussian(capsys, files):
    code, out, _ = run(capsys, "figure", "--name", "etaw-gaussian", "--N", "2..5", "--grid", "32",
                       "--out", str(files / "fig"))
    assert code == 0
    rep = json.loads(out)
    assert len(rep["files"]) == 4
    for path in rep["files"]:
        meta, header, rows, _ = read_csv(path)
        assert header == ["x", "y", "value"]
        assert len(rows) == 32 * 32


def test_csv_grid_layout_and_metadata(capsys, files):
    code, _, _ = run(capsys, "etav", "--grid", "24", "--t", "0.5", "--out", str(files / "o"))
    assert code == 0
    meta, header, rows, _ = read_csv(files / "o" / "etav.csv")
    pts = np.array([[float(r[0]), float(r[1])] for r in rows])
    assert all(len(r) == len(header) for r in rows)
    # row-major: lexicographic in (x, y)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    assert np.array_equal(order, np.arange(len(pts)))
    assert len(np.unique(pts[:, 0])) * len(np.unique(pts[:, 1])) == len(pts)
    cfg = ExperimentConfig.from_dict({k: v for k, v in meta.items() if k != "certificate"})
    assert cfg.t == 0.5 and cfg.grid == 24


@pytest.mark.parametrize("argv", [
    ["etav", "--grid", "20"],
    ["converge", "--grid", "20", "--t-list", "1,0.5,0.2"],
    ["solve", "--grid", "32", "--lambda", "0.01"],
    ["sweep", "--grid", "32", "--t-list", "1,0.5"],
])
def test_deterministic_outputs(capsys, files, argv, monkeypatch):
    monkeypatch.setenv("SUPERRES_THREADS", "1")
    bodies = []
    for k in range(2):
        out = files / f"run{k}"
        code, _, _ = run(capsys, *argv, "--out", str(out))
        assert code == 0
        texts = {}
        for path in sorted(out.glob("*.csv")):
            texts[path.name] = read_csv(path)[3]
        bodies.append(texts)
    assert bodies[0] == bodies[1] and bodies[0]


@pytest.mark.parametrize("argv", [
    ["etav", "--bogus"],
    ["nosuch"],
    [],
    ["etav", "--kernel", "nope"],
    ["etav", "--fc", "3"],
    ["figure", "--name", "unknown"],
])
def test_config_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert "error" in err


def test_malformed_and_out_of_domain(capsys, files):
    code, _, _ = run(capsys, "etav", "--spikes", str(files / "bad.json"))
    assert code == 1
    code, _, _ = run(capsys, "etav", "--kernel", "neuro_disc", "--spikes", str(files / "far.json"))
    assert code == 1
    code, _, _ = run(capsys, "etav", "--spikes", str(files / "missing.json"))
    assert code == 1


def test_numerical_failure_reports_json(capsys, files):
    (files / "dup.json").write_text("[[0, 0], [0, 0]]")
    code, _, err = run(capsys, "etav", "--spikes", str(files / "dup.json"), "--out", str(files / "o"))
    assert code == 2
    info = json.loads(err)
    assert info["error"] == "SingularSystemError"


def test_config_file(capsys, files):
    cfg = ExperimentConfig(kernel={"name": "lowpass_torus", "fc": 2}, grid=64, out=str(files / "c"))
    (files / "cfg.json").write_text(cfg.to_json())
    code, out, _ = run(capsys, "check-nd", "--config", str(files / "cfg.json"))
    assert code == 0
    assert json.loads(out)["nd"]["verdict"] == "nondegenerate"


def test_main_exit_code(files):
    with pytest.raises(SystemExit) as exc:
        cli.main(["basis", "--spikes", str(files / "ex1.json"), "--out", str(files / "o")])
    assert exc.value.code == 0

import csv
import os

import numpy as np
import pytest

from pdpum.cli import main
from pdpum.io.vtk import write_pd_snapshot


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_config_is_usage_error(capsys):
    assert main(["pum-static"]) == 2
    assert main(["pum-static", "--config", "nosuch"]) == 2


def test_extract_crack_without_damage(tmp_path, capsys):
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    files = []
    for k in (0, 250, 500):
        p = str(tmp_path / f"pd_{k:06d}.vtk")
        write_pd_snapshot(p, pts, np.zeros((3, 2)), np.zeros(3))
        files.append(p)
    out = tmp_path / "out"
    assert main(["extract-crack", "--damage", *files, "--output-dir", str(out)]) == 0
    assert (out / "crack.csv").read_text() == "x1,y1,x2,y2\n"


def test_extract_crack_with_damage(tmp_path):
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    files = []
    for k, d in ((0, [0.0, 0.0, 0.0]), (250, [0.0, 2.0, 0.0]), (500, [0.0, 2.0, 3.0])):
        p = str(tmp_path / f"pd_{k:06d}.vtk")
        write_pd_snapshot(p, pts, np.zeros((3, 2)), np.array(d))
        files.append(p)
    assert main(["extract-crack", "--damage", *files, "--stride", "250", "--output-dir", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "crack.csv")))
    assert rows[1:] == [["1", "0", "", ""], ["0", "1", "", ""]]


def test_pum_static_bar(tmp_path, capsys):
    out = tmp_path / "bar"
    assert main(["pum-static", "--config", "bar", "--output-dir", str(out)]) == 0
    text = capsys.readouterr().out
    line = [l for l in text.splitlines() if l.startswith("U_max = ")][0]
    assert float(line.split("=")[1]) == pytest.approx(1.235e-4, rel=0.02)
    names = set(os.listdir(out))
    assert {"pum_static.vtk", "pum_static.png", "summary.csv", "summary.json"} <= names


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["pd-run", "--config", "bar", "--scale", "20", "--threads", "1", "--no-figures", "--output-dir", str(d)]) == 0
    csvs = sorted(f for f in os.listdir(a) if f.endswith((".vtk", ".csv")) and f != "summary.csv")
    assert csvs
    for f in csvs:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f

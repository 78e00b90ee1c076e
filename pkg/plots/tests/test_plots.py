import subprocess
import sys

import pytest
from PIL import Image

from infoplan_plots import SchemaError, load_curve, render_curve, render_table


CURVE_HEADER = "episode,score_mean,score_std,noisy_mean,noisy_std,epsilon,loss_mean\n"


def write_curve(path, rows):
    path.write_text(CURVE_HEADER + "".join(rows))
    return str(path)


def minimal_curve(tmp_path):
    return write_curve(
        tmp_path / "curve.csv",
        ["0,1.5,0.5,1.4,0.6,1.0,2.0\n", "1,3.0,0.25,2.9,0.3,0.8,1.0\n"],
    )


AGG_HEADER = (
    "domain,n,m,f,mode,trials,failures,partial,total_score_mean,total_score_std,"
    "infos_per_timestep_mean,infos_per_timestep_std,env_reward_mean,env_reward_std,"
    "replan_count_mean,steps_mean\n"
)


def minimal_aggregate(tmp_path):
    p = tmp_path / "aggregate.csv"
    p.write_text(
        AGG_HEADER
        + "grid,4,1,id,plan_known_rh,100,0,false,12.5,2.0,0.4,0.05,-60.0,8.0,10.0,55\n"
        + "grid,4,1,sq,plan_known_rh,100,0,false,150,20,0.3,0.04,-60.0,8.0,10.0,55\n"
    )
    return str(p)


def test_render_curve_minimal(tmp_path):
    out = tmp_path / "curve.png"
    render_curve(minimal_curve(tmp_path), str(out))
    assert out.exists() and out.stat().st_size > 0
    img = Image.open(out)
    assert img.size[0] > 100 and img.size[1] > 100


def test_render_curve_missing_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("episode,score_mean,epsilon\n0,1.0,1.0\n")
    with pytest.raises(SchemaError):
        render_curve(str(bad), str(tmp_path / "x.png"))


def test_curve_table_validation(tmp_path):
    decreasing = write_curve(
        tmp_path / "dec.csv", ["1,1.0,0.1,1,0.1,1.0,1\n", "0,1.0,0.1,1,0.1,1.0,1\n"]
    )
    with pytest.raises(SchemaError):
        load_curve(decreasing)
    negstd = write_curve(tmp_path / "neg.csv", ["0,1.0,-0.1,1,0.1,1.0,1\n"])
    with pytest.raises(SchemaError):
        load_curve(negstd)
    empty = tmp_path / "empty.csv"
    empty.write_text(CURVE_HEADER)
    with pytest.raises(SchemaError):
        load_curve(str(empty))


def test_render_curve_idempotent(tmp_path):
    src = minimal_curve(tmp_path)
    out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
    render_curve(src, str(out1))
    render_curve(src, str(out2))
    img1, img2 = Image.open(out1), Image.open(out2)
    assert img1.size == img2.size
    assert list(img1.getdata()) == list(img2.getdata())


def test_render_table(tmp_path):
    out = tmp_path / "table.png"
    render_table(minimal_aggregate(tmp_path), str(out))
    assert out.exists() and out.stat().st_size > 0


def run_cli(entry, args):
    return subprocess.run(
        [sys.executable, "-c",
         f"import sys; from infoplan_plots.cli import {entry}; sys.exit({entry}())",
         *args],
        capture_output=True, text=True,
    )


def test_cli_curve_ok(tmp_path):
    src = minimal_curve(tmp_path)
    out = tmp_path / "cli.png"
    proc = run_cli("curve_main", [src, str(out)])
    assert proc.returncode == 0, proc.stderr
    assert out.exists()


def test_cli_schema_violation_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("episode,epsilon\n0,1\n")
    proc = run_cli("curve_main", [str(bad), str(tmp_path / "no.png")])
    assert proc.returncode == 2
    assert "schema error" in proc.stderr


def test_cli_table_ok(tmp_path):
    src = minimal_aggregate(tmp_path)
    out = tmp_path / "table_cli.png"
    proc = run_cli("table_main", [src, str(out)])
    assert proc.returncode == 0, proc.stderr
    assert out.exists()

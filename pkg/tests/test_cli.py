import pytest

from phdg import cli


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nr = 2\nt-final = 0.5  # inline\n\nlevels=4, 8\n")
    assert cli.read_config(p) == {"r": "2", "t_final": "0.5", "levels": "4, 8"}
    p.write_text("oops\n")
    with pytest.raises(ValueError):
        cli.read_config(p)


def test_fraction_parsing():
    assert cli.eval_fraction("1/3") == pytest.approx(1 / 3)
    assert cli._float_list("0, 1/2 1") == [0.0, 0.5, 1.0]


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "res.csv"
    energy = tmp_path / "energy.csv"
    vtk = tmp_path / "field.vtk"
    rc = cli.main(["solve", "--r", "1", "--theta", "1/2", "--n", "4", "--t-final", "0.05",
                   "--out", str(out), "--energy-out", str(energy), "--vtk", str(vtk)])
    assert rc == 0
    assert out.read_text().startswith("theta,h,l2_V")
    assert energy.read_text().startswith("t,E_h,boundary_power")
    assert "CELL_DATA 32" in vtk.read_text()
    assert "l2_velocity" in capsys.readouterr().out


def test_config_with_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"r = 0\nlevels = 2 4\ntheta = 0.5\nt_final = 0.05\nout_dir = {tmp_path / 'o'}\n")
    rc = cli.main(["--config", str(cfg), "convergence", "--r", "1"])
    assert rc == 0
    assert (tmp_path / "o" / "convergence_r1.csv").exists()
    assert not (tmp_path / "o" / "convergence_r0.csv").exists()


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    with pytest.raises(SystemExit):
        cli.main(["--config", str(cfg), "solve"])


def test_verify_dirac(capsys):
    assert cli.main(["verify-dirac", "--r", "1", "--theta", "0 1", "--samples", "5", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out and "FAIL" not in out


def test_bad_value_reports_error(capsys):
    assert cli.main(["solve", "--theta", "1.5", "--n", "2"]) == 2
    assert "theta" in capsys.readouterr().err

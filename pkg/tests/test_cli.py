import pytest

from nilhomog import cli
from nilhomog.errors import (BoundedSearchError, HomogError, InputError, NonconvergenceError, RangeError,
                             ResolutionError)

KINETIC = """\
# kinetic cone datum
model.kind = kinetic
model.dimension = 1
discretization.h_x = 1/20
discretization.h_t = 1/10
discretization.h_v = 1/100
experiment.datum = cone
experiment.eps_list = 1/4, 1/8
experiment.R = 1
experiment.T_grid = 1
experiment.net = 9
experiment.seed = 7
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def body(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_growth_csv(tmp_path):
    cfg = write(tmp_path, "group.tag = Z2\nexperiment.r_max = 4\n")
    assert cli.main(["growth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = tmp_path / "o" / "growth.csv"
    text = out.read_text()
    assert text.startswith("# config_hash=")
    assert "# provenance=nilhomog growth" in text
    assert body(out)[:2] == ["r,count", "1,5"]
    assert "\r" not in text


def test_check_model(tmp_path, capsys):
    cfg = write(tmp_path, "model.kind = mechanical\nmodel.potential = cos\n")
    assert cli.main(["check-model", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert "valid" in capsys.readouterr().out
    rows = dict(ln.split(",") for ln in body(tmp_path / "check.csv")[1:])
    assert rows["valid"] == "1"


def test_unknown_key_rejected(tmp_path):
    cfg = write(tmp_path, "group.tag = Z2\nexperiment.radius_max = 4\n")
    assert cli.main(["growth", "--config", str(cfg)]) == 2


def test_duplicate_key_and_bad_value(tmp_path):
    assert cli.main(["growth", "--config", str(write(tmp_path, "group.tag = Z2\ngroup.tag = H3\n"))]) == 2
    assert cli.main(["growth", "--config", str(write(tmp_path, "experiment.r_max = four\n"))]) == 2
    with pytest.raises(InputError):
        cli.parse_config("no equals sign here\n")


def test_missing_seed(tmp_path):
    cfg = write(tmp_path, "group.tag = H3\nexperiment.targets = 1,0,0\nexperiment.n_pieces = 8\n")
    assert cli.main(["cc-dist", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert cli.main(["cc-dist", "--config", str(cfg), "--out", str(tmp_path), "--seed", "3"]) == 0
    rows = body(tmp_path / "ccdist.csv")
    assert rows[0] == "q1,q2,q3,distance"
    assert float(rows[1].split(",")[-1]) == pytest.approx(1.0, abs=1e-3)


def test_bad_flags(tmp_path):
    cfg = write(tmp_path, "group.tag = Z2\nexperiment.r_max = 3\n")
    assert cli.main(["growth"]) == 2
    assert cli.main(["nosuch", "--config", str(cfg)]) == 2
    assert cli.main(["growth", "--config", str(cfg), "--threads", "0"]) == 2
    assert cli.main(["growth", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_config_hash_ignores_order_and_comments():
    a = cli.parse_config("group.tag = Z2\nexperiment.r_max = 4\n")
    b = cli.parse_config("# comment\nexperiment.r_max = 4\n\ngroup.tag = Z2\n")
    c = cli.parse_config("group.tag = Z2\nexperiment.r_max = 5\n")
    assert a.hash == b.hash != c.hash
    assert a["experiment.r_max"] == 4


def test_homogenize_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, KINETIC)
    assert cli.main(["homogenize", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["homogenize", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / d / "errors.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    rows = body(a)
    assert rows[0] == "eps,T,sup_error"
    errs = [float(r.split(",")[2]) for r in rows[1:]]
    assert len(errs) == 2 and errs[1] < errs[0]
    assert (tmp_path / "a" / "report.json").exists() and (tmp_path / "a" / "profile.csv").exists()
    assert not list((tmp_path / "a").glob("*.tmp"))


def test_beta_and_cell(tmp_path):
    cfg = write(tmp_path, KINETIC + "experiment.h_max = 1\nexperiment.dh = 1/4\nexperiment.T_list = 4, 8\n"
                "experiment.p_list = 0, 1/2\n")
    assert cli.main(["beta", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    beta = body(tmp_path / "beta.csv")
    assert beta[0] == "h,beta,error" and len(beta) == 10
    alpha = [r.split(",") for r in body(tmp_path / "alpha.csv")[1:]]
    assert float(alpha[1][1]) == pytest.approx(0.125, rel=0.01)
    assert cli.main(["cell", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    cell = [r.split(",") for r in body(tmp_path / "cell.csv")[1:]]
    assert float(cell[1][2]) == pytest.approx(0.125, rel=1e-6)


def test_lbar_and_pansu(tmp_path):
    cfg = write(tmp_path, "group.tag = H3\nexperiment.targets = 1,0,0\nexperiment.n_pieces = 16\n"
                "experiment.seed = 0\n")
    assert cli.main(["lbar", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    row = body(tmp_path / "lbar.csv")[1].split(",")
    assert float(row[-1]) == pytest.approx(0.5, abs=1e-3)
    pcfg = write(tmp_path, "group.tag = Z2\nexperiment.targets = 1,0; 0.3,0.7\nexperiment.eps_list = 1/4, 1/8\n"
                 "experiment.seed = 0\n", "p.cfg")
    assert cli.main(["pansu", "--config", str(pcfg), "--out", str(tmp_path)]) == 0
    rows = body(tmp_path / "pansu.csv")
    assert len(rows) == 5


def test_exit_code_mapping():
    assert cli.exit_code(InputError("x")) == 2
    assert cli.exit_code(ResolutionError("x")) == 3
    assert cli.exit_code(RangeError("x")) == 3
    assert cli.exit_code(NonconvergenceError("x", best_residual=1.0)) == 4
    assert cli.exit_code(BoundedSearchError("x")) == 5
    assert cli.exit_code(MemoryError()) == 5
    assert cli.exit_code(HomogError("x")) == 1


def test_resource_errors_surface_as_exit_codes(tmp_path, monkeypatch):
    import functools

    from nilhomog import group

    monkeypatch.setattr(group, "ball_growth", functools.partial(group.ball_growth, budget=1000))
    cfg = write(tmp_path, "group.tag = H3\nexperiment.r_max = 30\n")
    assert cli.main(["growth", "--config", str(cfg), "--out", str(tmp_path)]) == 5
    slow = write(tmp_path, KINETIC.replace("model.dimension = 1", "model.dimension = 1\nmodel.a_max = 1/2"), "s.cfg")
    assert cli.main(["homogenize", "--config", str(slow), "--out", str(tmp_path / "s")]) == 3

import math

import numpy as np
import pytest

from hairhom import cli, harness
from hairhom.errors import ConfigParseError, SolverError, UnsupportedStudyError, ValidationError
from hairhom.macro import sink_coefficient

SMALL_GRID = "[grid]\nn_r = 32\nn_z = 32\nn_nodes = 129\n"


def write(tmp_path, text, name="case.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_config_names_regime(tmp_path):
    with pytest.raises(ValidationError) as exc:
        harness.load_config(write(tmp_path, ""))
    assert any("regime" in p for p in exc.value.problems)


def test_derived_lambda(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = distinguished\na_eps = 0.01\n"))
    assert cfg.scenario.lambda_value == pytest.approx(1.151293, abs=5e-7)
    assert cfg.scenario.epsilon == 0.5 and cfg.scenario.M == 1.0
    assert cfg.name == "case"


def test_L_not_below_M(tmp_path):
    with pytest.raises(ValidationError) as exc:
        harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\nL = 1.5\nM = 1.0\n"))
    assert any("L < M" in p for p in exc.value.problems)


def test_parse_error_line_number(tmp_path):
    with pytest.raises(ConfigParseError) as exc:
        harness.load_config(write(tmp_path, "[scenario]\nregime = B\n\nnot a key value\n"))
    assert exc.value.lineno == 4
    with pytest.raises(ConfigParseError) as exc:
        harness.load_config(write(tmp_path, "regime = B\nregime = A\n"))
    assert exc.value.lineno == 2


def test_unknown_keys_and_models_all_reported(tmp_path):
    with pytest.raises(ValidationError) as exc:
        harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\ncolour = red\n[models]\nmodels = A, C\n"))
    text = " ".join(exc.value.problems)
    assert "colour" in text and "'C'" in text


def test_second_order_needs_linear(tmp_path):
    with pytest.raises(ValidationError):
        harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\nuptake = mm\n[models]\nmodels = B2\n"))


def test_kappa_zero_all_models_identical(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\nkappa = 0\n"
                                    "[models]\nmodels = A, B, A2, B2, reference\n" + SMALL_GRID))
    rep = harness.run_scenario(cfg)
    assert rep.norms and all(v <= 1e-10 for v in rep.norms.values())


def test_steady_ordering_flag(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = B\na_eps = 0.001\n" + SMALL_GRID))
    rep = harness.run_scenario(cfg)
    assert rep.flags["A_under_B_over"] is True
    assert rep.meta["sink_B"] == sink_coefficient("B", 1.0, 1.0, 0.25 * math.log(1000))


def test_transient_mm_decreasing(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\nuptake = michaelis-menten\n"
                                    "top_bc = zero-flux\nmode = transient\ndt = 0.01\nT = 0.2\n" + SMALL_GRID))
    rep = harness.run_scenario(cfg)
    for model in ("A", "B", "reference"):
        series = [v for m, _, t, z, rd, v in rep.rows if m == model and z == 0.0 and rd == "avg"]
        assert len(series) == 21 and np.all(np.diff(series) < 0)


def test_outputs_byte_stable_and_compare(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\n[models]\nmodels = A, B2, reference\n"
                                    + SMALL_GRID))
    a, b = tmp_path / "a", tmp_path / "b"
    harness.run(cfg, a)
    harness.run(cfg, b)
    for name in ("profile.csv", "summary.kv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "profile.csv").read_text().splitlines()[0]
    assert header == "model,regime,t,z,r_or_diag,value"
    norms, flags, mismatches = harness.compare(a)
    assert not mismatches and "slice_l2_B2_z0.0" in norms


def test_empty_report_headers_only(tmp_path):
    harness.emit_outputs(harness.ComparisonReport(), tmp_path)
    assert (tmp_path / "profile.csv").read_text() == "model,regime,t,z,r_or_diag,value\n"
    assert (tmp_path / "summary.kv").read_text() == ""


def test_sweep_blocks(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\n" + SMALL_GRID))
    harness.run_sweep(cfg, "a_eps", (0.1, 0.01, 0.001), tmp_path / "sw")
    lines = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "param,param_value,model,regime,t,z,r_or_diag,value"
    assert [v for v in dict.fromkeys(l.split(",")[1] for l in lines[1:])] == ["0.1", "0.01", "0.001"]
    for v in ("0.1", "0.01", "0.001"):
        assert (tmp_path / "sw" / f"a_eps={v}" / "profile.csv").exists()


def test_sweep_invalid_value(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\n"))
    with pytest.raises(ValidationError):
        harness.run_sweep(cfg, "a_eps", (0.1, 2.0))


@pytest.mark.parametrize("text,study,lo,hi", [
    ("regime = A\na_eps = 0.01\n", "macro", 1.9, 2.1),
    ("regime = reference\na_eps = 0.01\n", "annulus", 1.7, 2.3),
    ("regime = A\nlambda = 0.5\nmode = transient\ndt = 0.05\nT = 0.5\nu_init = 0\n", "time", 0.9, 1.1),
])
def test_convergence_studies(tmp_path, text, study, lo, hi):
    table = harness.convergence_study(harness.load_config(write(tmp_path, text)), 4)
    orders = [p for _, _, p in table if p is not None]
    assert len(table) == 4 and all(lo <= p <= hi for p in orders), (study, orders)


def test_convergence_unsupported(tmp_path):
    cfg = harness.load_config(write(tmp_path, "regime = B\na_eps = 0.01\nuptake = mm\n"))
    with pytest.raises(UnsupportedStudyError):
        harness.convergence_study(cfg, 3)
    with pytest.raises(ValidationError):
        harness.convergence_study(cfg, 2)


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    good = write(tmp_path, "regime = B\na_eps = 0.01\n" + SMALL_GRID)
    assert cli.main(["run", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    assert cli.main(["compare", "--out", str(tmp_path / "o")]) == 0
    bad = write(tmp_path, "L = 2\n", "bad.ini")
    assert cli.main(["run", "--config", str(bad)]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 1

    def boom(*a, **k):
        raise SolverError("forced", residual=1.0)
    monkeypatch.setattr(harness.reference, "solve_reference", boom)
    assert cli.main(["run", "--config", str(good)]) == 2
    assert "forced" in capsys.readouterr().err


def test_cli_cell_psi_and_converge(tmp_path, capsys):
    assert cli.main(["cell-psi", "--modes", "32"]) == 0
    assert "psi_mean=-0.2085777932" in capsys.readouterr().out
    cfg = write(tmp_path, "regime = B\na_eps = 0.01\n")
    assert cli.main(["converge", "--config", str(cfg), "--levels", "3", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "convergence.csv").read_text().startswith("h,error,order\n")

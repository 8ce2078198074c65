import json

import pytest

from beltrami_lab import __version__
from beltrami_lab.cli import main, parse_complex, parse_mu, parse_rho
from beltrami_lab.errors import ConfigError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_complex():
    assert parse_complex("i") == 1j
    assert parse_complex("0.3,1.1") == 0.3 + 1.1j
    assert parse_complex("0.3+1.1i") == 0.3 + 1.1j
    assert parse_complex("-0.5") == -0.5
    with pytest.raises(ConfigError):
        parse_complex("abc")


def test_parse_specs():
    assert parse_mu("const:0.2") == {"kind": "const", "value": 0.2}
    m = parse_mu("mode:0.3,1,0,0.1,0,2")
    assert [(d["m"], d["k"]) for d in m["modes"]] == [(1, 0), (0, 2)]
    assert parse_rho("bump:0.1,1.0") == {"kind": "bump", "amplitude": 0.1, "width": 1.0}
    for bad in ("mode:0.3,1", "poly:3"):
        with pytest.raises(ConfigError):
            parse_mu(bad)
    with pytest.raises(ConfigError):
        parse_rho("bump:0.1")


def test_cj(capsys):
    code, out, _ = run(capsys, "cj", "--j", "2")
    assert code == 0
    rep = json.loads(out)
    assert rep["result"] == {"j": 2, "C_j": 13}
    assert rep["version"] == __version__
    assert rep["config"]["j"] == 2


def test_solve_constant(capsys):
    code, out, _ = run(capsys, "solve", "--mu", "const:0.2", "--tau", "i")
    rep = json.loads(out)
    assert code == 0
    assert rep["result"]["residual"] <= 1e-12
    re, im = rep["result"]["tau_prime"]
    assert abs(re) < 1e-12 and abs(im - 2 / 3) < 1e-12
    assert rep["warnings"] == []


def test_riemann_roch(capsys):
    code, out, _ = run(capsys, "riemann-roch", "--j", "1", "--mu", "mode:0.3,1,0", "--n", "16")
    rep = json.loads(out)["result"]
    assert code == 0
    assert (rep["N_j"], rep["N_1mj"], rep["difference"], rep["index"]) == (1, 1, 0, 0)


def test_sup_norm_rejected(capsys):
    code, out, err = run(capsys, "solve", "--mu", "const:0.7")
    assert code == 2
    assert out == ""
    assert json.loads(err)["error"] == "config"


def test_bad_tau_rejected(capsys):
    code, _, err = run(capsys, "solve", "--tau", "0,-1")
    assert code == 2
    assert "Im(tau)" in json.loads(err)["message"]


def test_oracle_requires_constant_data(capsys):
    code, _, _ = run(capsys, "zeta-det", "--mu", "mode:0.1,1,0", "--method", "oracle")
    assert code == 2


def test_numerical_failure_exit_code(capsys):
    # an unresolved bump makes the adjoint check fail for j = 2 at n = 16
    code, _, err = run(
        capsys, "spectrum", "--n", "16", "--j", "2", "--mu", "mode:0.2,1,0", "--rho", "bump:0.1,1.0"
    )
    assert code == 3
    assert json.loads(err)["type"] == "AdjointMismatch"


def test_non_convergence_is_a_warning(capsys):
    code, out, _ = run(capsys, "solve", "--n", "16", "--mu", "mode:0.3,1,0", "--tol", "1e-14")
    rep = json.loads(out)
    assert code == 0
    assert rep["result"]["converged"] is False
    assert rep["warnings"]


def test_report_deterministic_modulo_timestamp(capsys):
    args = ("zeta-det", "--mu", "const:0.2", "--method", "oracle", "--j", "1")
    a = json.loads(run(capsys, *args)[1])
    b = json.loads(run(capsys, *args)[1])
    a.pop("timestamp"), b.pop("timestamp")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_spectrum_csv(tmp_path, capsys):
    path = tmp_path / "spec.csv"
    code, out, _ = run(capsys, "spectrum", "--n", "8", "--format", "csv", "--out", str(path), "--threads", "1")
    assert code == 0 and out == ""
    lines = path.read_text().splitlines()
    assert lines[0] == "index,eigenvalue"
    assert len(lines) == 1 + 49


def test_solve_csv_fields(capsys):
    code, out, _ = run(capsys, "solve", "--n", "8", "--mu", "const:0.1", "--format", "csv")
    lines = out.splitlines()
    assert lines[0] == "x,y,w_re,w_im,lam_re,lam_im"
    assert len(lines) == 65


def test_chi_identity_command(capsys):
    code, out, _ = run(capsys, "check-chi-identity", "--n", "32", "--mu", "mode:0.3,1,0", "--t", "0.1,0")
    rep = json.loads(out)["result"]
    assert code == 0
    assert rep["holds"]


def test_factorization_command_oracle(capsys):
    code, out, _ = run(capsys, "check-factorization", "--mu", "const:0.1,0.05", "--method", "oracle", "--n", "8")
    rep = json.loads(out)["result"]
    assert code == 0
    assert abs(rep["mixed_derivative"]) < 1e-3
    assert rep["weyl"] is None


def test_factorization_command_weyl(capsys):
    code, out, _ = run(
        capsys, "check-factorization", "--n", "12", "--mu", "mode:0.2,1,0", "--t", "1,0", "--weyl", "bump:0.1,1.0"
    )
    rep = json.loads(out)["result"]
    assert code == 0
    assert set(rep["weyl"]) >= {"F_rho", "F_weyl", "ratio", "holds"}

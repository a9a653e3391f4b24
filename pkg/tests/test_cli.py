import subprocess
import sys

import pytest

from essopt.caseio import load_case
from essopt.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main

from oracles import grid_dp_profit


def summary(path) -> dict[str, str]:
    out = {}
    for line in (path / "summary.txt").read_text().splitlines():
        k, _, v = line.partition(" ")
        out[k] = v
    return out


def solve_two_bus(data_dir, out, *extra):
    try:
        return main(["solve", "--case", str(data_dir / "two_bus.case"), "--output-dir", str(out), *extra])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def test_solve_arbitrage_example(data_dir, tmp_path):
    code = solve_two_bus(data_dir, tmp_path, "--ess-model", "linear", "--network", "dc",
                         "--objective", "arbitrage", "--prices", str(data_dir / "prices_two_bus.csv"))
    assert code == EXIT_OK
    s = summary(tmp_path)
    net = load_case(data_dir / "two_bus.case")
    oracle = grid_dp_profit([10.0, 50.0], net.devices[0], net.horizon.dt_hours)
    assert float(s["profit"]) == pytest.approx(oracle, abs=1e-6)
    assert s["status"] == "optimal" and s["problem_class"] == "LP" and s["audit"] == "pass"
    header = (tmp_path / "schedule.csv").read_text().splitlines()[0]
    assert header.startswith("device,t,p_ch,p_disch,p_net,soc,q_ess,p_loss")
    assert (tmp_path / "audit.csv").read_text().startswith("device,family,")


@pytest.mark.parametrize("model,network", [("milp", "dc"), ("complementarity", "linac"),
                                           ("bess-loss", "distflow"), ("bess-convex", "distflow")])
def test_solve_all_models(data_dir, tmp_path, model, network):
    code = solve_two_bus(data_dir, tmp_path, "--ess-model", model, "--network", network,
                         "--objective", "arbitrage", "--prices", str(data_dir / "prices_two_bus.csv"))
    assert code == EXIT_OK
    assert summary(tmp_path)["audit"] == "pass"


def test_invalid_pairing(data_dir, tmp_path, capsys):
    code = solve_two_bus(data_dir, tmp_path, "--ess-model", "bess-loss", "--network", "dc")
    assert code == EXIT_CONFIG
    assert "distflow" in capsys.readouterr().err
    assert not (tmp_path / "schedule.csv").exists()


@pytest.mark.parametrize("args", [
    ["--objective", "arbitrage"],
    ["--prices", "x.csv"],
    ["--ess-model", "nonsense"],
    ["--feasibility-tol", "0"],
    ["--num-periods", "0"],
    ["--dt-hours", "-1"],
])
def test_config_errors(data_dir, tmp_path, args):
    assert solve_two_bus(data_dir, tmp_path, *args) == EXIT_CONFIG


def test_missing_case(tmp_path):
    assert main(["solve", "--case", str(tmp_path / "none.case"), "--output-dir", str(tmp_path)]) == EXIT_CONFIG


def test_prices_file_checks(data_dir, tmp_path):
    bad = tmp_path / "p.csv"
    for text in ("0,10\n1,50\n", "period,price\n0,10\n", "period,price\n0,10\n1,x\n"):
        bad.write_text(text)
        code = solve_two_bus(data_dir, tmp_path, "--objective", "arbitrage", "--prices", str(bad))
        assert code == EXIT_CONFIG


def test_infeasible_exit(tmp_path, two_bus_text):
    case = tmp_path / "tight.case"
    case.write_text(two_bus_text.replace("1 2 0.01 0.1 50", "1 2 0.01 0.1 5"))
    code = main(["solve", "--case", str(case), "--output-dir", str(tmp_path / "o")])
    assert code == EXIT_INFEASIBLE
    assert "status infeasible" in (tmp_path / "o" / "summary.txt").read_text()


def test_audit_failure_exit(data_dir, tmp_path):
    # audit stricter than the interior point can deliver on a converter model
    code = solve_two_bus(data_dir, tmp_path, "--ess-model", "bess-convex", "--network", "distflow",
                         "--objective", "loss", "--audit-tol", "1e-30")
    assert code == EXIT_AUDIT
    assert summary(tmp_path)["audit"] == "fail"


def test_zero_storage_matches_no_storage(tmp_path, two_bus_text):
    with_dev = two_bus_text + "[storage]\n2 1 1 0 1 0 1 1 0 0 1 BESS\n"
    a, b = tmp_path / "a.case", tmp_path / "b.case"
    # a device with no energy headroom either way cannot move power
    a.write_text(with_dev.replace("2 1 1 0 1 0 1 1 0 0 1 BESS", "2 1 1 0.5 0.5 0.5 1 1 0 0 1 BESS"))
    b.write_text(two_bus_text)
    assert main(["solve", "--case", str(a), "--output-dir", str(tmp_path / "oa")]) == EXIT_OK
    assert main(["solve", "--case", str(b), "--output-dir", str(tmp_path / "ob")]) == EXIT_OK
    sa, sb = summary(tmp_path / "oa"), summary(tmp_path / "ob")
    assert float(sa["objective"]) == pytest.approx(float(sb["objective"]), abs=1e-8)


def test_horizon_override(data_dir, tmp_path):
    assert solve_two_bus(data_dir, tmp_path, "--num-periods", "5", "--dt-hours", "0.25") == EXIT_OK
    lines = (tmp_path / "schedule.csv").read_text().splitlines()
    assert len(lines) == 1 + 5


def test_dump_files(data_dir, tmp_path):
    blk, prob = tmp_path / "blk.txt", tmp_path / "prob.txt"
    assert solve_two_bus(data_dir, tmp_path, "--ess-model", "milp", "--dump-block", str(blk),
                         "--dump-problem", str(prob)) == EXIT_OK
    assert "# ess0" in blk.read_text()
    assert "# provenance" in prob.read_text()


# -- advise -------------------------------------------------------------------

def test_advise_outputs(capsys):
    assert main(["advise", "--network", "linac", "--level", "transmission"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "models (2) or (3)"
    assert main(["advise", "--level", "distribution", "--device", "bess"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "model (5); convex alternative (6)"
    assert main(["advise", "--network", "ac", "--level", "transmission"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "models (3) or (4)"


def test_advise_invalid_level():
    with pytest.raises(SystemExit) as exc:
        main(["advise", "--level", "regional"])
    assert exc.value.code == EXIT_CONFIG


# -- audit --------------------------------------------------------------------

@pytest.fixture
def solved(data_dir, tmp_path):
    assert solve_two_bus(data_dir, tmp_path, "--ess-model", "milp", "--objective", "arbitrage",
                         "--prices", str(data_dir / "prices_two_bus.csv")) == EXIT_OK
    return tmp_path / "schedule.csv"


def audit(data_dir, path, *extra):
    return main(["audit", "--schedule", str(path), "--case", str(data_dir / "two_bus.case"), *extra])


def test_audit_own_output(data_dir, solved, capsys):
    assert audit(data_dir, solved) == EXIT_OK
    assert capsys.readouterr().out.startswith("audit: PASS")


def edit_rows(path, fn):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    out = [lines[0]]
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        fn(row)
        out.append(",".join(row[c] for c in header))
    path.write_text("\n".join(out) + "\n")


def test_audit_corrupted_soc(data_dir, solved, capsys):
    edit_rows(solved, lambda r: r.update(soc=repr(float(r["soc"]) + 0.3)))
    assert audit(data_dir, solved) == EXIT_AUDIT
    out = capsys.readouterr().out
    assert "FAIL device 0 soc-consistency" in out


def test_audit_simultaneous_injection(data_dir, solved, capsys):
    def both(r):
        if r["t"] == "0":
            r["p_ch"], r["p_disch"] = "0.5", "0.5"
            r["p_net"] = repr(0.5 - 0.5)
    edit_rows(solved, both)
    assert audit(data_dir, solved) == EXIT_AUDIT
    assert "FAIL device 0 complementarity" in capsys.readouterr().out


def test_audit_bad_inputs(data_dir, tmp_path):
    bad = tmp_path / "s.csv"
    bad.write_text("device,t\n0,0\n")
    assert audit(data_dir, bad) == EXIT_CONFIG
    assert audit(data_dir, tmp_path / "missing.csv") == EXIT_CONFIG


# -- hull-sample and determinism ---------------------------------------------

def test_hull_sample(data_dir, capsys):
    assert main(["hull-sample", "--case", str(data_dir / "two_bus.case"), "--samples", "2000"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "hull-cone" in out and "violations       0" in out
    assert main(["hull-sample", "--case", str(data_dir / "two_bus.case"), "--device", "4"]) == EXIT_CONFIG


def run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "essopt", *args], cwd=cwd, capture_output=True, text=True)


def test_byte_identical_runs(data_dir, tmp_path):
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        res = run_cli(["solve", "--case", str(data_dir / "two_bus.case"), "--ess-model", "bess-convex",
                       "--network", "distflow", "--objective", "arbitrage",
                       "--prices", str(data_dir / "prices_two_bus.csv"), "--output-dir", str(out),
                       "--seed", "5"], tmp_path)
        assert res.returncode == EXIT_OK, res.stderr
        outputs.append({n: (out / n).read_bytes() for n in ("schedule.csv", "audit.csv", "summary.txt")}
                       | {"stdout": res.stdout.encode()})
    assert outputs[0] == outputs[1]

import copy
import csv
import json
from pathlib import Path

import pytest

from hrpricer.cli import main
from hrpricer.errors import ConfigurationError
from hrpricer.harness import check_registry, parse_config, verify

ROOT = Path(__file__).resolve().parents[1]
DESK = json.loads((ROOT / "configs" / "hr_smile.json").read_text())
EXPECTED_IDS = [
    "L31_envelope", "L32_bounds", "L32_convexity", "L32_monotone", "P33_boundary_exists",
    "P33_partition", "P34_nonmonotone", "P34_endpoint", "Z_meanreversion_zone",
    "Y_Z_consistency", "CONST_sigma_reduction", "MARTINGALE_discounted_X",
]


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(p)


def test_registry():
    reg = check_registry()
    assert len(reg) == 12
    assert sorted(d.check_id for d in reg) == sorted(EXPECTED_IDS)
    assert len({d.check_id for d in reg}) == 12
    assert all(d.paper_claim.strip() for d in reg)


def test_empty_config_exits_2_without_artifacts(tmp_path):
    out = tmp_path / "out"
    for text in ("", "{}", "   \n"):
        assert main(["price", "--config", _write(tmp_path, text), "--out", str(out)]) == 2
        assert not out.exists()


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colour="red"),
    lambda d: d["grid"].update(n_w=5),
    lambda d: d["vol"].update(kind="heston"),
    lambda d: d.update(r=-0.1),
    lambda d: d.pop("K"),
    lambda d: d["grid"].update(n_cells=127),
    lambda d: d.update(method="fft"),
])
def test_bad_config_exits_2(tmp_path, mutate, capsys):
    doc = copy.deepcopy(DESK)
    mutate(doc)
    out = tmp_path / "out"
    assert main(["price", "--config", _write(tmp_path, doc), "--out", str(out)]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert not out.exists()


def test_unreadable_config_exits_2(tmp_path):
    assert main(["price", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["price", "--config", _write(tmp_path, "{not json")]) == 2


def test_bad_seed_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["price", "--config", _write(tmp_path, DESK), "--seed", str(2**64)])
    assert info.value.code == 2


def test_numerical_failure_exits_3_and_names_module(tmp_path, capsys):
    doc = dict(DESK, r=10.0, x0=1e306, sim={"n_paths": 20, "n_steps": 5})
    out = tmp_path / "out"
    assert main(["simulate", "--config", _write(tmp_path, doc), "--out", str(out)]) == 3
    assert "sde_sim" in capsys.readouterr().err


def test_price_pde_and_lsmc_agree(tmp_path):
    cfg = _write(tmp_path, DESK)
    assert main(["price", "--config", cfg, "--out", str(tmp_path / "pde"), "--method", "pde"]) == 0
    assert main(["price", "--config", cfg, "--out", str(tmp_path / "mc"), "--method", "lsmc"]) == 0
    pde = json.loads((tmp_path / "pde" / "price.json").read_text())
    mc = json.loads((tmp_path / "mc" / "price.json").read_text())
    assert pde["method"] == "pde" and mc["method"] == "lsmc"
    assert abs(pde["price"] - mc["price"]) < max(3 * mc["std_error"], 0.01 * DESK["K"])


def test_price_tree_reference(tmp_path):
    cfg = _write(tmp_path, DESK)
    assert main(["price", "--config", cfg, "--out", str(tmp_path), "--method", "crr",
                 "--sigma", "hi"]) == 0
    rec = json.loads((tmp_path / "price.json").read_text())
    assert rec["sigma"] == 0.4
    assert rec["price"] == pytest.approx(13.6672, abs=1e-3)


def test_simulate_writes_paths(tmp_path):
    doc = dict(DESK, sim={"n_paths": 3, "n_steps": 10})
    assert main(["simulate", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o"),
                 "--seed", "5"]) == 0
    rows = list(csv.reader(open(tmp_path / "o" / "paths.csv")))
    assert rows[0] == ["t", "path_id", "x", "y", "z"]
    assert len(rows) == 1 + 3 * 11


def test_boundary_command_artifacts(tmp_path):
    doc = dict(DESK, grid={"n_cells": 64, "n_t": 64},
               boundary={"n_paths": 5, "n_steps": 20, "noise_floor": 1e-4})
    out = tmp_path / "b"
    assert main(["boundary", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    for name in ("boundary.csv", "baseline_lo.csv", "baseline_hi.csv", "monotonicity.json",
                 "striking_curves/ode.csv", "striking_curves/path_0004.csv"):
        assert (out / name).exists(), name
    summary = json.loads((out / "monotonicity.json").read_text())
    assert summary["n_paths"] == 5 and len(summary["paths"]) == 5


def test_cli_seed_overrides_config():
    a = parse_config(DESK, "price")
    b = parse_config(DESK, "price", seed=7)
    assert a.seed == DESK["seed"] and b.seed == 7
    assert a.input_hash() != b.input_hash()
    with pytest.raises(ConfigurationError):
        parse_config(DESK, "price", sigma="medium")


SMALL = dict(DESK, grid={"n_cells": 64, "n_t": 64},
             lsmc={"n_paths": 20000, "n_steps": 20, "basis_degree": 2},
             boundary={"n_paths": 20, "n_steps": 20, "noise_floor": 1e-4})


def _strip_runtime(report):
    report = copy.deepcopy(report)
    for c in report["checks"]:
        c.pop("runtime")
    return report


@pytest.mark.slow
def test_verify_is_reproducible_and_self_contained():
    cfg = parse_config(SMALL, "verify")
    first, second = verify(cfg), verify(cfg)
    assert _strip_runtime(first) == _strip_runtime(second)
    assert [c["check_id"] for c in first["checks"]] == [d.check_id for d in check_registry()]
    for c in first["checks"]:
        assert c["status"] in ("pass", "fail", "error")
        assert c["input_hash"] == cfg.input_hash()
        assert "measured" in c and "tolerances" in c and c["paper_claim"]


def test_verify_writes_report_and_exit_status(tmp_path, monkeypatch):
    import hrpricer.harness as harness
    reg = dict(harness._REGISTRY)
    monkeypatch.setattr(harness, "_REGISTRY", {k: reg[k] for k in ("P34_endpoint", "L32_bounds")})
    doc = dict(SMALL, lsmc={"n_paths": 2000, "n_steps": 10, "basis_degree": 2})
    out = tmp_path / "v"
    assert main(["verify", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert {c["status"] for c in report["checks"]} == {"pass"}
    assert report["backend"] in ("cython", "python")
    assert report["vol_bounds_audit"]["within_bounds"]

    def always_fails(ctx):
        return False, {"value": 1.0}, {"limit": 0.0}
    monkeypatch.setitem(harness._REGISTRY, "P34_endpoint",
                        harness.CheckDescriptor("P34_endpoint", "claim", always_fails))
    assert main(["verify", "--config", _write(tmp_path, doc), "--out", str(out)]) == 1
    failed = [c for c in json.loads((out / "report.json").read_text())["checks"]
              if c["status"] == "fail"]
    assert failed[0]["measured"] == {"value": 1.0} and failed[0]["input_hash"]


@pytest.mark.slow
def test_verify_constant_volatility_control_passes(tmp_path):
    out = tmp_path / "flat"
    cfg = str(ROOT / "configs" / "constant_sigma.json")
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    status = {c["check_id"]: c["status"] for c in report["checks"]}
    assert status["CONST_sigma_reduction"] == "pass"
    assert set(status.values()) == {"pass"}

import csv
import json

import numpy as np
import pytest
import yaml

from scatphase import config
from scatphase.cli import main
from scatphase.config import ConfigError, load_config, parse_override


def run(tmp_path, command, cfg=None, *extra):
    args = [command, "--out", str(tmp_path / "out")]
    if cfg is not None:
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(cfg))
        args += ["--config", str(path)]
    code = main(args + list(extra))
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    return code, manifest


def table(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_forward_zero(tmp_path):
    code, man = run(tmp_path, "forward", None, "--nk", "20")
    assert code == 0 and man["status"] == "ok"
    rows = table(tmp_path / "out" / "forward.csv")
    assert len(rows) == 20
    assert all(float(r["re_s11"]) == 1.0 and float(r["im_s11"]) == 0.0 for r in rows)
    assert list(rows[0]) == ["k", "re_s11", "im_s11", "re_s12", "im_s12", "re_s21", "im_s21", "re_s22", "im_s22",
                             "delta_unwrapped", "unitarity_residual"]
    assert man["conventions"]["calibrated_C"] == config.CALIBRATED_C
    assert man["version"] and man["wall_time_s"] >= 0


def test_forward_sech2(tmp_path):
    cfg = {"grid": {"L": 15, "N": 1024}, "potential": {"builtin": "sech2", "params": {"depth": 2}},
           "band": {"k_min": 0.05, "k_max": 20, "n_k": 60}}
    assert run(tmp_path, "forward", cfg)[0] == 0
    rows = table(tmp_path / "out" / "forward.csv")
    assert max(np.hypot(float(r["re_s12"]), float(r["im_s12"])) for r in rows) < 1e-6


def test_forward_bad_path(tmp_path):
    code, man = run(tmp_path, "forward", {"potential": {"path": str(tmp_path / "missing.csv")}})
    assert code == 2 and man["status"] == "config_error"
    assert not (tmp_path / "out" / "forward.csv").exists()


def test_sampled_potential_ingestion(tmp_path):
    x = np.linspace(-6, 6, 241)
    data = tmp_path / "q.csv"
    np.savetxt(data, np.column_stack([x, -np.exp(-x ** 2)]), delimiter=",", header="x,q", comments="")
    cfg = {"grid": {"L": 10, "N": 512}, "potential": {"path": str(data)}, "band": {"n_k": 10}}
    code, man = run(tmp_path, "spectrum", cfg)
    assert code == 0
    assert any("zero-filled" in w for w in man["warnings"])
    rows = table(tmp_path / "out" / "spectrum.csv")
    assert len(rows) == 1 and abs(float(rows[0]["kappa"]) - 0.59497215) < 1e-5


def test_spectrum_tables(tmp_path):
    assert run(tmp_path, "spectrum")[0] == 0
    assert table(tmp_path / "out" / "spectrum.csv") == []
    for depth, expect in ((2, [1.0]), (6, [1.0, 2.0])):
        cfg = {"grid": {"L": 15, "N": 1024}, "potential": {"builtin": "sech2", "params": {"depth": depth}}}
        assert run(tmp_path, "spectrum", cfg)[0] == 0
        kap = [float(r["kappa"]) for r in table(tmp_path / "out" / "spectrum.csv")]
        assert np.allclose(kap, expect, atol=1e-8)


def test_invert_soliton_data(tmp_path):
    cfg = {"grid": {"L": 15, "N": 512}, "potential": {"builtin": "soliton_data", "params": {"kappa": 1, "M": 2}}}
    assert run(tmp_path, "invert", cfg)[0] == 0
    rows = table(tmp_path / "out" / "invert.csv")
    x = np.array([float(r["x"]) for r in rows])
    q = np.array([float(r["q"]) for r in rows])
    assert np.max(np.abs(q + 2 / np.cosh(x) ** 2)) < 1e-4


def test_invert_zero_and_bad_data(tmp_path):
    assert run(tmp_path, "invert", None, "--grid-L", "10", "--grid-N", "256")[0] == 0
    assert all(float(r["q"]) == 0.0 for r in table(tmp_path / "out" / "invert.csv"))
    bad = tmp_path / "bad.csv"
    k = np.linspace(0.1, 10, 40)
    np.savetxt(bad, np.column_stack([k, np.full(k.size, 1.2), np.zeros(k.size)]), delimiter=",",
               header="k,re_s21,im_s21", comments="")
    code, man = run(tmp_path, "invert", {"options": {"data": str(bad)}})
    assert code == 3 and man["status"] == "numeric_failure"


def test_invert_from_forward_csv(tmp_path):
    cfg = {"grid": {"L": 10, "N": 512}, "potential": {"builtin": "gaussian_well", "params": {"depth": -1.0}},
           "band": {"k_min": 0.01, "k_max": 40, "n_k": 800}}
    assert run(tmp_path, "forward", cfg)[0] == 0
    data = tmp_path / "scat.csv"
    (tmp_path / "out" / "forward.csv").rename(data)
    code, _ = run(tmp_path, "invert", {"grid": {"L": 10, "N": 512}, "options": {"data": str(data)}})
    assert code == 0
    rows = table(tmp_path / "out" / "invert.csv")
    x = np.array([float(r["x"]) for r in rows])
    q = np.array([float(r["q"]) for r in rows])
    assert np.max(np.abs(q - np.exp(-x ** 2))) < 1e-3


def test_catastrophe_modes(tmp_path):
    cfg = {"grid": {"L": 60, "N": 4096}, "options": {"n_list": [1, 2, 4, 8]}}
    assert run(tmp_path, "catastrophe", cfg)[0] == 0
    rows = table(tmp_path / "out" / "catastrophe.csv")
    assert [r["alarm"] for r in rows] == ["false", "false", "false", "true"]
    cfg = {"grid": {"L": 40, "N": 4096}, "options": {"mode": "family", "n_list": [1, 2, 4, 8]}}
    assert run(tmp_path, "catastrophe", cfg)[0] == 0
    assert len(table(tmp_path / "out" / "catastrophe.csv")) == 4
    cfg = {"grid": {"L": 60, "N": 4096}, "options": {"n_list": [1]}}
    assert run(tmp_path, "catastrophe", cfg)[0] == 0
    assert len(table(tmp_path / "out" / "catastrophe.csv")) == 1


def test_family_command(tmp_path):
    assert run(tmp_path, "family", {"grid": {"L": 40, "N": 4096}, "options": {"n_list": [1, 2]}})[0] == 0
    rows = table(tmp_path / "out" / "family.csv")
    assert abs(float(rows[0]["l2_norm"]) - float(rows[1]["l2_norm"])) < 1e-8


def test_phase_recon_command(tmp_path):
    cfg = {"grid": {"L": 10, "N": 512}, "potential": {"builtin": "gaussian_well", "params": {"depth": 0.05}},
           "band": {"k_min": 0.5, "k_max": 20, "n_k": 60}}
    assert run(tmp_path, "phase-recon", cfg)[0] == 0
    rows = table(tmp_path / "out" / "phase_recon.csv")
    dev = max(float(r["uv_vs_qhat"]) for r in rows)
    qhat = max(abs(float(r["re_qhat2k"])) for r in rows)
    assert dev < 0.1 * qhat  # O(eps^2) absolute, O(eps) relative
    assert "phase_singular" in rows[0]
    b = table(tmp_path / "out" / "phase_recon_bounds.csv")[0]
    assert float(b["constant"]) == config.CALIBRATED_C
    assert run(tmp_path, "phase-recon", None, "--grid-L", "10", "--grid-N", "256", "--nk", "20")[0] == 0
    rows = table(tmp_path / "out" / "phase_recon.csv")
    for col in ("r12", "r21", "u", "v", "uv_vs_qhat"):
        assert all(float(r[col]) == 0.0 for r in rows)


def test_phase_recon_iteration_log(tmp_path):
    cfg = {"grid": {"L": 10, "N": 256}, "potential": {"builtin": "gaussian_well", "params": {"depth": -0.05}},
           "band": {"k_min": 0.5, "k_max": 20, "n_k": 128}, "options": {"iterate": True, "max_iter": 5}}
    code, man = run(tmp_path, "phase-recon", cfg)
    assert code == 0
    log = table(tmp_path / "out" / "iteration.csv")
    assert 1 <= len(log) <= 5 and set(log[0]) == {"iteration", "residual", "converged", "reason"}


def test_determinism(tmp_path):
    cfg = {"grid": {"L": 12, "N": 512}, "potential": {"builtin": "gaussian_well"}, "band": {"n_k": 50},
           "seed": 11}
    outs = []
    for i in range(2):
        run(tmp_path, "forward", cfg)
        outs.append((tmp_path / "out" / "forward.csv").read_bytes())
    assert outs[0] == outs[1]
    value = outs[0].decode().splitlines()[1].split(",")[1]
    assert float(value) == float(repr(float(value)))


@pytest.mark.parametrize("cfg,extra", [
    ({"grid": {"N": 1000}}, []),
    ({"potential": {"builtin": "nope"}}, []),
    ({"tolerances": {"gap_tol": -1}}, []),
    ({"band": {"k_min": 5, "k_max": 1}}, []),
    ({"potential": {"builtin": "gaussian_well", "params": {"bogus": 1}}}, []),
    (None, ["--tol-override", "marchenko_tol"]),
    (None, ["--tol-override", "unknown=1"]),
])
def test_config_errors_exit_2(tmp_path, cfg, extra):
    code, man = run(tmp_path, "forward", cfg, *extra)
    assert code == 2 and man["error"]


def test_yaml_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: [unclosed")
    assert main(["forward", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("- just a list\n")
    assert main(["forward", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["forward", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path / "o")]) == 2


def test_load_config_overrides(tmp_path):
    cfg = load_config(None, "forward", {"grid": {"N": 256}, "tolerances": {"gap_tol": 0.5}, "seed": 3})
    assert cfg.grid["N"] == 256 and cfg.tolerances["gap_tol"] == 0.5 and cfg.seed == 3
    assert parse_override("tail_rel=1e-6") == ("tail_rel", 1e-6)
    with pytest.raises(ConfigError):
        parse_override("tail_rel")
    with pytest.raises(ConfigError):
        load_config(None, "forward", {"grid": {"L": 0}})

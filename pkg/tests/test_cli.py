import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qefl import cli, gradcheck, modelio
from qefl.config import ConfigError, RunConfig, build_run, load, loads
from qefl.metrics import read_csv
from qefl.nn import Architecture, init_params

ROOT = Path(__file__).resolve().parents[1]

SMALL = """\
synthetic_n = 200
hidden_dims = 6
n_clients = 3
local_epochs = 1
k = 2
rounds = 2
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.txt"
    path.write_text(SMALL)
    return path


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


class TestConfig:
    def test_shipped_default_is_the_default(self):
        assert load(ROOT / "configs" / "default.txt") == RunConfig()

    def test_snapshot_roundtrip(self):
        cfg = loads(SMALL + "clip_norm = 0.25\nprivacy_enabled = false\n")
        assert loads(cfg.dumps()) == cfg

    def test_comments_and_blanks(self):
        cfg = loads("# header\n\nk = 3   # inline\n")
        assert cfg.k == 3

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as err:
            loads("learnign_rate = 0.1\n")
        assert err.value.field == "learnign_rate"

    def test_bad_value_names_field(self):
        with pytest.raises(ConfigError) as err:
            loads("rounds = many\n")
        assert err.value.field == "rounds"

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            loads("rounds 3\n")

    def test_too_many_clients(self):
        with pytest.raises(ConfigError) as err:
            loads("synthetic_n = 10\nn_clients = 8\n").validate()
        assert err.value.field == "n_clients"

    @pytest.mark.parametrize("line,field", [("learning_rate = 0", "learning_rate"), ("k = 0", "k"),
                                            ("sigma_p = -1", "sigma_p"), ("aggregation = max", "aggregation"),
                                            ("hidden_dims = ", "hidden_dims"), ("table1_client = 5", "table1_client"),
                                            ("dataset = cifar", "dataset"), ("clip_norm = 0", "clip_norm")])
    def test_field_named(self, line, field):
        with pytest.raises(ConfigError) as err:
            loads(line + "\n").validate()
        assert err.value.field == field

    def test_build_run_shapes(self):
        arch, clients, train, test = build_run(loads(SMALL).validate())
        assert arch.dims == (10, 6, 2)
        assert (len(train), len(test)) == (140, 60)
        assert sum(c.n_examples for c in clients) == 140

    def test_per_client_seed(self):
        _, clients, train, test = build_run(loads(SMALL + "shard_strategy = per-client-seed\n").validate())
        assert [c.n_examples for c in clients] == [46, 46, 46] and len(test) == 60

    def test_dirichlet(self):
        _, clients, train, _ = build_run(loads(SMALL + "shard_strategy = dirichlet\n").validate())
        assert sum(c.n_examples for c in clients) == len(train)


class TestModelFile:
    def test_roundtrip(self, tmp_path):
        arch = Architecture(4, (3, 2), 5)
        theta = init_params(arch, 0)
        modelio.save(tmp_path / "m.qefl", arch, theta)
        back_arch, back = modelio.load(tmp_path / "m.qefl")
        assert back_arch == arch and back.tobytes() == theta.tobytes()

    def test_layout(self):
        arch = Architecture(1, (1,), 2)
        raw = modelio.dumps(arch, np.arange(6.0))
        assert raw[:8] == b"QEFLMDL1"
        assert raw[8:24] == (3).to_bytes(4, "little") + b"".join(d.to_bytes(4, "little") for d in (1, 1, 2))
        assert np.frombuffer(raw[24:], "<f8").tolist() == list(range(6))

    @pytest.mark.parametrize("mangle", [lambda r: b"XXXXXXXX" + r[8:], lambda r: r[:-8], lambda r: r[:10]])
    def test_rejects(self, mangle):
        raw = modelio.dumps(Architecture(2, (2,), 2), np.zeros(12))
        with pytest.raises(modelio.ModelFormatError):
            modelio.loads(mangle(raw))


class TestTrain:
    def test_writes_artifacts_deterministically(self, small_cfg, tmp_path, capsys):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            assert run_cli("train", "--config", small_cfg, "--out", out) == 0
        for name in ("metrics.csv", "privacy.csv", "model.qefl", "config.txt"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        rows = read_csv((outs[0] / "metrics.csv").read_text())
        assert [r.round for r in rows] == [1, 2]
        progress = [l for l in capsys.readouterr().out.splitlines() if l.startswith("round=")]
        assert len(progress) == 4

    def test_snapshot_reproduces_run(self, small_cfg, tmp_path):
        run_cli("train", "--config", small_cfg, "--seed", "7", "--out", tmp_path / "a")
        run_cli("train", "--config", tmp_path / "a" / "config.txt", "--out", tmp_path / "b")
        assert (tmp_path / "a" / "model.qefl").read_bytes() == (tmp_path / "b" / "model.qefl").read_bytes()

    def test_parallel_same_bytes(self, small_cfg, tmp_path):
        run_cli("train", "--config", small_cfg, "--out", tmp_path / "a")
        run_cli("train", "--config", small_cfg, "--out", tmp_path / "b", "--parallel")
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    def test_invalid_config_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("synthetic_n = 10\nn_clients = 9\n")
        assert run_cli("train", "--config", bad, "--out", tmp_path) == 2
        assert "n_clients" in capsys.readouterr().err

    def test_eval_saved_model(self, small_cfg, tmp_path, capsys):
        run_cli("train", "--config", small_cfg, "--out", tmp_path)
        last = read_csv((tmp_path / "metrics.csv").read_text())[-1]
        capsys.readouterr()
        assert run_cli("eval", "--config", small_cfg, "--model", tmp_path / "model.qefl") == 0
        assert f"accuracy={last.accuracy!r}" in capsys.readouterr().out

    def test_eval_wrong_dims(self, small_cfg, tmp_path):
        arch = Architecture(3, (2,), 2)
        modelio.save(tmp_path / "m.qefl", arch, init_params(arch, 0))
        assert run_cli("eval", "--config", small_cfg, "--model", tmp_path / "m.qefl") == 2


def test_reproduce_table1_small(small_cfg, tmp_path, capsys):
    assert run_cli("reproduce-table1", "--config", small_cfg, "--out", tmp_path) == 0
    lines = (tmp_path / "table1.csv").read_text().splitlines()
    assert lines[0] == "mutation_id,accuracy" and len(lines) == 3
    for line in lines[1:]:
        acc = float(line.split(",")[1])
        assert abs(acc * 60 - round(acc * 60)) < 1e-9


class TestGradcheck:
    def test_healthy(self, capsys):
        assert run_cli("gradcheck", "--draws", "15") == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "worst_coord=" in out and "W1" in out

    def test_perturbed_gradient_fails(self, monkeypatch, capsys):
        real = gradcheck.loss_and_grad

        def skewed(arch, params, X, y, kernels=None):
            loss, g = real(arch, params, X, y, kernels)
            return loss, g * 1.001

        monkeypatch.setattr(gradcheck, "loss_and_grad", skewed)
        assert run_cli("gradcheck", "--draws", "5") == 1
        assert "FAIL" in capsys.readouterr().out

    def test_run_with_grad_fn(self):
        reports = gradcheck.run(3, draws=3, grad_fn=lambda a, p, X, y: np.zeros_like(p))
        assert max(r.rel_error for r in reports) >= gradcheck.THRESHOLD


class TestPrivacyReport:
    def write(self, tmp_path, text):
        p = tmp_path / "p.txt"
        p.write_text(text)
        return p

    def test_clip_bound_per_round(self, tmp_path, capsys):
        cfg = self.write(tmp_path, "sigma_p = 1.0\nclip_norm = 0.5\nrounds = 3\n")
        assert run_cli("privacy-report", "--config", cfg) == 0
        out = capsys.readouterr().out
        assert "clip bound" in out and "delta=1e-05" in out
        assert "epsilon_total=0.375 over 3 rounds" in out

    def test_five_rounds_unit(self, tmp_path, capsys):
        cfg = self.write(tmp_path, "sigma_p = 1.0\nclip_norm = 1.0\nrounds = 5\n")
        assert run_cli("privacy-report", "--config", cfg) == 0
        assert "epsilon_total=2.5 over 5 rounds" in capsys.readouterr().out

    def test_zero_noise_refused(self, tmp_path, capsys):
        cfg = self.write(tmp_path, "sigma_p = 0.0\nclip_norm = 1.0\n")
        assert run_cli("privacy-report", "--config", cfg) == 2
        assert "unbounded" in capsys.readouterr().err

    def test_zero_noise_allowed(self, tmp_path, capsys):
        cfg = self.write(tmp_path, "sigma_p = 0.0\nclip_norm = 1.0\nrounds = 2\n")
        assert run_cli("privacy-report", "--config", cfg, "--allow-unbounded") == 0
        assert "epsilon_total=inf" in capsys.readouterr().out

    def test_empirical(self, small_cfg, capsys):
        assert run_cli("privacy-report", "--config", small_cfg) == 0
        assert "empirical" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "qefl", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "reproduce-table1" in out.stdout

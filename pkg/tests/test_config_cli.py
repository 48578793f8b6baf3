import csv
import json
import os

import pytest

from tacit.cli import EXIT_CONFIG, main, out_root, run_dir_for
from tacit.config import ConfigError, RunConfig, load_config

TINY = """\
[run]
env = climb
total_steps = 12
seed = 3

[model]
window = 2
state_dim = 8
hidden = 16
mix_hidden = 8

[train]
batch_size = 4
buffer_capacity = 16

[eval]
eval_interval = 6
eval_episodes = 2
"""


@pytest.fixture
def tiny_ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return str(path)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.env == "climb" and cfg.mixer == "qmix"
        assert cfg.total_steps == 5000 and cfg.detach_align_target

    def test_file_values_applied(self, tiny_ini):
        cfg = load_config(tiny_ini)
        assert cfg.total_steps == 12 and cfg.seed == 3
        assert cfg.window == 2 and cfg.eval_interval == 6

    def test_overrides_with_and_without_section(self, tiny_ini):
        cfg = load_config(tiny_ini, ["run.seed=9", "lr=0.01",
                                     "model.exclude_self_from_softmax=yes"])
        assert cfg.seed == 9 and cfg.lr == 0.01
        assert cfg.exclude_self_from_softmax is True

    def test_unknown_key_rejected(self, tiny_ini):
        with pytest.raises(ConfigError, match="learning_rate"):
            load_config(tiny_ini, ["learning_rate=0.1"])
        with pytest.raises(ConfigError, match="section"):
            load_config(tiny_ini, ["optimizer.lr=0.1"])

    def test_bad_values_named(self, tiny_ini):
        with pytest.raises(ConfigError, match="train.lr"):
            load_config(tiny_ini, ["train.lr=fast"])
        with pytest.raises(ConfigError, match="boolean"):
            load_config(tiny_ini, ["detach_align_target=maybe"])
        with pytest.raises(ConfigError):
            load_config(tiny_ini, ["variant=foo"])
        with pytest.raises(ConfigError):
            load_config(tiny_ini, ["env=chess"])
        with pytest.raises(ConfigError):
            load_config(tiny_ini, ["mixer=mean"])

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/path.ini")

    def test_malformed_override(self):
        with pytest.raises(ConfigError, match="key=value"):
            load_config(None, ["seed"])

    def test_derived_step_counts(self):
        cfg = RunConfig(total_steps=1000).validate()
        assert cfg.t_max == 800
        assert cfg.peer_decay_steps == 200
        assert cfg.sigma_threshold == 500
        assert cfg.eps_anneal_steps == 100

    def test_gamma_resolution(self):
        cfg = RunConfig(env="capture").validate()
        spec = cfg.build_env().spec
        assert cfg.resolved_gamma(spec) == spec.gamma == 0.99
        cfg2 = RunConfig(env="capture", gamma="0.9").validate()
        assert cfg2.resolved_gamma(spec) == 0.9
        with pytest.raises(ConfigError):
            RunConfig(gamma="1.5").validate()

    def test_epsilon_ordering_checked(self):
        with pytest.raises(ConfigError):
            RunConfig(eps_start=0.1, eps_final=0.5).validate()

    def test_round_trip_through_manifest_overrides(self, tiny_ini):
        cfg = load_config(tiny_ini, ["variant=sica-one"])
        again = load_config(None, [f"{k}={v}" for k, v in cfg.to_dict().items()])
        assert again == cfg


class TestOutputDirs:
    def test_out_root_env_var(self, monkeypatch):
        monkeypatch.delenv("TACIT_OUT", raising=False)
        assert out_root() == "runs"
        monkeypatch.setenv("TACIT_OUT", "/tmp/elsewhere")
        assert out_root() == "/tmp/elsewhere"
        assert out_root("explicit") == "explicit"

    def test_run_dir_content_keyed_and_collision_safe(self, tmp_path):
        cfg = RunConfig(seed=4).validate()
        first = run_dir_for(cfg, str(tmp_path))
        assert f"climb-sica-s4-" in first
        assert run_dir_for(RunConfig(seed=4).validate(), str(tmp_path)) == first
        os.makedirs(first)
        (tmp_path / os.path.basename(first) / "metrics.csv").write_text("x")
        assert run_dir_for(cfg, str(tmp_path)) == first + "-1"
        # a different config hashes to a different directory
        other = run_dir_for(RunConfig(seed=5).validate(), str(tmp_path))
        assert other != first


class TestCli:
    def run_train(self, tiny_ini, out_dir):
        code = main(["train", "--config", tiny_ini, "--out", out_dir, "--quiet"])
        assert code == 0
        return out_dir

    def test_train_writes_run(self, tiny_ini, tmp_path, capsys):
        out = self.run_train(tiny_ini, str(tmp_path / "run"))
        assert os.path.isfile(os.path.join(out, "metrics.csv"))
        assert os.path.isfile(os.path.join(out, "checkpoint_final.bin"))
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert manifest["seed"] == 3
        assert "run complete" in capsys.readouterr().out

    def test_train_bad_config_exit_code(self, tiny_ini, capsys):
        code = main(["train", "--config", tiny_ini, "--set", "bogus=1"])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_eval_loads_checkpoint(self, tiny_ini, tmp_path, capsys):
        out = self.run_train(tiny_ini, str(tmp_path / "run"))
        capsys.readouterr()
        code = main(["eval", "--run", out, "--episodes", "3",
                     "--mode", "decentralized"])
        assert code == 0
        msg = capsys.readouterr().out
        assert "mode=decentralized" in msg and "oracle optimal 11.0000" in msg

    def test_eval_matches_trainer_evaluate(self, tiny_ini, tmp_path, capsys):
        from tacit.cli import _load_run
        out = self.run_train(tiny_ini, str(tmp_path / "run"))
        trainer = _load_run(out)
        mean1, _, seqs1 = trainer.evaluate("decentralized", 4)
        mean2, _, seqs2 = _load_run(out).evaluate("decentralized", 4)
        assert mean1 == mean2 and seqs1 == seqs2

    def test_oracle_command(self, tiny_ini, capsys):
        assert main(["oracle", "--config", tiny_ini]) == 0
        assert "optimal return 11.000000" in capsys.readouterr().out
        assert main(["oracle", "--config", tiny_ini, "--set", "env=signal"]) == 0
        assert "optimal return 1.000000" in capsys.readouterr().out

    def test_plot_writes_svg(self, tiny_ini, tmp_path, capsys):
        a = self.run_train(tiny_ini, str(tmp_path / "a"))
        b = str(tmp_path / "b")
        assert main(["train", "--config", tiny_ini, "--set", "seed=4",
                     "--out", b, "--quiet"]) == 0
        svg = str(tmp_path / "curve.svg")
        code = main(["plot", "--runs", a, b, "--svg", svg, "--column", "L_TD"])
        assert code == 0
        assert os.path.getsize(svg) > 0
        assert "<svg" in open(svg).read(2000)

    def test_ablate_single_cell(self, tiny_ini, tmp_path, capsys):
        root = str(tmp_path / "abl")
        code = main(["ablate", "--config", tiny_ini, "--variants", "sica-zero",
                     "--seeds", "0", "--out", root])
        assert code == 0
        with open(os.path.join(root, "summary.csv")) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["variant", "seed", "final_eval_return_decentralized",
                           "final_L_Align"]
        assert rows[1][0] == "sica-zero" and rows[1][1] == "0"
        # alignment loss is switched off in this variant
        assert float(rows[1][3]) == 0.0

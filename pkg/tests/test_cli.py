import json

import pytest

from fastweights.cli import build_hash, main
from fastweights.config import ConfigError, load_config_file, validate_config
from fastweights.training.checkpoint import checkpoint_load


class TestConfig:
    def test_defaults_fill_in(self):
        cfg = validate_config({"task": "retrieval"})
        assert cfg["hidden"] == 50
        assert cfg["lam"] == 0.9
        assert cfg["batch_size"] == 128

    def test_task_specific_defaults(self):
        assert validate_config({"task": "glimpse"})["lam"] == 0.95
        assert validate_config({"task": "catch"})["n"] == 16

    def test_unknown_key_names_path(self):
        with pytest.raises(ConfigError, match=r"\$\.pairs"):
            validate_config({"task": "catch", "pairs": 4})

    def test_type_errors(self):
        with pytest.raises(ConfigError, match=r"\$\.hidden"):
            validate_config({"task": "retrieval", "hidden": "big"})
        with pytest.raises(ConfigError, match=r"\$\.lr"):
            validate_config({"task": "retrieval", "lr": True})

    def test_int_coerces_to_float(self):
        cfg = validate_config({"task": "retrieval", "lr": 1})
        assert cfg["lr"] == 1.0 and isinstance(cfg["lr"], float)

    def test_unknown_task(self):
        with pytest.raises(ConfigError, match=r"\$\.task"):
            validate_config({"task": "chess"})

    def test_unknown_cell(self):
        with pytest.raises(ConfigError, match=r"\$\.cell"):
            validate_config({"task": "retrieval", "cell": "gru"})

    def test_load_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"task": "retrieval", "hidden": 30}))
        cfg = load_config_file(str(path))
        assert cfg["hidden"] == 30

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config_file(str(path))


class TestCliGen:
    def test_gen_writes_dataset(self, tmp_path, capsys):
        out = str(tmp_path / "data")
        code = main(
            ["gen", "retrieval", "--pairs", "4", "--train", "10", "--valid", "4",
             "--test", "4", "--seed", "3", "--out", out]
        )
        assert code == 0
        manifest = json.loads(capsys.readouterr().out)
        assert manifest["counts"] == {"train": 10, "valid": 4, "test": 4}
        assert (tmp_path / "data" / "train.txt").exists()

    def test_gen_is_deterministic(self, tmp_path, capsys):
        args = ["gen", "retrieval", "--pairs", "4", "--train", "8", "--valid", "2",
                "--test", "2", "--seed", "9"]
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(args + ["--out", a]) == 0
        assert main(args + ["--out", b]) == 0
        for name in ("train.txt", "valid.txt", "test.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_gen_bad_pairs_is_usage_error(self, tmp_path, capsys):
        code = main(["gen", "retrieval", "--pairs", "0", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestCliTrain:
    def test_tiny_retrieval_run(self, tmp_path, capsys):
        data = str(tmp_path / "data")
        main(["gen", "retrieval", "--pairs", "2", "--train", "64", "--valid", "16",
              "--test", "16", "--seed", "1", "--out", data])
        capsys.readouterr()
        out = str(tmp_path / "run")
        code = main(
            ["train", "retrieval", "--out", out, "--data-dir", data, "--hidden", "10",
             "--epochs", "1", "--max-steps", "2", "--batch", "16", "--eval-every", "1"]
        )
        assert code == 0
        assert "best validation error" in capsys.readouterr().out
        ckpt = checkpoint_load(f"{out}/final.ckpt")
        assert json.loads(ckpt.model_id)["task"] == "retrieval"
        provenance = json.loads(open(f"{out}/config.json").read())
        assert provenance["hidden"] == 10
        build = json.loads(open(f"{out}/build.json").read())
        assert build["build_hash"] == build_hash()
        lines = open(f"{out}/metrics.csv").read().splitlines()
        assert lines[0] == "step,split,metric,value,wallclock_s"

    def test_flags_override_config_file(self, tmp_path, capsys):
        data = str(tmp_path / "data")
        main(["gen", "retrieval", "--pairs", "2", "--train", "32", "--valid", "8",
              "--test", "8", "--seed", "2", "--out", data])
        capsys.readouterr()
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(
            {"task": "retrieval", "hidden": 8, "epochs": 1, "max_steps": 1,
             "batch_size": 16, "data_dir": data}
        ))
        out = str(tmp_path / "run")
        code = main(["train", "retrieval", "--config", str(cfg_path), "--out", out,
                     "--hidden", "12"])
        assert code == 0
        provenance = json.loads(open(f"{out}/config.json").read())
        assert provenance["hidden"] == 12
        assert provenance["batch_size"] == 16

    def test_config_task_mismatch(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"task": "catch"}))
        code = main(["train", "retrieval", "--config", str(cfg_path), "--out", str(tmp_path / "r")])
        assert code == 2

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"task": "retrieval", "frobnicate": 1}))
        code = main(["train", "retrieval", "--config", str(cfg_path), "--out", str(tmp_path / "r")])
        assert code == 2
        assert "$.frobnicate" in capsys.readouterr().err

    def test_missing_data_dir_is_usage_error(self, tmp_path, capsys):
        code = main(["train", "retrieval", "--out", str(tmp_path / "r"),
                     "--data-dir", str(tmp_path / "nope")])
        assert code == 2


class TestCliEvalAndCheck:
    def test_eval_retrieval_checkpoint(self, tmp_path, capsys):
        data = str(tmp_path / "data")
        main(["gen", "retrieval", "--pairs", "2", "--train", "32", "--valid", "8",
              "--test", "8", "--seed", "4", "--out", data])
        out = str(tmp_path / "run")
        main(["train", "retrieval", "--out", out, "--data-dir", data, "--hidden", "8",
              "--epochs", "1", "--max-steps", "1", "--batch", "16"])
        capsys.readouterr()
        code = main(["eval", "--checkpoint", f"{out}/final.ckpt",
                     "--data", f"{data}/test.txt"])
        assert code == 0
        value = float(capsys.readouterr().out.strip())
        assert 0.0 <= value <= 100.0  # error percent

    def test_eval_missing_checkpoint(self, tmp_path, capsys):
        code = main(["eval", "--checkpoint", str(tmp_path / "none.ckpt")])
        assert code == 2

    def test_eval_garbage_checkpoint(self, tmp_path, capsys):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"garbage bytes here")
        code = main(["eval", "--checkpoint", str(path)])
        assert code == 2

    def test_check_closure(self, capsys):
        assert main(["check", "closure"]) == 0
        out = capsys.readouterr().out
        assert "[pass] closure" in out

    def test_check_equiv_small(self, capsys):
        assert main(["check", "equiv", "--cases", "20"]) == 0
        assert "[pass] equiv" in capsys.readouterr().out

    def test_check_grad_fault_injection_fails(self, capsys):
        code = main(["check", "grad", "--inject-fault"])
        assert code == 1
        assert "[FAIL]" in capsys.readouterr().out

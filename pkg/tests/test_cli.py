import configparser
import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from qfin import config as cfg
from qfin.cli import build_parser, main
from qfin.data import BASE_URL_ENV, discretize, percentile_clip
from qfin.svg import read_series

import oracles
from conftest import KlinesServer, synthetic_klines

FIVE_SYMBOLS = ["BNBBTC", "ETHBTC", "LTCBTC", "NEOBTC", "QTUMETH"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def price_csv(tmp_path):
    values = np.random.default_rng(0).lognormal(0, 0.4, (300, 2))
    path = tmp_path / "prices.csv"
    lines = ["close_time,AAA,BBB"] + [f"{1000 + i},{float(a)!r},{float(b)!r}" for i, (a, b) in enumerate(values)]
    path.write_text("\n".join(lines) + "\n")
    return path, values


class TestFetch:
    def test_two_symbols(self, klines_server, tmp_path, monkeypatch):
        monkeypatch.setenv(BASE_URL_ENV, klines_server.url)
        out = tmp_path / "prices.csv"
        assert main(["fetch", "--symbols", "ETHBTC,LTCBTC", "--limit", "100", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["close_time", "ETHBTC", "LTCBTC"]
        assert all(len(r) == 3 for r in rows) and 1 <= len(rows) - 1 <= 100

    def test_five_symbols(self, tmp_path, monkeypatch):
        with KlinesServer({s: synthetic_klines(1200, price=0.001 * (i + 1))
                           for i, s in enumerate(FIVE_SYMBOLS)}) as server:
            monkeypatch.setenv(BASE_URL_ENV, server.url)
            out = tmp_path / "five.csv"
            assert main(["fetch", "--symbols", ",".join(FIVE_SYMBOLS), "--limit", "1000",
                         "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["close_time", *FIVE_SYMBOLS]
        assert len(rows) == 1001 and all(len(r) == 6 for r in rows)

    def test_unreachable_network(self, tmp_path, capsys):
        out = tmp_path / "prices.csv"
        code = main(["fetch", "--symbols", "ETHBTC", "--base-url", "http://127.0.0.1:9", "--out", str(out)])
        assert code == 4
        assert "transport error" in capsys.readouterr().err
        assert not out.exists()

    def test_partial_failure_leaves_nothing(self, klines_server, tmp_path, monkeypatch):
        monkeypatch.setenv(BASE_URL_ENV, klines_server.url)
        out = tmp_path / "prices.csv"
        assert main(["fetch", "--symbols", "ETHBTC,NOPE", "--out", str(out)]) == 4
        assert list(tmp_path.iterdir()) == []

    def test_empty_symbol_list(self, tmp_path):
        assert main(["fetch", "--symbols", ",", "--out", str(tmp_path / "x.csv")]) == 2


class TestDiscretize:
    def test_one_feature(self, price_csv, tmp_path):
        path, values = price_csv
        out = tmp_path / "hist.csv"
        assert main(["discretize", "--csv", str(path), "--features", "AAA", "--resolutions", "3",
                     "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["index", "probability", "count"] and len(rows) == 9
        # counts against the brute-force oracle
        col = values[:, 0]
        kept = oracles.clip_count(col.tolist(), 0.05, 0.95)
        assert [int(r[2]) for r in rows[1:]] == oracles.count_bins(kept, 3)
        meta = json.loads((tmp_path / "hist.csv.meta.json").read_text())
        np.testing.assert_allclose(meta["bin_edges"][0], discretize(percentile_clip(col), 3)[1])

    def test_two_features(self, price_csv, tmp_path):
        out = tmp_path / "hist.csv"
        assert main(["discretize", "--csv", str(price_csv[0]), "--features", "AAA,BBB",
                     "--resolutions", "2,1", "--out", str(out)]) == 0
        assert len(read_csv(out)) == 9

    def test_resolution_mismatch(self, price_csv, tmp_path, capsys):
        out = tmp_path / "hist.csv"
        assert main(["discretize", "--csv", str(price_csv[0]), "--features", "AAA", "--resolutions", "3,3",
                     "--out", str(out)]) == 2
        assert "--resolutions" in capsys.readouterr().err
        assert not out.exists()

    def test_missing_column(self, price_csv, tmp_path):
        assert main(["discretize", "--csv", str(price_csv[0]), "--features", "ZZZ", "--resolutions", "3",
                     "--out", str(tmp_path / "h.csv")]) == 2


QGAN_TOY = ["train-qgan", "--resolutions", "1", "--epochs", "40", "--layers", "1"]


class TestTrainQgan:
    def test_toy_artifacts(self, tmp_path):
        out = tmp_path / "run"
        assert main([*QGAN_TOY, "--out-dir", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert {"trace.csv", "params.json", "loss.svg", "fidelity.svg"} <= names
        assert {"config.ini", "target_histogram.csv"} <= names
        trace = read_csv(out / "trace.csv")
        assert trace[0] == ["epoch", "loss_d", "loss_g", "fidelity", "kl"] and len(trace) == 41
        params = json.loads((out / "params.json").read_text())
        assert len(params["params"]) == 5
        series = read_series((out / "loss.svg").read_text())
        np.testing.assert_allclose(series["L_D"], [float(r[1]) for r in trace[1:]], rtol=1e-5)
        fid = read_series((out / "fidelity.svg").read_text())["fidelity"]
        np.testing.assert_allclose(fid, [float(r[3]) for r in trace[1:]], rtol=1e-5)

    def test_zero_epochs(self, tmp_path, caplog):
        out = tmp_path / "run"
        with caplog.at_level("WARNING"):
            assert main(["train-qgan", "--resolutions", "1", "--epochs", "0", "--out-dir", str(out)]) == 0
        assert (out / "trace.csv").read_text() == "epoch,loss_d,loss_g,fidelity,kl\n"
        assert "epochs = 0" in caplog.text

    def test_seeded_rerun_is_byte_identical(self, tmp_path):
        args = ["train-qgan", "--resolutions", "3", "--epochs", "30", "--seed", "7"]
        assert main([*args, "--out-dir", str(tmp_path / "a")]) == 0
        assert main([*args, "--out-dir", str(tmp_path / "b")]) == 0
        for name in ("trace.csv", "params.json", "loss.svg", "fidelity.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_config_hash_matches_resolved_config(self, tmp_path):
        out = tmp_path / "run"
        assert main([*QGAN_TOY, "--out-dir", str(out)]) == 0
        parser = configparser.ConfigParser(interpolation=None)
        parser.read(out / "config.ini")
        raw = {s: dict(parser.items(s)) for s in parser.sections()}
        assert set(raw) == {"data", "qgan"}
        assert raw["qgan"]["epochs"] == "40" and raw["qgan"]["seed"] == "0"
        digest = json.loads((out / "params.json").read_text())["config_hash"]
        assert digest == cfg.config_hash(cfg.parse(raw))
        # rerunning from the snapshot reproduces the same hash
        again = tmp_path / "again"
        assert main(["train-qgan", "--config", str(out / "config.ini"), "--out-dir", str(again)]) == 0
        assert json.loads((again / "params.json").read_text())["config_hash"] == digest

    def test_config_file_and_flag_precedence(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[data]\nresolutions = 1\n[qgan]\nepochs = 5\nlayers = 1\n")
        out = tmp_path / "run"
        assert main(["train-qgan", "--config", str(ini), "--epochs", "3", "--out-dir", str(out)]) == 0
        assert len(read_csv(out / "trace.csv")) == 4

    @pytest.mark.parametrize("flag,value,field", [("--epochs", "-1", "[qgan]"), ("--mode", "quantum", "[qgan] mode"),
                                                  ("--batch-size", "many", "[qgan] batch_size"),
                                                  ("--resolutions", "0", "[data] resolutions")])
    def test_invalid_values(self, tmp_path, capsys, flag, value, field):
        out = tmp_path / "run"
        assert main(["train-qgan", flag, value, "--out-dir", str(out)]) == 2
        assert field in capsys.readouterr().err
        assert not out.exists()

    def test_unknown_config_field(self, tmp_path, capsys):
        ini = tmp_path / "bad.ini"
        ini.write_text("[qgan]\nlearning_rate = 0.1\n")
        assert main(["train-qgan", "--config", str(ini), "--out-dir", str(tmp_path / "r")]) == 2
        assert "[qgan] learning_rate" in capsys.readouterr().err


class TestTrainQcbm:
    def test_artifacts_and_determinism(self, tmp_path):
        args = ["train-qcbm", "--resolutions", "2", "--max-evals", "200", "--seed", "3"]
        assert main([*args, "--out-dir", str(tmp_path / "a")]) == 0
        assert main([*args, "--out-dir", str(tmp_path / "b")]) == 0
        a = tmp_path / "a"
        assert {p.name for p in a.iterdir()} == {"trace.csv", "params.json", "histogram.svg", "config.ini",
                                                  "target_histogram.csv", "model_histogram.csv"}
        for p in a.iterdir():
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
        bars = read_series((a / "histogram.svg").read_text())
        target = [float(r[1]) for r in read_csv(a / "target_histogram.csv")[1:]]
        np.testing.assert_allclose(bars["target"], target, rtol=1e-5)
        assert len(read_csv(a / "trace.csv")) <= 201

    def test_unknown_optimizer(self, tmp_path, capsys):
        assert main(["train-qcbm", "--optimizer", "adagrad", "--out-dir", str(tmp_path / "r")]) == 2
        assert "[qcbm] optimizer" in capsys.readouterr().err

    def test_csv_source(self, price_csv, tmp_path):
        out = tmp_path / "r"
        assert main(["train-qcbm", "--source", "csv", "--csv", str(price_csv[0]), "--features", "AAA,BBB",
                     "--resolutions", "1,1", "--max-evals", "100", "--out-dir", str(out)]) == 0
        assert len(read_csv(out / "target_histogram.csv")) == 5


class TestCompareOptim:
    def test_three_optimizers_two_seeds(self, tmp_path, capsys):
        out = tmp_path / "cmp"
        assert main(["compare-optim", "--resolutions", "2", "--seeds", "2", "--budget", "100",
                     "--out-dir", str(out)]) == 0
        rows = read_csv(out / "comparison.csv")
        assert rows[0] == ["optimizer", "seed", "final_cost", "evaluations"] and len(rows) == 7
        assert {r[0] for r in rows[1:]} == {"cobyla", "spsa", "nelder-mead"}
        assert all(int(r[3]) <= 100 for r in rows[1:])
        summary = read_csv(out / "summary.csv")
        medians = [float(r[2]) for r in summary[1:]]
        assert medians == sorted(medians) and [r[0] for r in summary[1:]] == ["1", "2", "3"]
        assert set(read_series((out / "traces.svg").read_text())) == {"cobyla", "spsa", "nelder-mead"}
        assert "1. " in capsys.readouterr().out

    def test_single_optimizer(self, tmp_path):
        out = tmp_path / "cmp"
        assert main(["compare-optim", "--resolutions", "2", "--optimizers", "spsa", "--seeds", "1",
                     "--budget", "50", "--out-dir", str(out)]) == 0
        summary = read_csv(out / "summary.csv")
        assert len(summary) == 2 and summary[1][:2] == ["1", "spsa"]

    def test_unknown_optimizer(self, tmp_path, capsys):
        assert main(["compare-optim", "--optimizers", "cobyla,lbfgs", "--out-dir", str(tmp_path / "c")]) == 2
        assert "[compare] optimizers" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["train-qgan", "train-qcbm", "compare-optim"])
def test_help_documents_every_field(command):
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    text = "".join(sub.format_help().split())
    for f in cfg.fields_for(cfg.COMMAND_SECTIONS[command]):
        flag = "--" + f.key.replace("_", "-")
        assert flag in text, flag
        assert f"(default:{f.default})" in text


def test_module_entry_point():
    result = subprocess.run([sys.executable, "-m", "qfin", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    for command in ("fetch", "discretize", "train-qgan", "train-qcbm", "compare-optim"):
        assert command in result.stdout

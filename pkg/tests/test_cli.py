import json

import pytest

from ptbrpuf.ptbrpuf import PtBrPuf, _get_all_available_modules, parse_args

CONFIG = """
[experiment]
name = cli
seed = 3

[puf]
kind = br
stages = 16
k = 1
chips = 2
obfuscation = mask

[dataset]
train_sizes = 200
test_size = 100
iterations = 3
sigma = 0

[mlp:dl]
layers = 1
neurons = 8
learning_rate = 0.001
max_iterations = 100
checkpoint_every = 50

[sweep]
layers = 1
neurons = 4, 8
train_size = 200
max_iterations = 100
checkpoint_every = 50

[output]
formats = json, csv
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "cli.ini"
    path.write_text(CONFIG)
    return path


def run_command(capsys, *argv):
    capsys.readouterr()
    PtBrPuf(parse_args([*argv, "-j"])).run()
    return json.loads(capsys.readouterr().out)


def node_types(result):
    return [node["type"] for node in result["results"]["nodes"]]


def test_commands_are_discovered():
    assert {"attack", "characterize", "generate", "lda", "report", "sweep"} <= set(_get_all_available_modules())


def test_defaults_and_overrides():
    args = parse_args(["ATTACK", "-s", "0x10", "-t", "0", "-fg"])
    assert args.command == "attack"
    assert args.seed == 16 and args.threads == 1
    assert args.full_grid and args.format == "table"


@pytest.mark.parametrize("argv", [["attack", "-s", str(1 << 64)], ["attack", "-f", "xml"]])
def test_rejected_arguments(argv):
    with pytest.raises(SystemExit):
        parse_args(argv)


def test_help_exits_cleanly():
    with pytest.raises(SystemExit) as exit_info:
        parse_args(["-h"])
    assert exit_info.value.code == 0


def test_generate_writes_chips_and_datasets(capsys, config_path, tmp_path):
    out = tmp_path / "gen"
    result = run_command(capsys, "generate", "-c", str(config_path), "-o", str(out), "-b")
    assert node_types(result).count("pufInstance") == 2
    assert sorted(path.name for path in out.iterdir()) == [
        "chip0.json", "chip0_crps.crpd", "chip1.json", "chip1_crps.crpd", "obfuscation.json"]


def test_attack_then_rerender(capsys, config_path, tmp_path):
    out = tmp_path / "attack"
    result = run_command(capsys, "attack", "-c", str(config_path), "-o", str(out))
    assert node_types(result) == ["attackCell"]
    assert (out / "attack_report.json").exists() and (out / "attack_report.csv").exists()
    assert (out / "dl_200_model.npz").exists() and (out / "dl_200_trace.csv").exists()
    assert result["results"]["nodes"][0]["properties"]["details"]["modelFile"] == "dl_200_model.npz"

    rerendered = run_command(capsys, "report", "-i", str(out / "attack_report.json"), "-f", "csv")
    assert node_types(rerendered) == ["experimentReport"]
    assert rerendered["results"]["nodes"][0]["properties"]["cells"] == 1


def test_characterize_writes_metrics(capsys, config_path, tmp_path):
    out = tmp_path / "metrics"
    result = run_command(capsys, "characterize", "-c", str(config_path), "-o", str(out))
    assert node_types(result) == ["pufMetrics"]
    assert list(result["results"]["nodes"][0]["properties"]["nhd"]) == ["0-1"]
    assert (out / "metrics.json").exists() and (out / "metrics.txt").exists()


def test_lda_writes_overlap(capsys, config_path, tmp_path):
    out = tmp_path / "lda"
    result = run_command(capsys, "lda", "-c", str(config_path), "-o", str(out))
    assert node_types(result) == ["ldaAnalysis"]
    assert 0.0 <= result["results"]["nodes"][0]["properties"]["overlapCoefficient"] <= 1.0
    assert json.loads((out / "lda.json").read_text())["records"] >= 100


def test_threaded_sweep(capsys, config_path, tmp_path):
    out = tmp_path / "sweep"
    result = run_command(capsys, "sweep", "-c", str(config_path), "-o", str(out), "-t", "2")
    assert node_types(result) == ["sweepCell", "sweepCell"]
    assert (out / "sweep_report.json").exists()
    assert (out / "m16_N1_K4_model.npz").exists() and (out / "m16_N1_K8_trace.csv").exists()

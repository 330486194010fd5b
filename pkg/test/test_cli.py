import json
import os

import numpy as np
import pandas as pd
import pytest

from asvlab import m18n
from asvlab.core import Translator
from asvlab.__main__ import main
from asvlab.interfaces.cli import get_locale, plain_print_dict, pretty_print_dict
from asvlab.utils.filesystem import write_to_csv


@pytest.fixture
def episodes_csv(tmp_path):
    file_path = str(tmp_path / "episodes.csv")
    write_to_csv(
        file_path,
        pd.DataFrame(
            {
                "progress": [0.9, 1.0, 0.95, 0.99],
                "mean_cte": [10.0, 12.0, 9.0, 11.0],
                "steps": [500, 520, 480, 510],
                "collision": [0, 0, 1, 0],
            }
        ),
    )
    return file_path


def test_success_as_json(episodes_csv, tmp_path, capsys, cli_logging):
    out = str(tmp_path / "summary")
    code = main(["--output-as", "json", "report", "summarize", episodes_csv, "-o", out])
    assert code == 0

    captured = capsys.readouterr()
    result = json.loads(captured.out)
    assert result["collision_rate"]["mean"] == pytest.approx(25.0)
    assert os.path.exists(os.path.join(out, "summary.csv"))
    # logs never reach stdout
    assert "summary written" in captured.err


def test_success_as_plain(episodes_csv, tmp_path, capsys, cli_logging):
    code = main(["--output-as", "plain", "--quiet", "report", "summarize", episodes_csv, "-o", str(tmp_path)])
    assert code == 0
    captured = capsys.readouterr()
    assert "#progress" in captured.out.splitlines()
    assert captured.err == ""


def test_missing_input_file(tmp_path, capsys, cli_logging):
    missing = str(tmp_path / "nope.csv")
    assert main(["report", "summarize", missing, "-o", str(tmp_path)]) == 1
    assert missing in capsys.readouterr().err


def test_pattern_mismatch(episodes_csv, tmp_path, capsys, cli_logging):
    assert main(["report", "summarize", episodes_csv, "--seed", "abc", "-o", str(tmp_path)]) == 1
    assert m18n.g("pattern_seed") in capsys.readouterr().err

    assert main(["vae", "evaluate", episodes_csv, "model.pt"]) == 1
    assert m18n.g("pattern_ckpt") in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["fly"],
        ["report"],
        ["report", "summarize"],
        ["report", "summarize", "a.csv", "--bogus"],
        ["report", "export", "a.csv", "--window", "wide"],
        ["--output-as", "xml", "report", "summarize", "a.csv"],
    ],
)
def test_usage_errors(argv, capsys, cli_logging):
    assert main(argv) == 2


def test_help(capsys, cli_logging):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for category in ("dataset", "vae", "agent", "report"):
        assert category in out

    assert main(["vae", "train", "--help"]) == 0
    assert "--decoder-padding" in capsys.readouterr().out


def test_print_dict(capfd):
    plain_print_dict({"result": {"mean": 1.5, "ci": [1.0, 2.0]}})
    assert capfd.readouterr().out.splitlines() == ["#mean", "1.5", "#ci", "1.0", "2.0"]

    pretty_print_dict({"b": np.float64(1.0 / 3.0), "a": [1.25, 2]})
    assert capfd.readouterr().out.splitlines() == ["a: [1.25, 2]", "b: 0.333333"]


def test_get_locale(monkeypatch, mocker):
    mocker.patch("locale.getlocale", return_value=(None, None))
    monkeypatch.setenv("LANG", "fr_FR.UTF-8")
    assert get_locale() == "fr"
    monkeypatch.delenv("LANG")
    assert get_locale() == ""


def test_translator_fallback():
    translator = Translator(m18n.locales_dir)
    assert translator.get_locales() == ["en", "fr"]

    assert translator.set_locale("fr")
    assert translator.translate("success") == "Succès !"
    # keys missing from a catalog fall back to en.json
    assert translator.translate("buffer_full", capacity=3) == m18n.g("buffer_full", capacity=3)

    assert not translator.set_locale("xx")
    assert translator.locale == "en"


def test_out_is_not_output_as(episodes_csv, tmp_path, capsys, cli_logging):
    out = str(tmp_path / "long")
    assert main(["report", "summarize", episodes_csv, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "summary.csv"))

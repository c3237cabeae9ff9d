import json

import numpy as np
import pytest

from viab_qt.cli import main
from viab_qt.config import load_config, parse_config_text
from viab_qt.errors import ConfigError

TINY_TANGENCY = """\
[space]
n = 1
mu = 0.0
m = 1
d = 1

[model]
family = constant-diagonal
sigma = 0.0
drift = -1.0
gamma = 0.0

[constraint]
variant = halfspace
normal = 1.0
offset = 0.0

[experiment]
kind = tangency
seed = 77
xi = 0.0
h_ladder = 0.08 0.04 0.02 0.01
count = 400

[output]
directory = out
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tangency.ini"
    path.write_text(TINY_TANGENCY)
    return path


def test_run_and_artifacts(tiny_config, tmp_path):
    out = tmp_path / "artifacts"
    code = main(["tangency", "--config", str(tiny_config), "--out", str(out)])
    assert code == 0  # deterministic inward drift: tangent
    csv = out / "tangency_77.csv"
    summary = json.loads((out / "tangency_77.json").read_text())
    assert summary["verdict"] == "tangent"
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("h,lambda,term_gap")
    assert len(lines) == 1 + 4  # header + one row per ladder rung


def test_replay_round_trip(tiny_config, tmp_path):
    out = tmp_path / "artifacts"
    main(["tangency", "--config", str(tiny_config), "--out", str(out)])
    assert main(["replay", str(out)]) == 0


def test_replay_detects_tampering(tiny_config, tmp_path, capsys):
    out = tmp_path / "artifacts"
    main(["tangency", "--config", str(tiny_config), "--out", str(out)])
    csv = out / "tangency_77.csv"
    text = csv.read_text().splitlines()
    cells = text[2].split(",")
    cells[2] = "0.123456"
    text[2] = ",".join(cells)
    csv.write_text("\n".join(text) + "\n")
    assert main(["replay", str(out)]) == 4
    assert "row 2" in capsys.readouterr().out


def test_replay_without_config_is_config_error(tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["replay", str(empty)]) == 2


def test_gamma_bound_rejected(tmp_path, capsys):
    bad = TINY_TANGENCY.replace("gamma = 0.0", "gamma = 0.7")
    path = tmp_path / "bad.ini"
    path.write_text(bad)
    assert main(["tangency", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "0.5" in err and "gamma" in err


def test_unknown_family_rejected(tmp_path):
    bad = TINY_TANGENCY.replace("constant-diagonal", "mystery")
    path = tmp_path / "bad.ini"
    path.write_text(bad)
    assert main(["tangency", "--config", str(path)]) == 2


def test_kind_mismatch_rejected(tiny_config):
    assert main(["nagumo", "--config", str(tiny_config)]) == 2


def test_seed_override(tiny_config, tmp_path):
    out = tmp_path / "artifacts"
    main(["tangency", "--config", str(tiny_config), "--seed", "123",
          "--out", str(out)])
    assert (out / "tangency_123.csv").exists()
    embedded = load_config(out / "tangency_123.config.ini")
    assert embedded.seed == 123


def test_threads_flag_does_not_change_results(tiny_config, tmp_path):
    out1 = tmp_path / "a"
    out4 = tmp_path / "b"
    main(["tangency", "--config", str(tiny_config), "--out", str(out1),
          "--threads", "1"])
    main(["tangency", "--config", str(tiny_config), "--out", str(out4),
          "--threads", "4"])
    a = (out1 / "tangency_77.csv").read_bytes()
    b = (out4 / "tangency_77.csv").read_bytes()
    assert a == b


def test_config_parsing_round_trip():
    cfg = parse_config_text(TINY_TANGENCY)
    text = cfg.canonical_text()
    again = parse_config_text(text)
    assert again.canonical_text() == text
    np.testing.assert_array_equal(again.experiment["h_ladder"],
                                  cfg.experiment["h_ladder"])


def test_matrix_syntax():
    cfg_text = TINY_TANGENCY.replace(
        "family = constant-diagonal\nsigma = 0.0\ndrift = -1.0",
        "family = linear\nB = 1.0\nC = 0.0\nD = 0.0")
    cfg = parse_config_text(cfg_text)
    model = cfg.build_model(cfg.build_space())
    assert model.family == "linear"


def test_missing_sections_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[space]\nn = 1\nmu = 0.0\nm = 1\n")
    with pytest.raises(ConfigError, match="seed"):
        parse_config_text(TINY_TANGENCY.replace("seed = 77\n", ""))


def test_positive_gamma_reports_both_exponents(tmp_path):
    # with gamma > 0 the run carries profiles at both the sufficiency
    # exponent 0 and the necessity exponent gamma
    cfg_text = TINY_TANGENCY.replace("gamma = 0.0", "gamma = 0.25")
    path = tmp_path / "g.ini"
    path.write_text(cfg_text)
    out = tmp_path / "artifacts"
    assert main(["tangency", "--config", str(path), "--out", str(out)]) == 0
    lines = (out / "tangency_77.csv").read_text().splitlines()
    lambdas = {line.split(",")[1] for line in lines[1:]}
    assert lambdas == {"0.0", "0.25"}
    summary = json.loads((out / "tangency_77.json").read_text())
    assert set(summary["profiles"]) == {"0.0", "0.25"}


def test_numerical_failure_exit_code(tmp_path, capsys):
    # an exploding mode aborts the run with the step index and exit 3
    unstable = TINY_TANGENCY.replace("kind = tangency", "kind = viability")
    unstable = unstable.replace("mu = 0.0", "mu = 80.0")
    unstable = unstable.replace("h_ladder = 0.08 0.04 0.02 0.01",
                                "T = 10.0\ndt = 0.5\npaths = 4")
    path = tmp_path / "boom.ini"
    path.write_text(unstable)
    assert main(["viability", "--config", str(path),
                 "--out", str(tmp_path / "o")]) == 3
    assert "step" in capsys.readouterr().err


_FAMILY_SNIPPETS = {
    "zero": "family = zero",
    "constant-diagonal": "family = constant-diagonal\nsigma = 0.4",
    "linear": "family = linear\nB = 1.0\nC = 0.3\nD = 0.1",
    "radial-restoring": "family = radial-restoring\nrate = 1.0\nsigma = 0.2",
    "tangential-rotation": "family = tangential-rotation",
    "clipped-polynomial": "family = clipped-polynomial\namp = 1.0\n"
                          "radius = 2.0\nsigma = 0.1",
}

_CONSTRAINT_SNIPPETS = {
    "ball": "variant = ball\nradius = 1.0\ncenter = 0.0",
    "halfspace": "variant = halfspace\nnormal = 1.0\noffset = 0.0",
    "levelset": "variant = levelset\nfamily = sphere\nscale = 1.0\n"
                "radius = 1.0\ncenter = 0.0",
}


@pytest.mark.parametrize("family", sorted(_FAMILY_SNIPPETS))
@pytest.mark.parametrize("constraint", sorted(_CONSTRAINT_SNIPPETS))
def test_every_registry_entry_is_config_constructible(family, constraint):
    if family == "test-custom":
        pytest.skip("test-only family")
    text = (
        "[space]\nn = 1\nmu = 0.0\nm = 1\nd = 1\n\n"
        f"[model]\n{_FAMILY_SNIPPETS[family]}\ngamma = 0.0\n\n"
        f"[constraint]\n{_CONSTRAINT_SNIPPETS[constraint]}\n\n"
        "[experiment]\nkind = tangency\nseed = 1\nxi = 0.0\n"
        "h_ladder = 0.08 0.04 0.02 0.01\ncount = 200\n"
    )
    cfg = parse_config_text(text)
    sp = cfg.build_space()
    assert cfg.build_model(sp).family == family
    cfg.build_constraint(sp)

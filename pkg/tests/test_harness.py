import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resist import cli
from resist.config import (
    CHOICES,
    DEFAULTS,
    ConfigError,
    RunSpec,
    SuiteSpec,
    parse_config,
    parse_links,
    serialize_config,
)
from resist.harness import EXIT_CONFIG, EXIT_IO, EXIT_OK, SUMMARY_COLUMNS, build_run, run_suite, unique_path
from resist.idx import BadMagic, CountMismatch, Truncated, load_idx, write_idx

SMALL = """
[suite]
name = tiny
seeds = 1, 2

[run:r]
M = 5
b = 1
J = 3
T_max = 30
d = 2
record_mixing = none
"""


def test_parse_defaults_and_overrides():
    suite = parse_config(SMALL)
    assert suite.name == "tiny" and suite.seeds == [1, 2]
    (run,) = suite.runs
    assert run.name == "r" and run["M"] == 5 and run["T_max"] == 30
    assert run["rule"] == DEFAULTS["rule"] and run["h"] == 0.1


@pytest.mark.parametrize("text", [
    "[run:a]\nM = five\n",
    "[run:a]\nrule = average\n",
    "[run:a]\nbogus = 1\n",
    "[other]\nx = 1\n",
    "[run:a]\n[run:a]\n",
    "[suite]\nseeds = x\n",
])
def test_parse_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_parse_links():
    assert parse_links("0>1, 3>2") == [(0, 1), (3, 2)]
    with pytest.raises(ConfigError):
        parse_links("0-1")


run_params = st.fixed_dictionaries({
    "M": st.integers(3, 40),
    "J": st.integers(2, 9),
    "h": st.floats(1e-4, 1.0),
    "lam": st.floats(0.0, 10.0),
    "rule": st.sampled_from(CHOICES["rule"]),
    "objective": st.sampled_from(CHOICES["objective"]),
    "static_links": st.sampled_from(["", "0>1", "0>1, 2>1"]),
})


@settings(max_examples=50, deadline=None)
@given(st.lists(run_params, max_size=3), st.lists(st.integers(0, 10**6), min_size=1, max_size=4))
def test_config_round_trip(runs, seeds):
    suite = SuiteSpec("rt", seeds, "none", [RunSpec(f"r{i}", {**parse_config("[run:x]").runs[0].params, **p})
                                           for i, p in enumerate(runs)])
    again = parse_config(serialize_config(suite))
    assert again == suite


def test_idx_round_trip(tmp_path):
    imgs = np.array([[[0, 255], [128, 1]], [[7, 8], [9, 10]]], dtype=np.uint8)
    ip, lp = tmp_path / "i.idx", tmp_path / "l.idx"
    write_idx(imgs, [3, 9], ip, lp)
    X, y = load_idx(ip, lp)
    assert X.shape == (2, 4) and y.tolist() == [3, 9]
    assert X[0].tolist() == [0.0, 1.0, 128 / 255, 1 / 255]


def test_idx_errors(tmp_path):
    imgs = np.zeros((2, 2, 2), dtype=np.uint8)
    ip, lp = tmp_path / "i.idx", tmp_path / "l.idx"
    write_idx(imgs, [0, 1, 2], ip, lp)
    with pytest.raises(CountMismatch):
        load_idx(ip, lp)
    write_idx(imgs, [0, 1], ip, lp)
    raw = ip.read_bytes()
    ip.write_bytes(raw[:-1])
    with pytest.raises(Truncated):
        load_idx(ip, lp)
    ip.write_bytes(struct.pack(">I", 0x1234) + raw[4:])
    with pytest.raises(BadMagic):
        load_idx(ip, lp)


def test_unique_path(tmp_path):
    assert unique_path(tmp_path, "a").name == "a.csv"
    (tmp_path / "a.csv").write_text("")
    (tmp_path / "a_1.csv").write_text("")
    assert unique_path(tmp_path, "a").name == "a_2.csv"


def test_run_suite_empty(tmp_path):
    assert run_suite(SuiteSpec("empty"), tmp_path) == EXIT_OK
    assert [p.name for p in tmp_path.iterdir()] == ["empty_summary.csv"]
    assert (tmp_path / "empty_summary.csv").read_text().splitlines() == [",".join(SUMMARY_COLUMNS)]


def test_run_suite_two_seeds_and_collisions(tmp_path):
    suite = parse_config(SMALL)
    assert run_suite(suite, tmp_path) == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["r_seed1.csv", "r_seed2.csv", "tiny_summary.csv"]
    summary = (tmp_path / "tiny_summary.csv").read_text().splitlines()
    assert len(summary) == 2 and summary[1].startswith("r,resist,2,")
    first = (tmp_path / "r_seed1.csv").read_text()
    assert run_suite(suite, tmp_path) == EXIT_OK
    assert (tmp_path / "r_seed1_1.csv").read_text() == first
    assert (tmp_path / "tiny_summary_1.csv").exists()


def test_run_suite_invalid_config_writes_nothing(tmp_path):
    suite = parse_config(SMALL.replace("b = 1", "b = 3"))
    assert run_suite(suite, tmp_path / "out") == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_run_suite_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run_suite(parse_config(SMALL), blocker / "sub") == EXIT_IO


def test_build_run_objective_kinds():
    for obj in ("quadratic", "quadratic-identical", "logistic", "pl-sine", "pl-sum"):
        text = SMALL + f"objective = {obj}\n"
        run = build_run(parse_config(text).runs[0], 1)
        assert len(run.objectives) == 5


def test_cli_simulate_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--seeds", "4"]) == 0
    assert (out / "r_seed4.csv").exists()
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.ini"), "--out", str(out)]) == EXIT_IO
    bad = tmp_path / "bad.ini"
    bad.write_text("[run:x]\nJ = one\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(out)]) == EXIT_CONFIG


def test_cli_check_graph(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL)
    assert cli.main(["check-graph", "--config", str(cfg), "--mode", "exhaustive"]) == 0
    assert "pass" in capsys.readouterr().out
    cyc = tmp_path / "cyc.ini"
    cyc.write_text("[suite]\nseeds = 0\n[run:c]\ngraph = cycle\nM = 4\nb = 1\n")
    assert cli.main(["check-graph", "--config", str(cyc)]) == EXIT_CONFIG


def test_cli_verify_single(capsys):
    assert cli.main(["verify", "--suite", "acceptance", "--only", "2"]) == 0
    assert "PASS" in capsys.readouterr().out

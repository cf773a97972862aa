import csv
import json

import pytest

from polyconc.cli import (
    EXIT_PARSE,
    EXIT_VALIDATION,
    ConfigParseError,
    _cell,
    main,
    parse_config,
    write_csv,
)
from polyconc.bounds import hanson_wright
from polyconc.tensors import ones_minus_identity, write_tensor


def run(tmp_path, command, text, *extra):
    cfg = tmp_path / f"{command}.cfg"
    cfg.write_text(text)
    out = tmp_path / f"out_{command}"
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_config():
    assert parse_config("# c\n a = 1 \n\nb=x # trailing\n") == {"a": "1", "b": "x"}
    for bad in ("novalue", "= 3", "a = ", "a = 1\na = 2"):
        with pytest.raises(ConfigParseError):
            parse_config(bad)


def test_norms_command(tmp_path):
    write_tensor(ones_minus_identity(4), tmp_path / "A.txt")
    code, out = run(tmp_path, "norms", f"tensor = {tmp_path / 'A.txt'}\nq = 2\n")
    assert code == 0
    rows = read_rows(out / "norms.csv")
    assert rows[0] == ["decomposition", "representative", "partitions", "value", "method"]
    assert len(rows) - 1 == 9  # decomposition classes of partitions of [4] with q = 2
    assert sum(int(r[2]) for r in rows[1:]) == 15
    result = json.loads((out / "result.json").read_text())
    assert result["classes"] == 9
    assert (out / "plot.csv").exists()


def test_verify_command_is_deterministic(tmp_path):
    text = "dist = weibull:0.5\nN = 100000\nq = 4\nseed = 7\nn = 10\n"
    code, out = run(tmp_path, "verify", text)
    assert code == 0
    rows = read_rows(out / "tail.csv")
    assert rows[0] == ["t", "empirical_survival", "bound_at_C"]
    result = json.loads((out / "result.json").read_text())
    assert result["minimal_C"] > 0 and result["seed"] == 7
    first = (out / "result.json").read_bytes()
    code, out2 = run(tmp_path, "verify", text)
    assert (out2 / "result.json").read_bytes() == first
    code, out3 = run(tmp_path, "verify", text, "--seed", "8")
    assert json.loads((out3 / "result.json").read_text())["seed"] == 8


def test_bound_command(tmp_path):
    write_tensor(ones_minus_identity(5), tmp_path / "A.txt")
    code, out = run(tmp_path, "bound", f"tensor = {tmp_path / 'A.txt'}\nq = 2\nM = 1\n")
    assert code == 0
    result = json.loads((out / "result.json").read_text())
    assert len(result["terms"]) == 4
    assert {r["source"] for r in result["terms"]} == {"hanson_wright"}
    assert len(read_rows(out / "tail.csv")) == 201


def test_clt_and_orlicz_commands(tmp_path):
    code, out = run(tmp_path, "clt", "graph = complete\nn = 16\ndist = poisson:1\nreps = 2000\n")
    assert code == 0
    assert "ks" in json.loads((out / "result.json").read_text())
    code, out = run(tmp_path, "orlicz", "dist = exponential\nN = 1000\n")
    assert code == 0
    assert json.loads((out / "result.json").read_text())["exact"] == pytest.approx(2.0)


def test_missing_tensor_names_key(tmp_path, capsys):
    code, _ = run(tmp_path, "norms", "tensor = nowhere.txt\n")
    assert code == EXIT_VALIDATION
    assert "tensor" in capsys.readouterr().err


@pytest.mark.parametrize(
    "command, text, key",
    [
        ("verify", "dist = weibull:0.5\nN = 100\nq = 1\n", "N"),
        ("verify", "dist = cauchy\nq = 1\n", "dist"),
        ("verify", "dist = gaussian\nq = 1\nalpha = 1\n", "q"),
        ("clt", "graph = complete\nn = 5\ndist = gaussian\n", "dist"),
        ("orlicz", "dist = gaussian\nbogus = 1\n", "bogus"),
        ("norms", "command = verify\ntensor = x\n", "command"),
    ],
)
def test_validation_errors(tmp_path, capsys, command, text, key):
    code, _ = run(tmp_path, command, text)
    assert code == EXIT_VALIDATION
    assert key in capsys.readouterr().err


def test_parse_error_exit(tmp_path):
    code, _ = run(tmp_path, "norms", "garbage line\n")
    assert code == EXIT_PARSE
    assert main(["norms", "--config", str(tmp_path / "absent.cfg")]) == EXIT_PARSE


def test_bad_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("TOOL_THREADS", "zero")
    code, _ = run(tmp_path, "orlicz", "dist = gaussian\n")
    assert code == EXIT_VALIDATION


def test_csv_emission(tmp_path):
    write_csv(tmp_path / "empty.csv", ["a", "b"], [])
    assert (tmp_path / "empty.csv").read_text() == "a,b\n"
    assert _cell(0.1) == "0.10000000000000001"
    b = hanson_wright(ones_minus_identity(5), 1.0, q=2)
    recs = b.to_records()
    write_csv(tmp_path / "t1.csv", list(recs[0]), [list(r.values()) for r in recs])
    write_csv(tmp_path / "t2.csv", list(recs[0]), [list(r.values()) for r in recs])
    assert len(read_rows(tmp_path / "t1.csv")) == 5
    assert (tmp_path / "t1.csv").read_bytes() == (tmp_path / "t2.csv").read_bytes()

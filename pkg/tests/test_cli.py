import json
import math
import subprocess
import sys

from kgcodec.cli import main, parse_source
from kgcodec.numeric_core import checksum64, read_bit_file, seeded_bits, write_bit_file

MIX = '{"kind": "savings", "inner": {"kind": "mixture", "members": [{"kind": "kt"}, {"kind": "bias", "beta": "2/3"}]}}'


def test_encode_decode_round_trip(tmp_path, capsys):
    r = tmp_path / "r.txt"
    trace = tmp_path / "trace.csv"
    assert main(["encode", "--source", "seeded:42", "--n", "300", "--martingale", MIX,
                 "--output", str(r), "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert "n_i=300 k_i=473" in out
    assert len(read_bit_file(r)) == 473
    assert len(trace.read_text().splitlines()) == 1 + 24
    side = json.loads((tmp_path / "r.txt.sum").read_text())
    assert side["payload_checksum"] == checksum64(seeded_bits(42, 300))

    x = tmp_path / "x.txt"
    assert main(["decode", "--input", str(r), "--martingale", MIX, "--output", str(x)]) == 0
    assert x.read_bytes() == (seeded_bits(42, 300) + "\n").encode()
    line = capsys.readouterr().out
    assert "u_n=473" in line and "ok" in line


def test_encode_from_file(tmp_path):
    src = tmp_path / "in.bin"
    write_bit_file(src, seeded_bits(3, 50), packed=True)
    assert main(["encode", "--input", str(src), "--output", str(tmp_path / "r")]) == 0
    assert main(["decode", "--input", str(tmp_path / "r"), "--output", str(tmp_path / "x")]) == 0
    assert read_bit_file(tmp_path / "x") == seeded_bits(3, 50)


def test_non_positive_martingale_fails(tmp_path, capsys):
    code = main(["encode", "--source", "seeded:1", "--n", "30", "--output", str(tmp_path / "r"),
                 "--martingale", '{"kind": "allin", "target": "111"}'])
    assert code != 0
    assert "capital" in capsys.readouterr().err


def test_corrupted_codeword_detected(tmp_path):
    r = tmp_path / "r"
    assert main(["encode", "--source", "seeded:5", "--n", "100", "--output", str(r)]) == 0
    bits = read_bit_file(r)
    flipped = bits[:40] + ("1" if bits[40] == "0" else "0") + bits[41:]
    write_bit_file(r, flipped)
    assert main(["decode", "--input", str(r), "--output", str(tmp_path / "x")]) != 0


def test_hybrid_on_zeros(tmp_path, capsys):
    y = tmp_path / "y"
    report = tmp_path / "rep.csv"
    assert main(["hybrid", "--source", "zeros", "--schedule", "2,7,81,10000", "--describer",
                 "runlength", "--output", str(y), "--trace", str(report)]) == 0
    out = capsys.readouterr().out
    s_last = float(out.split("s_last=")[1].split()[0])
    assert s_last <= 0.05
    layout = json.loads((tmp_path / "y.layout.json").read_text())
    assert layout["checkpoints"] == [2, 7, 81, 10000]
    assert report.read_text().splitlines()[0] == "n,used,ratio"


def test_pipeline_command(capsys):
    assert main(["pipeline", "--source", "zeros", "--schedule", "2,7,81,10000",
                 "--describer", "runlength", "--tolerance", "0.1"]) == 0
    assert "final_ratio=0.0" in capsys.readouterr().out


def test_fs_flags_oscillation(capsys):
    cps = ",".join(str(math.factorial(k)) for k in (7, 8, 9, 10))
    assert main(["fs", "--source", "oscillating", "--checkpoints", cps, "--gap", "0.7"]) == 0
    assert "oscillating=True" in capsys.readouterr().out


def test_fs_transducer_checks(tmp_path, capsys):
    out = tmp_path / "freq.csv"
    assert main(["fs", "--source", "seeded:3", "--transducer", "parity", "--steps", "100000",
                 "--output", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "n,symbol,empirical,predicted"
    # a tolerance nobody can meet fails the run
    assert main(["fs", "--source", "seeded:3", "--transducer", "parity", "--steps", "1000",
                 "--tolerance", "0.0000001"]) == 1


def test_fs_tolerance_env(monkeypatch, capsys):
    monkeypatch.setenv("KGC_DEFAULT_TOLERANCE", "0.2")
    assert main(["fs", "--source", "champernowne", "--transducer", "identity", "--steps", "5000"]) == 0
    assert "limit=0.2" in capsys.readouterr().out


def test_validate(capsys):
    assert main(["validate", "--martingale",
                 '{"kind": "faulty", "inner": {"kind": "uniform"}, "violate_at": 3}']) == 1
    assert "length 3" in capsys.readouterr().out
    assert main(["validate", "--martingale", MIX, "--steps", "8"]) == 0


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "validate", "martingale": {"kind": "kt"}, "steps": 6}))
    assert main(["validate", "--config", str(cfg)]) == 0
    cfg.write_text(json.dumps({"martingale": {"kind": "kt"}, "colour": "red"}))
    assert main(["validate", "--config", str(cfg)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_bad_inputs(tmp_path):
    assert main(["validate", "--martingale", '{"kind": "bias", "beta": "2"}']) == 2
    assert main(["hybrid", "--source", "nowhere", "--schedule", "4"]) == 2
    assert main(["decode", "--input", str(tmp_path / "missing"), "--output", str(tmp_path / "x"),
                 "--n", "3"]) == 2


def test_parse_source():
    assert parse_source("seeded:9").prefix(20) == seeded_bits(9, 20)
    assert parse_source("seeded", seed=9).prefix(20) == seeded_bits(9, 20)
    assert parse_source("ones").prefix(3) == "111"
    assert parse_source("champernowne").prefix(5) == "11011"


def test_reruns_are_identical(tmp_path):
    for k in (1, 2):
        assert main(["encode", "--source", "seeded:8", "--n", "200",
                     "--output", str(tmp_path / f"r{k}"), "--trace", str(tmp_path / f"t{k}")]) == 0
    assert (tmp_path / "r1").read_bytes() == (tmp_path / "r2").read_bytes()
    assert (tmp_path / "t1").read_bytes() == (tmp_path / "t2").read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kgcodec", "validate", "--martingale", '{"kind": "uniform"}'],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("pass")

import json
from fractions import Fraction

from cylpack.cli import EXIT_FAIL, EXIT_OK, EXIT_UNKNOWN, EXIT_USAGE, main, parse_ring_bound, parse_rings
from cylpack.constructions import Packing, write_packing


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def test_ring_bound_parsing():
    assert parse_ring_bound("r0", 8192) == 8192
    assert parse_ring_bound("4r0", 8192) == 4 * 8192
    assert parse_ring_bound("r0+3", 8192) == 8195
    assert parse_ring_bound("17", 8192) == 17
    assert parse_rings("r0..r0+1", 8192) == (8192, 8193)


def test_usage_errors(tmp_path, capsys):
    code, _ = run(capsys, "gen", "--epsilon", "0.1", "--out", tmp_path / "x.jsonl")
    assert code == EXIT_USAGE
    code, _ = run(capsys, "certify", tmp_path / "missing.jsonl", "--out", tmp_path / "c.json")
    assert code == EXIT_USAGE
    code, _ = run(capsys, "gen", "--rings", "10..20", "--out", tmp_path / "x.jsonl")
    assert code == EXIT_USAGE


def test_gen_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run(capsys, "gen", "--rings", "r0..r0+1", "--out", a)[0] == EXIT_OK
    assert run(capsys, "gen", "--rings", "r0..r0+1", "--out", b)[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_certify_ring_packing_ok(tmp_path, capsys):
    pk, cert = tmp_path / "p.jsonl", tmp_path / "c.json"
    run(capsys, "gen", "--rings", "r0..r0+1", "--out", pk)
    code, out = run(capsys, "certify", pk, "--out", cert)
    assert code == EXIT_OK and "status=certified" in out
    d = json.loads(cert.read_text())
    assert d["status"] == "certified"
    assert d["extras"]["packing_hash"] and d["extras"]["config_hash"]
    assert Fraction(d["min_distance_sq"][0]) == 1


def test_certify_perturbed_fails(tmp_path, capsys):
    pk, cert = tmp_path / "p.jsonl", tmp_path / "c.json"
    run(capsys, "gen", "--rings", "r0..r0+2", "--perturb", "r0+1", "--out", pk)
    code, out = run(capsys, "certify", pk, "--strategy", "ring-local", "--dj", "4", "--out", cert)
    assert code == EXIT_FAIL
    assert "witness" in out
    assert json.loads(cert.read_text())["status"] == "refuted"


def test_certify_near_touch_precision(tmp_path, capsys):
    pk = tmp_path / "n.jsonl"
    run(capsys, "gen", "--construction", "near-touch", "--out", pk)
    code, _ = run(capsys, "certify", pk, "--precision-ceiling", "24", "--out", tmp_path / "a.json")
    assert code == EXIT_UNKNOWN
    code, _ = run(capsys, "certify", pk, "--out", tmp_path / "b.json")
    assert code == EXIT_OK


def test_density_ring_summary(tmp_path, capsys):
    pk, out = tmp_path / "p.jsonl", tmp_path / "d.csv"
    run(capsys, "gen", "--rings", "r0..r0", "--out", pk)
    code, text = run(capsys, "density", pk, "--k-max", "11", "--c-points", "9", "--out", out)
    assert code == EXIT_OK
    assert "lower density" in text and "upper density" in text
    lines = out.read_text().splitlines()
    assert any(line.startswith("# config_hash") for line in lines)


def test_density_empty_packing(tmp_path, capsys):
    pk = tmp_path / "e.jsonl"
    write_packing(Packing([], Fraction(1, 2), {"construction": "empty"}), pk)
    code, text = run(capsys, "density", pk, "--out", tmp_path / "e.csv")
    assert code == EXIT_OK and "0.000000" in text


def test_verify_passes_and_reports(tmp_path, capsys):
    rep = tmp_path / "v.json"
    code, text = run(capsys, "verify", "--seed", "1", "--out", rep)
    assert code == EXIT_OK
    data = json.loads(rep.read_text())
    names = [r["name"] for r in data["results"]]
    assert any("delta" in n for n in names)
    assert all(r["passed"] for r in data["results"])


def test_verify_detects_bad_shell_params(capsys):
    code, text = run(capsys, "verify", "--inject-bad-shell")
    assert code == EXIT_FAIL
    assert "FAIL" in text

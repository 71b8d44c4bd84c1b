import csv
import json

from app import verification
from app.cli import main, parse_args
from app.schemas import Verdict, VerificationReport


def read_json(path):
    return json.loads(path.read_text())


def test_build_family_b_writes_manifest_and_tables(tmp_path, capsys):
    assert main(["build", "family-b", "--n-max", "2", "--out", str(tmp_path)]) == 0
    manifest = read_json(tmp_path / "systems.json")
    assert manifest["systems"][0]["name"] == "family-b"
    assert manifest["systems"][0]["params"] == {"n_max": 2}
    assert manifest["run"]["command"] == "build"
    assert (tmp_path / "family-b-Q.csv").exists()
    assert (tmp_path / "family-b-radii.csv").exists()
    assert "built family-b" in capsys.readouterr().out


def test_verify_writes_report(tmp_path):
    assert main(["verify", "tq", "--n", "2", "--m", "2", "--out", str(tmp_path)]) == 0
    report = read_json(tmp_path / "verify-tq.json")
    assert report["verdict"] == "Established"
    assert report["params"] == {"n": 2, "m": 2}
    assert report["run"]["params"] == {"n": 2, "m": 2}


def test_verify_certificate_file(tmp_path):
    assert main(["verify", "cantor-mu", "--levels", "4", "--out", str(tmp_path)]) == 0
    certificate = read_json(tmp_path / "certificate-cantor-mu.json")
    assert certificate["kind"] == "isometry-certificate"


def test_failed_verification_exits_1(tmp_path, monkeypatch):
    failing = VerificationReport(lemma="tq", claim="nothing holds", verdict=Verdict.COUNTEREXAMPLE,
                                 witness={"n": 1})
    monkeypatch.setitem(verification.LEMMAS, "tq", lambda **_: failing)
    assert main(["verify", "tq", "--out", str(tmp_path)]) == 1
    assert read_json(tmp_path / "verify-tq.json")["witness"] == {"n": 1}


def test_probe_dpo_on_the_line(tmp_path):
    assert main(["probe", "dpo", "--system", "line", "--u", "0:3/2", "--samples", "5", "--out", str(tmp_path)]) == 0
    report = read_json(tmp_path / "probe-dpo-line.json")
    assert report["verdict"] == "Established"
    assert report["run"]["system"] == "line"
    assert (tmp_path / "probe-dpo-line-witnesses.csv").exists()


def test_probe_defaults_to_the_cat_map(tmp_path):
    argv = ["probe", "halo", "--point", "1/2,1/2", "--depth", "3", "--out", str(tmp_path)]
    assert main(argv) == 0
    report = read_json(tmp_path / "probe-halo-cat-map.json")
    assert report["metrics"]["branch"] == "i"
    assert report["params"]["rho_schedule"] == ["1/32", "1/128"]


def test_transitivity_trace_is_written(tmp_path):
    argv = ["probe", "transitivity", "--grid", "8", "--steps", "2000", "--trace", "5", "--out", str(tmp_path)]
    assert main(argv) == 0
    report = read_json(tmp_path / "probe-transitivity-cat-map.json")
    assert report["run"]["params"]["trace"] == 5
    with open(tmp_path / "probe-transitivity-cat-map-trace.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [int(row["step"]) for row in rows] == [1, 2, 3, 4, 5]
    assert all(0 <= float(row["x"]) < 1 and row["level"] == "0" for row in rows)


def test_orbit_graph_is_exported(tmp_path):
    assert main(["probe", "orbit", "--point", "1/5,2/5", "--out", str(tmp_path)]) == 0
    graph = read_json(tmp_path / "orbit-cat-map.json")
    assert graph["status"] == "Complete"
    assert [(n["x"], n["y"]) for n in graph["nodes"]] == [("1/5", "2/5"), ("4/5", "3/5")]
    report = read_json(tmp_path / "probe-orbit-cat-map.json")
    assert report["verdict"] == "Established"
    assert report["metrics"]["nodes"] == 2
    with open(tmp_path / "probe-orbit-cat-map-edges.csv", newline="") as handle:
        edges = list(csv.DictReader(handle))
    assert len(edges) == 4
    assert set(edges[0]) == {"from_index", "gen", "exp", "to_index"}
    assert {(e["from_index"], e["exp"], e["to_index"]) for e in edges} == {
        ("0", "1", "1"), ("0", "-1", "1"), ("1", "1", "0"), ("1", "-1", "0")}


def test_bad_input_exits_2(tmp_path, capsys):
    assert main(["build", "nowhere", "--out", str(tmp_path)]) == 2
    assert main(["probe", "dpo", "--system", "nowhere", "--out", str(tmp_path)]) == 2
    assert main(["probe", "wander", "--out", str(tmp_path)]) == 2
    assert main(["verify", "tq", "--n", "many"]) == 2
    assert main(["launch", "tq"]) == 2
    assert "error:" in capsys.readouterr().err


def test_config_file_then_flags(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("# probe settings\nseed = 7\nsystem = line\nsamples = 4\n")
    values = parse_args(["probe", "dpo", "--config", str(config), "--samples", "6"])
    assert values["seed"] == 7
    assert values["system"] == "line"
    assert values["samples"] == 6
    assert values["output_dir"] == "out"

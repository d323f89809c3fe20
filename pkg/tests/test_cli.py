from pathlib import Path

import pytest

from orbitledger.cli import main, mine_bench
from orbitledger.ledger import import_chain

SCENARIOS = sorted((Path(__file__).parents[1] / "src" / "orbitledger" / "scenarios").glob("*.scn"))


def scenario(name: str) -> str:
    return str(next(p for p in SCENARIOS if p.stem == name))


def test_scenarios_bundled():
    assert {p.stem for p in SCENARIOS} >= {"demo_zone", "demo_fork", "demo_mission", "demo_tdrs"}


@pytest.fixture(scope="module")
def zone_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("zone")
    assert main(["run", "--scenario", scenario("demo_zone"), "--out", str(out)]) == 0
    return out


def test_run_writes_artifacts(zone_run):
    names = {p.name for p in zone_run.iterdir()}
    assert {"events.log", "main.chain", "zone_A.chain", "zone_A.status", "summary.txt"} <= names
    assert "violations=0" in (zone_run / "summary.txt").read_text()


def test_validate_ok_and_tampered(zone_run, tmp_path, capsys):
    chain = zone_run / "main.chain"
    assert main(["validate", "--chain", str(chain), "--difficulty", "2"]) == 0
    assert capsys.readouterr().out.strip() == "valid"
    lines = chain.read_text().splitlines()
    fields = lines[1].split("|")
    tx = fields[-1]
    fields[-1] = tx[:-1] + ("0" if tx[-1] != "0" else "1")
    lines[1] = "|".join(fields)
    bad = tmp_path / "bad.chain"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["validate", "--chain", str(bad), "--difficulty", "2"]) == 1
    assert capsys.readouterr().out.startswith("invalid at 1")


def test_validate_wrong_difficulty(zone_run):
    assert main(["validate", "--chain", str(zone_run / "main.chain"), "--difficulty", "3"]) == 1


def test_zone_chain_validates(zone_run):
    assert main(["validate", "--chain", str(zone_run / "zone_A.chain"), "--difficulty", "1"]) == 0


def test_inspect(zone_run, capsys):
    chain = str(zone_run / "zone_A.chain")
    assert main(["inspect", "--chain", chain, "--block", "0"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("block 0") and "ZoneRegistrationToken" in out
    assert main(["inspect", "--chain", chain, "--block", "999"]) == 1
    token_line = next(line for line in out.splitlines() if "token " in line)
    token_id = token_line.split()[1]
    assert main(["inspect", "--chain", chain, "--token", token_id]) == 0
    assert main(["inspect", "--chain", chain, "--token", "00" * 32]) == 1


def test_zone_status_output(capsys):
    assert main(["zone-status", "--scenario", scenario("demo_zone"), "--zone", "A"]) == 0
    out = capsys.readouterr().out
    assert "members=10:1,11:2,12:3,13:4" in out and "intruders=14" in out


def test_lifecycle_status_output(capsys):
    assert main(["lifecycle-status", "--scenario", scenario("demo_mission")]) == 0
    out = capsys.readouterr().out
    assert "current_phase=6" in out and "released=600" in out


def test_mine_bench(capsys):
    assert main(["mine-bench", "--difficulty", "1", "--trials", "20"]) == 0
    assert capsys.readouterr().out.startswith("difficulty=1 trials=20")
    assert all(n >= 1 for n in mine_bench(1, 5))


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["run", "--scenario", "/nonexistent.scn", "--out", "/tmp/x"],
        ["mine-bench", "--difficulty", "17", "--trials", "1"],
        ["mine-bench", "--difficulty", "1", "--trials", "0"],
        ["validate", "--chain", "/nonexistent"],
        ["zone-status", "--scenario", "ZONE", "--zone", "nope"],
    ],
)
def test_usage_errors(argv, tmp_path):
    argv = [scenario("demo_zone") if a == "ZONE" else a for a in argv]
    assert main(argv) == 2


def test_undefined_node_is_config_error(tmp_path):
    scn = tmp_path / "bad.scn"
    scn.write_text(
        "[world]\nseed=1 horizon=10\n[nodes]\nid=1 kind=ground roles=full,miner\n"
        "[events]\ntick=1 type=tx origin=7 via=1 fee=1 text=x\n"
    )
    assert main(["run", "--scenario", str(scn), "--out", str(tmp_path / "o")]) == 2


def test_malformed_chain_file_is_config_error(tmp_path):
    f = tmp_path / "junk.chain"
    f.write_text("hello|world\n")
    assert main(["validate", "--chain", str(f), "--difficulty", "1"]) == 2


def test_seed_override_changes_nothing_structural(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", scenario("demo_fork"), "--out", str(a), "--seed", "3"]) == 0
    assert main(["run", "--scenario", scenario("demo_fork"), "--out", str(b), "--seed", "3"]) == 0
    assert (a / "events.log").read_bytes() == (b / "events.log").read_bytes()
    assert len(import_chain((a / "main.chain").read_text())) >= 2

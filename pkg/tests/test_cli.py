import csv
import json
import subprocess
import sys

import pytest

from bosegas.cache import TableCache
from bosegas.cli import main


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_partition_columns(tmp_path):
    assert main(["partition", "--geometry", "torus:3", "--beta", "1", "--L-list", "8,12,16",
                 "--rho", "critical", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "results.csv")
    assert rows[0] == ["L", "logZ", "local_slope"]
    assert len(rows) == 4 and rows[1][2] == "nan"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    for key in ("command", "config", "code_version", "seed", "rng_algorithm", "wall_time_s"):
        assert key in manifest


@pytest.mark.parametrize("cmd, columns", [
    (["trace", "--geometry", "box:3:dirichlet", "--t-list", "0.1,1"], ["t", "Z", "Z_times_4pi_t_d2"]),
    (["weights", "--geometry", "torus:3", "--L", "6"], ["j", "t", "tilted"]),
    (["pmf", "--geometry", "torus:3", "--L", "6"], ["n", "logp"]),
    (["dickman", "--y-list", "0.5,2"], ["y", "rho", "p1"]),
    (["sample", "--geometry", "torus:3", "--L", "6", "--samples", "3", "--conditioned"],
     ["sample", "total", "n_loops", "largest"]),
])
def test_subcommand_columns(tmp_path, cmd, columns):
    assert main(cmd + ["--out", str(tmp_path)]) == 0
    assert _rows(tmp_path / "results.csv")[0] == columns


def test_seed_reproducible(tmp_path):
    args = ["sample", "--geometry", "torus:3", "--L", "8", "--samples", "20", "--seed", "4"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_paths_written(tmp_path):
    out = tmp_path / "paths.csv"
    assert main(["sample", "--geometry", "torus:3", "--L", "6", "--paths", str(out), "--ds", "0.5",
                 "--out", str(tmp_path)]) == 0
    assert _rows(out)[0][:2] == ["loop_id", "step"]


def test_bad_geometry_exit_2(tmp_path):
    assert main(["pmf", "--geometry", "sphere:3", "--L", "8", "--out", str(tmp_path)]) == 2


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"bogus": 1}')
    assert main(["partition", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_file_used(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"geometry": "torus:3", "L_list": [8, 12, 16]}')
    assert main(["partition", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "results.csv")) == 4


def test_infeasible_density_exit_3(tmp_path):
    assert main(["pmf", "--geometry", "box:3:dirichlet", "--L", "8", "--mu-mode", "solve-to-density",
                 "--out", str(tmp_path)]) == 3


def test_corrupt_cache_exit_5(tmp_path):
    root = tmp_path / "cache"
    assert main(["weights", "--geometry", "torus:3", "--L", "6", "--cache", str(root), "--out", str(tmp_path)]) == 0
    assert main(["cache", "verify", "--cache", str(root)]) == 0
    (key,) = [e["key"] for e in TableCache(root).entries()]
    path = root / f"{key}.f64le"
    data = bytearray(path.read_bytes())
    data[0] ^= 1
    path.write_bytes(bytes(data))
    assert main(["cache", "verify", "--cache", str(root)]) == 5


def test_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bosegas.cli", "dickman", "--y-list", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "results.csv").exists()

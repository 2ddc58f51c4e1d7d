import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from src.core.gaugefield import THETA, Connection, FlatBase
from src.exceptions import ExperimentConfigError
from src.utils import io
from src.utils.initial_data import get_ray, morse_bott_ray, parse_init, product_ray, random_perturbation


def test_snapshot_round_trip_is_exact(tmp_path, random_connection):
    A = random_connection(N=8)
    path = io.write_snapshot(A, tmp_path / "a.json")
    B = io.read_snapshot(path)
    assert B.base == A.base
    assert np.array_equal(B.a, A.a)
    assert io.snapshot_to_text(B) == path.read_text()


def test_snapshot_layout(random_connection):
    data = json.loads(io.snapshot_to_text(random_connection(N=4)))
    assert sorted(data) == sorted(io.SNAPSHOT_KEYS)
    assert len(data["a_x"]) == 16 and len(data["a_x"][0]) == 3


@pytest.mark.parametrize("mutate, key", [
    (lambda d: d.pop("beta"), "beta"),
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d.update(N="4"), "N"),
    (lambda d: d.update(alpha="pi"), "alpha"),
    (lambda d: d.update(a_x=d["a_x"][:-1]), "a_x"),
    (lambda d: d.update(a_y="zeros"), "a_y"),
    (lambda d: d.update(N=3, a_x=d["a_x"][:9], a_y=d["a_y"][:9]), "N"),
])
def test_bad_snapshots_name_the_key(mutate, key):
    data = json.loads(io.snapshot_to_text(Connection.flat(THETA, 4)))
    mutate(data)
    with pytest.raises(ExperimentConfigError) as excinfo:
        io.snapshot_from_dict(data)
    assert excinfo.value.key == key


def test_missing_snapshot_file(tmp_path):
    with pytest.raises(ExperimentConfigError):
        io.read_snapshot(tmp_path / "none.json")


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "out" / "file.txt"
    io.atomic_write_text(target, "one")
    io.atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["file.txt"]


def test_write_results(tmp_path):
    table = pd.DataFrame({"t": [0.0, 0.1], "energy": [1.0 / 3.0, np.float64(0.25)]})
    written = io.write_results(table, {"n": np.int64(2), "ok": np.bool_(True), "v": np.arange(2)},
                               tmp_path / "run.csv")
    assert written["summary"] == tmp_path / "run.json"
    assert json.loads(written["summary"].read_text()) == {"n": 2, "ok": True, "v": [0, 1]}
    lines = written["csv"].read_text().splitlines()
    assert lines[0] == "t,energy"
    assert float(lines[1].split(",")[1]) == 1.0 / 3.0


def test_output_path_defaults_to_results_dir(results_dir):
    assert io.output_path(None, "flow") == results_dir / "flow.csv"
    assert str(io.output_path("x/y.csv", "flow")) == "x/y.csv"


class TestParseInit:
    def test_flat(self):
        A = parse_init("flat", 8, FlatBase(0.5, 1.0))
        assert A.base == FlatBase(0.5, 1.0)
        assert not A.a.any()

    def test_random_is_seeded(self):
        A = parse_init("random:0.1", 8, THETA, seed=5)
        B = parse_init("random:0.1", 8, THETA, seed=5)
        C = parse_init("random:0.1", 8, THETA, seed=6)
        assert np.array_equal(A.a, B.a)
        assert not np.array_equal(A.a, C.a)

    def test_rays(self):
        assert np.array_equal(parse_init("ray:product:0.2", 8).a, product_ray(0.2, 8).a)
        assert np.array_equal(parse_init("ray:morse_bott:0.2", 8).a, morse_bott_ray(0.2, 8).a)

    def test_snapshot(self, tmp_path):
        A = random_perturbation(8, 0.1, seed=2)
        io.write_snapshot(A, tmp_path / "s.json")
        assert np.array_equal(parse_init(f"snapshot:{tmp_path / 's.json'}", 8).a, A.a)

    @pytest.mark.parametrize("spec", ["bogus", "random:big", "ray:spiral:0.1", "ray:product:x"])
    def test_malformed(self, spec):
        with pytest.raises(ExperimentConfigError):
            parse_init(spec, 8)


def test_random_perturbation_amplitude():
    from src.core.lattice import sobolev_norm
    A = random_perturbation(16, 0.3, seed=9, base=FlatBase(np.pi / 2, np.pi / 3))
    assert_allclose(sobolev_norm(A.a, 2, 1), 0.3, rtol=1e-12)


def test_get_ray_unknown():
    with pytest.raises(ExperimentConfigError) as excinfo:
        get_ray("spiral", 8)
    assert excinfo.value.key == "ray"

from __future__ import annotations

import json

import pytest

from isamig import oracle
from isamig.errors import ConfigError, FormatError, IntegrityError, NotFound
from isamig.fleet import (
    Blueprint,
    FleetParams,
    Isa,
    dumps,
    fleet_digest,
    generate_fleet,
    load_fleet,
    loads,
    query_targets,
    save_fleet,
    topo_sort,
)
from isamig.fleet.io import SNAPSHOT_KEYS
from isamig.oracle import DefectClass


def test_generation_is_deterministic():
    a = generate_fleet(seed=7, n_packages=10)
    b = generate_fleet(seed=7, n_packages=10)
    assert dumps(a) == dumps(b)
    assert fleet_digest(a) != fleet_digest(generate_fleet(seed=8, n_packages=10))


def test_snapshot_shape(small_fleet):
    doc = json.loads(dumps(small_fleet))
    assert tuple(sorted(doc)) == tuple(sorted(SNAPSHOT_KEYS))
    ids = [p["id"] for p in doc["packages"]]
    assert ids == sorted(ids)


def test_round_trip(tmp_path, small_fleet):
    path = tmp_path / "f.json"
    save_fleet(small_fleet, path)
    back = load_fleet(path)
    assert back == small_fleet
    assert dumps(back) == path.read_text()


def test_zero_jobs_round_trip(small_fleet):
    from dataclasses import replace

    empty = replace(small_fleet, jobs=())
    assert loads(dumps(empty)) == empty


def test_truncated_file_is_format_error(small_fleet):
    text = dumps(small_fleet)
    with pytest.raises(FormatError) as exc:
        loads(text[: len(text) // 2])
    assert "line" in str(exc.value)


def test_missing_field_is_format_error(small_fleet):
    doc = json.loads(dumps(small_fleet))
    del doc["packages"][0]["owner_id"]
    with pytest.raises(FormatError) as exc:
        loads(json.dumps(doc))
    assert "owner_id" in str(exc.value)


def test_all_mass_on_one_class():
    mix = {c: 0.0 for c in DefectClass}
    mix[DefectClass.IntrinsicUse] = 1.0
    f = generate_fleet(seed=3, n_packages=30, defect_mix=mix, defect_rate=1.0)
    found = oracle.scan_fleet(f)
    assert found and {d.cls for d in found} == {DefectClass.IntrinsicUse}


@pytest.mark.parametrize("mix", [{DefectClass.IntrinsicUse: 0.5}, {"NotAClass": 1.0}])
def test_bad_mix_rejected(mix):
    with pytest.raises(ConfigError):
        generate_fleet(seed=0, n_packages=5, defect_mix=mix)


def test_zero_owners_rejected():
    with pytest.raises(ConfigError):
        generate_fleet(FleetParams(n_owners=0, n_packages=5))


def test_dag_and_topo(small_fleet):
    order = small_fleet.topo_order()
    pos = {p: i for i, p in enumerate(order)}
    for p in small_fleet.packages:
        for d in p.deps:
            assert pos[d] < pos[p.id]
    with pytest.raises(IntegrityError):
        topo_sort({"a": ("b",), "b": ("a",)})


def test_references_resolve(small_fleet):
    small_fleet.validate()
    for p in small_fleet.packages:
        paths = {f.path for f in p.files}
        for t in p.build_targets + p.test_targets:
            assert set(t.srcs) <= paths


def test_query_targets(small_fleet):
    p = next(p for p in small_fleet.packages if p.test_targets)
    q = query_targets(small_fleet, p.id)
    assert q["build_targets"] == [t.id for t in p.build_targets]
    assert q["test_targets"] == [t.id for t in p.test_targets]
    with pytest.raises(NotFound):
        query_targets(small_fleet, "nope")
    no_tests = next((p for p in small_fleet.packages if not p.test_targets), None)
    if no_tests is not None:
        assert query_targets(small_fleet, no_tests.id)["test_targets"] == []


def test_blueprint_keeps_x86():
    with pytest.raises(IntegrityError):
        Blueprint("p", frozenset({Isa.Arm}), {Isa.X86: True}, 10)


def test_some_cell_lacks_arm_or_all_have_it(small_fleet):
    caps = [c.capacity.get(Isa.Arm, 0) for c in small_fleet.cells]
    assert caps[0] > 0
    assert all(v >= 0 for v in caps)


def test_class_histogram_tracks_mix():
    f = generate_fleet(seed=7, n_packages=500)
    found = oracle.scan_fleet(f)
    n = len(found)
    for cls, w in oracle.DEFAULT_DEFECT_MIX.items():
        share = sum(d.cls is cls for d in found) / n
        assert abs(share - w) <= 0.02, cls

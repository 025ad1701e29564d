"""Tests for CSV/YAML ingestion, writers and the fixture catalog."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from app.core.data_loader import (
    FixtureCatalog,
    file_digest,
    load_model,
    load_series,
    load_vehicle_specs,
    resolve_spec,
    save_model,
    save_vehicle_spec,
    write_manifest,
    write_series,
)
from app.core.errors import DataParseError, InvalidProblem
from app.core.types import Position, SeriesKind, VehicleClass


def _write(tmp_path: Path, name: str, lines: list[str]) -> Path:
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_drag_ratio_csv_is_read_with_provenance(dataset_path):
    series = load_series(dataset_path("ldv2_trail"))
    assert series.kind == SeriesKind.DRAG_RATIO
    assert len(series.points) == 20
    assert series.points[0] == (2.0, 0.6626)
    assert series.points[-1] == (40.0, 0.9845)
    assert "2 to 40 m, rounded to 1e-4" in series.source


def test_fuel_ratio_csv_carries_its_speed(dataset_path):
    series = load_series(dataset_path("hdt2_lead_fuel"))
    assert series.kind == SeriesKind.FUEL_RATIO
    assert series.speed_kmh == 100.0
    assert series.points[0] == (4.0, 0.07040205)
    assert "road-test truck at 100 km/h" in series.source


def test_quoted_provenance_may_contain_commas(tmp_path):
    path = _write(tmp_path, "quoted.csv", [
        "gap_m,ratio,provenance",
        '1,0.50,"wind tunnel, run 3"', '2,0.60,"wind tunnel, run 3"',
        '3,0.70,"wind tunnel, run 3"', '4,0.80,"wind tunnel, run 3"',
    ])
    series = load_series(path)
    assert series.points[0] == (1.0, 0.50)
    assert series.source == "quoted.csv (wind tunnel, run 3)"


def test_row_wider_than_the_header_names_its_line(tmp_path):
    path = _write(tmp_path, "wide.csv", ["gap_m,ratio", "1,0.51,0.9", "2,0.61,0.9", "3,0.71,0.9", "4,0.81,0.9"])
    with pytest.raises(DataParseError) as excinfo:
        load_series(path)
    assert excinfo.value.line == 2
    assert excinfo.value.exit_code == 2


def test_unquoted_comma_in_provenance_is_a_parse_error(tmp_path):
    path = _write(tmp_path, "unquoted.csv", [
        "gap_m,fuel_ratio,speed_kmh,provenance",
        "5,0.10,100,road test", "10,0.08,100,road test, second run",
        "15,0.05,100,road test", "20,0.02,100,road test",
    ])
    with pytest.raises(DataParseError) as excinfo:
        load_series(path)
    assert excinfo.value.line == 3


def test_empty_file_is_a_parse_error_on_line_one(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DataParseError) as excinfo:
        load_series(path)
    assert excinfo.value.line == 1
    assert excinfo.value.exit_code == 2


def test_unknown_header_is_a_parse_error_on_line_one(tmp_path):
    path = _write(tmp_path, "bad_header.csv", ["distance,value", "1,0.5"])
    with pytest.raises(DataParseError, match="line 1"):
        load_series(path)


def test_non_numeric_value_names_its_line(tmp_path):
    path = _write(tmp_path, "typo.csv", ["gap_m,ratio", "1,0.50", "2,0.60", "3,O.70", "4,0.80"])
    with pytest.raises(DataParseError) as excinfo:
        load_series(path)
    assert excinfo.value.line == 4


def test_out_of_order_gap_names_its_line(tmp_path):
    path = _write(tmp_path, "order.csv", ["gap_m,ratio", "1,0.50", "3,0.60", "2,0.70", "4,0.80"])
    with pytest.raises(DataParseError) as excinfo:
        load_series(path)
    assert excinfo.value.line == 4
    assert "point 2" in excinfo.value.message


def test_unit_fuel_ratio_is_rejected_at_ingestion(tmp_path):
    path = _write(tmp_path, "saving.csv", [
        "gap_m,fuel_ratio,speed_kmh",
        "5,0.10,100", "10,0.08,100", "15,1.00,100", "20,0.02,100",
    ])
    with pytest.raises(DataParseError) as excinfo:
        load_series(path)
    assert excinfo.value.line == 4
    assert "point 2" in excinfo.value.message


def test_too_few_points_is_a_parse_error(tmp_path):
    path = _write(tmp_path, "short.csv", ["gap_m,ratio", "1,0.5", "2,0.6"])
    with pytest.raises(DataParseError, match="at least 4 points"):
        load_series(path)


def test_mixed_speeds_are_rejected(tmp_path):
    path = _write(tmp_path, "speeds.csv", [
        "gap_m,fuel_ratio,speed_kmh",
        "5,0.10,100", "10,0.08,100", "15,0.05,90", "20,0.02,100",
    ])
    with pytest.raises(DataParseError, match="one speed per file"):
        load_series(path)


def test_written_series_reads_back(tmp_path, dataset_path):
    series = load_series(dataset_path("hdt2_lead_fuel"))
    reread = load_series(write_series(series, tmp_path / "copy.csv"))
    assert reread.points == series.points
    assert reread.speed_kmh == series.speed_kmh


def test_model_yaml_reads_back(tmp_path, ldv2_trail):
    path = save_model(ldv2_trail, tmp_path / "model.yaml", report={"residual_sum_squares": 1e-8})
    assert load_model(path) == ldv2_trail


def test_bad_model_yaml_is_a_parse_error(tmp_path):
    path = _write(tmp_path, "model.yaml", ["model:", "  a: 1.0", "  b: [oops"])
    with pytest.raises(DataParseError):
        load_model(path)
    path = _write(tmp_path, "partial.yaml", ["a: 1.0", "b: 0.5"])
    with pytest.raises(DataParseError, match="position"):
        load_model(path)


def test_single_vehicle_yaml_round_trips(tmp_path, catalog):
    spec = catalog.spec("bus_n_laden")
    path = save_vehicle_spec(spec, tmp_path / "bus.yaml")
    assert load_vehicle_specs(path) == {"bus": spec}
    assert resolve_spec(str(path)) == spec


def test_rolling_constants_default_from_the_configuration(tmp_path, catalog):
    data = catalog.spec("ldv_a").model_dump(mode="json")
    for name in ("rolling_cr", "rolling_c1", "rolling_c2"):
        data.pop(name)
    path = tmp_path / "ldv.yaml"
    path.write_text(json.dumps(data), encoding="utf-8")
    spec = load_vehicle_specs(path)["ldv"]
    assert (spec.rolling_cr, spec.rolling_c1, spec.rolling_c2) == (1.75, 0.0328, 4.575)


def test_catalog_vehicles_and_variants(catalog):
    assert len(catalog.vehicles) == 15
    laden = catalog.spec("hdt_x_laden")
    assert laden.payload_kg == 22161
    assert laden.cd_infinity == catalog.spec("hdt_x").cd_infinity
    assert "payload variant of hdt_x" in laden.provenance
    assert catalog.spec("hdt_z_laden").total_mass_kg == 12864 + 16536
    with pytest.raises(InvalidProblem, match="unknown vehicle"):
        catalog.spec("tesla_semi")


def test_catalog_models_and_platoons(catalog):
    assert len(catalog.models) == 15
    assert set(catalog.platoon_models(VehicleClass.BUS, 2)) == {Position.LEAD, Position.TRAIL}
    four = catalog.platoon_models(VehicleClass.BUS, 4)
    assert {m.platoon_size for m in four.values()} == {3}
    assert catalog.model(VehicleClass.LDV, 3, Position.TRAIL).b == -0.331690
    assert "recomputed" in catalog.errata[(VehicleClass.LDV, 3, Position.TRAIL)]
    with pytest.raises(InvalidProblem):
        catalog.platoon_models(VehicleClass.BUS, 1)


def test_catalog_errata_are_available_before_models_are_touched():
    catalog = FixtureCatalog()
    assert catalog._models is None
    assert (VehicleClass.LDV, 3, Position.TRAIL) in catalog.errata
    assert len(catalog.errata) == 1


def test_catalog_datasets(catalog):
    assert catalog.dataset_names() == [
        "bus2_trail", "hdt2_lead_fuel", "hdt2_trail_fuel", "ldv2_lead", "ldv2_trail", "zero_delta_fuel",
    ]
    with pytest.raises(InvalidProblem, match="unknown dataset"):
        catalog.dataset_path("nope")


def test_catalog_from_another_directory(tmp_path):
    (tmp_path / "vehicles.yaml").write_text("vehicles: {}\n", encoding="utf-8")
    catalog = FixtureCatalog(tmp_path)
    assert catalog.vehicles == {}
    assert catalog.dataset_names() == []


def test_manifest_records_digests(tmp_path, dataset_path):
    output = _write(tmp_path, "out.csv", ["x,y", "1,2"])
    path = write_manifest("fit", [dataset_path("ldv2_trail")], [output], {"tolerance": 1e-10})
    manifest = json.loads(path.read_text(encoding="utf-8"))
    assert path.name == "out.csv.manifest.json"
    assert manifest["command"] == "fit"
    assert manifest["outputs"] == {str(output): file_digest(output)}
    assert manifest["inputs"][str(dataset_path("ldv2_trail"))] == file_digest(dataset_path("ldv2_trail"))
    assert manifest["config"] == {"tolerance": 1e-10}

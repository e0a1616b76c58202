from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from popgrid import io
from popgrid.errors import (
    FormatError,
    GeometryError,
    HeaderOrderWarning,
    LevelMismatchError,
    ParseError,
    PopgridError,
    SchemaError,
    TruncationError,
    ValidationError,
)
from popgrid.geo import TileGrid
from popgrid.poi_filter import TileMask


class TestReadAdminUnits:
    def test_golden(self, data_dir):
        units = io.read_admin_units(data_dir / "admin.geojson", expected_level="circle")
        assert [u.id for u in units] == ["c1", "c2"]
        assert units[0].population == 100.0
        assert units[0].level == io.AdminLevel.CIRCLE
        assert units[0].bbox.max_x == 120.0

    def test_missing_population_names_feature(self, tmp_path, data_dir):
        doc = json.loads((data_dir / "admin.geojson").read_text())
        del doc["features"][1]["properties"]["population"]
        p = tmp_path / "a.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="c2"):
            io.read_admin_units(p)

    def test_malformed_json_reports_line(self, tmp_path):
        p = tmp_path / "bad.geojson"
        p.write_text('{"type": "FeatureCollection",\n  "features": [}')
        with pytest.raises(ParseError, match="line 2"):
            io.read_admin_units(p)

    def test_mixed_levels(self, tmp_path, data_dir):
        doc = json.loads((data_dir / "admin.geojson").read_text())
        doc["features"][1]["properties"]["level"] = "tehsil"
        p = tmp_path / "a.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(LevelMismatchError):
            io.read_admin_units(p)

    def test_expected_level_mismatch(self, data_dir):
        with pytest.raises(LevelMismatchError):
            io.read_admin_units(data_dir / "admin.geojson", expected_level="block")

    def test_negative_population(self, tmp_path, data_dir):
        doc = json.loads((data_dir / "admin.geojson").read_text())
        doc["features"][0]["properties"]["population"] = -5
        p = tmp_path / "a.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            io.read_admin_units(p)

    def test_duplicate_id(self, tmp_path, data_dir):
        doc = json.loads((data_dir / "admin.geojson").read_text())
        doc["features"][1]["properties"]["id"] = "c1"
        p = tmp_path / "a.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="duplicate"):
            io.read_admin_units(p)

    def test_declared_degrees_rejected(self, tmp_path, data_dir):
        doc = json.loads((data_dir / "admin.geojson").read_text())
        doc["coordinate_units"] = "EPSG:4326"
        p = tmp_path / "a.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="degrees"):
            io.read_admin_units(p)

    def test_multipolygon(self, tmp_path):
        doc = {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {"id": "m1", "level": "circle", "population": 7},
                    "geometry": {
                        "type": "MultiPolygon",
                        "coordinates": [
                            [[[0, 0], [10, 0], [10, 10], [0, 10], [0, 0]]],
                            [[[20, 0], [30, 0], [30, 10], [20, 10], [20, 0]]],
                        ],
                    },
                }
            ],
        }
        p = tmp_path / "m.geojson"
        p.write_text(json.dumps(doc))
        (unit,) = io.read_admin_units(p)
        assert len(unit.geometry) == 2
        assert unit.bbox.max_x == 30.0

    def test_city_scale_dataset_accepted(self, tmp_path):
        # a few hundred circle polygons, the size class of a real district
        features = []
        for k in range(867):
            x0 = float((k % 30) * 100)
            y0 = float((k // 30) * 100)
            features.append(
                {
                    "type": "Feature",
                    "properties": {"id": f"circle-{k}", "level": "circle", "population": 1000 + k},
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [
                            [[x0, y0], [x0 + 100, y0], [x0 + 100, y0 + 100], [x0, y0 + 100], [x0, y0]]
                        ],
                    },
                }
            )
        p = tmp_path / "city.geojson"
        p.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
        units = io.read_admin_units(p, expected_level="circle")
        assert len(units) == 867
        assert all(u.level == io.AdminLevel.CIRCLE for u in units)

    def test_round_trip_exact(self, tmp_path, data_dir):
        units = io.read_admin_units(data_dir / "admin.geojson")
        p = tmp_path / "rt.geojson"
        io.write_admin_units(units, p)
        back = io.read_admin_units(p)
        assert len(back) == len(units)
        for a, b in zip(units, back):
            assert a.id == b.id and a.population == b.population and a.level == b.level
            for ga, gb in zip(a.geometry, b.geometry):
                assert ga.exterior == gb.exterior
                assert ga.holes == gb.holes


class TestReadPoi:
    def test_csv(self, data_dir):
        pois = io.read_poi(data_dir / "poi.csv")
        assert len(pois) == 3
        assert pois.points[0].location.x == 45.0
        assert pois.points[1].category == "school"

    def test_geojson(self, data_dir):
        pois = io.read_poi(data_dir / "poi.geojson")
        assert len(pois) == 3
        assert pois.points[2].category == ""

    def test_empty_feature_collection(self, tmp_path):
        p = tmp_path / "e.geojson"
        p.write_text('{"type": "FeatureCollection", "features": []}')
        assert len(io.read_poi(p)) == 0

    def test_header_only_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("x,y,category\n")
        assert len(io.read_poi(p)) == 0

    def test_bad_coordinate_row(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("x,y,category\nabc,4,shop\n")
        with pytest.raises(ValidationError, match="row 1"):
            io.read_poi(p)

    def test_non_point_geometry(self, tmp_path):
        doc = {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {},
                    "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]},
                }
            ],
        }
        p = tmp_path / "l.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            io.read_poi(p)

    def test_bad_csv_header(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("lon,lat\n1,2\n")
        with pytest.raises(SchemaError):
            io.read_poi(p)

    def test_csv_round_trip(self, tmp_path, data_dir):
        pois = io.read_poi(data_dir / "poi.csv")
        p = tmp_path / "rt.csv"
        io.write_poi_csv(pois, p)
        back = io.read_poi(p)
        assert [q.location for q in back] == [q.location for q in pois]
        assert [q.category for q in back] == [q.category for q in pois]


class TestAsciiGrid:
    def test_golden_mask(self, data_dir):
        r = io.read_ascii_grid(data_dir / "mask.asc")
        assert (r.n_cols, r.n_rows) == (8, 8)
        assert r.pixel_size == 15.0
        assert int(r.nodata.sum()) == 2
        # header is read top row first; row 0 of values is the southern row
        assert r.values[0].tolist() == [1, 1, 0, 1, 0, 1, 1, 1]
        binary = io.BinaryRaster.from_raster(r)
        assert int(binary.values.sum()) == 34

    def test_integer_round_trip_exact(self, tmp_path):
        vals = np.array([[1, 0], [0, 1]], dtype=np.float64)
        r = io.Raster(origin_x=0.0, origin_y=0.0, pixel_size=30.0, values=vals)
        p = tmp_path / "g.asc"
        io.write_ascii_grid(r, p)
        back = io.read_ascii_grid(p)
        assert np.array_equal(back.values, vals)
        assert back.origin_x == 0.0 and back.pixel_size == 30.0

    def test_real_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        for i in range(10):
            vals = rng.random((4, 6)) * 10.0 ** rng.integers(-6, 7)
            nd = rng.random((4, 6)) < 0.15
            r = io.Raster(
                origin_x=float(rng.uniform(-1e5, 1e5)),
                origin_y=float(rng.uniform(-1e5, 1e5)),
                pixel_size=float(rng.uniform(0.1, 100)),
                values=np.where(nd, 0.0, vals),
                nodata=nd,
            )
            p = tmp_path / f"g{i}.asc"
            io.write_ascii_grid(r, p)
            back = io.read_ascii_grid(p)
            assert np.array_equal(back.values, r.values)
            assert np.array_equal(back.nodata, r.nodata)
            assert back.origin_x == r.origin_x
            assert back.origin_y == r.origin_y
            assert back.pixel_size == r.pixel_size

    def test_population_grid_round_trip(self, tmp_path):
        grid = TileGrid(origin_x=30.0, origin_y=-60.0, n_cols=3, n_rows=2, tile_size=30.0)
        pg = io.PopulationGrid(grid=grid, values=np.array([[0.1, 2.25, 0.0], [75.0, 25.0, 1e-7]]))
        p = tmp_path / "pop.asc"
        io.write_ascii_grid(pg, p)
        back = io.population_grid_from_raster(io.read_ascii_grid(p))
        assert back.grid.geometry_equal(grid)
        assert np.array_equal(back.values, pg.values)

    def test_integer_values_with_fractional_nodata_value(self, tmp_path):
        nd = np.array([[True, False], [False, False]])
        r = io.Raster(
            origin_x=0.0,
            origin_y=0.0,
            pixel_size=1.0,
            values=np.array([[0.0, 3.0], [1.0, 2.0]]),
            nodata=nd,
            nodata_value=-99.5,
        )
        p = tmp_path / "frac.asc"
        io.write_ascii_grid(r, p)
        back = io.read_ascii_grid(p)
        assert np.array_equal(back.nodata, nd)
        assert np.array_equal(back.values, r.values)

    def test_swapped_header_keys_warn_but_read(self, tmp_path, data_dir):
        lines = (data_dir / "mask.asc").read_text().splitlines()
        lines[0], lines[1] = lines[1], lines[0]  # NROWS before NCOLS
        p = tmp_path / "swapped.asc"
        p.write_text("\n".join(lines) + "\n")
        with pytest.warns(HeaderOrderWarning):
            r = io.read_ascii_grid(p)
        assert (r.n_cols, r.n_rows) == (8, 8)

    def test_missing_header_key(self, tmp_path, data_dir):
        lines = (data_dir / "mask.asc").read_text().splitlines()
        del lines[4]  # CELLSIZE
        p = tmp_path / "m.asc"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match="CELLSIZE"):
            io.read_ascii_grid(p)

    def test_truncated_values(self, tmp_path, data_dir):
        lines = (data_dir / "mask.asc").read_text().splitlines()
        p = tmp_path / "t.asc"
        p.write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(TruncationError):
            io.read_ascii_grid(p)

    def test_extra_values(self, tmp_path, data_dir):
        p = tmp_path / "x.asc"
        p.write_text((data_dir / "mask.asc").read_text() + "1 0 1\n")
        with pytest.raises(TruncationError):
            io.read_ascii_grid(p)

    def test_non_numeric_value(self, tmp_path, data_dir):
        text = (data_dir / "mask.asc").read_text().replace("\n1 1 0 0 1 0 0 1", "\n1 x 0 0 1 0 0 1", 1)
        p = tmp_path / "n.asc"
        p.write_text(text)
        with pytest.raises(FormatError):
            io.read_ascii_grid(p)

    def test_non_integer_ncols(self, tmp_path, data_dir):
        text = (data_dir / "mask.asc").read_text().replace("NCOLS 8", "NCOLS 8.5")
        p = tmp_path / "f.asc"
        p.write_text(text)
        with pytest.raises(FormatError):
            io.read_ascii_grid(p)

    def test_nodata_excluded_from_binary(self, data_dir):
        r = io.read_ascii_grid(data_dir / "mask.asc")
        b = io.BinaryRaster.from_raster(r)
        assert not b.values[b.nodata].any()

    def test_nonbinary_rejected(self, tmp_path):
        r = io.Raster(origin_x=0, origin_y=0, pixel_size=1.0, values=np.array([[0.0, 2.0]]))
        with pytest.raises(ValidationError):
            io.BinaryRaster.from_raster(r)

    def test_tile_mask_raster(self):
        grid = TileGrid(origin_x=0, origin_y=0, n_cols=2, n_rows=2, tile_size=30.0)
        mask = TileMask(grid=grid, retained=np.array([[True, False], [True, True]]))
        r = io.raster_from_tile_mask(mask)
        assert r.values.tolist() == [[1.0, 0.0], [1.0, 1.0]]


class TestGoldenFuzz:
    """Every schema-breaking mutation of a golden file must raise the
    contracted error class."""

    def test_admin_mutations(self, tmp_path, data_dir):
        base = json.loads((data_dir / "admin.geojson").read_text())
        cases = []

        def variant(mutate, expected):
            doc = json.loads(json.dumps(base))
            mutate(doc)
            cases.append((json.dumps(doc), expected))

        variant(lambda d: d["features"][0]["properties"].pop("id"), SchemaError)
        variant(lambda d: d["features"][0]["properties"].pop("level"), SchemaError)
        variant(lambda d: d["features"][0]["properties"].pop("population"), SchemaError)
        variant(lambda d: d["features"][0]["properties"].update(population="lots"), SchemaError)
        variant(lambda d: d["features"][0]["properties"].update(population=-1), ValidationError)
        variant(lambda d: d["features"][0]["properties"].update(level="galaxy"), SchemaError)
        variant(lambda d: d["features"][1]["properties"].update(level="block"), LevelMismatchError)
        variant(lambda d: d["features"][0].update(geometry={"type": "Point", "coordinates": [0, 0]}), SchemaError)
        variant(lambda d: d["features"][0]["geometry"].update(coordinates=[[[0, 0], [1, 1]]]), GeometryError)
        variant(
            lambda d: d["features"][0]["geometry"].update(coordinates=[[[0, 0], ["x", 1], [1, 1], [0, 1]]]),
            ValidationError,
        )
        variant(lambda d: d.update(type="FeatureList"), SchemaError)
        variant(lambda d: d.update(features={}), SchemaError)
        for text, expected in cases:
            p = tmp_path / "fuzz.geojson"
            p.write_text(text)
            with pytest.raises(expected):
                io.read_admin_units(p)
        # truncation makes it unparseable
        p = tmp_path / "fuzz.geojson"
        p.write_text(json.dumps(base)[:-25])
        with pytest.raises(ParseError):
            io.read_admin_units(p)

    def test_mask_mutations(self, tmp_path, data_dir):
        base = (data_dir / "mask.asc").read_text()
        cases = [
            (base.replace("NODATA_VALUE -9999\n", ""), FormatError),
            (base.replace("NCOLS 8", "NCOLS eight"), FormatError),
            (base.replace("CELLSIZE 15.0", "CELLSIZE -15.0"), FormatError),
            ("\n".join(base.splitlines()[:-1]) + "\n", TruncationError),
            (base + "0 1\n", TruncationError),
            (base.replace("NCOLS 8\n", "NCOLS 8\nNCOLS 8\n"), FormatError),
        ]
        for text, expected in cases:
            p = tmp_path / "fuzz.asc"
            p.write_text(text)
            with pytest.raises(expected):
                io.read_ascii_grid(p)

    def test_poi_csv_mutations(self, tmp_path, data_dir):
        base = (data_dir / "poi.csv").read_text()
        cases = [
            (base.replace("x,y,category", "a,b,c"), SchemaError),
            (base.replace("45.0,45.0", "forty,45.0"), ValidationError),
            (base.replace("45.0,45.0,market", "45.0"), SchemaError),
        ]
        for text, expected in cases:
            p = tmp_path / "fuzz.csv"
            p.write_text(text)
            with pytest.raises(expected):
                io.read_poi(p)

    def test_poi_geojson_mutations(self, tmp_path, data_dir):
        base = json.loads((data_dir / "poi.geojson").read_text())
        doc = json.loads(json.dumps(base))
        doc["features"][0]["geometry"]["type"] = "Polygon"
        p = tmp_path / "fuzz.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            io.read_poi(p)
        doc = json.loads(json.dumps(base))
        doc["features"][0]["geometry"]["coordinates"] = ["x", 1]
        p.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            io.read_poi(p)

    def test_every_error_is_a_popgrid_error(self):
        for cls in (SchemaError, ValidationError, FormatError, TruncationError, ParseError):
            assert issubclass(cls, PopgridError)

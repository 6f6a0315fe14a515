import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdc_bench import io
from spdc_bench.config import ConfigError, RunConfig, layout_digest, load_preset, parse_config
from spdc_bench.design import paper_layout
from spdc_bench.montecarlo import run_experiment


def layout_doc(**over):
    doc = paper_layout().to_dict()
    doc.update(over)
    return {"layout": doc, "n_pairs": 1000, "seed": 5}


class TestPresets:
    def test_paper(self):
        cfg = load_preset("paper")
        lay = cfg.resolved_layout
        assert lay.slit_separation == pytest.approx(7.2e-3, rel=1e-12)
        assert lay.source_width == pytest.approx(1.75e-5, rel=1e-3)
        assert lay.crystal_thickness == pytest.approx(0.729e-3, rel=1e-3)
        # x = wd/2s, rounded in the text as "0.73 mm"
        assert round(lay.crystal_thickness * 1e3, 2) == 0.73
        assert cfg.n_pairs == 10_000_000

    def test_threshold(self):
        lay = load_preset("threshold").resolved_layout
        assert lay.phi0 == pytest.approx(9.947e-3, rel=1e-4)

    def test_unknown(self):
        with pytest.raises(ConfigError, match="preset"):
            load_preset("nope")


class TestParse:
    def test_layout_section(self):
        cfg = parse_config(json.dumps(layout_doc()))
        assert cfg.resolved_layout == paper_layout()
        assert cfg.seed == 5 and cfg.workers == 1

    def test_both_sections_conflict(self):
        doc = layout_doc()
        doc["design"] = json.loads(load_preset("paper").to_json())["design"]
        with pytest.raises(ConfigError, match="mutually exclusive"):
            parse_config(json.dumps(doc))

    def test_neither_section(self):
        with pytest.raises(ConfigError, match="required"):
            parse_config('{"seed": 1}')

    def test_zero_width(self):
        with pytest.raises(ConfigError, match=r"\$\.layout.*source_width"):
            parse_config(json.dumps(layout_doc(source_width=0.0)))

    @pytest.mark.parametrize("doc, where", [
        ({"layout": {**paper_layout().to_dict(), "colour": 1}}, r"\$\.layout\.colour"),
        ({**layout_doc(), "extra": 1}, r"\$\.extra"),
        ({**layout_doc(), "mode": {"fast": True}}, r"\$\.mode\.fast"),
    ])
    def test_unknown_keys(self, doc, where):
        with pytest.raises(ConfigError, match=where):
            parse_config(json.dumps(doc))

    def test_missing_key(self):
        doc = layout_doc()
        del doc["layout"]["phi0"]
        with pytest.raises(ConfigError, match=r"\$\.layout\.phi0: missing"):
            parse_config(json.dumps(doc))

    @pytest.mark.parametrize("key, value", [("n_pairs", 0), ("n_pairs", 1.5), ("seed", -1),
                                            ("seed", True), ("workers", -2)])
    def test_bad_run_fields(self, key, value):
        with pytest.raises(ConfigError, match=key):
            parse_config(json.dumps({**layout_doc(), key: value}))

    def test_non_numeric(self):
        with pytest.raises(ConfigError, match="finite number"):
            parse_config(json.dumps(layout_doc(phi0="2e-3")))

    def test_malformed(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config(b"{not json")

    def test_containment_breach_is_config_error(self):
        lay = paper_layout()
        deep = 2 * lay.source_width * lay.slit_distance / lay.slit_separation
        with pytest.raises(ConfigError, match="crystal"):
            parse_config(json.dumps(layout_doc(crystal_thickness=deep)))

    def test_design_section_errors(self):
        doc = json.loads(load_preset("paper").to_json())
        doc["design"]["g"] = -1
        with pytest.raises(ConfigError, match=r"\$\.design\.g"):
            parse_config(json.dumps(doc))

    def test_incoherent_mode(self):
        doc = {**layout_doc(), "mode": {"incoherent_check": True}}
        exp = parse_config(json.dumps(doc)).experiment()
        assert exp.force_both and exp.layout.crystal_thickness == 0


@settings(max_examples=60, deadline=None)
@given(f=st.floats(0.9, 3), g=st.floats(1, 3), h=st.floats(1, 3),
       seed=st.integers(0, 2 ** 64 - 1), n=st.integers(1, 10 ** 9), workers=st.integers(0, 8))
def test_round_trip(f, g, h, seed, n, workers):
    from spdc_bench.design import DesignParams, layout_from_design, phi0_from_fgh
    p = DesignParams(f, g, h)
    lay = layout_from_design(702e-9, phi0_from_fgh(p), p, 0.6)
    cfg = RunConfig(layout=lay, n_pairs=n, seed=seed, workers=workers, output_dir="out")
    back = parse_config(cfg.to_json())
    assert back == cfg
    assert back.digest == cfg.digest
    assert back.to_json() == cfg.to_json()


class TestDigests:
    def test_workers_and_paths_do_not_matter(self):
        cfg = load_preset("paper")
        assert cfg.replace(workers=4, output_dir="elsewhere").digest == cfg.digest
        assert cfg.replace(seed=1).digest != cfg.digest

    def test_layout_digest(self):
        a = paper_layout()
        assert layout_digest(a) == layout_digest(paper_layout())
        assert layout_digest(a) != layout_digest(a.replace(slit_separation=7.1e-3))


@pytest.fixture(scope="module")
def small_run():
    return run_experiment(paper_layout(), 20_000, 9)


class TestHistogramFiles:
    def test_round_trip(self, tmp_path, small_run):
        path = tmp_path / "h.csv"
        io.write_histogram_csv(path, small_run)
        data = io.read_histogram_csv(path)
        np.testing.assert_array_equal(data["bin_center_m"], small_run.bin_centers)
        np.testing.assert_array_equal(data["coinc_B"], small_run.histogram_coinc_B)
        assert path.read_text().splitlines()[0] == ",".join(io.HISTOGRAM_HEADER)

    @pytest.mark.parametrize("text, where", [
        ("a,b\n1,2\n", ":1:"),
        ("bin_center_m,total,coinc_A,coinc_B,no_coinc\n0.0,1,0,1\n", ":2:"),
        ("bin_center_m,total,coinc_A,coinc_B,no_coinc\n0.0,1,0,1,0\n1e-5,x,0,0,0\n", ":3:"),
        ("bin_center_m,total,coinc_A,coinc_B,no_coinc\n", "no data"),
    ])
    def test_malformed(self, tmp_path, text, where):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(io.HistogramFormatError, match=where):
            io.read_histogram_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(io.HistogramFormatError):
            io.read_histogram_csv(tmp_path / "none.csv")

    def test_metadata(self, tmp_path, small_run):
        cfg = RunConfig(layout=paper_layout(), n_pairs=20_000, seed=9)
        io.write_metadata(tmp_path / "m.json", cfg, small_run, {"note": 1})
        meta = io.read_metadata(tmp_path / "m.json")
        assert meta["digest"] == small_run.digest == cfg.digest
        assert meta["layout_digest"] == layout_digest(paper_layout())
        assert meta["counters"] == small_run.counters
        assert meta["config"] == json.loads(cfg.to_json())
        assert meta["note"] == 1

    def test_plot_data_two_columns(self, tmp_path):
        io.write_plot_data(tmp_path / "p.dat", np.arange(5.0), np.ones(5))
        assert np.loadtxt(tmp_path / "p.dat").shape == (5, 2)

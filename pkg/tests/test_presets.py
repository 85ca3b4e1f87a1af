import pytest

from rlfalsify.formula import Always, check_schema, future_reach
from rlfalsify.presets import load_preset, load_property, preset_names, preset_text
from rlfalsify.system import SurrogateAT

AT = SurrogateAT.output_schema


def test_all_presets_present():
    assert set(preset_names()) >= {f"phi{k}" for k in range(1, 10)} | {"unsat"}


@pytest.mark.parametrize("name", [f"phi{k}" for k in range(1, 10)] + ["unsat"])
def test_preset_parses_against_plant_schema(name):
    pf = load_preset(name)
    assert pf.schema.names == AT.names
    psi = pf.life_long()
    assert isinstance(pf.formula, Always) and pf.formula.interval.hi == float("inf")
    check_schema(psi.body, AT)
    assert future_reach(psi.body, 1.0) < float("inf")


def test_parameter_override():
    a, b = load_preset("phi7"), load_preset("phi7", {"vbar": 55.0})
    assert a.params["vbar"] == 80.0 and b.params["vbar"] == 55.0
    assert a.formula != b.formula


def test_unknown_preset_lists_choices():
    with pytest.raises(KeyError, match="phi1"):
        preset_text("phi99")


def test_load_property_prefers_files(tmp_path):
    p = tmp_path / "phi7.stl"
    p.write_text("real v, w, g\nbool g1, g2, g3, g4\nG (v <= 1)\n")
    assert load_property(str(p)).formula != load_preset("phi7").formula
    assert load_property("phi7").formula == load_preset("phi7").formula

import math
import xml.dom.minidom
from pathlib import Path

import pytest

from qglab.floquet import BandStructure, band_structure_borderline, band_structure_kirchhoff, parse_group
from qglab.svg import render_band_svg

GOLDEN = Path(__file__).parent / "golden"


def _svg(text, cutoff=120.0):
    return render_band_svg(band_structure_kirchhoff(parse_group(text), cutoff))


def test_golden_file():
    expected = (GOLDEN / "bands_z_z2_z1.svg").read_text(encoding="utf-8")
    assert _svg("Z x Z_2 x Z_1") == expected


def test_byte_stable():
    assert _svg("Z x Z_3") == _svg("Z x Z_3")


def test_valid_svg_11():
    doc = xml.dom.minidom.parseString(_svg("Z x Z_3"))
    root = doc.documentElement
    assert root.tagName == "svg" and root.getAttribute("version") == "1.1"
    assert root.getAttribute("xmlns") == "http://www.w3.org/2000/svg"


def test_touching_bands_one_rectangle():
    text = _svg("Z x Z_2", 400.0)
    assert text.count("<rect") == 1
    assert text.count("<polygon") == 6          # flat bands at (l pi)^2, l = 1..6


def test_gapped_structure():
    text = _svg("Z x Z_2 x Z_1")
    assert text.count("<rect") == 3 and text.count("<polygon") == 3   # two bands touch at 4 pi^2
    assert ">2</text>" in text                  # multiplicity label r - 1
    assert "gap" not in text


def test_gridlines_at_half_integer_multiples():
    text = _svg("Z", 120.0)
    grid = text.split('<g id="grid"')[1].split("</g>")[0]
    assert grid.count("<line") == int(2 * math.sqrt(120.0) / math.pi)


def test_borderline_title():
    text = render_band_svg(band_structure_borderline(parse_group("Z"), 1.0, 50.0))
    assert "<title>Z borderline c=1</title>" in text


def test_empty_rejected():
    with pytest.raises(ValueError):
        render_band_svg(BandStructure("Z", "kirchhoff", None, (), (), 1.0))

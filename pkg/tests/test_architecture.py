import numpy as np
import pytest

from coldcarve import ir
from coldcarve.carver import carve_architecture, find_anchors, tags_balanced
from coldcarve.errors import NotFound, Unrepairable
from carve_fixtures import ascii_pad

MODEL = ir.sequential("fig", (1, 6, 6), [ir.conv2d(2, 3), ir.relu(), ir.flatten(),
                                         ir.dense(3), ir.softmax()])
XML = ir.serialize_xml(MODEL)


def _embed(text: str) -> bytes:
    return ascii_pad(480) + text.encode("latin-1") + ascii_pad(480)


def test_clean_document_needs_no_repairs():
    got, rep = carve_architecture(_embed(XML))
    assert got == MODEL
    assert rep.xml_found and rep.xml_repairs == [] and rep.xml_offset == 480


def test_corrupted_snippet_is_repaired():
    bad = (XML.replace("<layers>", "<layerS>", 1).replace("precision", "precisioN", 1)
           .replace("<output>", "<mutput>", 1))
    got, rep = carve_architecture(_embed(bad))
    assert got == MODEL
    pairs = {(r.original, r.repaired) for r in rep.xml_repairs}
    assert ("<layerS>", "<layers>") in pairs
    assert ("<mutput>", "<output>") in pairs
    assert any(o.startswith("precisioN") for o, _ in pairs)


def test_corrupted_value_and_type_are_repaired():
    bad = XML.replace('"FP32"', '"FP3\xb2"', 1).replace('type="ReLU"', 'type="ReLV"')
    got, rep = carve_architecture(_embed(bad))
    assert got == MODEL and len(rep.xml_repairs) >= 2


def test_corrupted_anchor_is_still_found():
    bad = XML.replace('<net name="', '<nft name="', 1)
    got, _ = carve_architecture(_embed(bad))
    assert got == MODEL


def test_random_bytes_not_found():
    data = np.random.default_rng(0).integers(0, 256, 1 << 16, dtype=np.uint8).tobytes()
    with pytest.raises(NotFound):
        carve_architecture(data)


def test_truncated_document_unrepairable():
    cut = XML[:len(XML) // 2]
    with pytest.raises(Unrepairable):
        carve_architecture(_embed(cut))


def test_anchor_search_ranks_by_distance():
    data = np.frombuffer(b"xx<net name=\"yy<nek nbme=\"", np.uint8)
    assert find_anchors(data) == [2, 15]


def test_tag_balance():
    assert tags_balanced("<a><b/><c></c></a>")
    assert not tags_balanced("<a><b></a></b>")
    assert not tags_balanced("<a>")

"""Smoke test for the hintgraph_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/hintgraph_py-*.whl
Run from the repository root:
    python python/smoke_test.py
"""

import struct
import tempfile
from pathlib import Path

import hintgraph_py as hg

ROOT = Path(__file__).resolve().parent.parent


def png_size(data):
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    return struct.unpack(">II", data[16:24])


def main():
    src = hg.render_array(7, 2, numbered=True)
    doc = hg.SvgDocument(src)
    s = doc.structure()
    assert s["counts"]["circle"] == 14, s
    assert s["labels"] == [str(i) for i in range(1, 15)]
    assert doc.is_valid() and doc.validate() == []
    assert hg.normalize_svg(doc.normalize()) == doc.normalize()
    w, h = png_size(doc.rasterize(256))
    assert max(w, h) == 256

    clip = hg.SvgDocument((ROOT / "fixtures/svg/viewbox_clip.svg").read_text())
    assert "VIEWBOX_CLIP" in [f["code"] for f in clip.validate()]

    fr = hg.SvgDocument(hg.render_fractions(2, 1, 2))
    assert fr.structure()["counts"]["path"] >= 4

    assert hg.parse_verdict("Yes. Seven rows of two.") == (True, "Seven rows of two.")
    try:
        hg.parse_verdict("The diagram is fine")
    except ValueError:
        pass
    else:
        raise AssertionError("ambiguous verdict accepted")

    assert hg.validate_corpus_file(str(ROOT / "corpus/sample.json")) == []

    md = hg.aggregate([("Divide by 2", [((1.0, 1.0), (1.0, 0.88))])])
    assert "| Divide by 2 | 1.00 | 1.00 | 1.00 | 0.88 |" in md, md

    with tempfile.TemporaryDirectory() as runs:
        cfg = (
            '{"corpus": "%s", "cache_dir": "%s", "runs_dir": "%s", "run_id": "py", "mode": "replay"}'
            % (ROOT / "corpus/sample.json", ROOT / "fixtures/cache", runs)
        )
        run_dir, csv = hg.run(cfg, "csv")
        assert "Divide by 2,1.00,1.00,1.00,0.88" in csv, csv
        assert hg.report(run_dir, "csv") == csv

    try:
        hg.SvgDocument("<svg")
    except hg.HintgraphError:
        pass
    else:
        raise AssertionError("truncated svg parsed")
    print("smoke test passed")


if __name__ == "__main__":
    main()

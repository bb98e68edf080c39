from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from songsieve.annotations import (
    Annotation,
    LabelScheme,
    YoloBox,
    apply_scheme,
    parse_annotations_csv,
    parse_audacity_labels,
    read_annotations_csv,
    read_classes,
    read_yolo_file,
    to_yolo,
    write_annotations_csv,
    write_classes,
    write_yolo_file,
    yolo_label_path,
)
from songsieve.errors import (
    CoordinateOutOfRange,
    DanglingFrequencyRow,
    MalformedRow,
    OutOfRange,
    UnknownLabel,
)


def test_audacity_with_frequency_row():
    text = "12.000000\t15.000000\tTurdus merula\n\\\t1200.0\t8000.0\n"
    (a,) = parse_audacity_labels(text, source_id="f")
    assert (a.start_s, a.end_s, a.label, a.fmin_hz, a.fmax_hz) == (12.0, 15.0, "Turdus merula", 1200.0, 8000.0)
    assert a.source_id == "f"


def test_audacity_mixed_rows():
    text = "1\t2\tA\n3\t4\tB\n\\\t10\t20\n5.5\t6\tC\n"
    anns = parse_audacity_labels(text)
    assert [a.label for a in anns] == ["A", "B", "C"]
    assert anns[0].fmin_hz is None and anns[1].fmin_hz == 10.0


def test_audacity_errors():
    assert parse_audacity_labels("") == []
    with pytest.raises(MalformedRow):
        parse_audacity_labels("5\t4\tX")
    with pytest.raises(MalformedRow, match="f.txt:2"):
        parse_audacity_labels("1\t2\tA\nx\t3\tB\n", source="f.txt")
    with pytest.raises(MalformedRow):
        parse_audacity_labels("1\t2\n")
    with pytest.raises(DanglingFrequencyRow):
        parse_audacity_labels("\\\t1\t2\n")
    with pytest.raises(DanglingFrequencyRow):
        parse_audacity_labels("1\t2\tA\n\\\t1\t2\n\\\t3\t4\n")


def test_binary_scheme():
    anns = [Annotation(0, 1, "Sturnus sp."), Annotation(1, 2, "No Bird")]
    out = apply_scheme(anns, LabelScheme.binary())
    assert [a.label for a in out] == ["Bird"]
    assert apply_scheme([], LabelScheme.binary()) == []


def test_classifier_scheme():
    anns = [Annotation(0, 1, "Fringillidae"), Annotation(1, 2, "Cettia cetti")]
    scheme = LabelScheme.classifier({a.label for a in anns})
    assert [a.label for a in apply_scheme(anns, scheme)] == ["Cettia cetti"]
    assert scheme.classes == ["Cettia cetti"]
    with pytest.raises(UnknownLabel):
        apply_scheme([Annotation(0, 1, "Pica pica")], scheme)
    with pytest.raises(ValueError):
        LabelScheme("classifier", frozenset({"A"}), {}, frozenset())


@given(st.lists(st.sampled_from(["A", "B", "No Bird", "Bird", "Alaudidae", "C"]), max_size=20))
def test_scheme_idempotent(labels):
    anns = [Annotation(0, 1, lab) for lab in labels]
    for scheme in (LabelScheme.binary(), LabelScheme.classifier(labels)):
        once = apply_scheme(anns, scheme)
        assert apply_scheme(once, scheme) == once


def test_class_index_lexicographic():
    scheme = LabelScheme.classifier(["Turdus merula", "Anthus pratensis", "Cettia cetti"])
    assert scheme.class_index("Anthus pratensis") == 0
    assert scheme.class_index("Turdus merula") == 2


@pytest.mark.parametrize(
    "start,end,xc,w",
    [(12, 15, 0.225, 0.05), (0, 60, 0.5, 1.0), (0, 3, 0.025, 0.05)],
)
def test_to_yolo_examples(start, end, xc, w):
    box = to_yolo(Annotation(start, end, "Bird"), 60)
    assert box.x_center == pytest.approx(xc) and box.x_width == pytest.approx(w)
    assert (box.y_center, box.y_height, box.class_idx) == (0.5, 1.0, 0)


def test_to_yolo_out_of_range():
    with pytest.raises(OutOfRange):
        to_yolo(Annotation(50, 61, "Bird"), 60)


def test_yolo_file_format(tmp_path):
    path = write_yolo_file([YoloBox(0, 0.225, 0.5, 0.05, 1.0)], tmp_path / "a.txt")
    assert path.read_text() == "0 0.225000 0.500000 0.050000 1.000000\n"
    empty = write_yolo_file([], tmp_path / "sub" / "b.txt")
    assert empty.exists() and empty.stat().st_size == 0


def test_yolo_read_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 0.5 0.5 0.1\n")
    with pytest.raises(MalformedRow):
        read_yolo_file(p)
    p.write_text("0 0.99 0.5 0.1 1.0\n")
    with pytest.raises(CoordinateOutOfRange):
        read_yolo_file(p)
    p.write_text("a 0.5 0.5 0.1 1.0\n")
    with pytest.raises(MalformedRow):
        read_yolo_file(p)


def test_csv_round_trip(tmp_path):
    anns = [
        Annotation(1.25, 2.5, "Turdus merula", 1200.0, 8000.0, "f1"),
        Annotation(3.0, 4.0, 'Passer sp., "odd"', source_id="f2"),
        Annotation(5.0, 6.0, "No Bird", source_id="f2"),
    ]
    path = write_annotations_csv(anns, tmp_path / "a.csv")
    assert read_annotations_csv(path) == anns
    assert path.read_text().splitlines()[0] == "source_id,start_s,end_s,fmin_hz,fmax_hz,label"


def test_csv_errors():
    with pytest.raises(MalformedRow):
        parse_annotations_csv("source_id,start_s\nf,1\n")
    with pytest.raises(MalformedRow, match=":2"):
        parse_annotations_csv("source_id,start_s,end_s,fmin_hz,fmax_hz,label\nf,2,1,,,A\n", source="x.csv")
    with pytest.raises(MalformedRow):
        parse_annotations_csv("source_id,start_s,end_s,fmin_hz,fmax_hz,label\nf,1,2,100,,A\n")


def test_annotation_invariants():
    with pytest.raises(ValueError):
        Annotation(2, 1, "A")
    with pytest.raises(ValueError):
        Annotation(0, 1, "A", 500, 100)


def test_classes_and_paths(tmp_path):
    path = write_classes(["A", "B"], tmp_path / "classes.txt")
    assert read_classes(path) == ["A", "B"]
    assert yolo_label_path("/a/x/y.wav", "/a", "/l") == tmp_path.__class__("/l/x/y.txt")

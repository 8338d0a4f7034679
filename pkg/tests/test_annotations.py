import pytest

from nnseg.annotations import (
    AnnotationSet,
    parse_annotations,
    read_manifest,
    sample_clips,
    write_annotations,
    write_manifest,
)
from nnseg.segmenter import Event


def ann_file(tmp_path, rows, duration=60.0, name="ann.csv"):
    path = tmp_path / name
    lines = [f"#duration_s={duration}", "subject,coder,label,start_s,end_s"]
    lines += [",".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestParse:
    def test_happy_path(self, tmp_path):
        path = ann_file(tmp_path, [("s1", "a", "nns", 0, 5), ("s1", "a", "nns", 10, 12)])
        ann = parse_annotations(path)
        assert (ann.subject, ann.coder, ann.duration_s) == ("s1", "a", 60.0)
        assert [(e.start_s, e.end_s) for e in ann.with_label("nns")] == [(0.0, 5.0), (10.0, 12.0)]

    def test_same_label_overlap_rejected(self, tmp_path):
        path = ann_file(tmp_path, [("s1", "a", "nns", 0, 5), ("s1", "a", "nns", 4, 8)])
        with pytest.raises(ValueError, match="overlap"):
            parse_annotations(path)

    def test_cross_label_overlap_allowed(self, tmp_path):
        path = ann_file(tmp_path, [("s1", "a", "pacifier", 0, 60), ("s1", "a", "nns", 4, 8)])
        ann = parse_annotations(path)
        assert len(ann.events) == 2

    def test_start_after_end_rejected(self, tmp_path):
        path = ann_file(tmp_path, [("s1", "a", "nns", 5, 5)])
        with pytest.raises(ValueError, match="start"):
            parse_annotations(path)

    def test_event_beyond_duration_rejected(self, tmp_path):
        path = ann_file(tmp_path, [("s1", "a", "nns", 55, 65)])
        with pytest.raises(ValueError, match="duration"):
            parse_annotations(path)

    def test_mixed_subject_rejected(self, tmp_path):
        path = ann_file(tmp_path, [("s1", "a", "nns", 0, 5), ("s2", "a", "nns", 10, 12)])
        with pytest.raises(ValueError, match="mixed"):
            parse_annotations(path)

    def test_unknown_label_rejected(self, tmp_path):
        path = ann_file(tmp_path, [("s1", "a", "yawning", 0, 5)])
        with pytest.raises(ValueError, match="label"):
            parse_annotations(path)

    def test_missing_duration_line_rejected(self, tmp_path):
        p = tmp_path / "nodur.csv"
        p.write_text("subject,coder,label,start_s,end_s\ns1,a,nns,0,5\n")
        with pytest.raises(ValueError, match="duration"):
            parse_annotations(p)

    def test_write_parse_round_trip(self, tmp_path):
        ann = AnnotationSet(
            subject="s1",
            coder="a",
            duration_s=120.0,
            events=[
                Event(0.5, 5.25, "nns"),
                Event(10.0, 50.0, "pacifier"),
                Event(20.0, 22.5, "nns"),
            ],
        )
        path = tmp_path / "out.csv"
        write_annotations(ann, path)
        back = parse_annotations(path)
        assert back.subject == ann.subject and back.duration_s == ann.duration_s
        assert [(e.start_s, e.end_s, e.label) for e in sorted(back.events, key=lambda e: e.start_s)] == [
            (0.5, 5.25, "nns"),
            (10.0, 50.0, "pacifier"),
            (20.0, 22.5, "nns"),
        ]


def make_ann(events, duration=400.0):
    return AnnotationSet(subject="s1", coder="a", duration_s=duration, events=events)


class TestSampleClips:
    def test_positive_clips_contained_in_long_event(self):
        ann = make_ann([Event(50.0, 350.0, "nns")])
        manifest = sample_clips(ann, n_pos=80, seed=0)
        assert len(manifest.entries) == 80
        for e in manifest.entries:
            assert e.label == "nns"
            assert 50.0 - 1e-9 <= e.start_s and e.start_s + e.length_s <= 350.0 + 1e-9

    def test_no_events_no_positives(self):
        manifest = sample_clips(make_ann([]), n_pos=10, seed=0)
        assert manifest.entries == []

    def test_determinism(self):
        ann = make_ann([Event(50.0, 350.0, "nns")])
        a = sample_clips(ann, n_pos=10, n_neg=10, seed=42)
        b = sample_clips(ann, n_pos=10, n_neg=10, seed=42)
        assert a.entries == b.entries
        c = sample_clips(ann, n_pos=10, n_neg=10, seed=43)
        assert a.entries != c.entries

    def test_negatives_avoid_nns_and_prefer_pacifier(self):
        ann = make_ann(
            [Event(100.0, 150.0, "nns"), Event(80.0, 300.0, "pacifier")]
        )
        manifest = sample_clips(ann, n_neg=40, seed=1)
        nns = ann.with_label("nns")
        for e in manifest.entries:
            assert e.label == "non-nns"
            lo, hi = e.start_s, e.start_s + e.length_s
            assert not any(ev.start_s < hi - 1e-9 and ev.end_s > lo + 1e-9 for ev in nns)
            assert 80.0 - 1e-9 <= lo and hi <= 300.0 + 1e-9  # inside pacifier use

    def test_mixed_clips_contain_a_boundary(self):
        ann = make_ann([Event(100.0, 150.0, "nns"), Event(210.0, 230.0, "nns")])
        manifest = sample_clips(ann, n_mixed=5, mixed_clip_s=60.0, seed=2)
        assert len(manifest.entries) == 5
        boundaries = [100.0, 150.0, 210.0, 230.0]
        for e in manifest.entries:
            assert e.label == "mixed"
            assert any(e.start_s < b < e.start_s + e.length_s for b in boundaries)

    def test_insufficient_supply_truncates(self):
        # a lone 3 s event cannot host 2.5 s positives at high volume forever;
        # impossible demands produce a short manifest instead of hanging
        ann = make_ann([Event(10.0, 13.0, "nns")], duration=20.0)
        manifest = sample_clips(ann, n_pos=5, n_mixed=3, mixed_clip_s=60.0, seed=3)
        labels = [e.label for e in manifest.entries]
        assert labels.count("mixed") == 0  # 60 s clips cannot fit in 20 s
        assert labels.count("nns") <= 5

    def test_manifest_round_trip(self, tmp_path):
        ann = make_ann([Event(50.0, 350.0, "nns")])
        manifest = sample_clips(ann, n_pos=3, seed=0)
        path = tmp_path / "manifest.csv"
        write_manifest(manifest, path, header_comment="fixture")
        back = read_manifest(path)
        assert [(e.source, e.start_s, e.length_s, e.label) for e in back] == [
            (e.source, e.start_s, e.length_s, e.label) for e in manifest.entries
        ]


class TestValidation:
    def test_events_outside_duration_rejected_at_construction(self):
        with pytest.raises(ValueError):
            make_ann([Event(390.0, 410.0, "nns")])

    def test_overlap_rejected_at_construction(self):
        with pytest.raises(ValueError):
            make_ann([Event(0.0, 10.0, "nns"), Event(5.0, 15.0, "nns")])

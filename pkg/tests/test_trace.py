import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from veg.demos import generate_demo, get_task
from veg.errors import InvalidMeta, TraceParseError, TraceValidationError
from veg.trace import (EntityRecord, TraceFrame, TraceMeta, check_correspondence, encode_trace, make_trace,
                       read_trace, write_trace)


def _frame(t, extra=()):
    ents = [EntityRecord("hand", "hand", (0.0, 0.0, 0.1), finger_gap=0.08),
            EntityRecord("a", "object", (0.1, 0.0, 0.0)),
            EntityRecord("a/p0", "point", (0.1, 0.01, 0.04), parent="a"),
            *extra]
    return TraceFrame(t, tuple(ents))


def _trace(T=3, extra=()):
    return make_trace(TraceMeta(T=T), [_frame(t, extra) for t in range(T)])


def test_empty_trace_is_invalid_meta():
    with pytest.raises(InvalidMeta):
        write_trace(TraceMeta(T=0), [], io.BytesIO())


def test_push_demo_file_has_header_plus_frames(tmp_path):
    demo = generate_demo(get_task("push-straight"))
    n = write_trace(demo.meta, demo.frames, tmp_path / "d.jsonl")
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    assert len(lines) == 31
    assert n == (tmp_path / "d.jsonl").stat().st_size


def test_round_trip_is_structural_identity(tmp_path):
    demo = generate_demo(get_task("stack"))
    write_trace(demo.meta, demo.frames, tmp_path / "s.jsonl")
    back = read_trace(tmp_path / "s.jsonl")
    assert back.meta == demo.meta
    assert len(back.frames) == len(demo.frames)
    for a, b in zip(demo.frames, back.frames):
        assert a.t == b.t and [e.id for e in a.entities] == [e.id for e in b.entities]
        for ea, eb in zip(a.entities, b.entities):
            assert ea.kind == eb.kind and ea.parent == eb.parent and ea.occluded == eb.occluded
            assert ea.position == pytest.approx(eb.position, abs=1e-9)
    # a second write of the parsed trace is byte-identical
    assert encode_trace(back.meta, back.frames) == encode_trace(*read_trace(io.BytesIO(encode_trace(*back))))


def test_pour_trace_has_twenty_frames(tmp_path):
    demo = generate_demo(get_task("pour"))
    write_trace(demo.meta, demo.frames, tmp_path / "p.jsonl")
    assert read_trace(tmp_path / "p.jsonl").T == 20


def test_point_without_parent_rejected():
    bad = EntityRecord("a/p9", "point", (0.0, 0.0, 0.0))
    with pytest.raises(TraceValidationError) as e:
        _trace(extra=(bad,))
    assert e.value.invariant == "point_parent"


def test_non_monotone_t_rejected():
    with pytest.raises(TraceValidationError) as e:
        make_trace(TraceMeta(T=2), [_frame(1), _frame(0)])
    assert e.value.invariant == "monotone_t"


def test_parse_errors_carry_line_numbers():
    text = encode_trace(*_trace()).decode().splitlines()
    text[2] = "{not json"
    with pytest.raises(TraceParseError) as e:
        read_trace(io.StringIO("\n".join(text)))
    assert e.value.line == 3


MUTATIONS = {
    "length": lambda lines: lines[:-1],
    "unique_id": lambda lines: _edit(lines, 1, lambda f: f["entities"].append(dict(f["entities"][1]))),
    "kind": lambda lines: _edit(lines, 1, lambda f: f["entities"][1].update(kind="robot")),
    "finger_gap": lambda lines: _edit(lines, 1, lambda f: f["entities"][1].update(finger_gap=0.02)),
    "kind_consistency": lambda lines: _edit(lines, 2, lambda f: f["entities"][2].update(kind="object", parent=None)),
    "position": lambda lines: _edit(lines, 1, lambda f: f["entities"][0].update(position=[0.0, 1.0])),
}


def _edit(lines, i, fn):
    f = json.loads(lines[i])
    fn(f)
    f["entities"] = [{k: v for k, v in e.items() if v is not None} for e in f["entities"]]
    return lines[:i] + [json.dumps(f)] + lines[i + 1:]


@pytest.mark.parametrize("invariant", sorted(MUTATIONS))
def test_mutated_files_fail_validation(invariant):
    lines = encode_trace(*_trace()).decode().splitlines()
    bad = "\n".join(MUTATIONS[invariant](lines))
    with pytest.raises(TraceValidationError) as e:
        read_trace(io.StringIO(bad))
    assert e.value.invariant == invariant


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1)), min_size=1, max_size=6))
def test_round_trip_property(positions):
    frames = [TraceFrame(t, (EntityRecord("hand", "hand", p, finger_gap=0.05),
                             EntityRecord("o", "object", p))) for t, p in enumerate(positions)]
    meta = TraceMeta(T=len(frames), actor="imitator", task="x")
    back = read_trace(io.BytesIO(encode_trace(meta, frames)))
    for a, b in zip(frames, back.frames):
        assert b["o"].position == pytest.approx(a["o"].position, rel=1e-8, abs=1e-12)


def test_correspondence_report():
    demo = _trace()
    assert not check_correspondence(demo, _trace())
    cl = check_correspondence(demo, _trace(extra=(EntityRecord("zz", "object", (1.0, 1.0, 0.0)),)))
    assert cl.ok and cl.notes and not cl.errors
    missing = make_trace(TraceMeta(T=3), [TraceFrame(t, _frame(t).entities[:1]) for t in range(3)])
    rep = check_correspondence(demo, missing)
    assert not rep.ok and any("'a'" in e for e in rep.errors)

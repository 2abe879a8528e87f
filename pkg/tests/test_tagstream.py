import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from biphoton.tagstream import (BadMagicError, StreamFormatError, TagStream, TruncatedStreamError,
                                UnsupportedVersionError, merge_sorted, parse_bytes, read_csv,
                                read_stream, to_bytes, write_csv, write_stream)


def random_stream(rng, n, nch=4, span=10**12):
    ch = rng.integers(0, nch, n).astype(np.uint8)
    ts = np.sort(rng.integers(0, span, n, dtype=np.uint64))
    return TagStream(ch, ts)


def test_empty_stream_is_header_only(tmp_path):
    path = tmp_path / "empty.bpl"
    assert write_stream(TagStream.empty(), path) == 16
    raw = path.read_bytes()
    assert raw == b"BPL1" + b"\x01\x00" + b"\x00\x00" + b"\x00" * 8
    assert len(read_stream(path)) == 0


def test_single_tag_layout():
    raw = to_bytes(TagStream(np.array([3]), np.array([42])))
    assert len(raw) == 25
    assert raw[8:16] == (1).to_bytes(8, "little")
    assert raw[-9:] == bytes.fromhex("032a00000000000000")


def test_round_trip_million_tags(tmp_path, rng):
    s = random_stream(rng, 1_000_000, nch=256, span=2**64 - 1)
    path = tmp_path / "big.bpl"
    n = write_stream(s, path)
    assert n == 16 + 9 * len(s)
    back = read_stream(path)
    assert np.array_equal(back.channels, s.channels)
    assert np.array_equal(back.timestamps, s.timestamps)


def test_write_to_file_object(rng):
    s = random_stream(rng, 100)
    buf = io.BytesIO()
    write_stream(s, buf)
    buf.seek(0)
    assert read_stream(buf) == s


def test_distinct_parse_errors():
    good = to_bytes(TagStream(np.array([1, 2]), np.array([5, 6])))
    with pytest.raises(BadMagicError):
        parse_bytes(b"BPL2" + good[4:])
    with pytest.raises(UnsupportedVersionError):
        parse_bytes(good[:4] + b"\x02\x00" + good[6:])
    with pytest.raises(TruncatedStreamError):
        parse_bytes(good[:-1])
    with pytest.raises(TruncatedStreamError):
        parse_bytes(good[:10])
    with pytest.raises(StreamFormatError):
        parse_bytes(good + b"\x00")
    with pytest.raises(StreamFormatError):
        parse_bytes(good[:6] + b"\x01\x00" + good[8:])
    # the three named errors are distinct types
    assert len({BadMagicError, UnsupportedVersionError, TruncatedStreamError}) == 3


@given(pos=st.integers(0, 3), val=st.integers(0, 255))
def test_any_magic_mutation_rejected(pos, val):
    good = bytearray(to_bytes(TagStream(np.array([1]), np.array([7]))))
    if good[pos] == val:
        return
    good[pos] = val
    with pytest.raises(BadMagicError):
        parse_bytes(bytes(good))


@given(cut=st.integers(1, 9 * 5 + 15))
def test_any_truncation_rejected(cut):
    good = to_bytes(TagStream(np.arange(5), np.arange(5) * 1000))
    with pytest.raises(TruncatedStreamError):
        parse_bytes(good[:-cut])


@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 2**64 - 1)), max_size=50))
def test_round_trip_property(tags):
    ch = np.array([c for c, _ in tags], dtype=np.uint8)
    ts = np.array([t for _, t in tags], dtype=np.uint64)
    s = TagStream(ch, ts)
    assert parse_bytes(to_bytes(s)) == s


def test_merge_single_is_identity(rng):
    s = merge_sorted(random_stream(rng, 1000))
    assert merge_sorted(s) == s


def test_merge_disjoint_is_concatenation(rng):
    a = random_stream(rng, 500, span=10**6)
    b = TagStream(a.channels, a.timestamps + np.uint64(10**7))
    a, b = merge_sorted(a), merge_sorted(b)
    m = merge_sorted(a, b)
    assert np.array_equal(m.timestamps, np.concatenate([a.timestamps, b.timestamps]))
    assert np.array_equal(m.channels, np.concatenate([a.channels, b.channels]))


def test_merge_equals_sort_of_concatenation(rng):
    parts = [random_stream(rng, n, span=10**6) for n in (40_000, 35_000, 25_000)]
    m = merge_sorted(*parts)
    # comparison-sort oracle with the (timestamp, channel, input index) tie-break
    keyed = sorted((int(t), int(c), i, k)
                   for i, p in enumerate(parts)
                   for k, (c, t) in enumerate(zip(p.channels, p.timestamps)))
    assert np.array_equal(m.timestamps, np.array([x[0] for x in keyed], dtype=np.uint64))
    assert np.array_equal(m.channels, np.array([x[1] for x in keyed], dtype=np.uint8))
    assert m.is_valid()


def test_channel_view_and_select():
    s = TagStream(np.array([0, 1, 0, 1]), np.array([10, 11, 30, 25]))
    assert s.channel(0).tolist() == [10, 30]
    assert s.channel(1).tolist() == [11, 25]
    assert s.is_valid()  # sorted within each channel is enough
    assert not TagStream(np.array([0, 0]), np.array([5, 4])).is_valid()
    sub = s.select(1)
    assert sub.channel_ids() == [1]
    assert s.duration == 21
    assert TagStream(s.channels, s.timestamps, duration_ps=100).duration == 100


def test_csv_round_trip(tmp_path, rng):
    s = merge_sorted(random_stream(rng, 200))
    path = tmp_path / "tags.csv"
    write_csv(s, path)
    assert path.read_text().splitlines()[0] == "channel,timestamp_ps"
    assert read_csv(path) == s


@pytest.mark.parametrize("text", ["channel,timestamp_ps\n1\n", "1,abc\n", "300,5\n", "1,-4\n"])
def test_csv_rejects_bad_rows(text):
    with pytest.raises(StreamFormatError):
        read_csv(io.StringIO(text))


def test_mismatched_arrays_rejected():
    with pytest.raises(ValueError):
        TagStream(np.array([1, 2]), np.array([1]))

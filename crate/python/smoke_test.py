"""Smoke test for the votelab Python module.

Build and install first:

    pip install maturin
    cd crates/python && maturin build --release --auditwheel skip -o ../../target/wheels
    pip install --force-reinstall ../../target/wheels/votelab-*.whl

Then run `python3 python/smoke_test.py` (or `pytest python/smoke_test.py`).
"""

import sys
import tempfile

import votelab

CLOSE = "2021-05-17T08:00:00Z"
GOLDEN_MEANS = ["3/5", "13/20", "1", "9/10"]


def test_methods():
    assert votelab.methods() == ["mv", "cav", "sv", "mbc", "av", "qv", "cumulative"]


def test_question_tally_and_validation():
    q = votelab.Question("q1", ["a", "b", "c"], methods=["mv", "sv", "mbc"])
    assert q.options == ["a", "b", "c"]
    assert q.methods == ["mv", "sv", "mbc"]

    mv = q.tally("mv", [{"single_choice": o} for o in ["a", "b", "a", "c", "a"]])
    assert mv["aggregates"] == ["3", "1", "1"]
    assert mv["ranking"][0] == ["a"]
    assert mv["shares"] == ["60", "20", "20"]

    bad = {"per_option_score": {"a": "3/10", "b": "1", "c": "0"}}
    violations = q.validate("sv", bad)
    assert [v["code"] for v in violations] == ["level_not_admissible"]
    assert q.validate("sv", {"per_option_score": {"a": "2/5", "b": "1", "c": "0"}}) == []
    try:
        q.tally("sv", [bad])
    except ValueError as e:
        assert "ballot 0" in str(e)
    else:
        raise AssertionError("inadmissible level was accepted")

    mbc = q.tally("mbc", [{"ranked_subset": ["b", "a"]}, {"ranked_subset": ["b"]}])
    assert mbc["ranking"][0] == ["b"]

    report = votelab.consistency([mv, q.tally("sv", [{"per_option_score": {"a": "1", "b": "0", "c": "0"}}])])
    assert len(report) == 1
    assert report[0]["methods"] == ["mv", "sv"]


def test_published_goldens():
    assert [r["mean"] for r in votelab.published_consistency()] == GOLDEN_MEANS


def test_platform_pipeline():
    with tempfile.TemporaryDirectory() as d:
        p = votelab.Platform(f"file:{d}")
        seeded = p.seed_covid(seed=7, voters=120)
        assert seeded["campaign_id"] == "cmp-0001"
        assert p.tick(CLOSE) == ["cmp-0001"]

        results = p.results("cmp-0001")
        assert results["interim"] is False
        assert len(results["tallies"]) == 16
        assert [r["mean"] for r in p.consistency("cmp-0001")] == GOLDEN_MEANS

        csv = p.export("cmp-0001", "ballots")
        assert csv.splitlines()[0].startswith("voter_pseudonym,campaign_id")
        assert "@" not in csv

        state = p.state()
        assert state["state_hash"] == state["replayed_state_hash"]
        last = p.last_seq
        del p

        reopened = votelab.Platform(d)
        assert reopened.last_seq == last
        assert reopened.state()["state_hash"] == state["state_hash"]

        try:
            reopened.seed_covid()
        except votelab.VotelabError as e:
            assert "StoreNotEmpty" in str(e)
        else:
            raise AssertionError("seeding a non-empty store succeeded")


if __name__ == "__main__":
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_")]
    failed = 0
    for name, fn in tests:
        try:
            fn()
            print(f"ok   {name}")
        except Exception as e:  # noqa: BLE001
            failed += 1
            print(f"FAIL {name}: {e!r}")
    sys.exit(1 if failed else 0)

import numpy as np
import pytest

from qotp.qsim import NoiseModel, P_SUCCESS
from qotp.tabler import (
    CalibrationEdgeNotFound,
    ClockModel,
    DetectionStream,
    SessionParams,
    SharedTable,
    SharedTableAlice,
    SharedTableBob,
    TableFile,
    estimate_clock_drift,
    find_calibration_edge,
    find_clock_offset,
    generate_tables,
    load_streams,
    load_table,
    match_coincidences,
    reconcile,
    reconcile_session,
    save_streams,
    save_table,
    simulate_session,
)
from qotp.types import TRUTH_TABLES, GateG1, LineStatus, Party

PS_PER_MS = 10**9
PS_PER_S = 10**12


def stream(party, times, channels=None):
    if channels is None:
        channels = np.zeros(len(times), dtype=np.uint8)
    return DetectionStream(party, np.array(times, dtype=np.int64), channels)


def success_rate(alice, bob):
    return float(np.mean(TRUTH_TABLES[alice.gates, bob.inputs] == bob.outputs))


class TestDetectionStream:
    def test_rejects_decreasing_timestamps(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            stream(Party.ALICE, [10, 5])

    def test_records_decode_channels(self):
        bob = stream(Party.BOB, [1, 2, 3], np.array([0, 3, 2], dtype=np.uint8))
        records = bob.bob_records()
        assert [(r.input, r.output) for r in records] == [(0, 0), (1, 1), (1, 0)]
        alice = stream(Party.ALICE, [1, 2], np.array([0, 3], dtype=np.uint8))
        assert [r.gate for r in alice.alice_records()] == [GateG1.CONST1, GateG1.ID]

    def test_window(self):
        s = stream(Party.ALICE, [10, 20, 30, 40])
        assert list(s.window(15, 40).timestamps) == [20, 30]

    def test_save_and_load(self, tmp_path):
        session = simulate_session(SessionParams(pair_rate=2000, duration=0.3, seed=2))
        path = tmp_path / "streams.npz"
        save_streams(path, session.alice, session.bob)
        alice, bob = load_streams(path)
        assert np.array_equal(alice.timestamps, session.alice.timestamps)
        assert np.array_equal(bob.channels, session.bob.channels)
        assert bob.party is Party.BOB


class TestCoincidences:
    def test_simple_matching(self):
        alice = stream(Party.ALICE, [1000, 5000, 9000])
        bob = stream(Party.BOB, [1100, 9050, 20000])
        pairs = match_coincidences(alice, bob, 0, 200)
        assert list(pairs.alice_index) == [0, 2]
        assert list(pairs.bob_index) == [0, 1]

    def test_closest_candidate_wins(self):
        alice = stream(Party.ALICE, [1000, 1150])
        bob = stream(Party.BOB, [1100])
        pairs = match_coincidences(alice, bob, 0, 200)
        assert list(pairs.alice_index) == [1]

    def test_tie_goes_to_earlier_event(self):
        alice = stream(Party.ALICE, [1000, 1200])
        bob = stream(Party.BOB, [1100])
        pairs = match_coincidences(alice, bob, 0, 200)
        assert list(pairs.alice_index) == [0]

    def test_offset_applied(self):
        alice = stream(Party.ALICE, [1000, 2000])
        bob = stream(Party.BOB, [501_000, 502_000])
        assert len(match_coincidences(alice, bob, 0, 100)) == 0
        assert len(match_coincidences(alice, bob, 500_000, 100)) == 2

    def test_empty_stream(self):
        pairs = match_coincidences(stream(Party.ALICE, []), stream(Party.BOB, [1]), 0, 10)
        assert len(pairs) == 0

    @staticmethod
    def crowded_times(seed, offset=500_000):
        """Alice events every ~3 ns on average; most have a jittered Bob partner."""
        rng = np.random.default_rng(seed)
        alice = np.unique(rng.integers(0, 10_000_000, 3_000))
        partners = alice[rng.random(len(alice)) < 0.8]
        partners = partners + np.round(rng.normal(0.0, 400.0, len(partners))).astype(np.int64)
        extra = rng.integers(0, 10_000_000, 500)
        bob = np.unique(np.concatenate([partners, extra])) + offset
        return alice, bob, rng

    def test_swapping_roles_gives_same_pairs(self):
        alice_times, bob_times, _ = self.crowded_times(21)
        alice, bob = stream(Party.ALICE, alice_times), stream(Party.BOB, bob_times)
        forward = match_coincidences(alice, bob, 500_000, 2_000)
        swapped = match_coincidences(
            stream(Party.ALICE, bob_times), stream(Party.BOB, alice_times), -500_000, 2_000
        )
        assert len(forward) > 1_000
        assert set(zip(forward.alice_index, forward.bob_index)) == set(
            zip(swapped.bob_index, swapped.alice_index)
        )

    def test_pairs_do_not_depend_on_event_order_or_channels(self):
        alice_times, bob_times, rng = self.crowded_times(22)
        reference = match_coincidences(
            stream(Party.ALICE, alice_times), stream(Party.BOB, bob_times), 500_000, 2_000
        )
        expected = {(alice_times[a], bob_times[b]) for a, b in zip(reference.alice_index, reference.bob_index)}

        shuffled_a = rng.permutation(alice_times)
        shuffled_b = rng.permutation(bob_times)
        alice = stream(
            Party.ALICE, np.sort(shuffled_a), rng.integers(0, 4, len(shuffled_a)).astype(np.uint8)
        )
        bob = stream(Party.BOB, np.sort(shuffled_b), rng.integers(0, 4, len(shuffled_b)).astype(np.uint8))
        pairs = match_coincidences(alice, bob, 500_000, 2_000)
        assert {
            (alice.timestamps[a], bob.timestamps[b]) for a, b in zip(pairs.alice_index, pairs.bob_index)
        } == expected


class TestClockModel:
    def test_inverse(self):
        model = ClockModel(offset=1000.0, skew_ppm=10.0)
        t = np.array([0.0, 1e12])
        assert model.inverse().to_bob(model.to_bob(t)) == pytest.approx(t, abs=1e-3)
        assert model.to_alice(model.to_bob(t)) == pytest.approx(t, abs=1e-3)

    def test_offset_at(self):
        model = ClockModel(offset=0.0, skew_ppm=5.0)
        assert model.offset_at(1e12) == pytest.approx(5e6)


class TestCalibrationEdge:
    def test_finds_burst_start(self):
        sparse = np.arange(0, 50 * PS_PER_MS, 5 * PS_PER_MS)
        burst = 60 * PS_PER_MS + np.arange(200) * 10**7
        s = stream(Party.ALICE, np.concatenate([sparse, burst]))
        assert find_calibration_edge(s) == 60 * PS_PER_MS

    def test_too_few_events(self):
        with pytest.raises(CalibrationEdgeNotFound):
            find_calibration_edge(stream(Party.BOB, [1, 2]))


class TestSync:
    def setup_method(self):
        self.params = SessionParams(pair_rate=10_000, duration=1.0, clock_offset=-7_654_321, seed=11)
        self.session = simulate_session(self.params)

    def test_find_clock_offset(self):
        offset = find_clock_offset(self.session.alice, self.session.bob)
        assert abs(offset - self.params.clock_offset) < self.params.coincidence_window

    def test_drift_without_skew(self):
        offset = find_clock_offset(self.session.alice, self.session.bob)
        model = estimate_clock_drift(self.session.alice, self.session.bob, offset)
        assert model.skew_ppm == pytest.approx(0.0, abs=0.5)
        assert abs(model.offset - self.params.clock_offset) < self.params.coincidence_window

    def test_drift_of_empty_stream(self):
        model = estimate_clock_drift(stream(Party.ALICE, []), self.session.bob, 42)
        assert model.offset == 42.0
        assert model.skew_ppm == 0.0


def test_reconcile_numbers_confirmed_pairs():
    alice = stream(Party.ALICE, [1000, 2000, 3000], np.array([0, 3, 2], dtype=np.uint8))
    bob = stream(Party.BOB, [1010, 2010, 3010], np.array([1, 2, 3], dtype=np.uint8))
    pairs = match_coincidences(alice, bob, 0, 100)
    alice_table, bob_table = reconcile(alice, bob, pairs, table_start=1500)
    assert list(alice_table.line_ids) == [1, 2]
    assert list(alice_table.gates) == [int(GateG1.ID), int(GateG1.NOT)]
    assert list(bob_table.inputs) == [1, 1]
    assert list(bob_table.outputs) == [0, 1]
    assert alice_table.digest() == bob_table.digest()


class TestReconcileSession:
    def test_offset_recovered(self):
        params = SessionParams(pair_rate=10_000, duration=1.0, clock_offset=123_456_789, seed=5)
        session = simulate_session(params)
        result = reconcile_session(session.alice, session.bob, params)
        assert abs(result.report.offset_ps - params.clock_offset) < params.coincidence_window
        assert result.report.matched_fraction > 0.98
        assert result.report.lines == len(result.alice) == len(result.bob)
        assert result.alice.digest() == result.bob.digest()
        assert success_rate(result.alice, result.bob) == pytest.approx(P_SUCCESS, abs=0.02)

    @pytest.mark.parametrize("clock_offset", [10**12, -(10**12)])
    def test_one_second_offset_recovered(self, clock_offset):
        params = SessionParams(pair_rate=10_000, duration=1.0, clock_offset=clock_offset, seed=12)
        session = simulate_session(params)
        result = reconcile_session(session.alice, session.bob, params)
        assert abs(result.report.offset_ps - clock_offset) < 6_000
        assert abs(result.clock.offset - clock_offset) < 6_000
        assert result.report.matched_fraction > 0.98
        assert result.alice.digest() == result.bob.digest()

    def test_dark_counts_follow_bob_clock(self):
        params = SessionParams(
            duration=1.0,
            clock_offset=3_000_000,
            clock_skew=1_000.0,
            noise=NoiseModel(loss_prob=1.0, dark_count_rate=100_000.0),
            seed=13,
        )
        bob = simulate_session(params).bob
        stop = params.duration * PS_PER_S
        assert len(bob) > 50_000
        assert bob.timestamps.min() >= params.clock_offset
        assert bob.timestamps.max() <= params.clock_offset + stop * 1.001
        # The last dark counts land after the unskewed end of the session.
        assert bob.timestamps.max() > params.clock_offset + stop

    def test_lost_photons_are_dropped(self):
        params = SessionParams(
            pair_rate=10_000, duration=1.0, noise=NoiseModel(loss_prob=0.3), seed=6
        )
        session = simulate_session(params)
        result = reconcile_session(session.alice, session.bob, params)
        assert result.report.matched_fraction == pytest.approx(0.7, abs=0.03)
        assert result.report.lines == pytest.approx(params.expected_table_lines(), rel=0.05)

    @pytest.mark.slow
    def test_clock_skew_tracked(self):
        params = SessionParams(
            pair_rate=10_000,
            duration=3.0,
            clock_offset=-40_000_000,
            clock_skew=5.0,
            seed=8,
        )
        session = simulate_session(params)
        result = reconcile_session(session.alice, session.bob, params)
        assert result.report.skew_ppm == pytest.approx(5.0, abs=0.5)
        assert result.report.matched_fraction > 0.95
        assert success_rate(result.alice, result.bob) == pytest.approx(P_SUCCESS, abs=0.02)


class TestSharedTable:
    def setup_method(self):
        self.alice, self.bob = generate_tables(100, NoiseModel(), np.random.default_rng(0))

    def test_line_ids_start_at_one(self):
        assert self.alice.line_ids[0] == 1
        assert self.alice.line_ids[-1] == 100
        assert self.alice.digest() == self.bob.digest()

    def test_ids_must_increase(self):
        with pytest.raises(ValueError):
            SharedTableAlice([1, 1], [0, 0])

    def test_unknown_line(self):
        with pytest.raises(SharedTable.UnknownLine):
            self.alice.positions([101])
        with pytest.raises(SharedTable.UnknownLine):
            SharedTableAlice([], []).positions([1])

    def test_lifecycle(self):
        self.alice.set_status_by_id([3], LineStatus.PROPOSED)
        self.alice.set_status_by_id([3], LineStatus.CONSUMED)
        assert self.alice.status_of(3) is LineStatus.CONSUMED
        with pytest.raises(SharedTable.LineUnavailable):
            self.alice.set_status_by_id([3], LineStatus.PROPOSED)
        assert self.alice.digest() != self.bob.digest()

    def test_head_and_available(self):
        self.alice.set_status(np.array([0, 1]), LineStatus.DELETED)
        assert self.alice.head() == 2
        assert len(self.alice.available_ids()) == 98
        assert self.alice.count(LineStatus.DELETED) == 2

    def test_delete_between_keeps_other_states(self):
        self.bob.set_status(np.array([5]), LineStatus.PROPOSED)
        deleted = self.bob.delete_available_between(np.array([2, 20]), np.array([8, 22]))
        assert deleted == 7
        assert self.bob.status_of(6) is LineStatus.PROPOSED
        assert self.bob.status_of(3) is LineStatus.DELETED
        assert self.bob.status_of(9) is LineStatus.AVAILABLE

    def test_copy_is_independent(self):
        clone = self.alice.copy()
        clone.set_status(np.array([0]), LineStatus.DELETED)
        assert self.alice.status_of(1) is LineStatus.AVAILABLE

    def test_from_records(self):
        records = [self.bob.record(i) for i in range(len(self.bob))]
        rebuilt = SharedTableBob.from_records(records)
        assert np.array_equal(rebuilt.outputs, self.bob.outputs)
        assert rebuilt.digest() == self.bob.digest()

    def test_generated_success_rate(self):
        alice, bob = generate_tables(50_000, NoiseModel(loss_prob=0.2), np.random.default_rng(1))
        assert len(alice) == len(bob) == 50_000
        assert success_rate(alice, bob) == pytest.approx(P_SUCCESS, abs=0.01)

    def test_loss_leaves_success_rate_unchanged(self):
        lossless = generate_tables(500_000, NoiseModel(), np.random.default_rng(14))
        lossy = generate_tables(500_000, NoiseModel(loss_prob=0.13), np.random.default_rng(15))
        assert abs(success_rate(*lossy) - success_rate(*lossless)) < 0.003

    def test_everything_lost(self):
        with pytest.raises(ValueError):
            generate_tables(10, NoiseModel(loss_prob=1.0), np.random.default_rng(0))


class TestTableFile:
    def test_empty_table_size(self):
        assert len(TableFile.to_bytes(SharedTableAlice([], []))) == 28

    def test_save_and_load(self, tmp_path):
        alice, bob = generate_tables(50, NoiseModel(), np.random.default_rng(3), seed=9)
        alice.set_status(np.array([4]), LineStatus.DELETED)
        save_table(alice, tmp_path / "alice.otpt")
        save_table(bob, tmp_path / "bob.otpt")
        loaded = load_table(tmp_path / "alice.otpt")
        assert isinstance(loaded, SharedTableAlice)
        assert loaded.seed == 9
        assert np.array_equal(loaded.gates, alice.gates)
        assert loaded.status_of(5) is LineStatus.DELETED
        assert isinstance(load_table(tmp_path / "bob.otpt"), SharedTableBob)

    def test_corrupted_body(self):
        data = bytearray(TableFile.to_bytes(SharedTableBob([1, 2], [0, 1], [1, 1])))
        data[30] ^= 0xFF
        with pytest.raises(TableFile.ChecksumFailure):
            TableFile.from_bytes(bytes(data))

    def test_bad_magic_and_version(self):
        data = bytearray(TableFile.to_bytes(SharedTableAlice([1], [2])))
        bad_magic = bytes(b"XXXX" + data[4:])
        with pytest.raises(TableFile.FormatError, match="magic"):
            TableFile.from_bytes(bad_magic)
        data[4] = 9
        with pytest.raises(TableFile.VersionMismatch):
            TableFile.from_bytes(bytes(data))

    def test_truncated(self):
        with pytest.raises(TableFile.Truncated):
            TableFile.from_bytes(b"OTPT")

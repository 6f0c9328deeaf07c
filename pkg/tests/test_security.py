import asyncio
import dataclasses
import math

import numpy as np
import pytest

from qotp.engine import AliceSession, BobSession, execute_batch
from qotp.qsim import NoiseModel, P_SUCCESS
from qotp.security import (
    AttackChannel,
    DeclineTranscripts,
    MIN_DECLINES,
    InsufficientLines,
    SampleTooSmall,
    chsh_from_records,
    chsh_from_table,
    chsh_report,
    collect_declines,
    detection_probability,
    intercept_resend_attack,
    mark_test_lines,
    privacy_audit,
    run_bell_test,
    select_test_lines,
)
from qotp.tabler import generate_tables
from qotp.types import TRUTH_TABLES, LineStatus, MeasBasis
from qotp.wire import AbortReason, QueueTransport, SessionAborted

TSIRELSON = 2 * math.sqrt(2)


def tables(n, noise=None, channel=None, seed=0):
    return generate_tables(n, noise or NoiseModel(), np.random.default_rng(seed), channel=channel)


class TestChsh:
    def test_ideal_table_reaches_tsirelson(self):
        alice, bob = tables(40_000)
        estimate = chsh_from_table(alice, bob)
        assert estimate.s == pytest.approx(TSIRELSON, abs=0.05)
        assert estimate.lines == 40_000
        assert sum(estimate.counts.values()) == 40_000
        assert estimate.violation_sigma > 20

    @pytest.mark.parametrize("visibility", [0.936, 0.955])
    def test_visibility_scales_s(self, visibility):
        alice, bob = tables(40_000, NoiseModel(visibility=visibility))
        assert chsh_from_table(alice, bob).s == pytest.approx(TSIRELSON * visibility, abs=0.05)

    def test_correlator_signs(self):
        alice, bob = tables(40_000, seed=1)
        correlators = chsh_from_table(alice, bob).correlators
        expected = -1 / math.sqrt(2)
        assert correlators["A1_Z"] == pytest.approx(expected, abs=0.04)
        assert correlators["A2_X"] == pytest.approx(-expected, abs=0.04)

    def test_needs_every_setting(self):
        with pytest.raises(InsufficientLines):
            chsh_from_records([0, 0, 1], [0, 0, 0], [1, 0, 1])

    def test_report_verdict(self):
        alice, bob = tables(5000)
        estimate = chsh_from_table(alice, bob)
        assert chsh_report(estimate, 2.5).verdict == "secure"
        assert chsh_report(estimate, 3.0).verdict == "abort"


class TestTestLines:
    def test_seeded_selection(self):
        alice, bob = tables(1000)
        first = select_test_lines(alice, 100, seed=3)
        assert np.array_equal(first, select_test_lines(bob, 100, seed=3))
        assert np.all(np.diff(first.astype(np.int64)) > 0)
        mark_test_lines(alice, bob, first)
        assert alice.count(LineStatus.CONSUMED) == 100
        assert alice.digest() == bob.digest()
        assert not np.isin(select_test_lines(alice, 100, seed=4), first).any()

    def test_too_many_requested(self):
        alice, _ = tables(10)
        with pytest.raises(InsufficientLines):
            select_test_lines(alice, 11, seed=0)


async def bell_test_pair(alice_table, bob_table, count, abort_below=2.5):
    alice_end, bob_end = QueueTransport.pair()
    alice = AliceSession(alice_table, alice_end, np.random.default_rng(0))
    bob = BobSession(bob_table, bob_end)
    return await asyncio.gather(
        run_bell_test(alice, count, seed=5, abort_below=abort_below),
        bob.receive_test_lines(),
    )


@pytest.mark.asyncio
async def test_in_session_bell_test_passes():
    alice, bob = tables(20_000)
    estimate, report = await bell_test_pair(alice, bob, 4000)
    assert estimate.s > 2.5
    assert len(report) == 4000
    assert alice.digest() == bob.digest()
    assert bob.count(LineStatus.CONSUMED) == 4000


@pytest.mark.asyncio
async def test_in_session_bell_test_aborts_under_attack():
    alice, bob = tables(20_000, channel=intercept_resend_attack())
    with pytest.raises(SessionAborted) as excinfo:
        await bell_test_pair(alice, bob, 4000)
    assert excinfo.value.reason is AbortReason.CHSH_FAILURE
    assert not excinfo.value.by_peer


class TestAttacks:
    def test_intercept_resend_always_detected(self):
        report = detection_probability(
            NoiseModel(), intercept_resend_attack(), 2000, 20, rng=np.random.default_rng(1)
        )
        assert report.probability == 1.0
        assert report.mean_s == pytest.approx(math.sqrt(2), abs=0.15)

    def test_fixed_basis_attack(self):
        report = detection_probability(
            NoiseModel(), intercept_resend_attack(MeasBasis.Z), 2000, 10, rng=np.random.default_rng(2)
        )
        assert report.detected == 10
        assert report.attack == "intercept-resend"

    def test_no_attack_passes(self):
        report = detection_probability(
            NoiseModel(visibility=0.955), AttackChannel(), 5000, 20, rng=np.random.default_rng(3)
        )
        assert report.detected == 0
        assert report.mean_s == pytest.approx(TSIRELSON * 0.955, abs=0.05)

    def test_eve_uses_bob_bases_only(self):
        with pytest.raises(ValueError):
            intercept_resend_attack(MeasBasis.A1)


def audited_batch(requests, lines, seed):
    alice, bob = tables(lines, seed=seed)
    rng = np.random.default_rng(seed + 1)
    targets = rng.integers(0, 4, size=requests, dtype=np.uint8)
    inputs = rng.integers(0, 2, size=requests, dtype=np.uint8)
    result = execute_batch(alice, bob, targets, inputs, rng=seed + 2)
    return result, inputs


class TestPrivacyAudit:
    @pytest.fixture(scope="class")
    def batch(self):
        return audited_batch(12_000, 130_000, seed=7)

    def test_declined_outputs_carry_no_information(self, batch):
        result, inputs = batch
        declines = collect_declines(result.alice_log, result.bob_log)
        assert len(declines) == int(result.declines.sum())
        assert np.all(declines.line_input != declines.desired_input)
        report = privacy_audit(declines, result.declines, inputs)
        assert report.declines >= MIN_DECLINES
        assert report.output_agreement == pytest.approx(0.5, abs=0.02)
        assert report.pad_known_agreement == pytest.approx(P_SUCCESS, abs=0.02)

    def test_leaked_pad_is_flagged(self, batch):
        result, inputs = batch
        declines = collect_declines(result.alice_log, result.bob_log)
        # Bob's transcript carries the unpadded outputs
        leaked = dataclasses.replace(declines, line_output=declines.line_output ^ declines.r)
        report = privacy_audit(leaked, result.declines, inputs)
        assert report.output_agreement == pytest.approx(P_SUCCESS, abs=0.02)
        assert report.leaks

    def test_tolerance_is_not_widened(self, batch):
        result, inputs = batch
        declines = collect_declines(result.alice_log, result.bob_log)
        n = len(declines)
        biased = np.arange(n) < int(0.51 * n)
        ideal = TRUTH_TABLES[declines.target, declines.line_input]
        shifted = dataclasses.replace(declines, line_output=np.where(biased, ideal, 1 - ideal).astype(np.uint8))
        report = privacy_audit(shifted, result.declines, inputs)
        assert report.output_agreement == pytest.approx(0.51, abs=1e-3)
        assert report.leaks

    @pytest.mark.slow
    def test_hundred_thousand_declines(self):
        result, inputs = audited_batch(110_000, 1_100_000, seed=11)
        declines = collect_declines(result.alice_log, result.bob_log)
        assert len(declines) >= 100_000
        report = privacy_audit(declines, result.declines, inputs)
        assert report.output_agreement == pytest.approx(0.5, abs=0.005)
        assert report.input_independent
        assert not report.leaks

    def test_sample_too_small(self):
        empty = DeclineTranscripts(*(np.zeros(0, dtype=np.uint8) for _ in range(6)))
        with pytest.raises(SampleTooSmall):
            privacy_audit(empty, [], [])
        short = DeclineTranscripts(*(np.zeros(MIN_DECLINES - 1, dtype=np.uint8) for _ in range(6)))
        with pytest.raises(SampleTooSmall, match="10000"):
            privacy_audit(short, [0, 1], [0, 1])

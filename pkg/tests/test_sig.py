import asyncio

import numpy as np
import pytest
from pydantic import ValidationError

from qotp.engine import AliceSession, BobSession, LoopbackSession
from qotp.OtpConfig import OtpConfig
from qotp.qsim import NoiseModel
from qotp.sig import (
    CheatModel,
    LengthMismatch,
    Signature,
    SignatureFile,
    SignatureParams,
    SigningKey,
    acceptance_rate,
    alice_signing_service,
    bob_request_signature,
    cheat_accept_probability,
    hash_bits,
    histogram_report,
    honest_accept_probability,
    load_signature,
    log_fraction_tail,
    log_fraction_tails,
    log_tail,
    log_tails,
    normal_accept_probability,
    optimize_threshold,
    save_signature,
    sign,
    simulate_signature_runs,
    threshold_count,
    verify,
)
from qotp.tabler import generate_tables
from qotp.types import GateG1
from qotp.wire import AbortReason, QueueTransport, SessionAborted

N, M, TAU, P = 1000, 224, 0.776, 0.831
SMALL = SignatureParams(n=50, m=32, tau=0.6)


def loopback(lines=20_000, seed=0):
    alice, bob = generate_tables(lines, NoiseModel(), np.random.default_rng(seed))
    return LoopbackSession(alice, bob, seed=seed + 1, audit=False)


class TestBinomial:
    def test_threshold_count(self):
        assert threshold_count(1000, 0.776) == 776
        assert threshold_count(10, 0.25) == 3
        assert threshold_count(10, 0.0) == 0
        assert threshold_count(10, 1.0) == 10

    def test_log_tail_edges(self):
        assert log_tail(10, 0.5, 0) == 0.0
        assert log_tail(10, 0.5, 11) == -np.inf
        assert np.exp(log_tail(10, 0.5, 10)) == pytest.approx(0.5**10)

    def test_log_tails_match_scalar(self):
        tails = log_tails(40, 0.7)
        for count in (0, 5, 28, 40):
            assert tails[count] == pytest.approx(log_tail(40, 0.7, count))

    def test_honest_acceptance(self):
        assert honest_accept_probability(N, M, TAU, P) == pytest.approx(0.9987, abs=2e-3)
        assert honest_accept_probability(N, M, TAU, P, continuity=False) == pytest.approx(0.99929, abs=1e-5)

    def test_fraction_tail_sits_between_counts(self):
        discrete = log_tails(N, 0.75)
        smooth = log_fraction_tails(N, 0.75)
        for count in (700, 750, 776, 800):
            assert discrete[count] < smooth[count] < discrete[count - 1]
        assert smooth[0] == 0.0
        assert log_fraction_tail(N, 0.75, TAU) == pytest.approx(smooth[776])
        assert log_fraction_tail(N, 0.75, TAU, continuity=False) == pytest.approx(log_tail(N, 0.75, 776))

    def test_overdispersion_lowers_acceptance(self):
        exact = honest_accept_probability(N, M, TAU, P)
        assert honest_accept_probability(N, M, TAU, P, overdispersion=0.01) < exact

    def test_normal_acceptance(self):
        assert normal_accept_probability(N, M, TAU, P, 0.013) == pytest.approx(0.997, abs=3e-3)
        assert normal_accept_probability(N, M, TAU, P, 0.0) == 1.0

    def test_cheat_acceptance(self):
        cheat = cheat_accept_probability(N, M, TAU, CheatModel(p_honest=P))
        assert cheat == pytest.approx(0.0011, abs=5e-4)
        discrete = cheat_accept_probability(N, M, TAU, CheatModel(p_honest=P), continuity=False)
        assert discrete == pytest.approx(0.00091, abs=2e-5)

    def test_multi_photon_raises_cheat_acceptance(self):
        base = cheat_accept_probability(N, M, TAU, CheatModel(p_honest=P))
        leaky = cheat_accept_probability(
            N, M, TAU, CheatModel(p_honest=P, multi_photon_fraction=0.00097)
        )
        assert base == pytest.approx(0.00107, abs=1e-4)
        assert leaky == pytest.approx(0.00112, abs=1e-4)
        assert leaky > base

    @pytest.mark.parametrize("q0", [0.70, 0.74, 0.76, 0.80])
    def test_symmetric_cheat_is_worst_case(self, q0):
        symmetric = cheat_accept_probability(N, M, TAU, CheatModel(p_honest=P))
        skewed = cheat_accept_probability(N, M, TAU, CheatModel(q0=q0, q1=1.5 - q0, p_honest=P))
        assert skewed < symmetric

    def test_cheat_bound(self):
        with pytest.raises(ValidationError):
            CheatModel(q0=0.8, q1=0.8)
        assert CheatModel(q0=1.0, q1=0.5).effective() == (1.0, 0.5)

    def test_optimal_threshold(self):
        analysis = optimize_threshold(N, M, P)
        assert analysis.tau == pytest.approx(0.776, abs=0.005)
        assert analysis.difference == pytest.approx(0.9976, abs=2e-3)
        assert len(analysis.taus) == len(analysis.honest_curve) == len(analysis.cheat_curve) == N + 1
        assert analysis.honest_curve[0] == pytest.approx(1.0)
        assert optimize_threshold(N, M, P, continuity=False).tau == pytest.approx(0.776)


class TestParams:
    def test_hash_too_short(self):
        with pytest.raises(ValidationError):
            SignatureParams(m=300)
        assert SignatureParams(m=256, hash_algo="sha256").length == 256_000

    def test_unknown_hash(self):
        with pytest.raises(ValidationError, match="Unsupported hash"):
            SignatureParams(hash_algo="md5")

    def test_hash_bits(self):
        bits = hash_bits(b"hello", SMALL)
        assert bits.shape == (32,)
        assert set(np.unique(bits)) <= {0, 1}
        assert np.array_equal(bits, hash_bits(b"hello", SMALL))


class TestSigningKey:
    def test_gates_are_id_or_not(self):
        key = SigningKey.generate(SMALL, seed=1)
        assert key.gates.shape == (32, 50)
        assert set(np.unique(key.gates)) == {int(GateG1.ID), int(GateG1.NOT)}

    def test_expected_outputs(self):
        key = SigningKey.generate(SMALL, seed=1)
        zeros = key.expected_outputs(np.zeros(32, dtype=np.uint8))
        assert np.array_equal(zeros, (key.gates == int(GateG1.NOT)).astype(np.uint8))
        assert np.array_equal(key.expected_outputs(np.ones(32, dtype=np.uint8)), 1 - zeros)


class TestSignAndVerify:
    def test_honest_signature_accepted(self):
        key = SigningKey.generate(SMALL, seed=2)
        signature = sign(b"pay bob 10", SMALL, loopback(), key)
        result = verify(b"pay bob 10", signature, key)
        assert result.accepted
        assert result.min_fraction >= 0.6
        assert len(result.fractions) == 32
        assert np.mean(result.fractions) == pytest.approx(0.854, abs=0.03)

    def test_signature_does_not_transfer(self):
        key = SigningKey.generate(SMALL, seed=3)
        signature = sign(b"pay bob 10", SMALL, loopback(seed=4), key)
        result = verify(b"pay bob 1000", signature, key)
        assert not result.accepted
        assert result.min_fraction < 0.3

    def test_strict_threshold_rejects(self):
        key = SigningKey.generate(SMALL, seed=5)
        signature = sign(b"msg", SMALL, loopback(seed=6), key)
        assert not verify(b"msg", signature, key, tau=0.99).accepted

    def test_exhausted_table(self):
        key = SigningKey.generate(SMALL, seed=7)
        with pytest.raises(Exception, match="ran out of table lines"):
            sign(b"msg", SMALL, loopback(lines=500), key)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            Signature(b"msg", np.zeros(10, dtype=np.uint8), SMALL)


class TestSignatureFile:
    def test_save_and_load(self, tmp_path):
        key = SigningKey.generate(SMALL, seed=8)
        signature = sign(b"file test", SMALL, loopback(seed=9), key)
        path = tmp_path / "msg.otps"
        save_signature(signature, path)
        loaded = load_signature(path, tau=0.6)
        assert loaded.message == b"file test"
        assert np.array_equal(loaded.bits, signature.bits)
        assert verify(loaded.message, loaded, key).accepted

    def test_corruption_detected(self):
        signature = Signature(b"abc", np.ones(SMALL.length, dtype=np.uint8), SMALL)
        data = bytearray(SignatureFile.to_bytes(signature))
        data[-6] ^= 0x01
        with pytest.raises(SignatureFile.FormatError, match="CRC32"):
            SignatureFile.from_bytes(bytes(data))

    def test_bad_magic_and_short(self):
        signature = Signature(b"", np.zeros(SMALL.length, dtype=np.uint8), SMALL)
        data = SignatureFile.to_bytes(signature)
        with pytest.raises(SignatureFile.FormatError, match="magic"):
            SignatureFile.from_bytes(b"XXXX" + data[4:])
        with pytest.raises(SignatureFile.FormatError, match="too short"):
            SignatureFile.from_bytes(data[:5])


async def signing_pair(params, key, message, test_lines=0):
    alice_table, bob_table = generate_tables(30_000, NoiseModel(), np.random.default_rng(11))
    alice_end, bob_end = QueueTransport.pair()
    alice = AliceSession(alice_table, alice_end, np.random.default_rng(12), audit=False)
    bob = BobSession(bob_table, bob_end, audit=False)
    return await asyncio.gather(
        alice_signing_service(alice, key, test_lines=test_lines, test_seed=1),
        bob_request_signature(bob, message, params),
        return_exceptions=True,
    )


@pytest.mark.asyncio
async def test_signing_session_with_bell_test():
    key = SigningKey.generate(SMALL, seed=13)
    outcome, (signature, result) = await signing_pair(SMALL, key, b"over the wire", test_lines=1000)
    assert outcome.verification.accepted
    assert result.accepted
    assert outcome.chsh.s > 2.3
    assert outcome.rounds > 0
    assert verify(b"over the wire", signature, key).accepted


@pytest.mark.asyncio
async def test_signing_session_rejection_aborts():
    strict = SignatureParams(n=50, m=32, tau=0.98)
    key = SigningKey.generate(strict, seed=14)
    outcome, bob_error = await signing_pair(strict, key, b"too strict")
    assert not outcome.verification.accepted
    assert isinstance(bob_error, SessionAborted)
    assert bob_error.reason is AbortReason.THRESHOLD_FAILURE


class TestHistogram:
    def test_report(self):
        runs = np.array([[0.8, 0.85], [0.82, 0.83]])
        report = histogram_report(runs, n=1000, bins=4)
        assert report.runs == 2
        assert report.bits == 2
        assert sum(report.counts) == 4
        assert report.cumulative[-1] == pytest.approx(1.0)
        assert report.min_fraction == 0.8
        assert report.mean == pytest.approx(0.825)

    def test_constant_runs(self):
        report = histogram_report(np.full((3, 4), 0.9), n=100)
        assert report.std == 0.0
        assert sum(report.counts) == 12

    def test_empty(self):
        with pytest.raises(ValueError):
            histogram_report(np.empty((0, 0)), n=10)

    def test_binomial_runs_match_calibration(self):
        params = SignatureParams()
        fractions = simulate_signature_runs(50, params, NoiseModel(visibility=0.936), seed=1)
        report = histogram_report(fractions, params.n)
        assert fractions.shape == (50, 224)
        assert report.mean == pytest.approx(0.831, abs=0.004)
        assert report.std == pytest.approx(0.0118, abs=0.001)
        assert acceptance_rate(fractions, params) >= 0.96

    def test_drift_widens_the_spread(self):
        params = SignatureParams()
        noise = NoiseModel(visibility=0.936, drift_amplitude=0.015, drift_period=20)
        fractions = simulate_signature_runs(50, params, noise, seed=2)
        report = histogram_report(fractions, params.n)
        assert report.std > report.binomial_sigma

    @pytest.mark.slow
    def test_full_protocol_runs(self):
        params = SignatureParams(n=50, m=16, tau=0.6)
        fractions = simulate_signature_runs(3, params, NoiseModel(), seed=3, full_protocol=True)
        assert fractions.shape == (3, 16)
        assert acceptance_rate(fractions, params) == 1.0

    @pytest.mark.slow
    def test_fifty_full_sessions_are_accepted(self):
        params = SignatureParams()
        noise = OtpConfig.parse_preset("paper-v0.936")
        fractions = simulate_signature_runs(50, params, noise, seed=4, full_protocol=True)
        report = histogram_report(fractions, params.n)
        assert fractions.shape == (50, 224)
        assert acceptance_rate(fractions, params) == 1.0
        assert report.mean == pytest.approx(0.831, abs=0.004)

    @pytest.mark.slow
    def test_drift_preset_spread(self):
        params = SignatureParams()
        noise = OtpConfig.parse_preset("lab-v0.936-drift")
        fractions = simulate_signature_runs(50, params, noise, seed=5, full_protocol=True)
        report = histogram_report(fractions, params.n)
        assert report.mean == pytest.approx(0.831, abs=0.004)
        assert 0.012 <= report.std <= 0.014
        assert report.std > report.binomial_sigma

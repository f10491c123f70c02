import numpy as np
import pytest

from partial_sic.channel import make_channel, noise_variance_for_snr, synthesize_received
from partial_sic import sic
from partial_sic.em import ChannelEstimate, EmResult, em_decode_user
from partial_sic.errors import ConfigurationError
from partial_sic.framing import (
    PilotConfig, SoftSymbolEstimate, make_layout, modulate_and_frame,
)
from partial_sic.sic import (
    EBarTable, ReceiverConfig, StageState, UserLink, cancellation_diagnostics,
    compute_alpha, compute_residual, decoding_order, default_table, estimate_e_bar,
    estimated_sinr_db, run_multistage_sic,
)
from partial_sic.turbo import CodeConfig, encode


def soft_of(x, pilot_mask=None, second=None):
    x = np.asarray(x, dtype=np.complex128)
    mask = np.zeros(x.size, dtype=bool) if pilot_mask is None else pilot_mask
    return SoftSymbolEstimate(x, np.ones(x.size) if second is None else second, mask)


def state(u, h_hat, x_hat, alpha, stage=0):
    return StageState(stage, u, alpha, alpha, np.asarray(h_hat, dtype=complex),
                      soft_of(x_hat), None, 0.0, 0.0)


def test_residual_unchanged_with_zero_alpha():
    rng = np.random.default_rng(0)
    y = rng.normal(size=50) + 1j * rng.normal(size=50)
    states = {(0, 0): state(0, np.ones(50), np.ones(50), 0.0)}
    np.testing.assert_array_equal(compute_residual(y, states, 1, 0), y)


def test_genie_cancellation_is_exact():
    rng = np.random.default_rng(1)
    n = 100
    h = make_channel(n, [1.26, 1.0], 0.01, 0.0, [rng, rng]).h
    x = rng.choice([-1.0, 1.0], (2, n))
    w = 0.1 * (rng.normal(size=n) + 1j * rng.normal(size=n))
    y = np.sum(h * x, axis=0) + w
    # user 1 at stage 0 sees user 0's stage-0 estimate
    states = {(0, 0): state(0, h[0], x[0], 1.0)}
    np.testing.assert_allclose(compute_residual(y, states, 1, 0), h[1] * x[1] + w, atol=1e-12)
    # user 0 at stage 1 sees user 1's stage-0 estimate
    states[(0, 1)] = state(1, h[1], x[1], 1.0)
    np.testing.assert_allclose(compute_residual(y, states, 0, 1), h[0] * x[0] + w, atol=1e-12)


def test_missing_later_users_contribute_nothing_at_stage_zero():
    y = np.ones(5, dtype=complex)
    states = {(0, 1): state(1, np.ones(5), np.ones(5), 1.0)}
    np.testing.assert_array_equal(compute_residual(y, states, 0, 0), y)


def test_imperfect_interferer_residual_power():
    rng = np.random.default_rng(2)
    n = 2000
    h = 1.3 * np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    x = rng.choice([-1.0, 1.0], n)
    eps = 0.05 - 0.02j
    states = {(0, 0): state(0, h * (1 + eps), x, 1.0)}
    resid = compute_residual(h * x, states, 1, 0)
    expected = abs(eps) ** 2 * np.mean(np.abs(h * x) ** 2)
    assert np.mean(np.abs(resid) ** 2) == pytest.approx(expected, rel=1e-10)


def test_alpha_uses_pilot_mask_per_position():
    mask = np.array([True, False, False, True])
    st = StageState(0, 0, 0.5, 0.9, np.ones(4, dtype=complex), soft_of(np.ones(4), mask),
                    None, 0.0, 0.0)
    np.testing.assert_allclose(st.reconstruction(), [0.9, 0.5, 0.5, 0.9])


def test_pilot_alpha_at_paper_floor():
    assert compute_alpha(soft_of(np.ones(4)), 0.031, "pilot") == pytest.approx(1 / 1.031)
    assert compute_alpha(soft_of(np.ones(4)), 0.031, "pilot") == pytest.approx(0.970, abs=5e-4)


def test_data_alpha_limits():
    x = np.random.default_rng(3).choice([-1.0, 1.0], 100)
    assert compute_alpha(soft_of(x), 0.0, "data") == 1.0
    assert compute_alpha(soft_of(np.zeros(100)), 0.2, "data") == 0.0


def test_data_alpha_hard_versus_genie_correlation():
    rng = np.random.default_rng(4)
    x = rng.choice([-1.0, 1.0], 5000)
    x_hat = np.tanh(2 * (x + rng.normal(0, 0.6, x.size)) / 0.36)
    soft = soft_of(x_hat)
    hard = compute_alpha(soft, 0.1, "data", "hard")
    genie = compute_alpha(soft, 0.1, "data", "genie", reference=x)
    assert 0 <= genie <= hard <= 1
    with pytest.raises(ConfigurationError):
        compute_alpha(soft, 0.1, "data", "genie")
    with pytest.raises(ConfigurationError):
        compute_alpha(soft, -0.1, "data")


def test_alpha_clamp_can_be_disabled():
    x = np.array([0.5, -0.5, 0.5])  # hard correlation / power = 2
    assert compute_alpha(soft_of(x), 0.0, "data", clamp=True) == 1.0
    assert compute_alpha(soft_of(x), 0.0, "data", clamp=False) == pytest.approx(2.0)


def test_e_bar_genie():
    h = np.exp(1j * np.linspace(0, 3, 200)) * 1.4
    perfect = ChannelEstimate(h, 0.1, 16)
    assert estimate_e_bar("genie", h, perfect)[0] == 0.0
    delta = 0.17
    assert estimate_e_bar("genie", h, ChannelEstimate(h * (1 + delta), 0.1, 16))[0] == \
        pytest.approx(delta**2)
    assert estimate_e_bar(0.05) == (0.05, False)
    with pytest.raises(ConfigurationError):
        estimate_e_bar("genie", None, perfect)


def test_e_bar_lookup_and_clamp():
    table = EBarTable([0.0, 5.0, 10.0], [0.3, 0.1, 0.03])
    assert table.lookup(5.0) == (0.1, False)
    assert table.lookup(2.5)[0] == pytest.approx(0.2)
    assert table.lookup(-20.0) == (0.3, True)
    assert table.lookup(40.0) == (0.03, True)
    est = ChannelEstimate(np.ones(10, dtype=complex), 0.5 / 10 ** 0.5, 16)
    assert estimated_sinr_db(est.h_hat, est.sigma2) == pytest.approx(5.0)
    assert estimate_e_bar("lookup", estimate=est, table=table)[0] == pytest.approx(0.1)


def test_ebar_table_round_trip(tmp_path):
    table = EBarTable([1.0, -2.0, 4.0], [0.1, 0.3, 0.05])
    path = tmp_path / "t.csv"
    table.write(path, "calibration\nsecond line")
    back = EBarTable.read(path)
    np.testing.assert_allclose(back.sinr_db, [-2, 1, 4])
    np.testing.assert_allclose(back.e_bar, [0.3, 0.1, 0.05])


def test_packaged_table_is_usable():
    table = default_table()
    assert table.sinr_db.size >= 5
    assert np.all(np.diff(table.sinr_db) > 0)
    assert np.all((table.e_bar > 0) & (table.e_bar < 1))


def test_diagnostics_limits():
    rng = np.random.default_rng(5)
    h = np.exp(1j * rng.uniform(0, 6, 100))
    x = rng.choice([-1.0, 1.0], 100)
    assert cancellation_diagnostics(h, x, h, x, 0.0).beta == 0.0
    ideal = cancellation_diagnostics(h, x, h, x, 1.0)
    assert ideal.beta == 1.0 and ideal.e_bar == 0.0 and ideal.i_full == 0.0


def test_gamma_bar_for_synthetic_channel_error():
    rng = np.random.default_rng(6)
    n, e_bar = 200_000, 0.2
    h = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    x = rng.choice([-1.0, 1.0], n)
    err = np.sqrt(e_bar / 2) * (rng.normal(size=n) + 1j * rng.normal(size=n))
    d = cancellation_diagnostics(h, x, h + err * np.abs(h), x, 1 / (1 + e_bar))
    assert d.gamma_bar == pytest.approx(1 / 1.2, rel=0.05)
    assert 0 <= d.gamma_bar <= 1


def test_decoding_order():
    assert decoding_order([0.0, 2.0]) == [1, 0]
    assert decoding_order([2.0, 2.0, 4.0]) == [2, 0, 1]


def test_receiver_validation_lists_all_problems():
    with pytest.raises(ConfigurationError) as exc:
        ReceiverConfig(stages=0, scheme="half", correlation="psychic").validate()
    assert len(exc.value.violations) == 3


def two_user_setup(snr_db=4.0, imbalance=2.0, block=1000, seed=0, n_users=2):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(block)
    users, frames, bits = [], [], []
    for u, rate in enumerate((0.72, 0.53)[:n_users]):
        code = CodeConfig.for_rate(rate, block, 1)
        layout = make_layout(block, PilotConfig(51), perm, rng)
        users.append(UserLink(code, layout))
        b = rng.integers(0, 2, code.info_length)
        bits.append(b)
        frames.append(modulate_and_frame(encode(b, code), layout))
    powers = [imbalance * (n_users - 1 - u) for u in range(n_users)]
    sigma_n2 = noise_variance_for_snr(snr_db)
    amps = np.sqrt(10 ** (np.array(powers) / 10))
    ch = make_channel(frames[0].symbols.size, amps, 0.01, sigma_n2, [rng] * n_users)
    y = synthesize_received(frames, ch.h, sigma_n2, rng)
    x = np.vstack([f.symbols for f in frames])
    return y, users, ch.h, x, bits, powers


def test_single_user_matches_em_decode():
    y, users, h, x, bits, _ = two_user_setup(n_users=1)
    for scheme in ("full", "partial"):
        rx = ReceiverConfig(stages=1, scheme=scheme, em_iterations=3)
        res = run_multistage_sic(y, users, rx, true_h=h, true_x=x)
        ref = em_decode_user(y, users[0].code, users[0].layout, em_iterations=3, true_h=h[0])
        np.testing.assert_array_equal(res.states[(0, 0)].info_llr, ref.info_llr)


def test_genie_partial_alpha_goes_to_one():
    y, users, h, x, bits, _ = two_user_setup(snr_db=10.0)
    rx = ReceiverConfig(stages=2, csi_mode="perfect", em_iterations=1, early_exit=False)
    res = run_multistage_sic(y, users, rx, true_h=h, true_x=x)
    for pos in range(2):
        st = res.states[(1, pos)]
        assert st.alpha_data == pytest.approx(1.0, abs=1e-9)
        assert st.alpha_pilot == 1.0
        assert st.diagnostics.i_partial < 1e-8
    for u in range(2):
        np.testing.assert_array_equal(res.decisions[u], bits[u])


def test_scheme_reduction_is_bit_identical():
    y, users, h, x, _, _ = two_user_setup(snr_db=8.0)
    common = dict(stages=2, csi_mode="perfect", em_iterations=1, early_exit=False)
    full = run_multistage_sic(y, users, ReceiverConfig(scheme="full", **common), true_h=h)
    part = run_multistage_sic(y, users, ReceiverConfig(scheme="partial", e_bar_mode=0.0,
                                                       **common), true_h=h)
    for key, st in full.states.items():
        np.testing.assert_array_equal(st.info_llr, part.states[key].info_llr)
        assert part.states[key].alpha_data == 1.0


def test_two_user_sic_decodes_and_records_states():
    y, users, h, x, bits, powers = two_user_setup(snr_db=5.0)
    order = decoding_order(powers)
    rx = ReceiverConfig(stages=3, em_iterations=4)
    res = run_multistage_sic(y, users, rx, order=order, true_h=h, true_x=x)
    assert len(res.states) == 6
    for u in range(2):
        assert np.sum(res.decisions[u] != bits[u]) == 0
    for st in res.states.values():
        assert 0 <= st.alpha_data <= 1 and 0 <= st.alpha_pilot <= 1
        assert st.diagnostics is not None


def test_early_exit_fills_later_stages():
    y, users, h, x, _, powers = two_user_setup(snr_db=14.0)
    rx = ReceiverConfig(stages=4, csi_mode="perfect", em_iterations=2)
    res = run_multistage_sic(y, users, rx, order=decoding_order(powers), true_h=h, true_x=x)
    assert res.early_exit_stage == 0
    assert res.states[(3, 0)] is res.states[(0, 0)]
    rx = ReceiverConfig(stages=4, csi_mode="perfect", em_iterations=2, early_exit=False)
    res = run_multistage_sic(y, users, rx, order=decoding_order(powers), true_h=h, true_x=x)
    assert res.early_exit_stage is None
    assert res.states[(3, 0)] is not res.states[(0, 0)]
    assert set(res.stage_decisions) == {(s, u) for s in range(4) for u in range(2)}


def test_reencode_correlation_tracks_decoding_success():
    y, users, h, x, bits, powers = two_user_setup(snr_db=6.0)
    common = dict(stages=1, em_iterations=3, early_exit=False)
    order = decoding_order(powers)
    genie = run_multistage_sic(y, users, ReceiverConfig(correlation="genie", **common),
                               order=order, true_h=h, true_x=x)
    reenc = run_multistage_sic(y, users, ReceiverConfig(correlation="reencode", **common),
                               order=order, true_h=h, true_x=x)
    for u in range(2):
        np.testing.assert_array_equal(reenc.decisions[u], bits[u])
    for key, st in reenc.states.items():
        assert st.alpha_data == pytest.approx(genie.states[key].alpha_data, abs=1e-12)


def test_reencode_correlation_detects_unconverged_frames():
    rng = np.random.default_rng(7)
    n = 600
    code = CodeConfig.for_rate(0.53, n, 1)
    layout = make_layout(n, PilotConfig(30), rng.permutation(n), rng)
    bits = rng.integers(0, 2, code.info_length)
    x = modulate_and_frame(encode(bits, code), layout).symbols
    # confident soft symbols that are not a codeword: 30% of data signs flipped
    flip = np.where(~layout.pilot_mask & (rng.random(x.size) < 0.3), -1.0, 1.0)
    soft = soft_of(np.where(layout.pilot_mask, x, 0.9 * flip * x), layout.pilot_mask)
    result = EmResult(1.0 - 2.0 * bits, None, soft, None, 1)
    ref = sic._reference("reencode", result, UserLink(code, layout), None, 0)
    np.testing.assert_array_equal(ref, x)
    reenc = compute_alpha(soft, 0.05, "data", "reencode", reference=ref)
    agree = np.mean(flip[~layout.pilot_mask] > 0)
    assert reenc == pytest.approx((2 * agree - 1) * 0.9 / (0.81 * 1.05))
    assert compute_alpha(soft, 0.05, "data", "hard") == 1.0
    with pytest.raises(ConfigurationError):
        compute_alpha(soft, 0.05, "data", "reencode")


@pytest.mark.slow
def test_partial_reaches_target_ber_before_full_at_desk_scale():
    from pathlib import Path

    from partial_sic.experiments import load_config, required_snr, run_experiment

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "desk_fig3.ini")
    cfg.snr_grid_db = [3.0, 4.0, 5.0]
    aggs = run_experiment(cfg).aggregates()
    last = cfg.stages - 1
    for user in range(len(cfg.users)):
        full = required_snr(aggs, 1e-4, "full", last, user)
        partial = required_snr(aggs, 1e-4, "partial", last, user)
        assert partial < full
    # the crossing leans on zero-error points, so also compare raw counts
    for snr in (3.0, 4.0):
        errors = {s: sum(a.bit_errors for a in aggs
                         if (a.snr_db, a.scheme, a.stage) == (snr, s, last))
                  for s in ("full", "partial")}
        assert errors["partial"] < errors["full"]

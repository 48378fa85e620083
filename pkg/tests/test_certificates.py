import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import km_rates as km
from km_rates.certificates import (
    CertificateOverflow,
    FormulaTag,
    InstanceConstants,
    make_liminf_modulus,
    make_residual_rate,
    make_step_rate,
    select_threshold,
)
from km_rates.moduli import RateFn, RateKind, UcModulus

HILBERT = km.hilbert_modulus()
ZERO = RateFn.constant(0, RateKind.CAUCHY_MODULUS)


def test_instance_constants_basic():
    s = km.make_classical_km(0.5)
    c = km.instance_constants([1.0, 0.0], [0.0, 0.0], s)
    assert (c.start_bound, c.dist_bound, c.norm_bound) == (1, 1, 2)


def test_instance_constants_degenerate_start():
    s = km.make_classical_km(0.5)
    c = km.instance_constants([0.0, 0.0], [0.0, 0.0], s)
    assert c.start_bound == 1  # stays positive even at the fixed point
    assert c.dist_bound == 1 and c.norm_bound == 2


def test_instance_constants_with_series_bounds():
    c = InstanceConstants.from_bounds(1, 2, 2)
    assert c.dist_bound == 5 and c.norm_bound == 6


def test_instance_constants_validation():
    with pytest.raises(ValueError):
        InstanceConstants(0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        InstanceConstants(1, 0, 0, 2, 3)  # dist bound must be 1


def test_weight_threshold_hilbert_cubic():
    c = InstanceConstants.from_bounds(1, 0, 0)
    thr = km.weight_threshold(c, HILBERT)
    for k in range(25):
        assert thr(k) == 16 * (k + 1) ** 3
    assert thr(1) == 128


def test_weight_threshold_degenerate_modulus():
    c = InstanceConstants.from_bounds(2, 1, 1)
    flat = UcModulus(eta=lambda e: 1.0, name="flat")
    thr = km.weight_threshold(c, flat)
    num = c.threshold_numerator
    for k in range(10):
        assert thr(k) == num * (k + 1)


def test_weight_threshold_factored_quadratic():
    c = InstanceConstants.from_bounds(1, 0, 0)
    thr = km.weight_threshold_factored(c, HILBERT)
    for k in range(25):
        assert thr(k) == 8 * (k + 1) ** 2
    half = UcModulus(eta=lambda e: e / 2.0, name="half",
                     eta_tilde=lambda e: 0.5, tilde_increasing=True)
    thr2 = km.weight_threshold_factored(c, half)
    for k in range(10):
        assert thr2(k) == c.threshold_numerator * (k + 1)


def test_weight_threshold_factored_needs_factorization():
    c = InstanceConstants.from_bounds(1, 0, 0)
    bare = UcModulus(eta=lambda e: e * e / 8.0, name="bare")
    with pytest.raises(ValueError):
        km.weight_threshold_factored(c, bare)


def test_hilbert_agreement_small_grid():
    # double-precision factored path equals the integer closed form
    for b in (1, 2, 3):
        for d in (0, 1, 2, 3):
            for r in (0, 1, 2, 3):
                c = InstanceConstants.from_bounds(b, d, r)
                float_path = km.weight_threshold_factored(c, HILBERT)
                closed = km.hilbert_threshold(c)
                for k in range(0, 101, 7):
                    assert float_path(k) == closed(k)


def test_threshold_overflow_on_vanishing_modulus():
    c = InstanceConstants.from_bounds(1, 0, 0)
    thr = km.weight_threshold(c, km.lp_modulus(400.0))
    with pytest.raises(CertificateOverflow):
        thr(1000)


def test_residual_rate_classical_km_values():
    s = km.make_classical_km(0.5)
    cert = km.classical_km_certificate(1, s.weight_divergence, HILBERT)
    assert [cert.residual_rate(k) for k in range(4)] == [132, 516, 1156, 2052]
    for k in range(40):
        assert cert.residual_rate(k) == 128 * (k + 1) ** 2 + 4


def test_residual_rate_degenerate_moduli():
    c = InstanceConstants.from_bounds(1, 0, 0)
    identity_rate = RateFn.affine(1, 0, RateKind.RATE_OF_DIVERGENCE)
    zero_thr = RateFn.constant(0, RateKind.THRESHOLD)
    rate = make_residual_rate(c, zero_thr, identity_rate, ZERO, ZERO)
    for k in range(10):
        assert rate(k) == 1


def test_step_rate_is_residual_at_doubled_index():
    s = km.make_classical_km(0.5)
    cert = km.classical_km_certificate(1, s.weight_divergence, HILBERT)
    assert cert.step_rate(0) == 516
    for k in range(60):
        assert cert.step_rate(k) == cert.residual_rate(2 * k + 1)
    const = RateFn.constant(9, RateKind.RATE_OF_CONVERGENCE)
    stepped = make_step_rate(const)
    assert stepped(5) == 9


def test_liminf_modulus_values():
    c = InstanceConstants.from_bounds(1, 0, 0)
    sigma2 = RateFn.affine(4, 0, RateKind.RATE_OF_DIVERGENCE)
    delta = make_liminf_modulus(km.weight_threshold(c, HILBERT), sigma2)
    assert delta(0, 0) == 64  # 4 * 16
    trivial = make_liminf_modulus(RateFn.constant(0, RateKind.THRESHOLD),
                                  RateFn.affine(1, 0, RateKind.RATE_OF_DIVERGENCE))
    for k in range(5):
        for L in range(5):
            assert trivial(k, L) == L


def test_inexact_km_certificate_thresholds():
    sigma2 = RateFn.affine(4, 0, RateKind.RATE_OF_DIVERGENCE)
    cert0 = km.inexact_km_certificate(1, 0, sigma2, ZERO, HILBERT)
    assert cert0.threshold(1) == 32  # 8*(k+1)^2 at k=1
    cert2 = km.inexact_km_certificate(1, 2, sigma2, RateFn.affine(1, 1, RateKind.CAUCHY_MODULUS),
                                      HILBERT)
    assert cert2.threshold(0) == 72  # 4*(b+M_r)*(b+2M_r+1) = 4*3*6


def test_classical_reduction_matches_inexact_with_zero_perturbation():
    sigma2 = RateFn.affine(4, 0, RateKind.RATE_OF_DIVERGENCE)
    classical = km.classical_km_certificate(1, sigma2, HILBERT)
    assert classical.formula is FormulaTag.CLASSICAL_KM
    for k in range(50):
        assert classical.residual_rate(k) == 4 * (classical.threshold(2 * k + 1) + 1)


def test_example1_certificate_hilbert_closed_forms():
    cert = km.example1_certificate(1, 0.5, 0.0, HILBERT)
    for k in range(60):
        assert cert.residual_rate(k) == 128 * (k + 1) ** 2 + 4
        assert cert.step_rate(k) == 512 * (k + 1) ** 2 + 4
    assert cert.residual_rate(0) == 132 and cert.step_rate(0) == 516

    perturbed = km.example1_certificate(1, 0.5, 1.0, HILBERT)
    assert perturbed.residual_rate(0) == 1188  # 16*4*3*6 + 8*4 + 4


def test_example1_general_path_agrees_exactly():
    for b in (1, 2, 3):
        for c in (0, 1, 2):
            cert = km.example1_certificate(b, 0.5, float(c), HILBERT)
            assert cert.alt_residual_rate is not None
            for k in range(101):
                assert cert.residual_rate(k) == cert.alt_residual_rate(k)
                assert cert.step_rate(k) == cert.alt_step_rate(k)


def test_example2_certificate_values():
    cert = km.example2_certificate(1, 0.5, 2, 0.0, HILBERT)
    assert cert.residual_rate(0) == 1291
    assert cert.step_rate(0) == 4875
    # closed form 16*cap*M1*(k+1)^2 + 16*cap*M2*(k+1) + 3*cap - 1
    for k in range(40):
        assert cert.residual_rate(k) == 1152 * (k + 1) ** 2 + 128 * (k + 1) + 11
        assert cert.step_rate(k) == 4608 * (k + 1) ** 2 + 256 * (k + 1) + 11


def test_example2_parts_agree_with_general_path():
    for b in (1, 2):
        for c in (0, 1):
            cert = km.example2_certificate(b, 0.5, 2, float(c), HILBERT)
            for k in range(51):
                assert cert.residual_rate(k) == cert.alt_residual_rate(k)
                assert cert.step_rate(k) == cert.alt_step_rate(k)


def test_example2_validation():
    with pytest.raises(ValueError):
        km.example2_certificate(1, 0.8, 2, 0.0, HILBERT)
    with pytest.raises(ValueError):
        km.example2_certificate(1, 0.5, 1, 0.0, HILBERT)


def test_general_certificate_routes():
    s = km.make_classical_km(0.5)
    c = InstanceConstants.from_bounds(1, 0, 0)
    auto = km.general_certificate(c, s, HILBERT)
    assert auto.formula is FormulaTag.HILBERT
    assert auto.alt_formula is FormulaTag.FACTORED
    for k in range(30):
        assert auto.residual_rate(k) == auto.alt_residual_rate(k)
    direct = km.general_certificate(c, s, HILBERT, route="general")
    assert direct.formula is FormulaTag.GENERAL
    # the direct route uses the unfactored modulus and is coarser
    assert direct.residual_rate(0) == 516
    with pytest.raises(ValueError):
        km.general_certificate(c, s, UcModulus(eta=lambda e: e * e / 8.0), route="hilbert")


def test_select_threshold_prefers_closed_form():
    c = InstanceConstants.from_bounds(1, 0, 0)
    thr, tag = select_threshold(c, HILBERT)
    assert tag is FormulaTag.HILBERT
    thr_lp, tag_lp = select_threshold(c, km.lp_modulus(3.0))
    assert tag_lp is FormulaTag.FACTORED
    bare = UcModulus(eta=lambda e: e * e / 8.0)
    _, tag_bare = select_threshold(c, bare)
    assert tag_bare is FormulaTag.GENERAL


def test_divergence_rate_growth_for_constructed_schedules():
    # needed by the step-rate argument: the divergence rate dominates the identity
    for schedule in (km.make_classical_km(0.5), km.make_example1(0.3),
                     km.make_example2(0.5, J=2)):
        sigma2 = schedule.weight_divergence
        for k in range(0, 1001, 13):
            assert sigma2(k) >= k


def test_certificate_monotone_in_instance_bounds():
    sigma2 = RateFn.affine(4, 0, RateKind.RATE_OF_DIVERGENCE)
    sigma3 = RateFn.affine(1, 1, RateKind.CAUCHY_MODULUS)
    for k in (0, 1, 5):
        prev = None
        for b in (1, 2, 3, 4):
            cert = km.inexact_km_certificate(b, 1, sigma2, sigma3, HILBERT)
            value = cert.residual_rate(k)
            if prev is not None:
                assert value >= prev
            prev = value
        prev = None
        for r in (0, 1, 2, 3):
            cert = km.inexact_km_certificate(2, r, sigma2, sigma3, HILBERT)
            value = cert.residual_rate(k)
            if prev is not None:
                assert value >= prev
            prev = value
        prev = None
        for d in (0, 1, 2, 3):
            c = InstanceConstants.from_bounds(2, d, 1)
            s = km.make_example2(0.5, J=2)
            cert = km.general_certificate(c, s, HILBERT)
            value = cert.residual_rate(k)
            if prev is not None:
                assert value >= prev
            prev = value


def test_step_series_modulus_diagnostic():
    s = km.make_classical_km(0.5)
    classical = km.classical_km_certificate(1, s.weight_divergence, HILBERT)
    assert all(classical.step_series_modulus(k) == 0 for k in range(10))

    ex2 = km.example2_certificate(1, 0.5, 2, 0.0, HILBERT)
    # norm bound 4, unperturbed: max(defect modulus at 16(k+1)-1, 0) = 16(k+1)
    for k in range(10):
        assert ex2.step_series_modulus(k) == 16 * (k + 1)
    # the residual rate is exactly the divergence rate of the composed argument
    s2 = km.make_example2(0.5, J=2)
    for k in range(20):
        arg = ex2.threshold(2 * k + 1) + ex2.step_series_modulus(2 * k + 1) + 1
        assert ex2.residual_rate(k) == s2.weight_divergence(arg)


def test_certificate_table_serialization():
    s = km.make_classical_km(0.5)
    cert = km.classical_km_certificate(1, s.weight_divergence, HILBERT)
    doc = cert.to_dict(3)
    assert [row["residual_rate"] for row in doc["table"]] == [132, 516, 1156, 2052]
    assert doc["constants"]["dist_bound"] == 1


@given(st.integers(1, 6), st.integers(0, 4), st.integers(0, 4), st.integers(0, 300))
@settings(max_examples=150, deadline=None)
def test_hilbert_closed_form_property(b, d, r, k):
    c = InstanceConstants.from_bounds(b, d, r)
    assert km.weight_threshold_factored(c, HILBERT)(k) == km.hilbert_threshold(c)(k)


@given(st.integers(0, 100))
@settings(max_examples=80, deadline=None)
def test_step_rate_composition_property(k):
    s = km.make_example2(0.5, J=2)
    c = InstanceConstants.from_bounds(2, 2, 0)
    cert = km.general_certificate(c, s, HILBERT)
    assert cert.step_rate(k) == cert.residual_rate(2 * k + 1)

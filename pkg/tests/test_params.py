import warnings

import pytest

from curvspec.params import (
    FlowClass,
    FlowParams,
    OutsideMonotoneRegime,
    classify_flow,
    derive_coefficients,
    in_flow_F,
    in_flow_G,
    step1_margin,
)


def test_derive_coefficients_values():
    assert derive_coefficients(1.0, 0.0, 3) == (-1.0, 1.0)
    assert derive_coefficients(0.0, -0.5, 2) == (-1.0, 1.0)
    phi, psi = derive_coefficients(2.0, 0.25, 4)
    assert phi == pytest.approx(-1.0)
    assert psi == pytest.approx(0.5)


@pytest.mark.parametrize("n", [1, 0, 2.5])
def test_derive_coefficients_rejects_bad_dimension(n):
    with pytest.raises(ValueError):
        derive_coefficients(1.0, 0.0, n)


def test_params_carry_derived_constants():
    p = FlowParams(1.0, 0.1, -0.1, 3)
    assert p.phi == pytest.approx(-0.7)
    assert p.psi == pytest.approx(0.6)
    assert p.rho_bound == pytest.approx(0.25)
    assert p.to_dict() == {"a": 1.0, "rho": 0.1, "c": -0.1, "n": 3, "use_average_term": False}


def test_r_value_respects_mode():
    assert FlowParams(1.0, 0.0, n=3).r_value(6.0) == 0.0
    assert FlowParams(1.0, 0.0, n=3, use_average_term=True).r_value(6.0) == 6.0


@pytest.mark.parametrize(
    "a, rho, on, expected",
    [
        (1.0, 0.0, False, FlowClass.UNNORMALIZED_RICCI),
        (1.0, 0.0, True, FlowClass.NORMALIZED_RICCI),
        (1.0, 0.1, False, FlowClass.RICCI_BOURGUIGNON),
        (0.0, -0.5, True, FlowClass.NORMALIZED_YAMABE),
        (2.0, 0.3, True, FlowClass.GENERAL),
    ],
)
def test_classify_flow(a, rho, on, expected):
    assert classify_flow(FlowParams(a, rho, n=3, use_average_term=on)) is expected


def test_flow_families_bounds():
    # F allows equality in the rho bound, G does not
    edge = FlowParams(1.0, 0.25, -0.1, 3)
    assert in_flow_F(edge)
    assert not in_flow_G(edge)
    assert in_flow_G(FlowParams(1.0, 0.2, -0.1, 3))
    assert not in_flow_G(FlowParams(1.0, 0.2, -0.1, 3, use_average_term=True))
    assert not in_flow_G(FlowParams(1.0, 0.0, -0.25, 3))
    assert not in_flow_G(FlowParams(1.0, 0.0, 0.0, 3))
    assert not in_flow_F(FlowParams(-1.0, -1.0, 0.0, 3))


def test_step1_margin_example():
    p = FlowParams(1.0, 0.0, -0.1, 3)
    assert step1_margin(p) == pytest.approx(2 * -0.1 * 1.0 + 1.0)


def test_warning_outside_families():
    with pytest.warns(OutsideMonotoneRegime):
        FlowParams(-1.0, 0.0, 0.5, 3).warn_if_unmonotone()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        FlowParams(1.0, 0.0, 0.0, 3).warn_if_unmonotone()

"""Domain types, the reflected image series, and system file I/O."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slabwald.core import (ChargeSystem, DielectricSpec, DomainError,
                           EnergyForces, EwaldParams, image_position,
                           image_scales, image_series, image_z_offsets,
                           read_system, reflection_factors, validate,
                           write_system)


def test_charge_system_basic_properties(pair_system):
    assert pair_system.n == 2
    assert pair_system.lx == 10.0
    assert pair_system.ly == 10.0
    assert pair_system.height == 1.0


def test_charge_system_rejects_bad_shapes():
    with pytest.raises(DomainError):
        ChargeSystem(np.zeros((2, 2)), np.zeros(2), (1, 1, 1))
    with pytest.raises(DomainError):
        ChargeSystem(np.zeros((2, 3)), np.zeros(3), (1, 1, 1))
    with pytest.raises(DomainError):
        ChargeSystem(np.zeros((0, 3)), np.zeros(0), (1, 1, 1))
    with pytest.raises(DomainError):
        ChargeSystem(np.zeros((1, 3)), np.zeros(1), (1, 0, 1))


def test_charge_system_arrays_are_frozen(pair_system):
    with pytest.raises(ValueError):
        pair_system.positions[0, 0] = 5.0
    with pytest.raises(ValueError):
        pair_system.charges[0] = 5.0


def test_dielectric_spec_bounds():
    with pytest.raises(DomainError):
        DielectricSpec(1.5, 0.0)
    assert DielectricSpec(0.0, 0.0).polarizable is False
    assert DielectricSpec(0.0, -1.0).polarizable is True


def test_reflection_factors_values():
    # matched permittivities: no reflection
    assert reflection_factors(2.0, 2.0, 2.0) == DielectricSpec(0.0, 0.0)
    # (eps_c - eps_out)/(eps_c + eps_out)
    spec = reflection_factors(3.0, 1.0, 1.0 / 3.0)
    assert spec.gamma_u == pytest.approx(-0.5)
    assert spec.gamma_d == pytest.approx(0.5)
    # ideal metal maps to exactly -1, no rounding
    assert reflection_factors(math.inf, 1.0, math.inf) == DielectricSpec(-1.0, -1.0)
    with pytest.raises(DomainError):
        reflection_factors(1.0, math.inf, 1.0)
    with pytest.raises(DomainError):
        reflection_factors(-1.0, 1.0, 1.0)


def test_image_scales_small_levels():
    spec = DielectricSpec(gamma_u=0.25, gamma_d=-0.5)
    gu, gd = spec.gamma_u, spec.gamma_d
    assert image_scales(spec, 1) == (gd, gu)
    assert image_scales(spec, 2) == (gd * gu, gd * gu)
    assert image_scales(spec, 3) == (gd**2 * gu, gd * gu**2)
    assert image_scales(spec, 4) == (gd**2 * gu**2, gd**2 * gu**2)


def test_image_z_offsets_small_levels():
    h = 0.7
    assert image_z_offsets(1, h) == (2 * h, 0.0)
    assert image_z_offsets(2, h) == (2 * h, -2 * h)
    assert image_z_offsets(3, h) == (4 * h, -2 * h)
    assert image_z_offsets(4, h) == (4 * h, -4 * h)


def _reflection_chain(z, h, gamma_u, gamma_d, m):
    """Oracle: build the two image chains by explicit alternating reflections.

    Reflecting across the upper wall maps z -> 2H - z and multiplies the scale
    by gamma_d; across the lower wall, z -> -z with factor gamma_u (the factor
    naming follows the affine-series convention used throughout the package).
    The plus chain at level l is the upper reflection of the minus chain at
    l - 1, and vice versa.
    """
    plus = [(z, 1.0)]
    minus = [(z, 1.0)]
    for _ in range(m):
        z_m, s_m = minus[-1]
        z_p, s_p = plus[-1]
        plus.append((2 * h - z_m, gamma_d * s_m))
        minus.append((-z_p, gamma_u * s_p))
    return plus[1:], minus[1:]


@settings(max_examples=50, deadline=None)
@given(z=st.floats(0.05, 0.95),
       gu=st.floats(-1.0, 1.0),
       gd=st.floats(-1.0, 1.0),
       m=st.integers(1, 8))
def test_image_series_matches_reflection_chain(z, gu, gd, m):
    h = 1.0
    system = ChargeSystem(np.array([[0.5, 0.5, z], [0.5, 0.5, 1 - z]]),
                          np.array([1.0, -1.0]), (4.0, 4.0, h))
    spec = DielectricSpec(gu, gd)
    plus, minus = _reflection_chain(z, h, gu, gd, m)
    images = image_series(system, spec, m)
    got = {}
    for img in images:
        if img.source != 0:
            continue
        zpos = image_position(img, system)[2]
        got[(img.level, img.side)] = (zpos, img.scale)
    for lvl in range(1, m + 1):
        z_p, s_p = plus[lvl - 1]
        z_m, s_m = minus[lvl - 1]
        if s_p != 0.0:
            gz, gs = got[(lvl, "plus")]
            assert gz == pytest.approx(z_p, abs=1e-12)
            assert gs == pytest.approx(s_p, rel=1e-12)
        else:
            assert (lvl, "plus") not in got
        if s_m != 0.0:
            gz, gs = got[(lvl, "minus")]
            assert gz == pytest.approx(z_m, abs=1e-12)
            assert gs == pytest.approx(s_m, rel=1e-12)
        else:
            assert (lvl, "minus") not in got


def test_image_series_count_and_pruning(pair_system):
    full = image_series(pair_system, DielectricSpec(0.5, -0.5), 4)
    assert len(full) == 2 * pair_system.n * 4
    one_sided = image_series(pair_system, DielectricSpec(0.0, 0.5), 3)
    # only levels whose scale contains no gamma_u power survive
    assert {(i.level, i.side) for i in one_sided} == {(1, "plus")} | set()
    with pytest.raises(DomainError):
        image_series(pair_system, DielectricSpec(0.5, 0.5), -1)


def test_image_parity():
    img_odd = image_series(
        ChargeSystem(np.zeros((1, 3)) + 0.5, np.array([0.0]), (1, 1, 1)),
        DielectricSpec(0.5, 0.5), 2)
    parities = {(i.level, i.parity) for i in img_odd}
    assert parities == {(1, -1), (2, 1)}


def test_ewald_params_derived_quantities():
    p = EwaldParams(alpha=0.8, s=4.0, L_z=12.0, M=3)
    assert p.r_c == pytest.approx(5.0)
    assert p.k_c == pytest.approx(6.4)
    with pytest.raises(DomainError):
        EwaldParams(alpha=0.0, s=4.0, L_z=12.0, M=3)
    with pytest.raises(DomainError):
        EwaldParams(alpha=1.0, s=4.0, L_z=12.0, M=-1)


def test_energy_forces_breakdown_consistency():
    EnergyForces(3.0, np.zeros((1, 3)), {"a": 1.0, "b": 2.0})
    with pytest.raises(AssertionError):
        EnergyForces(3.0, np.zeros((1, 3)), {"a": 1.0, "b": 2.5})


def test_validate_flags():
    good = ChargeSystem(np.array([[0.1, 0.1, 0.3], [0.2, 0.2, 0.7]]),
                        np.array([1.0, -1.0]), (1, 1, 1))
    assert validate(good) == []

    non_neutral = ChargeSystem(np.array([[0.1, 0.1, 0.3]]),
                               np.array([1.0]), (1, 1, 1))
    assert any(v.invariant == "neutrality" for v in validate(non_neutral))

    outside = ChargeSystem(np.array([[0.1, 0.1, 1.3], [0.2, 0.2, 0.7]]),
                           np.array([1.0, -1.0]), (1, 1, 1))
    assert any(v.invariant == "confinement" for v in validate(outside))

    on_wall = ChargeSystem(np.array([[0.1, 0.1, 0.0], [0.2, 0.2, 0.7]]),
                           np.array([1.0, -1.0]), (1, 1, 1))
    flags = validate(on_wall)
    assert any("warning" in v.invariant for v in flags)
    assert not any(v.invariant == "confinement" for v in flags)


def test_system_io_roundtrip(tmp_path, small_system):
    path = tmp_path / "sys.txt"
    write_system(path, small_system)
    back = read_system(path)
    assert back.cell == small_system.cell
    np.testing.assert_array_equal(back.positions, small_system.positions)
    np.testing.assert_array_equal(back.charges, small_system.charges)


def test_read_system_comments_and_errors(tmp_path):
    path = tmp_path / "sys.txt"
    path.write_text("# a comment\n\ncell 2 2 1\n0.5 0.5 0.4 1.0  # inline\n"
                    "0.6 0.6 0.6 -1.0\n")
    sys_ = read_system(path)
    assert sys_.n == 2 and sys_.cell == (2.0, 2.0, 1.0)

    path.write_text("0.5 0.5 0.4 1.0\n")
    with pytest.raises(DomainError):
        read_system(path)  # missing header
    path.write_text("cell 2 2\n")
    with pytest.raises(DomainError):
        read_system(path)
    path.write_text("cell 2 2 1\n0.5 0.5 0.4\n")
    with pytest.raises(DomainError):
        read_system(path)

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfode.errors import DomainError, InvalidRangeError, OrderingError
from pfode.schedules import (TimeGrid, explicit_grid, flow_matching_process, logsnr_grid, make_grid,
                             polynomial_grid, ve_process, vp_process, vp_process_from_range,
                             vp_uniform_grid)

from reference_schedules import GITS, LOGSNR, POLYNOMIAL, UNIFORM


@pytest.mark.parametrize("nfe", range(3, 11))
def test_polynomial_table(nfe):
    np.testing.assert_allclose(polynomial_grid(nfe).times, POLYNOMIAL[nfe], atol=1e-3, rtol=0)


@pytest.mark.parametrize("nfe", range(3, 11))
def test_logsnr_table(nfe):
    np.testing.assert_allclose(logsnr_grid(nfe).times, LOGSNR[nfe], atol=1e-3, rtol=0)


@pytest.mark.parametrize("nfe", range(3, 11))
def test_vp_uniform_table(nfe):
    np.testing.assert_allclose(vp_uniform_grid(nfe).times, UNIFORM[nfe], atol=1e-3, rtol=0)


@pytest.mark.parametrize("nfe", range(3, 11))
def test_reference_gits_schedules_lie_on_fine_polynomial_grid(nfe):
    fine = polynomial_grid(60).times
    for v in GITS[nfe]:
        assert np.min(np.abs(fine - v)) < 1e-3
    g = explicit_grid(GITS[nfe])
    assert g.N == nfe


def test_trivial_single_step():
    for f in (polynomial_grid, logsnr_grid, vp_uniform_grid):
        np.testing.assert_allclose(f(1).times, [80.0, 0.002], rtol=1e-12)


def test_explicit_grid_examples():
    assert len(explicit_grid([80, 1, 0.002])) == 3
    with pytest.raises(OrderingError):
        explicit_grid([80, 80])
    with pytest.raises(OrderingError):
        explicit_grid([1.0])
    g = explicit_grid([80.0000, 6.6563, 2.1632, 0.8119, 0.2107, 0.0020])
    assert list(g.times) == [80.0, 6.6563, 2.1632, 0.8119, 0.2107, 0.002]


@pytest.mark.parametrize("f", [polynomial_grid, logsnr_grid, vp_uniform_grid])
def test_invalid_ranges(f):
    with pytest.raises(InvalidRangeError):
        f(5, 0.0, 80.0)
    with pytest.raises(InvalidRangeError):
        f(5, 80.0, 80.0)
    with pytest.raises(InvalidRangeError):
        f(0)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(1, 200), t0=st.floats(1e-4, 1.0), ratio=st.floats(1.5, 1e5), rho=st.floats(0.5, 12.0))
def test_generators_descending_with_exact_endpoints(N, t0, ratio, rho):
    tN = t0 * ratio
    for g in (polynomial_grid(N, t0, tN, rho), logsnr_grid(N, t0, tN)):
        t = g.times
        assert np.all(np.diff(t) < 0)
        assert abs(t[0] - tN) <= 1e-12 * tN and abs(t[-1] - t0) <= 1e-12 * t0


@settings(max_examples=40, deadline=None)
@given(N=st.integers(2, 100), t0=st.floats(1e-4, 1.0), ratio=st.floats(2.0, 1e5))
def test_logsnr_constant_ratio(N, t0, ratio):
    t = logsnr_grid(N, t0, t0 * ratio).times
    r = t[1:] / t[:-1]
    assert np.max(np.abs(r - r[0])) < 1e-10


@pytest.mark.parametrize("proc", [ve_process(), vp_process(), vp_process_from_range(), flow_matching_process()])
def test_snr_nonincreasing_and_scale_positive(proc):
    hi = proc.T * (0.999 if proc.kind == "flow-matching" else 1.0)
    t = np.linspace(proc.t_min, hi, 5001)[1:]
    snr = proc.snr(t)
    assert np.all(np.diff(snr) <= 0)
    assert np.all(proc.s(t) > 0)
    np.testing.assert_allclose(proc.time_of_sigma(proc.sigma(t)), t, rtol=1e-9, atol=1e-12)


def test_vp_relations():
    p = vp_process()
    t = np.linspace(0.01, 1, 50)
    alpha = p.s(t) ** 2
    np.testing.assert_allclose(p.sigma(t), np.sqrt((1 - alpha) / alpha), rtol=1e-12)
    q = vp_process_from_range(0.002, 80.0, 1e-3)
    np.testing.assert_allclose(q.sigma(np.array([1e-3, 1.0])), [0.002, 80.0], rtol=1e-9)
    with pytest.raises(DomainError):
        q.check_times([1.0, 1e-4])


def test_flow_matching_needs_t_below_T():
    p = flow_matching_process(1.0)
    with pytest.raises(DomainError):
        p.check_times([1.0, 0.5])
    p.check_times([0.9, 0.5])
    np.testing.assert_allclose(p.s(0.25) * (1 + p.sigma(0.25)), 1.0)


def test_json_round_trip(tmp_path):
    g = polynomial_grid(7)
    obj = json.loads(g.to_json())
    assert set(obj) == {"kind", "times"}
    assert TimeGrid.from_json(g.to_json()) == g
    path = tmp_path / "s.json"
    path.write_text(g.to_json())
    assert make_grid(str(path), 99) == g


def test_make_grid_names():
    assert make_grid("logsnr", 3) == logsnr_grid(3)
    assert make_grid("polynomial:5", 4) == polynomial_grid(4, rho=5.0)
    assert make_grid("uniform", 4) == vp_uniform_grid(4)
    with pytest.raises(InvalidRangeError):
        make_grid("nonsense", 4)


def test_grid_is_immutable():
    g = polynomial_grid(4)
    with pytest.raises(ValueError):
        g.times[0] = 1.0

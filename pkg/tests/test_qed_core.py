import json
import math

import pytest
from hypothesis import given, strategies as st

from cavitydimer.qed_core import (ParameterError, SystemParams, angular_to_ghz, derive_rates,
                                  ghz_to_angular, load_params, device_params, params_from_dict,
                                  params_from_frequencies, scaled_params)


def test_device_rates(device):
    r = derive_rates(device)
    # Gamma/2pi = 4 g^2 / kappa in ordinary frequency units
    assert angular_to_ghz(r.Gamma) == pytest.approx(4 * 4.62 ** 2 / 20.1, rel=1e-12)
    assert 1e3 / r.Gamma == pytest.approx(37.47, abs=0.01)
    assert r.beta == 1.0 and math.isinf(r.F_P)
    assert r.n_crit == pytest.approx(0.125)


def test_lossy_rates():
    p = params_from_frequencies(4.62, 20.1, 0.30)
    r = derive_rates(p)
    assert r.F_P == pytest.approx(4.2466 / 0.30, rel=1e-3)
    assert r.beta == pytest.approx(r.F_P / (r.F_P + 1))
    assert r.n_crit == pytest.approx(1 / (8 * r.beta))


@given(st.floats(1e-3, 1e3))
def test_unit_round_trip(nu):
    assert angular_to_ghz(ghz_to_angular(nu)) == pytest.approx(nu, rel=1e-15)


@pytest.mark.parametrize("kw", [dict(g=-1.0, kappa=1.0), dict(g=1.0, kappa=0.0),
                                dict(g=1.0, kappa=1.0, gamma=-0.1), dict(g=math.nan, kappa=1.0)])
def test_invalid_params(kw):
    with pytest.raises(ParameterError):
        SystemParams(**kw)


def test_bare_cavity_allowed_but_no_rates():
    p = SystemParams(g=0.0, kappa=100.0)
    assert p.Gamma == 0.0
    with pytest.raises(ParameterError):
        derive_rates(p)


@pytest.mark.parametrize("doc", [{}, {"g_ghz": 1.0}, {"g_ghz": 1.0, "kappa_ghz": 2.0, "foo": 1},
                                 {"g_ghz": "1", "kappa_ghz": 2.0}, {"g_ghz": True, "kappa_ghz": 2.0}, []])
def test_config_validation(doc):
    with pytest.raises(ParameterError):
        params_from_dict(doc)


def test_load_round_trip(tmp_path, device):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(device.to_ghz_dict()))
    q = load_params(path)
    assert q.g == pytest.approx(device.g, rel=1e-15)
    assert q.kappa == pytest.approx(device.kappa, rel=1e-15)


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParameterError):
        load_params(path)


def test_scaled_params_ratio():
    p = scaled_params(20.0)
    assert p.kappa / p.Gamma == pytest.approx(20.0, rel=1e-14)
    assert angular_to_ghz(p.Gamma) == pytest.approx(4.24, rel=1e-14)


def test_device_params_cached_values():
    p = device_params()
    assert angular_to_ghz(p.g) == pytest.approx(4.62)
    assert p.replace(delta_c=1.0).delta_c == 1.0

import numpy as np
import pytest

from informed_policies.config import ConfigError, load_system_config, parse_gamma, resolve_config
from informed_policies.model import Structure

BASE = """
[system]
n_x = 1
n_u = 1
kappa = 0.5
f_cont_1 = "x1 + u1"
lip_cont = 1
[constraints]
x_lo = -1
x_hi = 1
u_lo = -1
u_hi = 1
[experiment]
horizon = 3
delta = 0.1
x0 = 0
objective_component = 1
"""


def write(tmp_path, text, name="sys.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_bundled_exp1(exp1_cfg):
    s = exp1_cfg.system
    assert (s.n_x, s.n_u, s.kappa) == (2, 1, 0.1)
    assert np.array_equal(s.X.lo, [0, -0.5]) and np.array_equal(s.X.hi, [1, 0.5])
    assert np.array_equal(s.U.lo, [-1]) and np.array_equal(s.U.hi, [1])
    assert exp1_cfg.horizon == 30 and exp1_cfg.delta == 0.03
    assert np.array_equal(s.lip_cont, [2, 5])
    assert s.structure is Structure.AFFINE
    x, u = np.array([0.3, -0.2]), np.array([0.4])
    f = s.f_cont(x, u)
    assert f == pytest.approx([-0.2 + 0.045, 0.75 * 0.09 + 2 * (-0.008) + np.cos(-0.2) * 0.4])
    assert s.f_x(x) + s.f_u(x) @ u == pytest.approx(s.step(x, u), abs=1e-15)


def test_bundled_exp2(exp2_cfg):
    s = exp2_cfg.system
    assert np.allclose(s.X.lo, [-3.14, -2]) and np.allclose(s.X.hi, [3.14 + 3.14 / 12, 2], atol=1e-15)
    assert np.allclose(s.U.lo, [-3.14 / 2]) and np.allclose(s.U.hi, [3.14 / 2])
    assert exp2_cfg.horizon == 35 and np.array_equal(s.lip_cont, [1, 5]) and s.lip_u == 2
    assert s.structure is Structure.GENERAL
    assert exp2_cfg.gamma == "auto"
    assert s.f_cont(np.array([0.0, 1.0]), np.array([0.5])) == pytest.approx([1.0, 0.5 + 2 * np.sin(0.5)])


def test_resolve_names(tmp_path):
    assert resolve_config("exp1").name == "exp1.cfg"
    with pytest.raises(ConfigError, match="nope.cfg"):
        load_system_config(tmp_path / "nope.cfg")


def test_missing_horizon_names_the_key(tmp_path):
    p = write(tmp_path, BASE.replace("horizon = 3\n", ""))
    with pytest.raises(ConfigError, match="horizon"):
        load_system_config(p)


def test_bad_expression_reports_key(tmp_path):
    p = write(tmp_path, BASE.replace('"x1 + u1"', '"x1 +"'))
    with pytest.raises(ConfigError, match="f_cont_1"):
        load_system_config(p)


def test_inconsistent_affine_split_is_rejected(tmp_path):
    text = BASE.replace("lip_cont = 1", 'lip_cont = 1\nstructure = affine\nfx_1 = "x1"\nfu_1_1 = "2"')
    with pytest.raises(ConfigError):
        load_system_config(write(tmp_path, text))
    ok = load_system_config(write(tmp_path, text.replace('fu_1_1 = "2"', 'fu_1_1 = "1"'), "ok.cfg"))
    assert ok.system.structure is Structure.AFFINE


def test_overrides(exp1_cfg):
    c = exp1_cfg.with_overrides(x0=[0.2, 0.1], horizon=5, delta=None)
    assert np.array_equal(c.x0, [0.2, 0.1]) and c.horizon == 5 and c.delta == exp1_cfg.delta


@pytest.mark.parametrize("text,expected", [("none", None), ("auto", "auto"), ("0.25", 0.25), (" AUTO ", "auto")])
def test_parse_gamma(text, expected):
    assert parse_gamma(text) == expected


@pytest.mark.parametrize("text", ["-1", "nan", "fast"])
def test_parse_gamma_rejects(text):
    with pytest.raises(ConfigError):
        parse_gamma(text)

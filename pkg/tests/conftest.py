import numpy as np
import pytest

from informed_policies.config import load_system_config
from informed_policies.model import DynamicalSystem, Structure
from informed_policies.overapprox import compute_overapprox
from informed_policies.pipeline import run_synthesis


def linear_system(A, B, X, U, kappa=1.0, structure=Structure.SHARED):
    """``x+ = A x + B u`` written as an Euler step of ``(A - I) x / kappa + B u / kappa``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]

    def f_cont(x, u):
        return (np.asarray(x) @ (A - np.eye(n)).T + np.asarray(u) @ B.T) / kappa

    return DynamicalSystem(n_x=n, n_u=B.shape[1], f_cont=f_cont, kappa=kappa, X=X, U=U,
                           lip_cont=np.zeros(n), structure=structure,
                           fx_cont=lambda x: np.asarray(x) @ (A - np.eye(n)).T / kappa,
                           fu_cont=lambda x: np.broadcast_to(B / kappa, np.shape(x)[:-1] + B.shape))


@pytest.fixture(scope="session")
def exp1_cfg():
    return load_system_config("exp1")


@pytest.fixture(scope="session")
def exp2_cfg():
    return load_system_config("exp2")


@pytest.fixture(scope="session")
def exp1_fit(exp1_cfg):
    return compute_overapprox(exp1_cfg.system, exp1_cfg.delta)


@pytest.fixture(scope="session")
def exp2_fit(exp2_cfg):
    return compute_overapprox(exp2_cfg.system, exp2_cfg.delta)


@pytest.fixture(scope="session")
def exp1_policies(exp1_cfg, exp1_fit):
    oa = exp1_fit[0]
    return {"informed": run_synthesis(exp1_cfg, oa, True), "uninformed": run_synthesis(exp1_cfg, oa, False)}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)

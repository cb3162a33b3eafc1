import time

import numpy as np
import pytest

from epopinf.config import builtin_config
from epopinf.opinf import assemble_lsq
from epopinf.pipeline import load_snapshots, load_trained, run_evaluate, run_simulate, run_train
from epopinf.pod import project
from epopinf.tensor_ops import build_constraint_matrix, compact_width


def random_ep_operator(r, rng, scale=1.0):
    """Random compact operator projected onto the energy-preserving subspace."""
    F = scale * rng.standard_normal((r, compact_width(r)))
    C = build_constraint_matrix(r).matrix
    z = F.ravel()
    CCt = (C @ C.T).diagonal()
    z = z - C.T @ ((C @ z) / CCt)
    return z.reshape(F.shape)


def penalty_oracle(D, R, C, mus=tuple(10.0**k for k in range(3, 11))):
    """Equality-constrained LS via a quadratic-penalty sweep, Richardson-extrapolated.

    Solves ``min sum_i ||D o_i - R_i||^2 + mu ||C vec(F)||^2`` for each mu with a
    stacked dense least-squares problem and extrapolates the last two
    solutions to mu -> infinity (error ~ 1/mu).
    """
    K, p = D.shape
    r = R.shape[1]
    s = compact_width(r)
    Cd = C.toarray()
    Cz = np.zeros((Cd.shape[0], r * p))
    for i in range(r):
        Cz[:, i * p + r: i * p + r + s] = Cd[:, i * s:(i + 1) * s]
    big = np.kron(np.eye(r), D)
    rhs = R.T.ravel()
    sols = []
    for mu in mus:
        M = np.vstack([big, np.sqrt(mu) * Cz])
        b = np.concatenate([rhs, np.zeros(Cz.shape[0])])
        sols.append(np.linalg.lstsq(M, b, rcond=None)[0])
    m1, m2 = mus[-2], mus[-1]
    z = (m2 * sols[-1] - m1 * sols[-2]) / (m2 - m1)
    return z.reshape(r, p)


@pytest.fixture(scope="session")
def burgers_run(tmp_path_factory):
    """Full Burgers' pipeline with the built-in paper profile."""
    cfg = builtin_config("burgers", "paper")
    out = tmp_path_factory.mktemp("burgers")
    t0 = time.perf_counter()
    run_simulate(cfg, out)
    run_train(cfg, out)
    run_evaluate(cfg, out)
    return cfg, out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def burgers_fit(burgers_run):
    cfg, out, _ = burgers_run
    sets = load_snapshots(out)
    basis, models = load_trained(cfg, out)
    sys = assemble_lsq(project(basis, sets, cfg.r_max))
    return {"cfg": cfg, "sets": sets, "basis": basis, "models": models, "sys": sys}


@pytest.fixture(scope="session")
def kse_desk_run(tmp_path_factory):
    cfg = builtin_config("kse", "desk")
    out = tmp_path_factory.mktemp("kse")
    t0 = time.perf_counter()
    run_simulate(cfg, out)
    run_train(cfg, out)
    run_evaluate(cfg, out)
    return cfg, out, time.perf_counter() - t0


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


_PIPELINE_FIXTURES = {"burgers_run", "burgers_fit", "kse_desk_run"}


def pytest_collection_modifyitems(items):
    for item in items:
        if _PIPELINE_FIXTURES & set(getattr(item, "fixturenames", ())):
            item.add_marker(pytest.mark.slow)

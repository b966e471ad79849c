import numpy as np
import pytest

from h2coord import AgentModel


def scalar_s1() -> AgentModel:
    return AgentModel([[-1.0]], [[1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [1.0]])


def random_model(rng: np.random.Generator, n: int | None = None, m: int | None = None) -> AgentModel:
    """Hurwitz A, nonsingular square Bw, Dzu with orthonormal columns and a generic cross term."""
    n = int(rng.integers(1, 5)) if n is None else n
    m = int(rng.integers(1, 3)) if m is None else m
    M = rng.standard_normal((n, n))
    A = M - (np.linalg.eigvals(M).real.max() + rng.uniform(0.2, 1.5)) * np.eye(n)
    Bw = rng.standard_normal((n, n)) + 2 * np.eye(n)
    while np.linalg.cond(Bw) > 1e3:
        Bw = rng.standard_normal((n, n)) + 2 * np.eye(n)
    Bu = rng.standard_normal((n, m))
    p = n + m
    Cz = rng.standard_normal((p, n))
    D, _ = np.linalg.qr(rng.standard_normal((p, m)))
    return AgentModel(A, Bw, Bu, Cz, D)


def random_mu(rng: np.random.Generator, nu: int) -> np.ndarray:
    raw = rng.uniform(0.2, 2.0, nu) * rng.choice([-1.0, 1.0], nu)
    return raw / np.linalg.norm(raw)


@pytest.fixture
def s1():
    return scalar_s1()


@pytest.fixture(params=range(5))
def rng(request):
    return np.random.default_rng(request.param)


# acceptance verdicts, printed as a block at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])

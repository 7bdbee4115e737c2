import pytest

from gmclab.config import load_config
from gmclab.ensemble import run_ensemble

ACCEPTANCE_GAMMAS = (0.0, 0.5, 1.0, 1.4, 1.6)
ACCEPTANCE_ALPHAS = (1.8, 1.5)

_gate_lines = []


def record_gate(result):
    """Print a gate outcome now and repeat it in the terminal summary."""
    line = result.line()
    print(line)
    _gate_lines.append(line)


@pytest.fixture(scope="session")
def default_config():
    return load_config()


@pytest.fixture(scope="session")
def acceptance_ensemble(default_config):
    """Default-config ensemble shared by the acceptance suite and the slow statistical tests."""
    tr = default_config.section("truncation")
    spec = default_config.ensemble_spec(
        gammas=ACCEPTANCE_GAMMAS, alphas=ACCEPTANCE_ALPHAS, replicates=tr["replicates"],
        thickness_alphas=tuple(tr["thickness_alphas"]), thickness_eps0=tuple(tr["thickness_eps0"]),
        n_levels=tuple(default_config.section("kl-martingale")["levels"]))
    return run_ensemble(spec)


def pytest_terminal_summary(terminalreporter):
    if _gate_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_gate_lines, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)

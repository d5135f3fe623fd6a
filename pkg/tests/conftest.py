import pytest

from rcpmod.config import build_config

TINY = dict(synth_n=200, synth_dims=(10, 10), widths=(16, 4), total_epochs=12, warm_epochs=4,
            impute_start_epoch=4, knn_switch_epoch=6, knn_refresh_interval=2, batch_size=64, eval_every=4)


@pytest.fixture
def tiny_config():
    return build_config(**TINY)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

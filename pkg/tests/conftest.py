import numpy as np
import pytest

from augmod.modgen import GenConfig, generate_dataset, read_dataset


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.agmd"
    generate_dataset(GenConfig(examples_per_pair=4, n_samples=64, master_seed=11), path)
    return path


@pytest.fixture(scope="session")
def tiny(tiny_path):
    return read_dataset(tiny_path)


@pytest.fixture(scope="session")
def tiny_offset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny_fo.agmd"
    generate_dataset(GenConfig(examples_per_pair=6, n_samples=64, master_seed=12, freq_offset_enabled=True), path)
    return read_dataset(path)

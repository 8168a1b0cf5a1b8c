import numpy as np
import pytest

from opsplit.mesh import (
    compute_node_geometry,
    generate_eye_domain,
    generate_half_unit_disk,
    generate_regular_square,
)


@pytest.fixture(scope="session")
def square10():
    mesh = generate_regular_square(10)
    return mesh, compute_node_geometry(mesh)


@pytest.fixture(scope="session")
def square40():
    mesh = generate_regular_square(40)
    return mesh, compute_node_geometry(mesh)


@pytest.fixture(scope="session")
def disk8():
    mesh = generate_half_unit_disk(8)
    return mesh, compute_node_geometry(mesh)


@pytest.fixture(scope="session")
def eye16():
    mesh = generate_eye_domain(16)
    return mesh, compute_node_geometry(mesh)


@pytest.fixture(scope="session")
def all_meshes(square10, disk8, eye16):
    return {"square": square10, "disk": disk8, "eye": eye16}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)

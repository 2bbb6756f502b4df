"""Configure pytest for integration tests."""
import logging
import pytest


def pytest_addoption(parser):
    """Setup test environment for pytest.

    Changes:
        - Add command line parameter '--desk-scale=<work dir>' to pytest.
        - enable logging to console
    """
    parser.addoption("--desk-scale", action="store", help="work directory of the desk-scale acceptance runs")
    logging.basicConfig(level=logging.DEBUG)


@pytest.fixture(scope="class")
def desk_scale(request):
    """Get command line parameter and store it in class"""
    request.cls.desk_scale = request.config.getoption("--desk-scale")

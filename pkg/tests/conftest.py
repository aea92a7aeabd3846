import logging

import pytest


@pytest.fixture(autouse=True)
def _quiet_relaxation_warnings():
    # large-gamma warnings are expected in some stress tests
    logger = logging.getLogger("mdrelax")
    old = logger.level
    logger.setLevel(logging.ERROR)
    yield
    logger.setLevel(old)

import logging
import os
import sys

import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.autodiff.tensor import set_dtype  # noqa: E402


@pytest.fixture(autouse=True)
def _isolate_global_state():
    yield
    set_dtype("float32")
    # main() installs a stream handler bound to the test's captured stderr
    root = logging.getLogger()
    for handler in list(root.handlers):
        if type(handler) is logging.StreamHandler:
            root.removeHandler(handler)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spdc_bench.design import paper_layout  # noqa: E402


@pytest.fixture
def layout():
    return paper_layout()

import sys
from pathlib import Path

import pytest

# Make reference_impl importable regardless of pytest rootdir settings.
sys.path.insert(0, str(Path(__file__).parent))

from finadapt.tokenization import Tokenizer, load_tokenizer

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def tokenizer_path() -> Path:
    return FIXTURES / "tokenizer.json"


@pytest.fixture(scope="session")
def tokenizer(tokenizer_path) -> Tokenizer:
    return load_tokenizer(tokenizer_path)

import json
import shutil
from pathlib import Path

import pytest

from videotutor.gateway import Gateway
from videotutor.ingestion import load_code, load_transcript, parse_config
from videotutor.student_model import StudentStore

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def eda_config_dict() -> dict:
    data = json.loads((FIXTURES / "eda_config.json").read_text())
    data["transcript_source"] = str(FIXTURES / "eda_transcript.json")
    data["code_source"] = str(FIXTURES / "eda_code.R")
    return data


@pytest.fixture
def eda_config(eda_config_dict):
    return parse_config(eda_config_dict)


@pytest.fixture
def eda_config_file(tmp_path, eda_config_dict) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(eda_config_dict))
    return path


@pytest.fixture
def eda_transcript():
    return load_transcript(FIXTURES / "eda_transcript.json")


@pytest.fixture
def eda_code(eda_config):
    return load_code(FIXTURES / "eda_code.R", eda_config.video_type)


@pytest.fixture
def eda_events() -> list:
    return json.loads((FIXTURES / "eda_events.json").read_text())


@pytest.fixture
def mock_gateway_factory():
    """Fresh scripted gateway per call (script cursor starts at entry 0)."""
    def factory(script_path=FIXTURES / "eda_mock_script.json") -> Gateway:
        return Gateway.mock(script_path)
    return factory


@pytest.fixture
def seeded_store(tmp_path) -> StudentStore:
    """Student store with leon's prior-session model already persisted."""
    store = StudentStore(tmp_path / "data")
    shutil.copy(FIXTURES / "leon_seed.json", store.root / "leon.json")
    return store


@pytest.fixture
def expected_final_model() -> dict:
    return json.loads((FIXTURES / "expected_final_model.json").read_text())

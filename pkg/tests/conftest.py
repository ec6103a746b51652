import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from smd2cpn import smdl, validate
from smd2cpn.translator import translate

MODELS_DIR = Path(__file__).resolve().parent.parent / "models"

CORPUS = ["flat", "nested3", "interlevel", "guarded", "history",
          "completion", "cdplayer"]


def load_model(name: str):
    text = (MODELS_DIR / f"{name}.smdl").read_text(encoding="utf-8")
    return smdl.parse(text)


@pytest.fixture(scope="session")
def models_dir():
    return MODELS_DIR


@pytest.fixture(scope="session")
def expectations():
    return json.loads((MODELS_DIR / "expectations.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def corpus_models():
    models = {name: load_model(name) for name in CORPUS}
    for name, model in models.items():
        report = validate(model)
        assert report.ok, f"{name}: {report}"
    return models


@pytest.fixture(scope="session")
def corpus_nets(corpus_models):
    return {name: translate(model) for name, model in corpus_models.items()}


@pytest.fixture(scope="session")
def cd_model(corpus_models):
    return corpus_models["cdplayer"]


@pytest.fixture(scope="session")
def cd_net(corpus_nets):
    return corpus_nets["cdplayer"]

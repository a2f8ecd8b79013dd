import pytest

from clip_vqa.models import SyntheticSpec, preset_config
from clip_vqa.network import ClipVQA
from clip_vqa.rng import RngState
from clip_vqa.synthetic import generate_synthetic
from clip_vqa.tensor import set_debug
from clip_vqa.training import train


@pytest.fixture(autouse=True)
def debug_guard():
    """Check every tensor op for NaN/Inf while the suite runs."""
    set_debug(True)
    yield
    set_debug(False)


@pytest.fixture(name="toy_config")
def toy_config_fixture():
    return preset_config("toy")


@pytest.fixture(name="toy_model")
def toy_model_fixture(toy_config):
    return ClipVQA(toy_config, RngState(0, "test"))


@pytest.fixture(name="toy_patches")
def toy_patches_fixture(toy_config):
    """Random (N, P, d) patch tokens in [0, 1] for the toy model."""
    gen = RngState(1, "patches").generator()
    return gen.uniform(
        0.0, 1.0, size=(toy_config.num_frames, toy_config.num_patches, toy_config.width)
    )


@pytest.fixture(name="tiny_dataset", scope="session")
def tiny_dataset_fixture(tmp_path_factory):
    """Sixteen small synthetic videos: 13 train, 3 held out."""
    spec = SyntheticSpec(count=16, frames=8, H=20, W=20)
    return generate_synthetic(spec, tmp_path_factory.mktemp("data"))


@pytest.fixture(name="tiny_run", scope="session")
def tiny_run_fixture(tiny_dataset, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("run")
    summary = train(preset_config("toy", epochs=2), tiny_dataset, out_dir)
    return out_dir, summary

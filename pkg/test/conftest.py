import os

import pytest

from entity.Dataset import Dataset
from entity.ModelSpec import ModelSpec
from entity.TrainConfig import TrainConfig
from entity.TrainedModel import TrainedModel
from model_factory import random_model
from service.fetch.DatasetFetchService import DatasetFetchService
from service.train.TrainerService import TrainerService


def pytest_collection_modifyitems(config, items):
    if os.environ.get("MNIST_DIR"):
        return
    skip = pytest.mark.skip(reason="set MNIST_DIR to run MNIST-scale tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def mlp_spec() -> ModelSpec:
    # Dense(4,5)+ReLU -> Dense(5,5)+ReLU -> Dense(5,3)+Softmax
    return ModelSpec.mlp((4,), [5, 5], 3)


@pytest.fixture
def cnn_spec() -> ModelSpec:
    return ModelSpec.cnn((1, 6, 6), 2, 3, 4, 3)


@pytest.fixture
def mlp_model(mlp_spec) -> TrainedModel:
    return random_model(mlp_spec, seed=11)


@pytest.fixture
def cnn_model(cnn_spec) -> TrainedModel:
    return random_model(cnn_spec, seed=12)


@pytest.fixture(scope="session")
def blobs() -> Dataset:
    return DatasetFetchService.make_synthetic(num_classes=3, per_class=40, dim=4, spread=0.08, seed=1)


@pytest.fixture(scope="session")
def trained_blob_model(blobs) -> TrainedModel:
    spec = ModelSpec.mlp((4,), [8, 8], 3)
    return TrainerService().train(spec, blobs, TrainConfig(epochs=30, batch_size=16, learning_rate=0.2, seed=5))

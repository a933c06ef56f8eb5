import pytest

from trainless.archspace import (
    ArchitectureSpec,
    BatchNorm,
    Convolution,
    Dropout,
    Pooling,
    ResidualBlock,
    SearchSpaceConfig,
    SkipConnection,
)
from trainless.lde import DatasetMeta, generate_synthetic_corpus
from trainless.tap import PredictorConfig, TrainingConfig, build_training_samples, train

FIXED_CLOCK = "2024-01-01T00:00:00+00:00"


@pytest.fixture
def three_layer_arch():
    """Hand-traced fixture, see test_shape.test_three_layer_trace."""
    return ArchitectureSpec(
        (
            Convolution(kernel_size=3, stride=2, padding="same", out_channels=16, batch_norm=True),
            Pooling(mode="max", kernel_size=2, stride=2, padding="valid"),
            Convolution(kernel_size=1, stride=1, padding="valid", out_channels=8, batch_norm=False),
        ),
        num_classes=10,
    )


@pytest.fixture
def mixed_arch():
    return ArchitectureSpec(
        (
            Convolution(3, 1, "same", 16, True),
            BatchNorm(),
            ResidualBlock(3, 2, 32, 2),
            Dropout(0.3),
            SkipConnection(2),
            Pooling("avg", 2, 1, "same"),
            SkipConnection(0),
        ),
        num_classes=10,
    )


@pytest.fixture(scope="session")
def datasets():
    return [
        DatasetMeta("easy", "easy", 0.2, 10),
        DatasetMeta("mid", "mid", 0.5, 10),
        DatasetMeta("hard", "hard", 0.8, 100),
    ]


@pytest.fixture(scope="session")
def small_corpus(datasets):
    return generate_synthetic_corpus(datasets, 20, SearchSpaceConfig(max_backbone_layers=6), 3, created_at=FIXED_CLOCK)


@pytest.fixture(scope="session")
def tiny_model(datasets, small_corpus):
    """A deliberately small predictor: fast to train, used for plumbing tests."""
    samples = build_training_samples(small_corpus, {d.id: d for d in datasets})
    return train(samples, TrainingConfig(epochs=3, batch_size=64, seed=1), PredictorConfig(lstm1_hidden=5, lstm2_hidden=7))


# -- acceptance report -----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
